#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgreid/dataset.hpp"
#include "mgreid/image_encoder.hpp"
#include "mgreid/model.hpp"
#include "mgreid/objectives.hpp"

namespace mgreid::train {

struct TrainConfig {
    int stage1_epochs = 30;
    int stage2_epochs = 20;
    double stage1_lr = 5e-3;
    double stage2_lr = 1e-3;
    double rmp_lr_mult = 10.0;
    double weight_decay = 1e-4;
    int batch_p = 4;
    int batch_k = 2;
    double warmup_frac = 0.1;
    double memory_momentum = 0.2;
    double tau = 0.01;
    double label_smooth = 0.1;
    double dice_eps = 1e-6;
    bool flip_aug = true;
    uint64_t seed = 7;
    img::MaskSource mask_source = img::MaskSource::predicted;
};

// Cosine decay over whole epochs from base toward zero; the final epoch keeps
// a small nonzero rate.
double cosine_lr(double base, int epoch, int total_epochs);
// Linear warmup over the first warmup_frac of all steps, then x0.1 from 2/3
// of the epochs and x0.01 from 5/6.
double step_warmup_lr(double base, int64_t step, int64_t total_steps, int64_t steps_per_epoch,
                      int total_epochs, double warmup_frac);

// Identity-balanced batches covering about one pass over the samples:
// ceil(N/(p*k)) batches of p distinct identities with k samples each (with
// replacement only when an identity is short); the identity pool reshuffles
// whenever it cannot fill the next batch.
std::vector<std::vector<int>> pk_batches(const std::vector<int>& sample_ids,
                                         const std::vector<int>& labels, int p, int k, Rng& rng);

Image flip_image(const Image& img);
Matrix flip_label_columns(const Matrix& g, const PatchGrid& grid);

struct EpochLog {
    int stage = 0;
    int epoch = 0;
    double lr = 0.0;
    obj::LossReport mean;
};

std::string loss_csv(const std::vector<EpochLog>& rows);

class Trainer {
  public:
    Trainer(model::Model& m, const data::Corpus& corpus, const TrainConfig& cfg);

    // Stage 1: prompt learning against a fixed image-prototype memory.
    std::vector<EpochLog> run_stage1();
    // Stage 2: encoder/neck/classifier against frozen prompts; the image
    // memory is rebuilt at every epoch start and momentum-updated per batch.
    std::vector<EpochLog> run_stage2();

    // Clean (flip-free) feature pass over the training split.
    obj::PrototypeMemory build_image_memory(img::MaskSource source);
    obj::PrototypeMemory build_text_memory();

    // Gating used for memory building: ground boxes unless the run overrides
    // the source entirely.
    img::MaskSource memory_source() const;

    nn::Adam& optimizer() { return opt_; }
    const std::vector<int>& train_samples() const { return train_samples_; }

  private:
    model::Model& m_;
    const data::Corpus& corpus_;
    TrainConfig cfg_;
    nn::Adam opt_;
    Rng rng_;
    std::vector<int> train_samples_;  // sample ids
    std::vector<int> train_labels_;   // aligned id labels

    double step_params(double lr);
};

}  // namespace mgreid::train
