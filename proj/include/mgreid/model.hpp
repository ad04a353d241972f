#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgreid/image_encoder.hpp"
#include "mgreid/nn.hpp"
#include "mgreid/text_encoder.hpp"

namespace mgreid::model {

struct ModelConfig {
    img::EncoderConfig enc;
    int num_ids = 20;
    int num_prompts = 4;
    int prompt_width = 32;
    double prompt_init_std = 0.002;
    std::array<bool, 4> granularities{true, true, true, true};  // global/head/upper/legs
    uint64_t init_seed = 3;
};

// The two towers plus the retrieval head. The text tower and the patch
// projection / positions of the image tower are frozen for good; everything
// else toggles per training stage.
struct Model {
    ModelConfig cfg;
    text::TextEncoder txt;
    text::PromptSet prompts;
    img::ImageEncoder enc;
    nn::BatchNorm neck;
    nn::Linear cls;  // feature_dim -> num_ids, no bias

    static Model init(const ModelConfig& cfg);

    void visit(const nn::ParamVisitor& v);
    void zero_grads();
    // stage 0: everything frozen; stage 1: prompts only; stage 2: image
    // encoder (minus patch projection and positions), neck and classifier.
    void set_stage_trainable(int stage);

    std::vector<text::Gran> gran_list() const;
    std::array<bool, 3> active_parts() const;  // local tokens in play
    std::array<bool, 4> fuse_flags() const { return cfg.granularities; }

    uint64_t weights_hash();  // all parameters
    uint64_t weights_hash_where(const std::string& name_prefix);
};

// Full training state round trip: parameters, norm statistics, optimizer
// slots, stage/epoch counters.
struct CheckpointInfo {
    int stage = 0;
    int epoch = 0;
};

void save_checkpoint(const std::string& path, Model& m, const nn::Adam* opt, int stage,
                     int epoch);
CheckpointInfo load_checkpoint(const std::string& path, Model& m, nn::Adam* opt);

}  // namespace mgreid::model
