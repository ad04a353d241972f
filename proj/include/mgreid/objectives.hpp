#pragma once

#include <array>
#include <vector>

#include "mgreid/matrix.hpp"
#include "mgreid/nn.hpp"

// Training objectives. All losses return their value and, on request, the
// analytic gradient w.r.t. their feature input; classifier gradients
// accumulate into the layer itself.
namespace mgreid::obj {

// Class prototypes: one unit row per class.
struct PrototypeMemory {
    Matrix rows;  // C x d

    int num_classes() const { return rows.rows; }
    int dim() const { return rows.cols; }
};

// Mean feature per class, L2-normalized. Throws if a class has no samples.
PrototypeMemory build_memory(const std::vector<Vec>& feats, const std::vector<int>& labels,
                             int num_classes);

// Momentum update from one batch: for every distinct label, the sample whose
// cosine to the current prototype is smallest (the hardest one) is blended in
// and the row re-normalized.
void update_memory(PrototypeMemory& mem, const std::vector<Vec>& feats,
                   const std::vector<int>& labels, double gamma);

// Prompt contrastive loss: softmax over inner products of the unit text
// embedding with all prototypes, no temperature.
double loss_cmp(const Vec& t, const PrototypeMemory& mem, int y, Vec* dt = nullptr);

// ID cross-entropy over raw classifier logits. When dv is requested the
// classifier gradients accumulate too; grad_weight scales both (used for
// batch averaging). The returned value is unweighted.
double loss_id(const Vec& v_bn, nn::Linear& cls, int y, Vec* dv = nullptr,
               double grad_weight = 1.0);

// Prototype cross-entropy over cosine similarities / tau.
double loss_imp(const Vec& v, const PrototypeMemory& mem, int y, double tau, Vec* dv = nullptr);

// Image-to-text cross-entropy over cosine similarities with label smoothing
// (no temperature).
double loss_i2tce(const Vec& v, const PrototypeMemory& text_mem, int y, double eps_smooth,
                  Vec* dv = nullptr);

struct MaskLossOut {
    double bce = 0.0;
    double dice = 0.0;
    double total = 0.0;
};

// Mask supervision across layers: element-wise BCE averaged over every
// (active part, patch, layer), plus soft dice per (active part, layer)
// averaged over those. eps_dice only smooths the dice denominator.
// parts: which part rows participate (granularity ablations).
MaskLossOut loss_mask(const std::vector<Matrix>& probs, const Matrix& g, double eps_dice,
                      const std::array<bool, 3>& parts = {true, true, true},
                      std::vector<Matrix>* dprobs = nullptr);

// Same value computed from logits, with gradients in logit space (stable for
// saturated sigmoids; this is what the trainer uses).
MaskLossOut loss_mask_logits(const std::vector<Matrix>& logits, const Matrix& g, double eps_dice,
                             const std::array<bool, 3>& parts = {true, true, true},
                             std::vector<Matrix>* dlogits = nullptr);

struct LossReport {
    double cmp = 0.0;
    double id = 0.0;
    double imp = 0.0;
    double i2tce = 0.0;
    double bce = 0.0;
    double dice = 0.0;
    double mask = 0.0;
    double total = 0.0;
};

/// Unit-weight stage sums. Throws std::runtime_error if any component is not
// finite.
double stage_total(LossReport& r, int stage);

}  // namespace mgreid::obj
