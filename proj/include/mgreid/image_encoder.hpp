#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgreid/am_msa.hpp"
#include "mgreid/image.hpp"
#include "mgreid/nn.hpp"
#include "mgreid/parts.hpp"

namespace mgreid::img {

// Where the attention gates come from during a forward pass.
enum class MaskSource { predicted, external, stripe, none };
const char* mask_source_name(MaskSource m);
MaskSource mask_source_from_name(const std::string& name);

struct EncoderConfig {
    int image_height = 64;
    int image_width = 32;
    int patch_size = 8;
    int embed_dim = 64;   // token width D
    int layers = 4;
    int heads = 4;
    int rmp_heads = 2;
    int feature_dim = 32;  // output width d
    double mask_threshold = 0.5;
    double m0_logit = 2.0;  // initial mask logits (all patches open)

    PatchGrid grid() const { return PatchGrid::from_image(image_height, image_width, patch_size); }
    int n_patch() const { return grid().num_patches(); }
    ammsa::SeqLayout layout() const { return ammsa::SeqLayout{n_patch()}; }
};

// N x (P*P*3) patch pixels, patches row-major, pixels y-major then x then
// channel.
Matrix patchify(const Image& img, int patch_size);

// Mean of the selected rows of the projected [global, head, upper, legs]
// token block.
Vec fuse_tokens(const Matrix& z4, const std::array<bool, 4>& fuse);

// Fixed fallback gating: each part attends to its horizontal third of the
// patch rows.
Matrix stripe_label_matrix(const PatchGrid& grid);

struct ImageEncoder {
    EncoderConfig cfg;
    nn::Linear patch_proj;   // P^2*3 -> D, frozen
    nn::Param pos_emb;       // (1 + N) x D, frozen
    nn::Param global_token;  // 1 x D
    nn::Param local_tokens;  // 3 x D
    std::vector<nn::TransformerLayer> layers;
    std::vector<ammsa::Rmp> rmps;
    nn::LayerNorm ln_final;
    nn::Linear proj;  // D -> d, no bias

    static ImageEncoder init(const EncoderConfig& cfg, uint64_t seed);

    struct LayerCtx {
        ammsa::Rmp::Ctx rmp;
        nn::TransformerLayer::Ctx tr;
    };
    struct Ctx {
        std::vector<LayerCtx> layers;
        nn::LayerNorm::Ctx lnf;
        nn::Linear::Ctx proj;
        Matrix z4;  // projected token block, 4 x d
        std::array<bool, 4> fuse{};
        int n_fused = 0;
    };
    struct Output {
        Vec vmg;                          // fused feature, d
        Matrix local_final;               // part tokens after the last layer, 3 x D
        std::vector<Matrix> mask_logits;  // per layer, 3 x n_patch
        std::vector<Matrix> mask_probs;   // sigmoid of the above
    };

    // g: 3 x n_patch binary matrix; required for external, ignored otherwise
    // (stripe builds its own, predicted/none need none). The mask predictor
    // runs forward in every mode; only the gating source changes.
    Output forward(const Image& img, MaskSource source, const Matrix* g,
                   const std::array<bool, 4>& fuse, Ctx* ctx = nullptr) const;

    // dmask_logits: per-layer gradients w.r.t. the mask logits (empty vector
    // when the mask loss is off). Gate decisions are constants in backward.
    void backward(const Ctx& ctx, const Vec& dvmg, const std::vector<Matrix>& dmask_logits);

    void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

}  // namespace mgreid::img
