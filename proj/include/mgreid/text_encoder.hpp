#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgreid/nn.hpp"

// Frozen toy text transformer over a fixed template vocabulary, plus the
// learnable per-identity prompt vectors spliced into the token sequence.
// Gradients flow through the frozen encoder into the prompts only.
namespace mgreid::text {

enum class Gran { global = 0, head = 1, upper = 2, legs = 3 };
inline constexpr std::array<Gran, 4> kGrans{Gran::global, Gran::head, Gran::upper, Gran::legs};
const char* gran_name(Gran g);
Gran gran_from_name(const std::string& name);

// Learnable prompt vectors: one N x dim block per (granularity, identity).
struct PromptSet {
    int num_ids = 0, num_prompts = 0, dim = 0;
    std::vector<nn::Param> blocks;  // index: gran * num_ids + id

    static PromptSet init(int num_ids, int num_prompts, int dim, double stddev, Rng& rng);
    nn::Param& block(Gran g, int id);
    const nn::Param& block(Gran g, int id) const;
    void visit(const std::string& prefix, const nn::ParamVisitor& v);
    void visit_id(const std::string& prefix, int id, const nn::ParamVisitor& v);
};

// Token sequence of a granularity's template; prompt_slot[i] >= 0 marks where
// prompt vector #prompt_slot[i] is spliced in.
struct Description {
    std::vector<int> tokens;       // vocabulary ids, -1 at prompt positions
    std::vector<int> prompt_slot;  // -1 for fixed tokens
    int eos_pos = 0;
};

class TextEncoder {
  public:
    static TextEncoder init(int width, int out_dim, int num_prompts, uint64_t seed);

    Description describe(Gran g) const;
    // Human-readable template with [P]x{N} at the prompt positions.
    std::string template_string(Gran g) const;

    struct GranCtx {
        Matrix x0;
        std::vector<nn::TransformerLayer::Ctx> layers;
        nn::LayerNorm::Ctx lnf;
        nn::Linear::Ctx proj;
        Description desc;
    };
    struct Ctx {
        std::vector<Gran> grans;
        std::vector<GranCtx> per_gran;
        Vec fused;
        double norm = 0.0;
    };

    // Per-granularity embedding (un-normalized).
    Vec encode_one(const Description& desc, const Matrix& prompts, GranCtx* ctx = nullptr) const;
    void backward_one(const GranCtx& ctx, const Vec& de, Matrix& dprompts) const;

    // Multi-granularity text embedding: mean of the selected granularity
    // embeddings, L2-normalized.
    Vec encode(const PromptSet& prompts, int id, const std::vector<Gran>& grans,
               Ctx* ctx = nullptr) const;
    // Accumulates into the prompt gradients of the encoded id.
    void backward(const Ctx& ctx, const Vec& dt, PromptSet& prompts, int id) const;

    void visit(const std::string& prefix, const nn::ParamVisitor& v);
    void set_trainable(bool t);

    int width() const { return width_; }
    int out_dim() const { return out_dim_; }
    int num_prompts() const { return num_prompts_; }

  private:
    int width_ = 0, out_dim_ = 0, num_prompts_ = 0, vocab_ = 0, max_len_ = 0;
    nn::Param tok_emb_;  // vocab x width
    nn::Param pos_emb_;  // max_len x width
    std::vector<nn::TransformerLayer> layers_;
    nn::LayerNorm ln_final_;
    nn::Linear proj_;  // width -> out_dim, no bias
};

}  // namespace mgreid::text
