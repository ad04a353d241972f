#pragma once

#include "mgreid/attention.hpp"
#include "mgreid/nn.hpp"

// Adaptive mask prediction: per-part patch masks are refined layer by layer
// (residual mask prediction) and turned into additive attention masks that
// restrict what the part tokens may look at.
namespace mgreid::ammsa {

// Cross attention (queries from one sequence, keys/values from another).
struct CrossAttention {
    nn::Linear wq, wk, wv, wo;
    int heads = 1;

    void init(int dim, int heads, Rng& rng);

    struct Ctx {
        nn::Linear::Ctx cq, ck, cv, co;
        MsaCoreCtx core;
    };
    Matrix forward(const Matrix& q_in, const Matrix& kv_in, Ctx* ctx = nullptr) const;
    void backward(const Ctx& ctx, const Matrix& dy, Matrix& dq_in, Matrix& dkv_in);
    void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

// Residual mask prediction. Per layer:
//   r' = CrossAttn(LN(r), LN(F)) + r
//   M  = MLP(LN(r')) + M_prev
//   p  = sigmoid(M)
// The final MLP layer starts at zero so the first forward pass reproduces
// M_prev exactly.
struct Rmp {
    nn::LayerNorm ln_r, ln_f, ln_m;
    CrossAttention ca;
    nn::Linear fc1, fc2;

    void init(int dim, int n_patch, int heads, Rng& rng);

    struct Ctx {
        nn::LayerNorm::Ctx ln_r_ctx, ln_f_ctx, ln_m_ctx;
        CrossAttention::Ctx ca_ctx;
        nn::Linear::Ctx c1, c2;
        Matrix pre;       // fc1 output before activation
        Matrix m_logits;  // M after the residual add
    };
    struct Out {
        Matrix r_res;   // 3 x dim
        Matrix logits;  // 3 x n_patch
        Matrix probs;   // sigmoid(logits)
    };
    Out forward(const Matrix& r_prev, const Matrix& f_prev, const Matrix& m_prev,
                Ctx* ctx = nullptr) const;
    // d_logits is the gradient w.r.t. the mask logits M (the residual chain
    // from deeper layers plus any loss term, already in logit space). Gate
    // decisions are treated as constants; no gradient flows through the
    // thresholding.
    void backward(const Ctx& ctx, const Matrix& dr_res, const Matrix& d_logits,
                  Matrix& dr_prev, Matrix& df_prev, Matrix& dm_prev);
    void visit(const std::string& prefix, const nn::ParamVisitor& v);
};

}  // namespace mgreid::ammsa
