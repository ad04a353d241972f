#include "mgreid/am_msa.hpp"

#include <cmath>
#include <stdexcept>

namespace mgreid::ammsa {

void CrossAttention::init(int dim, int h, Rng& rng) {
    if (dim % h != 0) throw std::invalid_argument("cross-attn: dim % heads != 0");
    heads = h;
    wq.init(dim, dim, rng);
    wk.init(dim, dim, rng);
    wv.init(dim, dim, rng);
    wo.init(dim, dim, rng);
}

Matrix CrossAttention::forward(const Matrix& q_in, const Matrix& kv_in, Ctx* ctx) const {
    Matrix q = wq.forward(q_in, ctx ? &ctx->cq : nullptr);
    Matrix k = wk.forward(kv_in, ctx ? &ctx->ck : nullptr);
    Matrix v = wv.forward(kv_in, ctx ? &ctx->cv : nullptr);
    Matrix o = masked_msa(q, k, v, heads, nullptr, ctx ? &ctx->core : nullptr);
    return wo.forward(o, ctx ? &ctx->co : nullptr);
}

void CrossAttention::backward(const Ctx& ctx, const Matrix& dy, Matrix& dq_in, Matrix& dkv_in) {
    Matrix dxo = wo.backward(ctx.co, dy);
    Matrix dq, dk, dv;
    masked_msa_backward(ctx.core, dxo, dq, dk, dv);
    dq_in = wq.backward(ctx.cq, dq);
    dkv_in = wk.backward(ctx.ck, dk);
    dkv_in += wv.backward(ctx.cv, dv);
}

void CrossAttention::visit(const std::string& prefix, const nn::ParamVisitor& v) {
    wq.visit(prefix + ".wq", v);
    wk.visit(prefix + ".wk", v);
    wv.visit(prefix + ".wv", v);
    wo.visit(prefix + ".wo", v);
}

// ---------------------------------------------------------------------------

void Rmp::init(int dim, int n_patch, int heads, Rng& rng) {
    ln_r.init(dim);
    ln_f.init(dim);
    ln_m.init(dim);
    ca.init(dim, heads, rng);
    // Wide hidden layer: one token vector has to emit an independent logit
    // per patch, so the readout needs more mixing room than the token width.
    fc1.init(dim, 4 * dim, rng);
    // Final projection starts at zero: the predictor is an identity on the
    // incoming logits until training moves it.
    fc2.init_zero(4 * dim, n_patch);
}

Rmp::Out Rmp::forward(const Matrix& r_prev, const Matrix& f_prev, const Matrix& m_prev,
                      Ctx* ctx) const {
    Matrix rn = ln_r.forward(r_prev, ctx ? &ctx->ln_r_ctx : nullptr);
    Matrix fn = ln_f.forward(f_prev, ctx ? &ctx->ln_f_ctx : nullptr);
    Matrix r_res = ca.forward(rn, fn, ctx ? &ctx->ca_ctx : nullptr);
    r_res += r_prev;

    Matrix mn = ln_m.forward(r_res, ctx ? &ctx->ln_m_ctx : nullptr);
    Matrix h = fc1.forward(mn, ctx ? &ctx->c1 : nullptr);
    if (ctx) ctx->pre = h;
    for (double& x : h.v) x = nn::gelu(x);
    Matrix logits = fc2.forward(h, ctx ? &ctx->c2 : nullptr);
    logits += m_prev;

    Out out;
    out.probs = Matrix(logits.rows, logits.cols);
    for (size_t i = 0; i < logits.v.size(); ++i)
        out.probs.v[i] = 1.0 / (1.0 + std::exp(-logits.v[i]));
    if (ctx) ctx->m_logits = logits;
    out.logits = std::move(logits);
    out.r_res = std::move(r_res);
    return out;
}

void Rmp::backward(const Ctx& ctx, const Matrix& dr_res, const Matrix& d_logits,
                   Matrix& dr_prev, Matrix& df_prev, Matrix& dm_prev) {
    // M = fc2(gelu(fc1(ln_m(r')))) + M_prev
    dm_prev = d_logits;
    Matrix dh = fc2.backward(ctx.c2, d_logits);
    for (size_t i = 0; i < dh.v.size(); ++i) dh.v[i] *= nn::gelu_grad(ctx.pre.v[i]);
    Matrix dmn = fc1.backward(ctx.c1, dh);
    Matrix dr_res_total = ln_m.backward(ctx.ln_m_ctx, dmn);
    dr_res_total += dr_res;

    // r' = ca(ln_r(r), ln_f(F)) + r
    dr_prev = dr_res_total;
    Matrix drn, dfn;
    ca.backward(ctx.ca_ctx, dr_res_total, drn, dfn);
    dr_prev += ln_r.backward(ctx.ln_r_ctx, drn);
    df_prev = ln_f.backward(ctx.ln_f_ctx, dfn);
}

void Rmp::visit(const std::string& prefix, const nn::ParamVisitor& v) {
    ln_r.visit(prefix + ".ln_r", v);
    ln_f.visit(prefix + ".ln_f", v);
    ca.visit(prefix + ".ca", v);
    ln_m.visit(prefix + ".ln_m", v);
    fc1.visit(prefix + ".fc1", v);
    fc2.visit(prefix + ".fc2", v);
}

}  // namespace mgreid::ammsa
