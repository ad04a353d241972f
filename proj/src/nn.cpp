#include "mgreid/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mgreid::nn {

uint64_t hash_bytes(const void* data, size_t n, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t hash_param(const Param& p, uint64_t h) {
    return hash_bytes(p.w.v.data(), p.w.v.size() * sizeof(double), h);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) +
           x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

// ---------------------------------------------------------------------------

void Linear::init(int in, int out, Rng& rng, bool bias) {
    has_bias = bias;
    W.init(out, in);
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : W.w.v) x = rng.normal(0.0, std);
    b.init(1, out);
}

void Linear::init_zero(int in, int out, bool bias) {
    has_bias = bias;
    W.init(out, in);
    b.init(1, out);
}

Matrix Linear::forward(const Matrix& x, Ctx* ctx) const {
    if (x.cols != W.w.cols) throw std::invalid_argument("Linear: input dim mismatch");
    Matrix y = kern::matmul_nt(x, W.w);
    if (has_bias)
        for (int r = 0; r < y.rows; ++r)
            for (int c = 0; c < y.cols; ++c) y(r, c) += b.w(0, c);
    if (ctx) ctx->x = x;
    return y;
}

Matrix Linear::backward(const Ctx& ctx, const Matrix& dy) {
    W.accum(kern::matmul_tn(dy, ctx.x));
    if (has_bias && b.trainable) {
        for (int r = 0; r < dy.rows; ++r)
            for (int c = 0; c < dy.cols; ++c) b.g(0, c) += dy(r, c);
    }
    return kern::matmul(dy, W.w);
}

void Linear::visit(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".w", W);
    if (has_bias) v(prefix + ".b", b);
}

// ---------------------------------------------------------------------------

void LayerNorm::init(int dim) {
    gamma.init(1, dim);
    gamma.w.fill(1.0);
    beta.init(1, dim);
}

Matrix LayerNorm::forward(const Matrix& x, Ctx* ctx) const {
    const int n = x.cols;
    Matrix y(x.rows, n);
    Matrix xhat(x.rows, n);
    Vec inv_std(x.rows);
    for (int r = 0; r < x.rows; ++r) {
        double mu = 0.0;
        for (int c = 0; c < n; ++c) mu += x(r, c);
        mu /= n;
        double var = 0.0;
        for (int c = 0; c < n; ++c) {
            double d = x(r, c) - mu;
            var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (int c = 0; c < n; ++c) {
            double xh = (x(r, c) - mu) * inv;
            xhat(r, c) = xh;
            y(r, c) = gamma.w(0, c) * xh + beta.w(0, c);
        }
    }
    if (ctx) {
        ctx->xhat = std::move(xhat);
        ctx->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix LayerNorm::backward(const Ctx& ctx, const Matrix& dy) {
    const int n = dy.cols;
    Matrix dx(dy.rows, n);
    for (int r = 0; r < dy.rows; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (int c = 0; c < n; ++c) {
            double dxh = dy(r, c) * gamma.w(0, c);
            s1 += dxh;
            s2 += dxh * ctx.xhat(r, c);
        }
        for (int c = 0; c < n; ++c) {
            double dxh = dy(r, c) * gamma.w(0, c);
            dx(r, c) = ctx.inv_std[r] * (dxh - s1 / n - ctx.xhat(r, c) * s2 / n);
        }
    }
    if (gamma.trainable)
        for (int r = 0; r < dy.rows; ++r)
            for (int c = 0; c < n; ++c) gamma.g(0, c) += dy(r, c) * ctx.xhat(r, c);
    if (beta.trainable)
        for (int r = 0; r < dy.rows; ++r)
            for (int c = 0; c < n; ++c) beta.g(0, c) += dy(r, c);
    return dx;
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".g", gamma);
    v(prefix + ".b", beta);
}

// ---------------------------------------------------------------------------

void Mlp::init(int dim, int hidden, Rng& rng) {
    fc1.init(dim, hidden, rng);
    fc2.init(hidden, dim, rng);
}

Matrix Mlp::forward(const Matrix& x, Ctx* ctx) const {
    Matrix h = fc1.forward(x, ctx ? &ctx->c1 : nullptr);
    if (ctx) ctx->pre = h;
    for (double& v : h.v) v = gelu(v);
    return fc2.forward(h, ctx ? &ctx->c2 : nullptr);
}

Matrix Mlp::backward(const Ctx& ctx, const Matrix& dy) {
    Matrix dh = fc2.backward(ctx.c2, dy);
    for (size_t i = 0; i < dh.v.size(); ++i) dh.v[i] *= gelu_grad(ctx.pre.v[i]);
    return fc1.backward(ctx.c1, dh);
}

void Mlp::visit(const std::string& prefix, const ParamVisitor& v) {
    fc1.visit(prefix + ".fc1", v);
    fc2.visit(prefix + ".fc2", v);
}

// ---------------------------------------------------------------------------

void MultiHeadSelfAttention::init(int dim, int h, Rng& rng) {
    if (dim % h != 0) throw std::invalid_argument("msa: dim % heads != 0");
    heads = h;
    wq.init(dim, dim, rng);
    wk.init(dim, dim, rng);
    wv.init(dim, dim, rng);
    wo.init(dim, dim, rng);
}

Matrix MultiHeadSelfAttention::forward(const Matrix& x, const Matrix* mask, Ctx* ctx) const {
    Matrix q = wq.forward(x, ctx ? &ctx->cq : nullptr);
    Matrix k = wk.forward(x, ctx ? &ctx->ck : nullptr);
    Matrix v = wv.forward(x, ctx ? &ctx->cv : nullptr);
    Matrix o = ammsa::masked_msa(q, k, v, heads, mask, ctx ? &ctx->core : nullptr);
    return wo.forward(o, ctx ? &ctx->co : nullptr);
}

Matrix MultiHeadSelfAttention::backward(const Ctx& ctx, const Matrix& dy) {
    Matrix dxo = wo.backward(ctx.co, dy);
    Matrix dq, dk, dv;
    ammsa::masked_msa_backward(ctx.core, dxo, dq, dk, dv);
    Matrix dx = wq.backward(ctx.cq, dq);
    dx += wk.backward(ctx.ck, dk);
    dx += wv.backward(ctx.cv, dv);
    return dx;
}

void MultiHeadSelfAttention::visit(const std::string& prefix, const ParamVisitor& v) {
    wq.visit(prefix + ".wq", v);
    wk.visit(prefix + ".wk", v);
    wv.visit(prefix + ".wv", v);
    wo.visit(prefix + ".wo", v);
}

// ---------------------------------------------------------------------------

void TransformerLayer::init(int dim, int heads, int mlp_hidden, Rng& rng) {
    ln1.init(dim);
    ln2.init(dim);
    msa.init(dim, heads, rng);
    mlp.init(dim, mlp_hidden, rng);
}

Matrix TransformerLayer::forward(const Matrix& x, const Matrix* mask, Ctx* ctx) const {
    Matrix a = ln1.forward(x, ctx ? &ctx->l1 : nullptr);
    Matrix h = msa.forward(a, mask, ctx ? &ctx->att : nullptr);
    h += x;
    Matrix m = ln2.forward(h, ctx ? &ctx->l2 : nullptr);
    Matrix f = mlp.forward(m, ctx ? &ctx->mlp : nullptr);
    f += h;
    return f;
}

Matrix TransformerLayer::backward(const Ctx& ctx, const Matrix& dy) {
    Matrix dh = dy;
    Matrix dm = mlp.backward(ctx.mlp, dy);
    dh += ln2.backward(ctx.l2, dm);
    Matrix dx = dh;
    Matrix da = msa.backward(ctx.att, dh);
    dx += ln1.backward(ctx.l1, da);
    return dx;
}

void TransformerLayer::visit(const std::string& prefix, const ParamVisitor& v) {
    ln1.visit(prefix + ".ln1", v);
    msa.visit(prefix + ".msa", v);
    ln2.visit(prefix + ".ln2", v);
    mlp.visit(prefix + ".mlp", v);
}

// ---------------------------------------------------------------------------

void BatchNorm::init(int dim) {
    gamma.init(1, dim);
    gamma.w.fill(1.0);
    running_mean = Matrix(1, dim, 0.0);
    running_var = Matrix(1, dim, 1.0);
}

Matrix BatchNorm::forward_train(const Matrix& x, Ctx* ctx) {
    const int n = x.rows, d = x.cols;
    if (n < 2) throw std::invalid_argument("BatchNorm: batch size must be >= 2");
    Matrix y(n, d), xhat(n, d);
    Vec inv_std(d);
    for (int c = 0; c < d; ++c) {
        double mu = 0.0;
        for (int r = 0; r < n; ++r) mu += x(r, c);
        mu /= n;
        double var = 0.0;
        for (int r = 0; r < n; ++r) {
            double dv = x(r, c) - mu;
            var += dv * dv;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[c] = inv;
        for (int r = 0; r < n; ++r) {
            double xh = (x(r, c) - mu) * inv;
            xhat(r, c) = xh;
            y(r, c) = gamma.w(0, c) * xh;
        }
        running_mean(0, c) = (1.0 - momentum) * running_mean(0, c) + momentum * mu;
        const double var_unbiased = var * n / (n - 1.0);
        running_var(0, c) = (1.0 - momentum) * running_var(0, c) + momentum * var_unbiased;
    }
    if (ctx) {
        ctx->xhat = std::move(xhat);
        ctx->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix BatchNorm::forward_eval(const Matrix& x) const {
    Matrix y(x.rows, x.cols);
    for (int c = 0; c < x.cols; ++c) {
        const double inv = 1.0 / std::sqrt(running_var(0, c) + eps);
        for (int r = 0; r < x.rows; ++r)
            y(r, c) = gamma.w(0, c) * (x(r, c) - running_mean(0, c)) * inv;
    }
    return y;
}

Matrix BatchNorm::backward(const Ctx& ctx, const Matrix& dy) {
    const int n = dy.rows, d = dy.cols;
    Matrix dx(n, d);
    for (int c = 0; c < d; ++c) {
        double s1 = 0.0, s2 = 0.0;
        for (int r = 0; r < n; ++r) {
            double dxh = dy(r, c) * gamma.w(0, c);
            s1 += dxh;
            s2 += dxh * ctx.xhat(r, c);
        }
        for (int r = 0; r < n; ++r) {
            double dxh = dy(r, c) * gamma.w(0, c);
            dx(r, c) = ctx.inv_std[c] * (dxh - s1 / n - ctx.xhat(r, c) * s2 / n);
        }
        if (gamma.trainable)
            for (int r = 0; r < n; ++r) gamma.g(0, c) += dy(r, c) * ctx.xhat(r, c);
    }
    return dx;
}

void BatchNorm::visit(const std::string& prefix, const ParamVisitor& v) {
    v(prefix + ".g", gamma);
}

// ---------------------------------------------------------------------------

void Adam::step(const std::string& name, Param& p, double lr) {
    if (!p.trainable) return;
    AdamState& s = slots_[name];
    if (s.t == 0) {
        s.m = Matrix(p.w.rows, p.w.cols, 0.0);
        s.v = Matrix(p.w.rows, p.w.cols, 0.0);
    }
    s.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    for (size_t i = 0; i < p.w.v.size(); ++i) {
        double g = p.g.v[i] + weight_decay_ * p.w.v[i];
        s.m.v[i] = beta1_ * s.m.v[i] + (1.0 - beta1_) * g;
        s.v.v[i] = beta2_ * s.v.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = s.m.v[i] / bc1;
        const double vhat = s.v.v[i] / bc2;
        p.w.v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
}

}  // namespace mgreid::nn
