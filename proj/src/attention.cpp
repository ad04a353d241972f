#include "mgreid/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "mgreid/kernels.hpp"

namespace mgreid::ammsa {

Matrix mask_gate(const Matrix& probs, double threshold) {
    Matrix a(probs.rows, probs.cols);
    for (size_t i = 0; i < probs.v.size(); ++i)
        a.v[i] = probs.v[i] > threshold ? 0.0 : kMaskOff;
    return a;
}

Matrix gate_from_binary(const Matrix& g) {
    Matrix a(g.rows, g.cols);
    for (size_t i = 0; i < g.v.size(); ++i)
        a.v[i] = g.v[i] != 0.0 ? 0.0 : kMaskOff;
    return a;
}

Matrix pad_attention_mask(const Matrix& a, const SeqLayout& layout) {
    if (a.rows != layout.num_locals() || a.cols != layout.n_patch)
        throw std::invalid_argument("pad_attention_mask: mask must be 3 x n_patch");
    const int s = layout.seq_len();
    Matrix full(s, s, 0.0);
    for (int p = 0; p < layout.num_locals(); ++p) {
        double* row = full.row(layout.local_index(p));
        for (int j = 0; j < layout.n_patch; ++j)
            row[layout.patch_begin() + j] = a(p, j);
    }
    return full;
}

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                        const Matrix* mask, AttnCtx* ctx) {
    if (q.cols != k.cols || k.rows != v.rows)
        throw std::invalid_argument("masked_attention: shape mismatch");
    if (mask && (mask->rows != q.rows || mask->cols != k.rows))
        throw std::invalid_argument("masked_attention: mask shape mismatch");

    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix scores = kern::matmul_nt(q, k);
    scores *= scale;

    // Row-wise softmax restricted to open positions. Gated positions get an
    // exact 0 weight; a fully gated row yields an all-zero output row.
    Matrix p(scores.rows, scores.cols, 0.0);
    for (int i = 0; i < scores.rows; ++i) {
        const double* mrow = mask ? mask->row(i) : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < scores.cols; ++j) {
            if (mrow && mrow[j] == kMaskOff) continue;
            mx = std::max(mx, scores(i, j));
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;  // all gated
        double sum = 0.0;
        for (int j = 0; j < scores.cols; ++j) {
            if (mrow && mrow[j] == kMaskOff) continue;
            double e = std::exp(scores(i, j) - mx);
            p(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < scores.cols; ++j) p(i, j) /= sum;
    }

    Matrix out = kern::matmul(p, v);
    if (ctx) {
        ctx->q = q;
        ctx->k = k;
        ctx->v = v;
        ctx->p = p;
        ctx->scale = scale;
        ctx->has_mask = mask != nullptr;
        if (mask) ctx->mask = *mask;
    }
    return out;
}

void masked_attention_backward(const AttnCtx& ctx, const Matrix& dout,
                               Matrix& dq, Matrix& dk, Matrix& dv) {
    // out = P V
    Matrix dp = kern::matmul_nt(dout, ctx.v);
    dv = kern::matmul_tn(ctx.p, dout);

    // Softmax backward per row. Zero rows (fully gated) stay zero, and exact
    // zeros at gated positions kill any gradient into those scores.
    Matrix dscores(dp.rows, dp.cols);
    for (int i = 0; i < dp.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < dp.cols; ++j) acc += dp(i, j) * ctx.p(i, j);
        for (int j = 0; j < dp.cols; ++j)
            dscores(i, j) = ctx.p(i, j) * (dp(i, j) - acc);
    }
    dscores *= ctx.scale;
    dq = kern::matmul(dscores, ctx.k);
    dk = kern::matmul_tn(dscores, ctx.q);
}

Matrix masked_msa(const Matrix& q, const Matrix& k, const Matrix& v, int heads,
                  const Matrix* mask, MsaCoreCtx* ctx) {
    if (heads < 1 || q.cols % heads != 0)
        throw std::invalid_argument("masked_msa: dim not divisible by heads");
    const int dh = q.cols / heads;
    Matrix out(q.rows, q.cols);
    if (ctx) ctx->heads.assign(heads, AttnCtx{});
    for (int h = 0; h < heads; ++h) {
        Matrix qh(q.rows, dh), kh(k.rows, dh), vh(v.rows, dh);
        for (int r = 0; r < q.rows; ++r)
            for (int c = 0; c < dh; ++c) qh(r, c) = q(r, h * dh + c);
        for (int r = 0; r < k.rows; ++r)
            for (int c = 0; c < dh; ++c) {
                kh(r, c) = k(r, h * dh + c);
                vh(r, c) = v(r, h * dh + c);
            }
        Matrix oh = masked_attention(qh, kh, vh, mask, ctx ? &ctx->heads[h] : nullptr);
        for (int r = 0; r < q.rows; ++r)
            for (int c = 0; c < dh; ++c) out(r, h * dh + c) = oh(r, c);
    }
    return out;
}

void masked_msa_backward(const MsaCoreCtx& ctx, const Matrix& dout,
                         Matrix& dq, Matrix& dk, Matrix& dv) {
    const int heads = static_cast<int>(ctx.heads.size());
    if (heads == 0) throw std::logic_error("masked_msa_backward: empty ctx");
    const int dh = ctx.heads[0].q.cols;
    const int qr = ctx.heads[0].q.rows;
    const int kr = ctx.heads[0].k.rows;
    dq = Matrix(qr, heads * dh);
    dk = Matrix(kr, heads * dh);
    dv = Matrix(kr, heads * dh);
    for (int h = 0; h < heads; ++h) {
        Matrix doh(qr, dh);
        for (int r = 0; r < qr; ++r)
            for (int c = 0; c < dh; ++c) doh(r, c) = dout(r, h * dh + c);
        Matrix dqh, dkh, dvh;
        masked_attention_backward(ctx.heads[h], doh, dqh, dkh, dvh);
        for (int r = 0; r < qr; ++r)
            for (int c = 0; c < dh; ++c) dq(r, h * dh + c) = dqh(r, c);
        for (int r = 0; r < kr; ++r)
            for (int c = 0; c < dh; ++c) {
                dk(r, h * dh + c) = dkh(r, c);
                dv(r, h * dh + c) = dvh(r, c);
            }
    }
}

}  // namespace mgreid::ammsa
