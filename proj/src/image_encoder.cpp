#include "mgreid/image_encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace mgreid::img {

const char* mask_source_name(MaskSource m) {
    switch (m) {
        case MaskSource::predicted: return "predicted";
        case MaskSource::external: return "external";
        case MaskSource::stripe: return "stripe";
        case MaskSource::none: return "none";
    }
    throw std::logic_error("bad mask source");
}

MaskSource mask_source_from_name(const std::string& name) {
    for (MaskSource m : {MaskSource::predicted, MaskSource::external, MaskSource::stripe,
                         MaskSource::none})
        if (name == mask_source_name(m)) return m;
    throw std::invalid_argument("unknown mask source: " + name);
}

Matrix patchify(const Image& img, int patch_size) {
    const PatchGrid grid = PatchGrid::from_image(img.height, img.width, patch_size);
    const int p = patch_size;
    Matrix out(grid.num_patches(), p * p * 3);
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            double* row = out.row(r * grid.cols + c);
            int k = 0;
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        row[k++] = img.at(r * p + y, c * p + x, ch);
        }
    return out;
}

Vec fuse_tokens(const Matrix& z4, const std::array<bool, 4>& fuse) {
    if (z4.rows != 4) throw std::invalid_argument("fuse_tokens: expected 4 rows");
    int n = 0;
    Vec out(z4.cols, 0.0);
    for (int r = 0; r < 4; ++r) {
        if (!fuse[r]) continue;
        ++n;
        for (int c = 0; c < z4.cols; ++c) out[c] += z4(r, c);
    }
    if (n == 0) throw std::invalid_argument("fuse_tokens: nothing selected");
    for (double& v : out) v /= n;
    return out;
}

Matrix stripe_label_matrix(const PatchGrid& grid) {
    Matrix g(kNumParts, grid.num_patches(), 0.0);
    for (int part = 0; part < kNumParts; ++part) {
        const int r0 = static_cast<int>(std::lround(part * grid.rows / 3.0));
        const int r1 = static_cast<int>(std::lround((part + 1) * grid.rows / 3.0));
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < grid.cols; ++c) g(part, r * grid.cols + c) = 1.0;
    }
    return g;
}

// ---------------------------------------------------------------------------

ImageEncoder ImageEncoder::init(const EncoderConfig& cfg, uint64_t seed) {
    ImageEncoder e;
    e.cfg = cfg;
    const int n = cfg.n_patch();
    Rng rng(seed);

    e.patch_proj.init(cfg.patch_size * cfg.patch_size * 3, cfg.embed_dim, rng);
    e.patch_proj.W.trainable = false;
    e.patch_proj.b.trainable = false;

    e.pos_emb.init(1 + n, cfg.embed_dim);
    for (double& x : e.pos_emb.w.v) x = rng.normal(0.0, 0.02);
    e.pos_emb.trainable = false;

    e.global_token.init(1, cfg.embed_dim);
    for (double& x : e.global_token.w.v) x = rng.normal(0.0, 0.02);
    e.local_tokens.init(3, cfg.embed_dim);
    for (double& x : e.local_tokens.w.v) x = rng.normal(0.0, 0.02);

    e.layers.resize(cfg.layers);
    for (auto& l : e.layers) l.init(cfg.embed_dim, cfg.heads, 2 * cfg.embed_dim, rng);
    e.rmps.resize(cfg.layers);
    for (auto& r : e.rmps) r.init(cfg.embed_dim, n, cfg.rmp_heads, rng);
    e.ln_final.init(cfg.embed_dim);
    e.proj.init(cfg.embed_dim, cfg.feature_dim, rng, /*bias=*/false);
    return e;
}

ImageEncoder::Output ImageEncoder::forward(const Image& img, MaskSource source, const Matrix* g,
                                           const std::array<bool, 4>& fuse, Ctx* ctx) const {
    const ammsa::SeqLayout lay = cfg.layout();
    const int n = lay.n_patch, d = cfg.embed_dim;
    if (img.height != cfg.image_height || img.width != cfg.image_width)
        throw std::invalid_argument("ImageEncoder: image size mismatch");

    Matrix stripe;
    if (source == MaskSource::stripe) {
        stripe = stripe_label_matrix(cfg.grid());
        g = &stripe;
    }
    if (source == MaskSource::external || source == MaskSource::stripe) {
        if (!g) throw std::invalid_argument("ImageEncoder: external gating needs a matrix");
        if (g->rows != 3 || g->cols != n)
            throw std::invalid_argument("ImageEncoder: gating matrix must be 3 x n_patch");
    }

    Matrix f0 = patch_proj.forward(patchify(img, cfg.patch_size));
    Matrix x(lay.seq_len(), d);
    // Global and part tokens share the global position embedding.
    for (int c = 0; c < d; ++c) x(0, c) = global_token.w(0, c) + pos_emb.w(0, c);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) x(lay.patch_begin() + i, c) = f0(i, c) + pos_emb.w(1 + i, c);
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < d; ++c)
            x(lay.local_index(p), c) = local_tokens.w(p, c) + pos_emb.w(0, c);

    if (ctx) {
        ctx->layers.resize(layers.size());
        ctx->fuse = fuse;
    }
    // Part tokens outside the active granularities are ablated: their row and
    // column are gated off in every layer, which under the zero-output rule
    // for fully gated rows is equivalent to removing them from the sequence.
    // Fusion already skips them, so the ablated variants carry no trace of
    // the unused part tokens.
    const std::array<bool, 3> active{fuse[1], fuse[2], fuse[3]};
    const bool partial = !(active[0] && active[1] && active[2]);
    Output out;
    Matrix m_prev(3, n, cfg.m0_logit);
    for (size_t l = 0; l < layers.size(); ++l) {
        Matrix r_prev(3, d), f_prev(n, d);
        for (int p = 0; p < 3; ++p)
            for (int c = 0; c < d; ++c) r_prev(p, c) = x(lay.local_index(p), c);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) f_prev(i, c) = x(lay.patch_begin() + i, c);

        ammsa::Rmp::Out ro =
            rmps[l].forward(r_prev, f_prev, m_prev, ctx ? &ctx->layers[l].rmp : nullptr);
        out.mask_logits.push_back(ro.logits);
        out.mask_probs.push_back(ro.probs);

        Matrix a_full;
        bool has_mask = false;
        switch (source) {
            case MaskSource::predicted:
                a_full = ammsa::pad_attention_mask(ammsa::mask_gate(ro.probs, cfg.mask_threshold), lay);
                has_mask = true;
                break;
            case MaskSource::external:
            case MaskSource::stripe:
                a_full = ammsa::pad_attention_mask(ammsa::gate_from_binary(*g), lay);
                has_mask = true;
                break;
            case MaskSource::none:
                break;
        }
        if (partial) {
            if (!has_mask) {
                a_full = Matrix(lay.seq_len(), lay.seq_len(), 0.0);
                has_mask = true;
            }
            for (int p = 0; p < 3; ++p) {
                if (active[p]) continue;
                const int li = lay.local_index(p);
                for (int j = 0; j < lay.seq_len(); ++j) {
                    a_full(li, j) = ammsa::kMaskOff;
                    a_full(j, li) = ammsa::kMaskOff;
                }
            }
        }
        x = layers[l].forward(x, has_mask ? &a_full : nullptr,
                              ctx ? &ctx->layers[l].tr : nullptr);
        m_prev = std::move(ro.logits);
    }

    Matrix y4(4, d);
    for (int c = 0; c < d; ++c) y4(0, c) = x(0, c);
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < d; ++c) y4(1 + p, c) = x(lay.local_index(p), c);
    Matrix h = ln_final.forward(y4, ctx ? &ctx->lnf : nullptr);
    Matrix z = proj.forward(h, ctx ? &ctx->proj : nullptr);
    if (ctx) {
        ctx->z4 = z;
        int nf = 0;
        for (bool b : fuse) nf += b;
        ctx->n_fused = nf;
    }
    out.vmg = fuse_tokens(z, fuse);

    // Final part tokens of the sequence itself (pre-norm).
    Matrix locals(3, d);
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < d; ++c) locals(p, c) = x(lay.local_index(p), c);
    out.local_final = std::move(locals);
    return out;
}

void ImageEncoder::backward(const Ctx& ctx, const Vec& dvmg,
                            const std::vector<Matrix>& dmask_logits) {
    const ammsa::SeqLayout lay = cfg.layout();
    const int n = lay.n_patch, d = cfg.embed_dim;
    const int fd = cfg.feature_dim;
    if (!dmask_logits.empty() && dmask_logits.size() != layers.size())
        throw std::invalid_argument("backward: bad mask gradient count");

    Matrix dz(4, fd, 0.0);
    for (int r = 0; r < 4; ++r)
        if (ctx.fuse[r])
            for (int c = 0; c < fd; ++c) dz(r, c) = dvmg[c] / ctx.n_fused;
    Matrix dh = proj.backward(ctx.proj, dz);
    Matrix dy4 = ln_final.backward(ctx.lnf, dh);

    Matrix dx(lay.seq_len(), d, 0.0);
    for (int c = 0; c < d; ++c) dx(0, c) = dy4(0, c);
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < d; ++c) dx(lay.local_index(p), c) = dy4(1 + p, c);

    Matrix carry(3, n, 0.0);
    const Matrix dr_res_zero(3, d, 0.0);
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        dx = layers[l].backward(ctx.layers[l].tr, dx);
        Matrix dlog = carry;
        if (!dmask_logits.empty()) dlog += dmask_logits[l];
        Matrix dr_prev, df_prev, dm_prev;
        rmps[l].backward(ctx.layers[l].rmp, dr_res_zero, dlog, dr_prev, df_prev, dm_prev);
        for (int p = 0; p < 3; ++p)
            for (int c = 0; c < d; ++c) dx(lay.local_index(p), c) += dr_prev(p, c);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < d; ++c) dx(lay.patch_begin() + i, c) += df_prev(i, c);
        carry = std::move(dm_prev);
    }
    // carry now holds the gradient w.r.t. the constant initial logits; drop it.

    if (global_token.trainable)
        for (int c = 0; c < d; ++c) global_token.g(0, c) += dx(0, c);
    if (local_tokens.trainable)
        for (int p = 0; p < 3; ++p)
            for (int c = 0; c < d; ++c) local_tokens.g(p, c) += dx(lay.local_index(p), c);
    // pos_emb and patch_proj are frozen and the raw pixels need no gradient,
    // so the patch rows stop here.
}

void ImageEncoder::visit(const std::string& prefix, const nn::ParamVisitor& v) {
    patch_proj.visit(prefix + ".patch", v);
    v(prefix + ".pos", pos_emb);
    v(prefix + ".tok_g", global_token);
    v(prefix + ".tok_l", local_tokens);
    for (size_t l = 0; l < layers.size(); ++l)
        layers[l].visit(prefix + ".l" + std::to_string(l), v);
    for (size_t l = 0; l < rmps.size(); ++l)
        rmps[l].visit(prefix + ".rmp" + std::to_string(l), v);
    ln_final.visit(prefix + ".lnf", v);
    proj.visit(prefix + ".proj", v);
}

}  // namespace mgreid::img
