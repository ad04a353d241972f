#include "mgreid/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace mgreid::obj {

namespace {

// softmax of a small logit vector, numerically shifted
Vec softmax(const Vec& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    Vec p(z.size());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// -log p[y] computed stably from logits
double nll(const Vec& z, int y) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - mx);
    return std::log(lse) + mx - z[y];
}

void check_label(int y, int c) {
    if (y < 0 || y >= c) throw std::out_of_range("loss: label out of range");
}

// cosine similarities of v against unit memory rows, plus the pieces the
// Jacobian needs
struct CosSims {
    Vec s;
    Vec vhat;
    double vnorm;
};

CosSims cosine_sims(const Vec& v, const PrototypeMemory& mem) {
    CosSims out;
    out.vnorm = norm2(v);
    if (out.vnorm <= 0.0) throw std::domain_error("loss: zero feature vector");
    out.vhat = v;
    for (double& x : out.vhat) x /= out.vnorm;
    out.s.resize(mem.num_classes());
    for (int j = 0; j < mem.num_classes(); ++j)
        out.s[j] = dot(out.vhat, mem.rows.row_vec(j));
    return out;
}

// dv from ds for cosine sims: d s_j / d v = (m_j - s_j vhat) / |v|
void cosine_backward(const CosSims& cs, const PrototypeMemory& mem, const Vec& ds, Vec& dv) {
    const int d = mem.dim();
    dv.assign(d, 0.0);
    for (int j = 0; j < mem.num_classes(); ++j) {
        const double* m = mem.rows.row(j);
        for (int k = 0; k < d; ++k) dv[k] += ds[j] * (m[k] - cs.s[j] * cs.vhat[k]) / cs.vnorm;
    }
}

}  // namespace

PrototypeMemory build_memory(const std::vector<Vec>& feats, const std::vector<int>& labels,
                             int num_classes) {
    if (feats.size() != labels.size())
        throw std::invalid_argument("build_memory: size mismatch");
    if (feats.empty()) throw std::invalid_argument("build_memory: no features");
    const int d = static_cast<int>(feats[0].size());
    PrototypeMemory mem;
    mem.rows = Matrix(num_classes, d, 0.0);
    std::vector<int> count(num_classes, 0);
    for (size_t i = 0; i < feats.size(); ++i) {
        check_label(labels[i], num_classes);
        for (int k = 0; k < d; ++k) mem.rows(labels[i], k) += feats[i][k];
        ++count[labels[i]];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (count[c] == 0)
            throw std::invalid_argument("build_memory: class " + std::to_string(c) +
                                        " has no samples");
        Vec row = mem.rows.row_vec(c);
        for (double& x : row) x /= count[c];
        mem.rows.set_row(c, normalized(row));
    }
    return mem;
}

void update_memory(PrototypeMemory& mem, const std::vector<Vec>& feats,
                   const std::vector<int>& labels, double gamma) {
    if (feats.size() != labels.size())
        throw std::invalid_argument("update_memory: size mismatch");
    for (size_t i = 0; i < feats.size(); ++i) check_label(labels[i], mem.num_classes());
    for (int c = 0; c < mem.num_classes(); ++c) {
        int hardest = -1;
        double worst = 2.0;
        for (size_t i = 0; i < feats.size(); ++i) {
            if (labels[i] != c) continue;
            const Vec vhat = normalized(feats[i]);
            const double s = dot(vhat, mem.rows.row_vec(c));
            if (s < worst) {
                worst = s;
                hardest = static_cast<int>(i);
            }
        }
        if (hardest < 0) continue;
        const Vec vstar = normalized(feats[hardest]);
        Vec row = mem.rows.row_vec(c);
        for (size_t k = 0; k < row.size(); ++k)
            row[k] = gamma * vstar[k] + (1.0 - gamma) * row[k];
        mem.rows.set_row(c, normalized(row));
    }
}

double loss_cmp(const Vec& t, const PrototypeMemory& mem, int y, Vec* dt) {
    check_label(y, mem.num_classes());
    Vec s(mem.num_classes());
    for (int j = 0; j < mem.num_classes(); ++j) s[j] = dot(t, mem.rows.row_vec(j));
    const double loss = nll(s, y);
    if (dt) {
        Vec p = softmax(s);
        dt->assign(t.size(), 0.0);
        for (int j = 0; j < mem.num_classes(); ++j) {
            const double c = p[j] - (j == y ? 1.0 : 0.0);
            const double* m = mem.rows.row(j);
            for (size_t k = 0; k < t.size(); ++k) (*dt)[k] += c * m[k];
        }
    }
    return loss;
}

double loss_id(const Vec& v_bn, nn::Linear& cls, int y, Vec* dv, double grad_weight) {
    check_label(y, cls.W.w.rows);
    Matrix x(1, static_cast<int>(v_bn.size()));
    x.set_row(0, v_bn);
    nn::Linear::Ctx ctx;
    Matrix z = cls.forward(x, &ctx);
    const double loss = nll(z.row_vec(0), y);
    if (dv) {
        Vec p = softmax(z.row_vec(0));
        Matrix dz(1, z.cols);
        for (int j = 0; j < z.cols; ++j)
            dz(0, j) = grad_weight * (p[j] - (j == y ? 1.0 : 0.0));
        Matrix dx = cls.backward(ctx, dz);
        *dv = dx.row_vec(0);
    }
    return loss;
}

double loss_imp(const Vec& v, const PrototypeMemory& mem, int y, double tau, Vec* dv) {
    check_label(y, mem.num_classes());
    if (tau <= 0.0) throw std::invalid_argument("loss_imp: tau must be positive");
    CosSims cs = cosine_sims(v, mem);
    Vec z(cs.s.size());
    for (size_t j = 0; j < z.size(); ++j) z[j] = cs.s[j] / tau;
    const double loss = nll(z, y);
    if (dv) {
        Vec p = softmax(z);
        Vec ds(z.size());
        for (size_t j = 0; j < z.size(); ++j)
            ds[j] = (p[j] - (static_cast<int>(j) == y ? 1.0 : 0.0)) / tau;
        cosine_backward(cs, mem, ds, *dv);
    }
    return loss;
}

double loss_i2tce(const Vec& v, const PrototypeMemory& text_mem, int y, double eps_smooth,
                  Vec* dv) {
    check_label(y, text_mem.num_classes());
    const int c = text_mem.num_classes();
    CosSims cs = cosine_sims(v, text_mem);
    Vec p = softmax(cs.s);
    // smoothed target: 1 - eps + eps/C on the true class, eps/C elsewhere
    double loss = 0.0;
    double mx = cs.s[0];
    for (double s : cs.s) mx = std::max(mx, s);
    double lse = 0.0;
    for (double s : cs.s) lse += std::exp(s - mx);
    const double log_z = std::log(lse) + mx;
    for (int j = 0; j < c; ++j) {
        const double q = (j == y ? 1.0 - eps_smooth : 0.0) + eps_smooth / c;
        loss += q * (log_z - cs.s[j]);
    }
    if (dv) {
        Vec ds(c);
        for (int j = 0; j < c; ++j) {
            const double q = (j == y ? 1.0 - eps_smooth : 0.0) + eps_smooth / c;
            ds[j] = p[j] - q;
        }
        cosine_backward(cs, text_mem, ds, *dv);
    }
    return loss;
}

// ---------------------------------------------------------------------------

namespace {

// Shared mask-loss core over probabilities; gradients generated in prob space
// and/or logit space.
MaskLossOut mask_loss_core(const std::vector<Matrix>& probs, const Matrix& g, double eps_dice,
                           const std::array<bool, 3>& parts, std::vector<Matrix>* dprobs,
                           const std::vector<Matrix>* logits, std::vector<Matrix>* dlogits) {
    if (probs.empty()) throw std::invalid_argument("loss_mask: no layers");
    const int np = probs[0].cols;
    int active = 0;
    for (bool b : parts) active += b;
    if (active == 0) throw std::invalid_argument("loss_mask: no active parts");
    if (g.rows != 3 || g.cols != np) throw std::invalid_argument("loss_mask: bad label shape");

    const int layers = static_cast<int>(probs.size());
    const double bce_denom = static_cast<double>(active) * np * layers;
    const double dice_denom = static_cast<double>(active) * layers;

    if (dprobs) dprobs->assign(layers, Matrix(3, np, 0.0));
    if (dlogits) dlogits->assign(layers, Matrix(3, np, 0.0));

    MaskLossOut out;
    for (int l = 0; l < layers; ++l) {
        const Matrix& m = probs[l];
        if (m.rows != 3 || m.cols != np) throw std::invalid_argument("loss_mask: bad prob shape");
        for (int part = 0; part < 3; ++part) {
            if (!parts[part]) continue;
            double inter = 0.0, msum = 0.0, gsum = 0.0;
            for (int j = 0; j < np; ++j) {
                const double mv = m(part, j), gv = g(part, j);
                // bce from the logit when available (stable at saturation)
                if (logits) {
                    const double z = (*logits)[l](part, j);
                    // softplus(z) - g*z == -log sigmoid(z) + (1-g)z for g in {0,1}
                    const double sp = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
                    out.bce += sp - gv * z;
                } else {
                    const double pc = std::min(1.0 - 1e-12, std::max(1e-12, mv));
                    out.bce += -(gv * std::log(pc) + (1.0 - gv) * std::log(1.0 - pc));
                }
                inter += mv * gv;
                msum += mv;
                gsum += gv;
            }
            const double denom = msum + gsum + eps_dice;
            out.dice += 1.0 - 2.0 * inter / denom;
            for (int j = 0; j < np; ++j) {
                const double mv = m(part, j), gv = g(part, j);
                const double dbce_dm_numer = mv - gv;  // after sigmoid-cancellation
                const double ddice_dm = 2.0 * (inter - gv * denom) / (denom * denom) / dice_denom;
                if (dprobs) {
                    const double pc = std::min(1.0 - 1e-12, std::max(1e-12, mv));
                    const double dbce_dm = (pc - gv) / (pc * (1.0 - pc)) / bce_denom;
                    (*dprobs)[l](part, j) = dbce_dm + ddice_dm;
                }
                if (dlogits) {
                    const double sig_grad = mv * (1.0 - mv);
                    (*dlogits)[l](part, j) =
                        dbce_dm_numer / bce_denom + ddice_dm * sig_grad;
                }
            }
        }
    }
    out.bce /= bce_denom;
    out.total = out.bce + out.dice / dice_denom;
    out.dice /= dice_denom;
    return out;
}

}  // namespace

MaskLossOut loss_mask(const std::vector<Matrix>& probs, const Matrix& g, double eps_dice,
                      const std::array<bool, 3>& parts, std::vector<Matrix>* dprobs) {
    return mask_loss_core(probs, g, eps_dice, parts, dprobs, nullptr, nullptr);
}

MaskLossOut loss_mask_logits(const std::vector<Matrix>& logits, const Matrix& g, double eps_dice,
                             const std::array<bool, 3>& parts, std::vector<Matrix>* dlogits) {
    std::vector<Matrix> probs(logits.size());
    for (size_t l = 0; l < logits.size(); ++l) {
        probs[l] = Matrix(logits[l].rows, logits[l].cols);
        for (size_t i = 0; i < logits[l].v.size(); ++i) probs[l].v[i] = sigmoid(logits[l].v[i]);
    }
    return mask_loss_core(probs, g, eps_dice, parts, nullptr, &logits, dlogits);
}

double stage_total(LossReport& r, int stage) {
    if (stage == 1) {
        r.total = r.cmp;
    } else if (stage == 2) {
        r.mask = r.bce + r.dice;
        r.total = r.id + r.imp + r.i2tce + r.mask;
    } else {
        throw std::invalid_argument("stage_total: stage must be 1 or 2");
    }
    for (double v : {r.cmp, r.id, r.imp, r.i2tce, r.bce, r.dice, r.mask, r.total})
        if (!std::isfinite(v)) throw std::runtime_error("loss diverged: non-finite value");
    return r.total;
}

}  // namespace mgreid::obj
