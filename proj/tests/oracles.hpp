#pragma once

// Independent reference implementations the tests compare against. Everything
// here is written in the most literal way possible (triple loops, per-pixel
// scans, per-row restricted softmax) and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mgreid/matrix.hpp"
#include "mgreid/parts.hpp"
#include "mgreid/rng.hpp"

namespace oracle {

using mgreid::Matrix;
using mgreid::PartBox;
using mgreid::PatchGrid;
using mgreid::Rng;
using mgreid::Vec;

inline Matrix random_matrix(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (double& x : m.v) x = rng.uniform(lo, hi);
    return m;
}

// C = A * B, plain triple loop.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols, 0.0);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

// softmax(q k^T / sqrt(d) [restricted to open columns]) v, computed row by
// row over only the open columns. open(i, j) says whether key j is visible
// from query i. Rows with no open column produce zeros.
inline Matrix restricted_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   const std::function<bool(int, int)>& open) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix out(q.rows, v.cols, 0.0);
    for (int i = 0; i < q.rows; ++i) {
        std::vector<int> cols;
        for (int j = 0; j < k.rows; ++j)
            if (open(i, j)) cols.push_back(j);
        if (cols.empty()) continue;
        std::vector<double> score(cols.size());
        double mx = -1e300;
        for (size_t c = 0; c < cols.size(); ++c) {
            double s = 0.0;
            for (int d = 0; d < q.cols; ++d) s += q(i, d) * k(cols[c], d);
            score[c] = s * scale;
            mx = std::max(mx, score[c]);
        }
        double z = 0.0;
        for (double& s : score) {
            s = std::exp(s - mx);
            z += s;
        }
        for (size_t c = 0; c < cols.size(); ++c)
            for (int d = 0; d < v.cols; ++d) out(i, d) += score[c] / z * v(cols[c], d);
    }
    return out;
}

// Patch mask by brute force: scan every pixel of every patch and flag the
// patch when any of its pixels falls inside the box.
inline std::vector<uint8_t> pixel_rasterize(const PartBox& b, const PatchGrid& g) {
    std::vector<uint8_t> mask(g.num_patches(), 0);
    for (int pr = 0; pr < g.rows; ++pr)
        for (int pc = 0; pc < g.cols; ++pc) {
            bool hit = false;
            for (int y = pr * g.patch_size; y < (pr + 1) * g.patch_size && !hit; ++y)
                for (int x = pc * g.patch_size; x < (pc + 1) * g.patch_size && !hit; ++x)
                    if (y >= b.y_min && y < b.y_max && x >= b.x_min && x < b.x_max) hit = true;
            mask[pr * g.cols + pc] = hit ? 1 : 0;
        }
    return mask;
}

// One query's average precision and whether its top item matches, by explicit
// sort. Gallery items with the query's id and camera are skipped. Ties break
// by ascending gallery index. Returns false when no valid positive exists.
inline bool brute_ap(const Vec& qf, int q_id, int q_cam, const Matrix& gf,
                     const std::vector<int>& g_ids, const std::vector<int>& g_cams, double* ap,
                     bool* top1) {
    struct Item {
        double sim;
        int idx;
        bool pos;
    };
    std::vector<Item> items;
    for (int j = 0; j < gf.rows; ++j) {
        if (g_ids[j] == q_id && g_cams[j] == q_cam) continue;
        double s = 0.0;
        for (int d = 0; d < gf.cols; ++d) s += qf[d] * gf(j, d);
        items.push_back({s, j, g_ids[j] == q_id});
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.idx < b.idx;
    });
    int n_pos = 0;
    for (const auto& it : items) n_pos += it.pos ? 1 : 0;
    if (n_pos == 0) return false;
    double sum = 0.0;
    int hits = 0;
    for (size_t r = 0; r < items.size(); ++r)
        if (items[r].pos) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    *ap = sum / n_pos;
    *top1 = !items.empty() && items.front().pos;
    return true;
}

// Central finite difference of scalar() w.r.t. one coordinate reached through
// set(). Restores the original value.
inline double fd_grad(double& slot, const std::function<double()>& scalar, double h = 1e-5) {
    const double orig = slot;
    slot = orig + h;
    const double fp = scalar();
    slot = orig - h;
    const double fm = scalar();
    slot = orig;
    return (fp - fm) / (2.0 * h);
}

// Relative error with an absolute floor for near-zero gradients.
inline double rel_err(double got, double want, double floor_ = 1e-8) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor_});
}

// Set intersection-over-union of two binary vectors.
inline double set_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    int inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

}  // namespace oracle
