#include <doctest.h>

#include <cmath>

#include "mgreid/attention.hpp"
#include "oracles.hpp"

using namespace mgreid;
using namespace mgreid::ammsa;
using oracle::random_matrix;

TEST_CASE("mask gate applies a strict threshold") {
    Matrix probs(1, 3);
    probs(0, 0) = 0.7;
    probs(0, 1) = 0.5;
    probs(0, 2) = 0.3;
    Matrix a = mask_gate(probs, 0.5);
    CHECK(a(0, 0) == 0.0);
    CHECK(a(0, 1) == kMaskOff);  // boundary stays closed
    CHECK(a(0, 2) == kMaskOff);
}

TEST_CASE("raising the threshold never opens new entries") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix probs = random_matrix(3, 16, rng, 0.0, 1.0);
        const double t1 = rng.uniform(0.0, 1.0);
        const double t2 = t1 + rng.uniform(0.0, 1.0 - t1);
        Matrix a1 = mask_gate(probs, t1);
        Matrix a2 = mask_gate(probs, t2);
        for (size_t i = 0; i < a1.v.size(); ++i)
            if (a2.v[i] == 0.0) CHECK(a1.v[i] == 0.0);
    }
}

TEST_CASE("binary matrices convert to additive gates") {
    Matrix g(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = 1.0;
    Matrix a = gate_from_binary(g);
    CHECK(a(0, 0) == 0.0);
    CHECK(a(0, 1) == kMaskOff);
    CHECK(a(1, 0) == kMaskOff);
    CHECK(a(1, 1) == 0.0);
}

TEST_CASE("padded mask touches only part-row x patch-column entries") {
    const SeqLayout layout{32};
    REQUIRE(layout.seq_len() == 36);
    Rng rng(7);
    Matrix probs = random_matrix(3, 32, rng, 0.0, 1.0);
    Matrix a = mask_gate(probs, 0.5);
    Matrix full = pad_attention_mask(a, layout);
    REQUIRE(full.rows == 36);
    REQUIRE(full.cols == 36);

    int sourced = 0;
    for (int i = 0; i < 36; ++i)
        for (int j = 0; j < 36; ++j) {
            const bool part_row = i >= layout.local_index(0);
            const bool patch_col = j >= layout.patch_begin() && j < layout.patch_end();
            if (part_row && patch_col) {
                CHECK(full(i, j) == a(i - layout.local_index(0), j - layout.patch_begin()));
                ++sourced;
            } else {
                CHECK(full(i, j) == 0.0);
            }
        }
    CHECK(sourced == 3 * 32);

    Matrix zeros(3, 32, 0.0);
    Matrix full0 = pad_attention_mask(zeros, layout);
    for (double x : full0.v) CHECK(x == 0.0);
}

TEST_CASE("a part row with every patch gated off still attends somewhere") {
    const SeqLayout layout{8};
    Matrix a(3, 8, kMaskOff);
    Matrix full = pad_attention_mask(a, layout);
    Rng rng(11);
    const int S = layout.seq_len();
    Matrix q = random_matrix(S, 4, rng), k = random_matrix(S, 4, rng), v = random_matrix(S, 4, rng);
    Matrix out = masked_attention(q, k, v, &full);
    const int row = layout.local_index(1);
    double norm = 0.0;
    for (int d = 0; d < 4; ++d) norm += std::abs(out(row, d));
    CHECK(norm > 0.0);
    CHECK(std::isfinite(norm));
}

TEST_CASE("unmasked attention equals a zero additive mask") {
    Rng rng(13);
    Matrix q = random_matrix(6, 8, rng), k = random_matrix(6, 8, rng), v = random_matrix(6, 8, rng);
    Matrix zero_mask(6, 6, 0.0);
    Matrix a = masked_attention(q, k, v, nullptr);
    Matrix b = masked_attention(q, k, v, &zero_mask);
    CHECK(max_abs_diff(a, b) < 1e-6);
}

TEST_CASE("a single surviving key receives all the attention") {
    Rng rng(17);
    Matrix q = random_matrix(3, 4, rng), k = random_matrix(5, 4, rng), v = random_matrix(5, 4, rng);
    Matrix mask(3, 5, kMaskOff);
    mask(1, 3) = 0.0;
    Matrix out = masked_attention(q, k, v, &mask);
    for (int d = 0; d < 4; ++d) CHECK(out(1, d) == doctest::Approx(v(3, d)).epsilon(1e-12));
    // Fully gated rows produce zeros.
    for (int d = 0; d < 4; ++d) {
        CHECK(out(0, d) == 0.0);
        CHECK(out(2, d) == 0.0);
    }
}

TEST_CASE("gated positions carry exactly zero post-softmax weight") {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix q = random_matrix(7, 6, rng), k = random_matrix(9, 6, rng),
               v = random_matrix(9, 6, rng);
        Matrix mask(7, 9, 0.0);
        for (size_t i = 0; i < mask.v.size(); ++i)
            if (rng.uniform() < 0.4) mask.v[i] = kMaskOff;
        AttnCtx ctx;
        masked_attention(q, k, v, &mask, &ctx);
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 9; ++j)
                if (mask(i, j) == kMaskOff) CHECK(ctx.p(i, j) == 0.0);
    }
}

TEST_CASE("masked attention equals brute-force restricted attention") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int s = 2 + rng.uniform_int(35);
        const int d = 1 + rng.uniform_int(64);
        Matrix q = random_matrix(s, d, rng), k = random_matrix(s, d, rng),
               v = random_matrix(s, d, rng);
        Matrix mask(s, s, 0.0);
        for (size_t i = 0; i < mask.v.size(); ++i)
            if (rng.uniform() < 0.3) mask.v[i] = kMaskOff;
        Matrix got = masked_attention(q, k, v, &mask);
        Matrix want = oracle::restricted_attention(
            q, k, v, [&](int i, int j) { return mask(i, j) == 0.0; });
        CHECK(max_abs_diff(got, want) < 1e-5);
    }
}

TEST_CASE("multi-head attention is per-head restricted attention, concatenated") {
    Rng rng(29);
    const int s = 10, d = 12, heads = 3, dh = d / heads;
    Matrix q = random_matrix(s, d, rng), k = random_matrix(s, d, rng), v = random_matrix(s, d, rng);
    Matrix mask(s, s, 0.0);
    for (size_t i = 0; i < mask.v.size(); ++i)
        if (rng.uniform() < 0.3) mask.v[i] = kMaskOff;

    Matrix got = masked_msa(q, k, v, heads, &mask);
    REQUIRE(got.rows == s);
    REQUIRE(got.cols == d);

    for (int h = 0; h < heads; ++h) {
        Matrix qh(s, dh), kh(s, dh), vh(s, dh);
        for (int i = 0; i < s; ++i)
            for (int c = 0; c < dh; ++c) {
                qh(i, c) = q(i, h * dh + c);
                kh(i, c) = k(i, h * dh + c);
                vh(i, c) = v(i, h * dh + c);
            }
        Matrix want = oracle::restricted_attention(
            qh, kh, vh, [&](int i, int j) { return mask(i, j) == 0.0; });
        for (int i = 0; i < s; ++i)
            for (int c = 0; c < dh; ++c)
                CHECK(got(i, h * dh + c) == doctest::Approx(want(i, c)).epsilon(1e-9));
    }
}

TEST_CASE("attention backward matches finite differences") {
    Rng rng(31);
    const int s = 5, d = 4;
    Matrix q = random_matrix(s, d, rng), k = random_matrix(s, d, rng), v = random_matrix(s, d, rng);
    Matrix mask(s, s, 0.0);
    mask(0, 1) = kMaskOff;
    mask(2, 2) = kMaskOff;
    Matrix w = random_matrix(s, d, rng);  // projection of the output to a scalar

    auto scalar = [&]() {
        Matrix out = masked_attention(q, k, v, &mask);
        double sum = 0.0;
        for (size_t i = 0; i < out.v.size(); ++i) sum += out.v[i] * w.v[i];
        return sum;
    };

    AttnCtx ctx;
    masked_attention(q, k, v, &mask, &ctx);
    Matrix dq, dk, dv;
    masked_attention_backward(ctx, w, dq, dk, dv);

    for (Matrix* mp : {&q, &k, &v}) {
        Matrix* grad = mp == &q ? &dq : (mp == &k ? &dk : &dv);
        for (size_t i = 0; i < mp->v.size(); i += 3) {
            const double fd = oracle::fd_grad(mp->v[i], scalar);
            CHECK(oracle::rel_err(grad->v[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("msa backward matches finite differences") {
    Rng rng(37);
    const int s = 6, d = 8, heads = 2;
    Matrix q = random_matrix(s, d, rng), k = random_matrix(s, d, rng), v = random_matrix(s, d, rng);
    Matrix mask(s, s, 0.0);
    mask(1, 0) = kMaskOff;
    Matrix w = random_matrix(s, d, rng);

    auto scalar = [&]() {
        Matrix out = masked_msa(q, k, v, heads, &mask);
        double sum = 0.0;
        for (size_t i = 0; i < out.v.size(); ++i) sum += out.v[i] * w.v[i];
        return sum;
    };

    MsaCoreCtx ctx;
    masked_msa(q, k, v, heads, &mask, &ctx);
    Matrix dq, dk, dv;
    masked_msa_backward(ctx, w, dq, dk, dv);

    for (Matrix* mp : {&q, &k, &v}) {
        Matrix* grad = mp == &q ? &dq : (mp == &k ? &dk : &dv);
        for (size_t i = 0; i < mp->v.size(); i += 5) {
            const double fd = oracle::fd_grad(mp->v[i], scalar);
            CHECK(oracle::rel_err(grad->v[i], fd) < 1e-4);
        }
    }
}
