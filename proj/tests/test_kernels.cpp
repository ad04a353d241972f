#include <doctest.h>

#include "mgreid/kernels.hpp"
#include "mgreid/rng.hpp"
#include "oracles.hpp"

using namespace mgreid;
using oracle::random_matrix;

namespace {

// Restores the previous backend when a test body returns.
struct BackendGuard {
    kern::Backend saved = kern::backend();
    ~BackendGuard() { kern::set_backend(saved); }
};

}  // namespace

TEST_CASE("gemm variants match the naive triple loop") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + rng.uniform_int(17);
        const int k = 1 + rng.uniform_int(17);
        const int n = 1 + rng.uniform_int(17);
        Matrix a = random_matrix(m, k, rng);
        Matrix b = random_matrix(k, n, rng);
        Matrix want = oracle::naive_matmul(a, b);

        CHECK(max_abs_diff(kern::matmul(a, b), want) < 1e-12);
        CHECK(max_abs_diff(kern::matmul_nt(a, oracle::transpose(b)), want) < 1e-12);
        CHECK(max_abs_diff(kern::matmul_tn(oracle::transpose(a), b), want) < 1e-12);
    }
}

TEST_CASE("serial and parallel kernels are bitwise equal") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 1 + rng.uniform_int(33);
        const int k = 1 + rng.uniform_int(33);
        const int n = 1 + rng.uniform_int(33);
        Matrix a = random_matrix(m, k, rng);
        Matrix b = random_matrix(k, n, rng);
        Matrix bt = oracle::transpose(b);
        Matrix at = oracle::transpose(a);

        Matrix cs(m, n), cp(m, n);
        kern::serial::gemm(a, b, cs);
        kern::parallel::gemm(a, b, cp);
        CHECK(cs.v == cp.v);

        kern::serial::gemm_nt(a, bt, cs);
        kern::parallel::gemm_nt(a, bt, cp);
        CHECK(cs.v == cp.v);

        kern::serial::gemm_tn(at, b, cs);
        kern::parallel::gemm_tn(at, b, cp);
        CHECK(cs.v == cp.v);

        Matrix ss = random_matrix(m, n, rng, -30.0, 30.0);
        Matrix sp = ss;
        kern::serial::softmax_rows(ss);
        kern::parallel::softmax_rows(sp);
        CHECK(ss.v == sp.v);
    }
}

TEST_CASE("softmax rows are normalized and max-stable") {
    Rng rng(3);
    Matrix m = random_matrix(6, 9, rng, -5.0, 5.0);
    // A huge common offset must not overflow thanks to max subtraction.
    for (double& x : m.v) x += 1e4;
    kern::softmax_rows(m);
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            CHECK(m(i, j) >= 0.0);
            s += m(i, j);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("backend switch routes the dispatching entry points") {
    BackendGuard guard;
    Rng rng(11);
    Matrix a = random_matrix(13, 9, rng);
    Matrix b = random_matrix(9, 5, rng);

    kern::set_backend(kern::Backend::serial);
    CHECK(kern::backend() == kern::Backend::serial);
    Matrix cs = kern::matmul(a, b);

    kern::set_backend(kern::Backend::parallel);
    CHECK(kern::backend() == kern::Backend::parallel);
    Matrix cp = kern::matmul(a, b);

    CHECK(cs.v == cp.v);
}

TEST_CASE("parallel_for covers every index exactly once") {
    BackendGuard guard;
    for (kern::Backend be : {kern::Backend::serial, kern::Backend::parallel}) {
        kern::set_backend(be);
        std::vector<int> hits(257, 0);
        kern::parallel_for(257, [&](int i) { hits[i] += 1; });
        for (int h : hits) CHECK(h == 1);
    }
}

TEST_CASE("gemm rejects mismatched shapes") {
    Matrix a(3, 4), b(5, 2), c;
    CHECK_THROWS_AS(kern::gemm(a, b, c), std::invalid_argument);
}
