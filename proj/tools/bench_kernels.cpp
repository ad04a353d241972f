// Compares the serial reference kernels against the OpenMP versions and
// checks they agree bitwise on shared inputs.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "mgreid/kernels.hpp"
#include "mgreid/matrix.hpp"
#include "mgreid/rng.hpp"

using namespace mgreid;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.v) v = rng.normal();
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    int n = argc > 1 ? std::stoi(argv[1]) : 256;
    int reps = argc > 2 ? std::stoi(argv[2]) : 5;

    Rng rng(99);
    Matrix a = random_matrix(n, n, rng);
    Matrix b = random_matrix(n, n, rng);
    Matrix scores = random_matrix(n, n, rng);

    std::printf("%-14s %10s %10s %8s  %s\n", "kernel", "serial ms", "openmp ms", "speedup",
                "bitwise");

    auto bench = [&](const char* name, const std::function<void(Matrix&)>& serial_fn,
                     const std::function<void(Matrix&)>& parallel_fn) {
        Matrix ref, par;
        double ts = time_ms([&] { serial_fn(ref); }, reps);
        double tp = time_ms([&] { parallel_fn(par); }, reps);
        bool same = ref.rows == par.rows && ref.cols == par.cols && ref.v == par.v;
        std::printf("%-14s %10.3f %10.3f %7.2fx  %s\n", name, ts, tp, ts / tp,
                    same ? "yes" : "NO");
    };

    bench(
        "gemm", [&](Matrix& out) { kern::serial::gemm(a, b, out); },
        [&](Matrix& out) { kern::parallel::gemm(a, b, out); });
    bench(
        "gemm_nt", [&](Matrix& out) { kern::serial::gemm_nt(a, b, out); },
        [&](Matrix& out) { kern::parallel::gemm_nt(a, b, out); });
    bench(
        "gemm_tn", [&](Matrix& out) { kern::serial::gemm_tn(a, b, out); },
        [&](Matrix& out) { kern::parallel::gemm_tn(a, b, out); });
    bench(
        "softmax_rows",
        [&](Matrix& out) {
            out = scores;
            kern::serial::softmax_rows(out);
        },
        [&](Matrix& out) {
            out = scores;
            kern::parallel::softmax_rows(out);
        });

    return 0;
}
