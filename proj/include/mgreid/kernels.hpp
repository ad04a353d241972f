#pragma once

#include "mgreid/matrix.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgreid::kern {

// Every kernel has a serial reference implementation and an OpenMP variant.
// Both walk the output row by row with an identical per-row routine, so
// results are bitwise equal regardless of backend or thread count.
enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();

// C = A * B          (A: m x k, B: k x n)
void gemm(const Matrix& A, const Matrix& B, Matrix& C);
// C = A * B^T        (A: m x k, B: n x k)
void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C);
// C = A^T * B        (A: k x m, B: k x n)
void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C);

Matrix matmul(const Matrix& A, const Matrix& B);
Matrix matmul_nt(const Matrix& A, const Matrix& B);
Matrix matmul_tn(const Matrix& A, const Matrix& B);

// Row-wise softmax in place with max subtraction.
void softmax_rows(Matrix& M);

// Serial reference entry points, kept visible for the equivalence tests and
// the benchmark target.
namespace serial {
void gemm(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C);
void softmax_rows(Matrix& M);
}  // namespace serial

namespace parallel {
void gemm(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C);
void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C);
void softmax_rows(Matrix& M);
}  // namespace parallel

// Runs f(i) for i in [0, n). Iterations must touch disjoint state.
template <class F>
void parallel_for(int n, F&& f) {
    if (backend() == Backend::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int i = 0; i < n; ++i) f(i);
    } else {
        for (int i = 0; i < n; ++i) f(i);
    }
}

}  // namespace mgreid::kern
