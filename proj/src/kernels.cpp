#include "mgreid/kernels.hpp"

#include <atomic>
#include <cmath>

namespace mgreid::kern {

namespace {

std::atomic<Backend> g_backend{Backend::parallel};

void check_gemm(const Matrix& A, const Matrix& B, Matrix& C, int m, int n, int k_a, int k_b) {
    if (k_a != k_b)
        throw std::invalid_argument("gemm: inner dimensions disagree (" + std::to_string(k_a) +
                                    " vs " + std::to_string(k_b) + ")");
    if (C.rows != m || C.cols != n) C = Matrix(m, n);
    (void)A;
    (void)B;
}

// Per-row routines shared by both backends.

inline void gemm_row(const Matrix& A, const Matrix& B, Matrix& C, int i) {
    const int n = B.cols, k = A.cols;
    double* c = C.row(i);
    for (int j = 0; j < n; ++j) c[j] = 0.0;
    const double* a = A.row(i);
    for (int p = 0; p < k; ++p) {
        const double ap = a[p];
        const double* b = B.row(p);
        for (int j = 0; j < n; ++j) c[j] += ap * b[j];
    }
}

inline void gemm_nt_row(const Matrix& A, const Matrix& B, Matrix& C, int i) {
    const int n = B.rows, k = A.cols;
    const double* a = A.row(i);
    double* c = C.row(i);
    for (int j = 0; j < n; ++j) {
        const double* b = B.row(j);
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += a[p] * b[p];
        c[j] = s;
    }
}

inline void gemm_tn_row(const Matrix& A, const Matrix& B, Matrix& C, int i) {
    // C(i, :) = sum_p A(p, i) * B(p, :)
    const int n = B.cols, k = A.rows;
    double* c = C.row(i);
    for (int j = 0; j < n; ++j) c[j] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double ap = A(p, i);
        const double* b = B.row(p);
        for (int j = 0; j < n; ++j) c[j] += ap * b[j];
    }
}

inline void softmax_row(Matrix& M, int i) {
    double* x = M.row(i);
    const int n = M.cols;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        x[j] = std::exp(x[j] - mx);
        sum += x[j];
    }
    for (int j = 0; j < n; ++j) x[j] /= sum;
}

}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

namespace serial {

void gemm(const Matrix& A, const Matrix& B, Matrix& C) {
    check_gemm(A, B, C, A.rows, B.cols, A.cols, B.rows);
    for (int i = 0; i < A.rows; ++i) gemm_row(A, B, C, i);
}

void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    check_gemm(A, B, C, A.rows, B.rows, A.cols, B.cols);
    for (int i = 0; i < A.rows; ++i) gemm_nt_row(A, B, C, i);
}

void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    check_gemm(A, B, C, A.cols, B.cols, A.rows, B.rows);
    for (int i = 0; i < A.cols; ++i) gemm_tn_row(A, B, C, i);
}

void softmax_rows(Matrix& M) {
    for (int i = 0; i < M.rows; ++i) softmax_row(M, i);
}

}  // namespace serial

namespace parallel {

void gemm(const Matrix& A, const Matrix& B, Matrix& C) {
    check_gemm(A, B, C, A.rows, B.cols, A.cols, B.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < A.rows; ++i) gemm_row(A, B, C, i);
}

void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    check_gemm(A, B, C, A.rows, B.rows, A.cols, B.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < A.rows; ++i) gemm_nt_row(A, B, C, i);
}

void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    check_gemm(A, B, C, A.cols, B.cols, A.rows, B.rows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < A.cols; ++i) gemm_tn_row(A, B, C, i);
}

void softmax_rows(Matrix& M) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < M.rows; ++i) softmax_row(M, i);
}

}  // namespace parallel

void gemm(const Matrix& A, const Matrix& B, Matrix& C) {
    backend() == Backend::parallel ? parallel::gemm(A, B, C) : serial::gemm(A, B, C);
}
void gemm_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    backend() == Backend::parallel ? parallel::gemm_nt(A, B, C) : serial::gemm_nt(A, B, C);
}
void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    backend() == Backend::parallel ? parallel::gemm_tn(A, B, C) : serial::gemm_tn(A, B, C);
}
void softmax_rows(Matrix& M) {
    backend() == Backend::parallel ? parallel::softmax_rows(M) : serial::softmax_rows(M);
}

Matrix matmul(const Matrix& A, const Matrix& B) {
    Matrix C;
    gemm(A, B, C);
    return C;
}
Matrix matmul_nt(const Matrix& A, const Matrix& B) {
    Matrix C;
    gemm_nt(A, B, C);
    return C;
}
Matrix matmul_tn(const Matrix& A, const Matrix& B) {
    Matrix C;
    gemm_tn(A, B, C);
    return C;
}

}  // namespace mgreid::kern
