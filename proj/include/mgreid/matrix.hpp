#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgreid {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All model math runs in double so the
// finite-difference test suites have headroom.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v(checked_size(r, c), fill) {}

    static size_t checked_size(int r, int c) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative dims");
        return static_cast<size_t>(r) * static_cast<size_t>(c);
    }

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[static_cast<size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[static_cast<size_t>(r) * cols + c];
    }

    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    Matrix& operator+=(const Matrix& o) {
        check_shape(o, "+=");
        for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_shape(o, "-=");
        for (size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& x : v) x *= s;
        return *this;
    }

    void check_shape(const Matrix& o, const char* what) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string("Matrix shape mismatch in ") + what + ": " +
                                        std::to_string(rows) + "x" + std::to_string(cols) + " vs " +
                                        std::to_string(o.rows) + "x" + std::to_string(o.cols));
    }

    Vec row_vec(int r) const { return Vec(row(r), row(r) + cols); }
    void set_row(int r, const Vec& x) {
        assert(static_cast<int>(x.size()) == cols);
        std::copy(x.begin(), x.end(), row(r));
    }
};

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// L2-normalize; throws when the vector is numerically zero (callers that need a
// degenerate-mean guard rely on this).
inline Vec normalized(const Vec& a, double eps = 1e-12) {
    double n = norm2(a);
    if (n < eps) throw std::domain_error("normalized: zero-norm vector");
    Vec out(a);
    for (double& x : out) x /= n;
    return out;
}

inline Vec operator+(Vec a, const Vec& b) {
    assert(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline Vec operator-(Vec a, const Vec& b) {
    assert(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

inline Vec operator*(Vec a, double s) {
    for (double& x : a) x *= s;
    return a;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    a.check_shape(b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

}  // namespace mgreid
