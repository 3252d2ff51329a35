#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "suffixlab/common.hpp"

namespace suffixlab {

using Vec = std::vector<double>;

// Dense row-major matrix. Everything in this project is small enough
// that a flat vector plus an index helper beats a real linalg library.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool operator==(const Mat& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline double dot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    return dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline double norm2(const double* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }
inline double norm2(const Vec& a) { return norm2(a.data(), a.size()); }

inline Vec scaled(const Vec& a, double s) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

inline Vec sub(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "sub: dimension mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec add(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "add: dimension mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec mean_of(const std::vector<Vec>& vs) {
    require(!vs.empty(), "mean_of: empty list");
    Vec m(vs[0].size(), 0.0);
    for (const auto& v : vs) {
        require(v.size() == m.size(), "mean_of: dimension mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(vs.size());
    for (auto& x : m) x *= inv;
    return m;
}

// projection of a onto the line spanned by v: (<a,v>/<v,v>) v
inline Vec project_onto(const Vec& a, const Vec& v) {
    const double vv = dot(v, v);
    require(vv > 0.0, "project_onto: zero direction");
    const double c = dot(a, v) / vv;
    return scaled(v, c);
}

inline Vec orthogonal_component(const Vec& a, const Vec& v) {
    return sub(a, project_onto(a, v));
}

inline Vec normalized(const Vec& v) {
    const double n = norm2(v);
    if (n == 0.0) throw degenerate_error("normalized: zero vector");
    return scaled(v, 1.0 / n);
}

inline double cosine(const Vec& a, const Vec& b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw degenerate_error("cosine: zero-norm input");
    return dot(a, b) / (na * nb);
}

// ----------------------------- solvers -----------------------------

// Cholesky factorization of a symmetric positive definite matrix.
// Returns false when a pivot falls below tol (rank deficiency).
inline bool cholesky(const Mat& a, Mat& l, double tol = 1e-12) {
    const std::size_t n = a.rows;
    if (a.cols != n) throw validation_error("cholesky: matrix not square");
    l = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
        if (!(d > tol)) return false;
        l.at(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
            l.at(i, j) = s / l.at(j, j);
        }
    }
    return true;
}

inline Vec cholesky_solve(const Mat& l, const Vec& b) {
    const std::size_t n = l.rows;
    Vec y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
        y[i] = s / l.at(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l.at(k, ii) * x[k];
        x[ii] = s / l.at(ii, ii);
    }
    return x;
}

// inverse of an SPD matrix via its Cholesky factor
inline Mat spd_inverse(const Mat& a, double tol = 1e-12) {
    Mat l;
    if (!cholesky(a, l, tol)) throw numeric_error("spd_inverse: matrix not positive definite");
    const std::size_t n = a.rows;
    Mat inv(n, n);
    Vec e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        Vec col = cholesky_solve(l, e);
        for (std::size_t i = 0; i < n; ++i) inv.at(i, j) = col[i];
        e[j] = 0.0;
    }
    return inv;
}

} // namespace suffixlab
