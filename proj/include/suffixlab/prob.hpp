#pragma once

// Distribution tails for Wald tests and correlation p-values: standard
// normal via erfc, Student-t via the regularized incomplete beta function
// (Lentz continued fraction).

#include <cmath>

#include "suffixlab/common.hpp"

namespace suffixlab {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// two-sided p-value for a standard normal statistic
inline double normal_p_two_sided(double z) {
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

namespace detail {

inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw numeric_error("betacf: continued fraction did not converge");
}

} // namespace detail

// regularized incomplete beta I_x(a, b)
inline double incomplete_beta(double a, double b, double x) {
    require(a > 0.0 && b > 0.0, "incomplete_beta: shape parameters must be positive");
    require(x >= 0.0 && x <= 1.0, "incomplete_beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// two-sided p-value for a t statistic with df degrees of freedom
inline double student_t_p_two_sided(double t, double df) {
    require(df > 0.0, "student_t_p_two_sided: df must be positive");
    if (!std::isfinite(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct Correlation {
    double r = 0.0;
    double p_value = 1.0;
    int n = 0;
};

// Pearson correlation with the usual t-based two-sided p-value
inline Correlation pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "pearson_correlation: length mismatch");
    const int n = static_cast<int>(x.size());
    require(n >= 3, "pearson_correlation: need at least 3 points");
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0)
        throw degenerate_error("pearson_correlation: constant input series");
    Correlation c;
    c.n = n;
    c.r = sxy / std::sqrt(sxx * syy);
    const double r2 = std::min(c.r * c.r, 1.0 - 1e-15);
    const double t = c.r * std::sqrt((n - 2) / (1.0 - r2));
    c.p_value = student_t_p_two_sided(t, n - 2);
    return c;
}

} // namespace suffixlab
