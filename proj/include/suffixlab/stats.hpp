#pragma once

// Regression stack used for the analysis tables: standardization,
// interaction designs, OLS, binary logistic regression (Newton with
// step-halving), and proportional-odds ordinal logistic regression.
// Wald standard errors from the inverse observed information; McFadden
// pseudo R-squared for the likelihood models.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "suffixlab/common.hpp"
#include "suffixlab/linalg.hpp"
#include "suffixlab/prob.hpp"

namespace suffixlab {

// ----------------------------- design matrices -----------------------------

struct DesignMatrix {
    std::vector<std::string> names;
    Mat x; // [n x k]
    bool standardized = false;
    int intercept_col = -1;
    Vec column_means; // recorded by standardize(); zeros before
    Vec column_sds;   // ones before

    int n_rows() const { return static_cast<int>(x.rows); }
    int n_cols() const { return static_cast<int>(x.cols); }

    int column_index(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return static_cast<int>(j);
        throw validation_error("DesignMatrix: unknown column '" + name + "'");
    }

    Vec column(int j) const {
        Vec c(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i) c[i] = x.at(i, j);
        return c;
    }

    Vec column(const std::string& name) const { return column(column_index(name)); }
};

using NamedColumns = std::vector<std::pair<std::string, Vec>>;

inline DesignMatrix make_design(const NamedColumns& columns, bool add_intercept = true) {
    require(!columns.empty(), "make_design: no columns");
    const std::size_t n = columns[0].second.size();
    require(n > 0, "make_design: empty columns");
    for (const auto& [name, col] : columns)
        require(col.size() == n, "make_design: column '" + name + "' has mismatched length");

    DesignMatrix d;
    const std::size_t k = columns.size() + (add_intercept ? 1 : 0);
    d.x = Mat(n, k);
    std::size_t j0 = 0;
    if (add_intercept) {
        d.names.push_back("const");
        d.intercept_col = 0;
        for (std::size_t i = 0; i < n; ++i) d.x.at(i, 0) = 1.0;
        j0 = 1;
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
        d.names.push_back(columns[c].first);
        for (std::size_t i = 0; i < n; ++i) d.x.at(i, j0 + c) = columns[c].second[i];
    }
    d.column_means.assign(k, 0.0);
    d.column_sds.assign(k, 1.0);
    return d;
}

// mean 0, variance 1 (sample variance, n-1) per non-intercept column
inline DesignMatrix standardize(const DesignMatrix& design) {
    require(design.n_rows() >= 2, "standardize: need at least 2 rows");
    DesignMatrix d = design;
    const int n = d.n_rows();
    for (int j = 0; j < d.n_cols(); ++j) {
        if (j == d.intercept_col) continue;
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += d.x.at(i, j);
        mean /= n;
        double ss = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = d.x.at(i, j) - mean;
            ss += c * c;
        }
        const double sd = std::sqrt(ss / (n - 1));
        if (sd == 0.0)
            throw degenerate_error("standardize: column '" + d.names[j] + "' has zero variance");
        for (int i = 0; i < n; ++i) d.x.at(i, j) = (d.x.at(i, j) - mean) / sd;
        d.column_means[j] = mean;
        d.column_sds[j] = sd;
    }
    d.standardized = true;
    return d;
}

// inverse of standardize(); recovers the original columns
inline DesignMatrix destandardize(const DesignMatrix& design) {
    DesignMatrix d = design;
    for (int j = 0; j < d.n_cols(); ++j) {
        if (j == d.intercept_col) continue;
        for (int i = 0; i < d.n_rows(); ++i)
            d.x.at(i, j) = d.x.at(i, j) * d.column_sds[j] + d.column_means[j];
        d.column_means[j] = 0.0;
        d.column_sds[j] = 1.0;
    }
    d.standardized = false;
    return d;
}

// Intercept + standardized base columns + products of the standardized
// bases (products are not re-standardized). Pair columns are named "A × B".
inline DesignMatrix build_interactions(const NamedColumns& features,
                                       const std::vector<std::pair<std::string, std::string>>& pairs) {
    DesignMatrix d = standardize(make_design(features, true));
    for (const auto& [a, b] : pairs) {
        require(a != b, "build_interactions: cannot interact column '" + a + "' with itself");
        const int ja = d.column_index(a);
        const int jb = d.column_index(b);
        require(ja != d.intercept_col && jb != d.intercept_col,
                "build_interactions: cannot interact the intercept");
        const int n = d.n_rows();
        Mat grown(n, d.x.cols + 1);
        for (int i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d.x.cols; ++j) grown.at(i, j) = d.x.at(i, j);
            grown.at(i, d.x.cols) = d.x.at(i, ja) * d.x.at(i, jb);
        }
        d.x = std::move(grown);
        d.names.push_back(a + " \xC3\x97 " + b); // multiplication sign, UTF-8
        d.column_means.push_back(0.0);
        d.column_sds.push_back(1.0);
    }
    return d;
}

// ----------------------------- fit results -----------------------------

enum class ModelKind { ols, logistic, ordinal_logistic };

inline std::string stars_for(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

struct FitResult {
    ModelKind kind = ModelKind::ols;
    std::vector<std::string> names;
    Vec coefficients;
    Vec std_errors;
    Vec z_or_t;
    Vec p_values;
    std::vector<std::string> stars;
    Vec odds_ratios;                 // logistic kinds only
    double r2 = std::numeric_limits<double>::quiet_NaN();        // ols
    double pseudo_r2 = std::numeric_limits<double>::quiet_NaN(); // logistic kinds (McFadden)
    double log_lik = 0.0;
    double log_lik_null = 0.0;
    int n_obs = 0;
    int n_iterations = 0;
    bool converged = true;

    double coefficient(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return coefficients[j];
        throw validation_error("FitResult: unknown coefficient '" + name + "'");
    }

    double p_value(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return p_values[j];
        throw validation_error("FitResult: unknown coefficient '" + name + "'");
    }
};

namespace detail {

inline void finish_inference(FitResult& fit, const Mat& cov, double df_for_t) {
    const std::size_t k = fit.coefficients.size();
    fit.std_errors.resize(k);
    fit.z_or_t.resize(k);
    fit.p_values.resize(k);
    fit.stars.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        fit.std_errors[j] = std::sqrt(std::max(cov.at(j, j), 0.0));
        fit.z_or_t[j] = fit.std_errors[j] > 0.0 ? fit.coefficients[j] / fit.std_errors[j]
                                                : std::numeric_limits<double>::infinity();
        fit.p_values[j] = df_for_t > 0.0 ? student_t_p_two_sided(fit.z_or_t[j], df_for_t)
                                         : normal_p_two_sided(fit.z_or_t[j]);
        fit.stars[j] = stars_for(fit.p_values[j]);
    }
}

inline Mat xtx(const Mat& x) {
    const std::size_t n = x.rows, k = x.cols;
    Mat a(k, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.row(i);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t q = p; q < k; ++q) a.at(p, q) += row[p] * row[q];
    }
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < p; ++q) a.at(p, q) = a.at(q, p);
    return a;
}

// numerically safe log(1 + exp(eta))
inline double log1pexp(double eta) {
    return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

inline double sigmoid(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

} // namespace detail

// ----------------------------- OLS -----------------------------

inline FitResult fit_ols(const DesignMatrix& design, const Vec& y) {
    const int n = design.n_rows(), k = design.n_cols();
    require(static_cast<int>(y.size()) == n, "fit_ols: y length mismatch");
    require(n > k, "fit_ols: need more rows than columns");

    const Mat a = detail::xtx(design.x);
    Mat l;
    if (!cholesky(a, l, 1e-10))
        throw degenerate_error("fit_ols: singular design matrix");
    Vec xty(k, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) xty[j] += design.x.at(i, j) * y[i];
    const Vec beta = cholesky_solve(l, xty);

    double rss = 0.0, mean_y = 0.0;
    for (int i = 0; i < n; ++i) mean_y += y[i];
    mean_y /= n;
    double tss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double fitted = dot(design.x.row(i), beta.data(), k);
        rss += (y[i] - fitted) * (y[i] - fitted);
        tss += (y[i] - mean_y) * (y[i] - mean_y);
    }
    const double sigma2 = rss / (n - k);

    FitResult fit;
    fit.kind = ModelKind::ols;
    fit.names = design.names;
    fit.coefficients = beta;
    fit.n_obs = n;
    fit.r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    Mat cov = spd_inverse(a, 1e-10);
    for (auto& c : cov.data) c *= sigma2;
    detail::finish_inference(fit, cov, static_cast<double>(n - k));
    return fit;
}

// ----------------------------- binary logistic -----------------------------

inline FitResult fit_logistic(const DesignMatrix& design, const Vec& y,
                              double tol = 1e-8, int max_iters = 100) {
    const int n = design.n_rows(), k = design.n_cols();
    require(static_cast<int>(y.size()) == n, "fit_logistic: y length mismatch");
    int n_pos = 0;
    for (double v : y) {
        require(v == 0.0 || v == 1.0, "fit_logistic: y must be binary 0/1");
        n_pos += (v == 1.0);
    }
    require(n_pos > 0 && n_pos < n, "fit_logistic: both classes must be present");

    Vec beta(k, 0.0);
    auto log_lik_of = [&](const Vec& b) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            const double eta = dot(design.x.row(i), b.data(), k);
            ll += y[i] * eta - detail::log1pexp(eta);
        }
        return ll;
    };

    double ll = log_lik_of(beta);
    bool converged = false;
    int iter = 0;
    Mat info(k, k);
    for (; iter < max_iters; ++iter) {
        Vec grad(k, 0.0);
        info.zero();
        for (int i = 0; i < n; ++i) {
            const double* row = design.x.row(i);
            const double mu = detail::sigmoid(dot(row, beta.data(), k));
            const double resid = y[i] - mu;
            const double w = mu * (1.0 - mu);
            for (int p = 0; p < k; ++p) {
                grad[p] += resid * row[p];
                for (int q = p; q < k; ++q) info.at(p, q) += w * row[p] * row[q];
            }
        }
        for (int p = 0; p < k; ++p)
            for (int q = 0; q < p; ++q) info.at(p, q) = info.at(q, p);

        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        if (gmax <= tol) {
            converged = true;
            break;
        }

        Mat l;
        if (!cholesky(info, l, 1e-12))
            throw degenerate_error("fit_logistic: perfect separation detected (singular information)");
        const Vec step = cholesky_solve(l, grad);

        double predicted = 0.0;
        for (int p = 0; p < k; ++p) predicted += grad[p] * step[p];
        Vec trial(k);
        if (predicted <= 1e-9 * (1.0 + std::abs(ll))) {
            // quadratic regime: the improvement is below the fp resolution of
            // the likelihood, so line search cannot see it; take the pure step
            for (int p = 0; p < k; ++p) trial[p] = beta[p] + step[p];
            beta = trial;
            ll = log_lik_of(beta);
        } else {
            // step-halving keeps the likelihood monotone
            double t = 1.0;
            double ll_new = -std::numeric_limits<double>::infinity();
            for (int h = 0; h < 40; ++h) {
                for (int p = 0; p < k; ++p) trial[p] = beta[p] + t * step[p];
                ll_new = log_lik_of(trial);
                if (ll_new >= ll) break;
                t *= 0.5;
            }
            if (ll_new < ll) break; // no ascent direction left
            beta = trial;
            ll = ll_new;
        }

        for (double b : beta)
            if (std::abs(b) > 30.0)
                throw degenerate_error("fit_logistic: perfect separation detected (diverging coefficients)");
    }
    if (ll > -1e-6)
        throw degenerate_error("fit_logistic: perfect separation detected (saturated likelihood)");

    FitResult fit;
    fit.kind = ModelKind::logistic;
    fit.names = design.names;
    fit.coefficients = beta;
    fit.n_obs = n;
    fit.n_iterations = iter;
    fit.converged = converged;
    fit.log_lik = ll;
    const double pbar = static_cast<double>(n_pos) / n;
    fit.log_lik_null = n * (pbar * std::log(pbar) + (1.0 - pbar) * std::log(1.0 - pbar));
    fit.pseudo_r2 = 1.0 - fit.log_lik / fit.log_lik_null;

    // recompute observed information at the optimum
    info.zero();
    for (int i = 0; i < n; ++i) {
        const double* row = design.x.row(i);
        const double mu = detail::sigmoid(dot(row, beta.data(), k));
        const double w = mu * (1.0 - mu);
        for (int p = 0; p < k; ++p)
            for (int q = p; q < k; ++q) info.at(p, q) += w * row[p] * row[q];
    }
    for (int p = 0; p < k; ++p)
        for (int q = 0; q < p; ++q) info.at(p, q) = info.at(q, p);
    detail::finish_inference(fit, spd_inverse(info, 1e-14), 0.0);

    fit.odds_ratios.resize(k);
    for (int j = 0; j < k; ++j) fit.odds_ratios[j] = std::exp(beta[j]);
    return fit;
}

// ----------------------------- ordinal logistic -----------------------------

// Proportional-odds model: P(Y <= level_k | x) = sigmoid(theta_k - x' beta),
// cutpoints strictly increasing, slopes shared across levels. The intercept
// column (if present) is dropped; the cutpoints play that role.
inline FitResult fit_ordinal_logistic(const DesignMatrix& design, const Vec& y,
                                      double tol = 1e-8, int max_iters = 100) {
    const int n = design.n_rows();
    require(static_cast<int>(y.size()) == n, "fit_ordinal_logistic: y length mismatch");

    // slope columns = all non-intercept columns
    std::vector<int> slope_cols;
    for (int j = 0; j < design.n_cols(); ++j)
        if (j != design.intercept_col) slope_cols.push_back(j);
    const int kx = static_cast<int>(slope_cols.size());

    // map y values to ordered levels
    std::vector<double> levels = y;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const int n_levels = static_cast<int>(levels.size());
    require(n_levels >= 2, "fit_ordinal_logistic: need at least 2 ordinal levels");
    std::vector<int> lev(n);
    for (int i = 0; i < n; ++i)
        lev[i] = static_cast<int>(std::lower_bound(levels.begin(), levels.end(), y[i]) - levels.begin());

    const int n_cuts = n_levels - 1;
    const int dim = kx + n_cuts; // parameters: [slopes..., cutpoints...]

    // cumulative-frequency cutpoint initialization
    std::vector<int> counts(n_levels, 0);
    for (int v : lev) counts[v]++;
    Vec z(dim, 0.0);
    {
        int cum = 0;
        for (int c = 0; c < n_cuts; ++c) {
            cum += counts[c];
            const double p = static_cast<double>(cum) / n;
            z[kx + c] = std::log(p / (1.0 - p));
        }
    }

    auto eta_of = [&](const Vec& par, int i) {
        double eta = 0.0;
        for (int j = 0; j < kx; ++j) eta += design.x.at(i, slope_cols[j]) * par[j];
        return eta;
    };
    auto cuts_ordered = [&](const Vec& par) {
        for (int c = 1; c < n_cuts; ++c)
            if (!(par[kx + c] > par[kx + c - 1])) return false;
        return true;
    };
    auto log_lik_of = [&](const Vec& par) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            const double eta = eta_of(par, i);
            const int c = lev[i];
            const double upper = c < n_cuts ? detail::sigmoid(par[kx + c] - eta) : 1.0;
            const double lower = c > 0 ? detail::sigmoid(par[kx + c - 1] - eta) : 0.0;
            const double p = upper - lower;
            if (p <= 0.0) return -std::numeric_limits<double>::infinity();
            ll += std::log(p);
        }
        return ll;
    };

    double ll = log_lik_of(z);
    bool converged = false;
    int iter = 0;
    for (; iter < max_iters; ++iter) {
        Vec grad(dim, 0.0);
        Mat hess(dim, dim); // observed information = -hessian, built directly
        for (int i = 0; i < n; ++i) {
            const double eta = eta_of(z, i);
            const int c = lev[i];
            const double au = c < n_cuts ? z[kx + c] - eta : 0.0;
            const double al = c > 0 ? z[kx + c - 1] - eta : 0.0;
            const double fu_cdf = c < n_cuts ? detail::sigmoid(au) : 1.0;
            const double fl_cdf = c > 0 ? detail::sigmoid(al) : 0.0;
            const double p = fu_cdf - fl_cdf;
            const double u = c < n_cuts ? fu_cdf * (1.0 - fu_cdf) : 0.0;  // logistic pdf
            const double v = c > 0 ? fl_cdf * (1.0 - fl_cdf) : 0.0;
            const double du = c < n_cuts ? u * (1.0 - 2.0 * fu_cdf) : 0.0; // pdf derivative
            const double dv = c > 0 ? v * (1.0 - 2.0 * fl_cdf) : 0.0;
            const double inv_p = 1.0 / p;
            const double s = u - v;

            // beta block
            const double coef_bb = (du - dv) * inv_p - s * s * inv_p * inv_p;
            for (int a = 0; a < kx; ++a) {
                const double xa = design.x.at(i, slope_cols[a]);
                grad[a] += -s * inv_p * xa;
                for (int b = a; b < kx; ++b)
                    hess.at(a, b) += coef_bb * xa * design.x.at(i, slope_cols[b]);
            }
            // cutpoint blocks
            if (c < n_cuts) {
                const int ju = kx + c;
                grad[ju] += u * inv_p;
                hess.at(ju, ju) += du * inv_p - u * u * inv_p * inv_p;
                const double coef_ub = -du * inv_p + u * s * inv_p * inv_p;
                for (int a = 0; a < kx; ++a) {
                    const double xa = design.x.at(i, slope_cols[a]);
                    const int lo = std::min(a, ju), hi = std::max(a, ju);
                    hess.at(lo, hi) += coef_ub * xa;
                }
            }
            if (c > 0) {
                const int jl = kx + c - 1;
                grad[jl] += -v * inv_p;
                hess.at(jl, jl) += -dv * inv_p - v * v * inv_p * inv_p;
                const double coef_lb = dv * inv_p - v * s * inv_p * inv_p;
                for (int a = 0; a < kx; ++a) {
                    const double xa = design.x.at(i, slope_cols[a]);
                    const int lo = std::min(a, jl), hi = std::max(a, jl);
                    hess.at(lo, hi) += coef_lb * xa;
                }
            }
            if (c > 0 && c < n_cuts) {
                const int ju = kx + c, jl = kx + c - 1;
                hess.at(jl, ju) += u * v * inv_p * inv_p;
            }
        }
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < a; ++b) hess.at(a, b) = hess.at(b, a);

        double gmax = 0.0;
        for (double g : grad) gmax = std::max(gmax, std::abs(g));
        if (gmax <= tol) {
            converged = true;
            break;
        }

        Mat neg_h(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b) neg_h.at(a, b) = -hess.at(a, b);
        Mat l;
        if (!cholesky(neg_h, l, 1e-12)) break; // flagged unconverged below
        const Vec step = cholesky_solve(l, grad);

        double predicted = 0.0;
        for (int a = 0; a < dim; ++a) predicted += grad[a] * step[a];
        Vec trial(dim);
        if (predicted <= 1e-9 * (1.0 + std::abs(ll))) {
            // below the fp resolution of the likelihood: pure Newton step
            for (int a = 0; a < dim; ++a) trial[a] = z[a] + step[a];
            if (!cuts_ordered(trial)) break;
            z = trial;
            ll = log_lik_of(z);
        } else {
            double t = 1.0;
            bool moved = false;
            for (int h = 0; h < 40; ++h) {
                for (int a = 0; a < dim; ++a) trial[a] = z[a] + t * step[a];
                if (cuts_ordered(trial)) {
                    const double ll_new = log_lik_of(trial);
                    if (ll_new >= ll) {
                        z = trial;
                        ll = ll_new;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if (!moved) break;
        }
    }

    FitResult fit;
    fit.kind = ModelKind::ordinal_logistic;
    for (int j = 0; j < kx; ++j) fit.names.push_back(design.names[slope_cols[j]]);
    for (int c = 0; c < n_cuts; ++c) fit.names.push_back("cut_" + std::to_string(c + 1));
    fit.coefficients = z;
    fit.n_obs = n;
    fit.n_iterations = iter;
    fit.converged = converged;
    fit.log_lik = ll;
    double ll0 = 0.0;
    for (int c = 0; c < n_levels; ++c)
        if (counts[c] > 0) ll0 += counts[c] * std::log(static_cast<double>(counts[c]) / n);
    fit.log_lik_null = ll0;
    fit.pseudo_r2 = 1.0 - ll / ll0;

    // observed information at the optimum via one more gradient/hessian pass
    {
        Mat neg_h(dim, dim);
        for (int i = 0; i < n; ++i) {
            const double eta = eta_of(z, i);
            const int c = lev[i];
            const double au = c < n_cuts ? z[kx + c] - eta : 0.0;
            const double al = c > 0 ? z[kx + c - 1] - eta : 0.0;
            const double fu_cdf = c < n_cuts ? detail::sigmoid(au) : 1.0;
            const double fl_cdf = c > 0 ? detail::sigmoid(al) : 0.0;
            const double p = fu_cdf - fl_cdf;
            const double u = c < n_cuts ? fu_cdf * (1.0 - fu_cdf) : 0.0;
            const double v = c > 0 ? fl_cdf * (1.0 - fl_cdf) : 0.0;
            const double du = c < n_cuts ? u * (1.0 - 2.0 * fu_cdf) : 0.0;
            const double dv = c > 0 ? v * (1.0 - 2.0 * fl_cdf) : 0.0;
            const double inv_p = 1.0 / p;
            const double s = u - v;
            const double coef_bb = (du - dv) * inv_p - s * s * inv_p * inv_p;
            for (int a = 0; a < kx; ++a) {
                const double xa = design.x.at(i, slope_cols[a]);
                for (int b = a; b < kx; ++b)
                    neg_h.at(a, b) -= coef_bb * xa * design.x.at(i, slope_cols[b]);
            }
            if (c < n_cuts) {
                const int ju = kx + c;
                neg_h.at(ju, ju) -= du * inv_p - u * u * inv_p * inv_p;
                const double coef_ub = -du * inv_p + u * s * inv_p * inv_p;
                for (int a = 0; a < kx; ++a) {
                    const int lo = std::min(a, ju), hi = std::max(a, ju);
                    neg_h.at(lo, hi) -= coef_ub * design.x.at(i, slope_cols[a]);
                }
            }
            if (c > 0) {
                const int jl = kx + c - 1;
                neg_h.at(jl, jl) -= -dv * inv_p - v * v * inv_p * inv_p;
                const double coef_lb = dv * inv_p - v * s * inv_p * inv_p;
                for (int a = 0; a < kx; ++a) {
                    const int lo = std::min(a, jl), hi = std::max(a, jl);
                    neg_h.at(lo, hi) -= coef_lb * design.x.at(i, slope_cols[a]);
                }
            }
            if (c > 0 && c < n_cuts) {
                const int ju = kx + c, jl = kx + c - 1;
                neg_h.at(jl, ju) -= u * v * inv_p * inv_p;
            }
        }
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < a; ++b) neg_h.at(a, b) = neg_h.at(b, a);
        detail::finish_inference(fit, spd_inverse(neg_h, 1e-14), 0.0);
    }

    fit.odds_ratios.resize(dim);
    for (int j = 0; j < dim; ++j) fit.odds_ratios[j] = std::exp(z[j]);
    return fit;
}

} // namespace suffixlab
