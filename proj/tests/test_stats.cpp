#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "suffixlab/datasets.hpp"
#include "suffixlab/prob.hpp"
#include "suffixlab/stats.hpp"

using namespace suffixlab;

namespace {

// independent coarse-to-fine coordinate maximizer; only the objective is
// shared with the fitters under test
Vec grid_search_max(const std::function<double(const Vec&)>& objective, Vec start,
                    double radius = 4.0, int sweeps = 60) {
    Vec best = start;
    double best_val = objective(best);
    double r = radius;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (std::size_t j = 0; j < best.size(); ++j) {
            const double center = best[j];
            for (int g = -10; g <= 10; ++g) {
                Vec trial = best;
                trial[j] = center + r * g / 10.0;
                const double val = objective(trial);
                if (val > best_val) {
                    best_val = val;
                    best = trial;
                }
            }
        }
        r *= 0.6;
    }
    return best;
}

double logistic_ll(const DesignMatrix& d, const Vec& y, const Vec& beta) {
    double ll = 0.0;
    for (int i = 0; i < d.n_rows(); ++i) {
        const double eta = dot(d.x.row(i), beta.data(), d.n_cols());
        ll += y[i] * eta - (std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))));
    }
    return ll;
}

} // namespace

// ----------------------------- standardize -----------------------------

TEST_CASE("standardize hand case and idempotence") {
    DesignMatrix d = make_design({{"x", {1, 2, 3}}}, true);
    DesignMatrix s = standardize(d);
    CHECK(s.column("x") == Vec{-1, 0, 1}); // sample sd of (1,2,3) is exactly 1
    CHECK(s.column("const") == Vec{1, 1, 1});
    CHECK(s.standardized);

    const DesignMatrix s2 = standardize(s);
    for (int i = 0; i < 3; ++i)
        CHECK_THAT(s2.x.at(i, 1), Catch::Matchers::WithinAbs(s.x.at(i, 1), 1e-12));

    const DesignMatrix back = destandardize(s);
    for (int i = 0; i < 3; ++i)
        CHECK_THAT(back.x.at(i, 1), Catch::Matchers::WithinAbs(d.x.at(i, 1), 1e-12));
}

TEST_CASE("standardize rejects constant feature columns by name") {
    DesignMatrix d = make_design({{"flat", {2, 2, 2, 2}}}, true);
    try {
        standardize(d);
        FAIL("expected degenerate_error");
    } catch (const degenerate_error& e) {
        CHECK(std::string(e.what()).find("flat") != std::string::npos);
    }
}

TEST_CASE("standardized columns have mean 0 and unit sample variance") {
    Rng rng(5);
    Vec col(37);
    for (auto& v : col) v = 3.0 + 2.5 * rng.next_gauss();
    const DesignMatrix s = standardize(make_design({{"x", col}}, true));
    double mean = 0.0;
    for (int i = 0; i < s.n_rows(); ++i) mean += s.x.at(i, 1);
    mean /= s.n_rows();
    double ss = 0.0;
    for (int i = 0; i < s.n_rows(); ++i) ss += (s.x.at(i, 1) - mean) * (s.x.at(i, 1) - mean);
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-9));
    CHECK_THAT(ss / (s.n_rows() - 1), Catch::Matchers::WithinAbs(1.0, 1e-9));
}

// ----------------------------- interactions -----------------------------

TEST_CASE("interaction design matches the joint feature layout") {
    const NamedColumns cols = {{"f1", {1, 2, 3, 4}}, {"f2", {0, 1, 0, 1}}, {"f3", {2, 2, 3, 5}}};
    const DesignMatrix d =
        build_interactions(cols, {{"f1", "f2"}, {"f1", "f3"}, {"f2", "f3"}});
    REQUIRE(d.names == std::vector<std::string>{"const", "f1", "f2", "f3", "f1 \xC3\x97 f2",
                                                "f1 \xC3\x97 f3", "f2 \xC3\x97 f3"});
    // product columns are elementwise products of the standardized bases
    for (int i = 0; i < d.n_rows(); ++i)
        CHECK_THAT(d.x.at(i, 4), Catch::Matchers::WithinAbs(d.x.at(i, 1) * d.x.at(i, 2), 1e-12));

    CHECK_THROWS_AS(build_interactions(cols, {{"f1", "f1"}}), validation_error);
    CHECK_THROWS_AS(build_interactions(cols, {{"f1", "nope"}}), validation_error);
}

// ----------------------------- OLS -----------------------------

TEST_CASE("OLS recovers an exact linear relationship") {
    Vec x = {0, 1, 2, 3, 4};
    Vec y = {0, 2, 4, 6, 8};
    const FitResult fit = fit_ols(make_design({{"x", x}}, true), y);
    CHECK_THAT(fit.coefficient("x"), Catch::Matchers::WithinAbs(2.0, 1e-10));
    CHECK_THAT(fit.coefficient("const"), Catch::Matchers::WithinAbs(0.0, 1e-10));
    CHECK_THAT(fit.r2, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("OLS slope vanishes when y is constant") {
    Vec x = {0, 1, 2, 3, 4, 5};
    Vec y(6, 3.5);
    const FitResult fit = fit_ols(make_design({{"x", x}}, true), y);
    CHECK_THAT(fit.coefficient("x"), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(fit.coefficient("const"), Catch::Matchers::WithinAbs(3.5, 1e-12));
}

TEST_CASE("OLS normal equations hold at the solution") {
    Rng rng(8);
    const int n = 50;
    Vec x1(n), x2(n), y(n);
    for (int i = 0; i < n; ++i) {
        x1[i] = rng.next_gauss();
        x2[i] = rng.next_gauss();
        y[i] = 0.7 + 1.3 * x1[i] - 0.4 * x2[i] + 0.2 * rng.next_gauss();
    }
    const DesignMatrix d = make_design({{"x1", x1}, {"x2", x2}}, true);
    const FitResult fit = fit_ols(d, y);
    for (int j = 0; j < d.n_cols(); ++j) {
        double score = 0.0;
        for (int i = 0; i < n; ++i) {
            const double resid = y[i] - dot(d.x.row(i), fit.coefficients.data(), d.n_cols());
            score += d.x.at(i, j) * resid;
        }
        CHECK_THAT(score / n, Catch::Matchers::WithinAbs(0.0, 1e-8));
    }
}

TEST_CASE("OLS matches a frozen external reference fit") {
    // deterministic regeneration of the reference dataset
    Rng rng(4048);
    const int n = 40;
    Vec x1(n), x2(n), y(n);
    for (int i = 0; i < n; ++i) {
        x1[i] = rng.next_gauss();
        x2[i] = rng.next_gauss();
        y[i] = 1.5 - 2.0 * x1[i] + 0.5 * x2[i] + 0.3 * rng.next_gauss();
    }
    const FitResult fit = fit_ols(make_design({{"x1", x1}, {"x2", x2}}, true), y);
    CHECK_THAT(fit.coefficient("const"), Catch::Matchers::WithinAbs(1.474650291217, 1e-9));
    CHECK_THAT(fit.coefficient("x1"), Catch::Matchers::WithinAbs(-1.932795311645, 1e-9));
    CHECK_THAT(fit.coefficient("x2"), Catch::Matchers::WithinAbs(0.527290344139, 1e-9));
    CHECK_THAT(fit.std_errors[0], Catch::Matchers::WithinAbs(0.038770977584, 1e-9));
    CHECK_THAT(fit.std_errors[1], Catch::Matchers::WithinAbs(0.040607178601, 1e-9));
    CHECK_THAT(fit.std_errors[2], Catch::Matchers::WithinAbs(0.036000226614, 1e-9));
    CHECK_THAT(fit.r2, Catch::Matchers::WithinAbs(0.985026420230, 1e-9));
    CHECK_THAT(fit.p_values[1], Catch::Matchers::WithinRel(8.49655464288e-35, 1e-6));
    CHECK(fit.stars[1] == "***");
}

TEST_CASE("OLS rejects singular designs") {
    Vec x = {1, 2, 3, 4, 5, 6};
    const DesignMatrix d = make_design({{"a", x}, {"b", x}}, true); // duplicate column
    CHECK_THROWS_AS(fit_ols(d, x), degenerate_error);
}

// ----------------------------- logistic -----------------------------

TEST_CASE("intercept-only logistic matches closed-form log odds") {
    // balanced 50/50
    {
        Vec ones(8, 1.0);
        DesignMatrix d;
        d.names = {"const"};
        d.x = Mat(8, 1, 1.0);
        d.intercept_col = 0;
        d.column_means = {0.0};
        d.column_sds = {1.0};
        Vec y = {0, 1, 0, 1, 0, 1, 0, 1};
        const FitResult fit = fit_logistic(d, y);
        CHECK_THAT(fit.coefficient("const"), Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(fit.pseudo_r2, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
    // 75% ones -> ln 3
    {
        DesignMatrix d;
        d.names = {"const"};
        d.x = Mat(8, 1, 1.0);
        d.intercept_col = 0;
        d.column_means = {0.0};
        d.column_sds = {1.0};
        Vec y = {1, 1, 1, 0, 1, 1, 1, 0};
        const FitResult fit = fit_logistic(d, y);
        CHECK_THAT(fit.coefficient("const"), Catch::Matchers::WithinAbs(std::log(3.0), 1e-8));
    }
}

TEST_CASE("logistic matches a frozen external reference fit") {
    Rng rng(2024);
    const int n = 60;
    Vec x1(n), x2(n), y(n);
    for (int i = 0; i < n; ++i) {
        x1[i] = rng.next_gauss();
        x2[i] = rng.next_gauss();
        const double eta = 0.3 + 0.9 * x1[i] - 0.7 * x2[i];
        const double p = 1.0 / (1.0 + std::exp(-eta));
        y[i] = rng.next_double() < p ? 1.0 : 0.0;
    }
    const FitResult fit = fit_logistic(make_design({{"x1", x1}, {"x2", x2}}, true), y);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.coefficient("const"), Catch::Matchers::WithinAbs(0.341031640938, 1e-7));
    CHECK_THAT(fit.coefficient("x1"), Catch::Matchers::WithinAbs(0.584317299384, 1e-7));
    CHECK_THAT(fit.coefficient("x2"), Catch::Matchers::WithinAbs(-0.856023948227, 1e-7));
    CHECK_THAT(fit.std_errors[0], Catch::Matchers::WithinAbs(0.290424473347, 1e-6));
    CHECK_THAT(fit.std_errors[1], Catch::Matchers::WithinAbs(0.335564534377, 1e-6));
    CHECK_THAT(fit.std_errors[2], Catch::Matchers::WithinAbs(0.355430442947, 1e-6));
    CHECK_THAT(fit.log_lik, Catch::Matchers::WithinAbs(-35.155941916068, 1e-6));
    CHECK_THAT(fit.pseudo_r2, Catch::Matchers::WithinAbs(0.143663894155, 1e-7));
    CHECK_THAT(fit.odds_ratios[1], Catch::Matchers::WithinRel(std::exp(0.584317299384), 1e-6));
}

TEST_CASE("logistic score equations hold at convergence") {
    Rng rng(31);
    const int n = 200;
    Vec x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.next_gauss();
        const double p = 1.0 / (1.0 + std::exp(-(0.2 + 0.8 * x[i])));
        y[i] = rng.next_double() < p ? 1.0 : 0.0;
    }
    const DesignMatrix d = make_design({{"x", x}}, true);
    const FitResult fit = fit_logistic(d, y);
    REQUIRE(fit.converged);
    for (int j = 0; j < d.n_cols(); ++j) {
        double score = 0.0;
        for (int i = 0; i < n; ++i) {
            const double mu =
                1.0 / (1.0 + std::exp(-dot(d.x.row(i), fit.coefficients.data(), d.n_cols())));
            score += d.x.at(i, j) * (y[i] - mu);
        }
        CHECK_THAT(score, Catch::Matchers::WithinAbs(0.0, 1e-6));
    }
}

TEST_CASE("logistic recovers planted coefficients within 3 standard errors") {
    Rng rng(77);
    const int n = 20000;
    const Vec truth = {-1.0, 2.0, 0.5};
    Vec x1(n), x2(n), y(n);
    for (int i = 0; i < n; ++i) {
        x1[i] = rng.next_gauss();
        x2[i] = rng.next_gauss();
        const double eta = truth[0] + truth[1] * x1[i] + truth[2] * x2[i];
        y[i] = rng.next_double() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    const FitResult fit = fit_logistic(make_design({{"x1", x1}, {"x2", x2}}, true), y);
    REQUIRE(fit.converged);
    for (int j = 0; j < 3; ++j) {
        INFO("coefficient " << fit.names[j]);
        CHECK(std::abs(fit.coefficients[j] - truth[j]) <= 3.0 * fit.std_errors[j]);
    }
}

TEST_CASE("perfect separation raises a typed error") {
    Vec x = {-3, -2, -1, 1, 2, 3, -1.5, 1.5};
    Vec y = {0, 0, 0, 1, 1, 1, 0, 1};
    CHECK_THROWS_AS(fit_logistic(make_design({{"x", x}}, true), y), degenerate_error);
}

TEST_CASE("logistic requires both classes") {
    Vec x = {1, 2, 3, 4};
    Vec y = {1, 1, 1, 1};
    CHECK_THROWS_AS(fit_logistic(make_design({{"x", x}}, true), y), validation_error);
}

// ----------------------------- ordinal -----------------------------

TEST_CASE("two-level ordinal fit collapses to binary logistic") {
    Rng rng(12);
    const int n = 150;
    Vec x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.next_gauss();
        const double p = 1.0 / (1.0 + std::exp(-(0.4 + 1.1 * x[i])));
        y[i] = rng.next_double() < p ? 1.0 : 0.0;
    }
    const DesignMatrix d = make_design({{"x", x}}, true);
    const FitResult logit = fit_logistic(d, y);
    const FitResult ord = fit_ordinal_logistic(d, y);
    REQUIRE(ord.converged);
    // P(y=1) = sigmoid(x b - cut): slope matches, cutpoint is minus the intercept
    CHECK_THAT(ord.coefficient("x"), Catch::Matchers::WithinAbs(logit.coefficient("x"), 1e-6));
    CHECK_THAT(ord.coefficient("cut_1"), Catch::Matchers::WithinAbs(-logit.coefficient("const"), 1e-6));
    CHECK_THAT(ord.log_lik, Catch::Matchers::WithinAbs(logit.log_lik, 1e-8));
}

TEST_CASE("ordinal fit matches a frozen external reference fit") {
    Rng rng(6060);
    const int n = 120;
    Vec x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.next_gauss();
        const double eta = 1.1 * x[i];
        const double u = rng.next_double();
        const double p0 = 1.0 / (1.0 + std::exp(-(-0.4 - eta)));
        const double p1 = 1.0 / (1.0 + std::exp(-(0.9 - eta)));
        y[i] = u < p0 ? 0.0 : (u < p1 ? 0.5 : 1.0);
    }
    const FitResult fit = fit_ordinal_logistic(make_design({{"x", x}}, true), y);
    REQUIRE(fit.converged);
    CHECK_THAT(fit.coefficient("x"), Catch::Matchers::WithinAbs(1.353346371313, 1e-6));
    CHECK_THAT(fit.coefficient("cut_1"), Catch::Matchers::WithinAbs(-0.255025864896, 1e-6));
    CHECK_THAT(fit.coefficient("cut_2"), Catch::Matchers::WithinAbs(0.809008616713, 1e-6));
    CHECK_THAT(fit.log_lik, Catch::Matchers::WithinAbs(-103.835664417943, 1e-7));
    CHECK_THAT(fit.std_errors[0], Catch::Matchers::WithinAbs(0.244750317274, 1e-6));
}

TEST_CASE("ordinal slope is near zero when y ignores x") {
    Rng rng(19);
    const int n = 600;
    Vec x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.next_gauss();
        const double u = rng.next_double();
        y[i] = u < 0.3 ? 0.0 : (u < 0.7 ? 0.5 : 1.0);
    }
    const FitResult fit = fit_ordinal_logistic(make_design({{"x", x}}, true), y);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.coefficient("x")) <= 3.0 * fit.std_errors[0]);
}

TEST_CASE("ordinal recovers a planted proportional-odds slope") {
    Rng rng(23);
    const int n = 20000;
    Vec x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x[i] = rng.next_gauss();
        const double eta = 1.0 * x[i];
        const double u = rng.next_double();
        const double p0 = 1.0 / (1.0 + std::exp(-(-0.5 - eta)));
        const double p1 = 1.0 / (1.0 + std::exp(-(0.8 - eta)));
        y[i] = u < p0 ? 0.0 : (u < p1 ? 0.5 : 1.0);
    }
    const FitResult fit = fit_ordinal_logistic(make_design({{"x", x}}, true), y);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.coefficient("x") - 1.0) <= 3.0 * fit.std_errors[0]);
    // cutpoints are strictly increasing
    CHECK(fit.coefficient("cut_1") < fit.coefficient("cut_2"));
}

TEST_CASE("single-level ordinal target is rejected") {
    Vec x = {1, 2, 3, 4};
    Vec y = {0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(fit_ordinal_logistic(make_design({{"x", x}}, true), y), validation_error);
}

// ----------------------------- grid-search oracle agreement -----------------------------

TEST_CASE("fitters agree with an independent coordinate grid maximizer") {
    Rng rng(99);
    for (int inst = 0; inst < 6; ++inst) {
        const int n = 80 + 20 * inst;
        Vec x1(n), x2(n), ylin(n), ybin(n);
        for (int i = 0; i < n; ++i) {
            x1[i] = rng.next_gauss();
            x2[i] = rng.next_gauss();
            ylin[i] = 0.5 + 0.8 * x1[i] - 0.3 * x2[i] + 0.5 * rng.next_gauss();
            const double p = 1.0 / (1.0 + std::exp(-(0.2 + 0.7 * x1[i] - 0.5 * x2[i])));
            ybin[i] = rng.next_double() < p ? 1.0 : 0.0;
        }
        const DesignMatrix d = make_design({{"x1", x1}, {"x2", x2}}, true);

        const FitResult ols = fit_ols(d, ylin);
        const Vec ols_grid = grid_search_max(
            [&](const Vec& b) {
                double rss = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double r = ylin[i] - dot(d.x.row(i), b.data(), d.n_cols());
                    rss += r * r;
                }
                return -rss;
            },
            Vec(3, 0.0));
        for (int j = 0; j < 3; ++j)
            CHECK_THAT(ols.coefficients[j], Catch::Matchers::WithinAbs(ols_grid[j], 1e-3));

        const FitResult logit = fit_logistic(d, ybin);
        const Vec logit_grid =
            grid_search_max([&](const Vec& b) { return logistic_ll(d, ybin, b); }, Vec(3, 0.0));
        for (int j = 0; j < 3; ++j)
            CHECK_THAT(logit.coefficients[j], Catch::Matchers::WithinAbs(logit_grid[j], 1e-3));
    }
}

// ----------------------------- stars and p-values -----------------------------

TEST_CASE("stars map exactly to the significance thresholds") {
    CHECK(stars_for(0.0499) == "*");
    CHECK(stars_for(0.05) == "");
    CHECK(stars_for(0.0099) == "**");
    CHECK(stars_for(0.01) == "*");
    CHECK(stars_for(0.0009) == "***");
    CHECK(stars_for(0.001) == "**");
    CHECK(stars_for(0.2) == "");
}

TEST_CASE("student t and normal tails behave") {
    CHECK_THAT(student_t_p_two_sided(0.0, 10), Catch::Matchers::WithinAbs(1.0, 1e-12));
    // large df approaches the normal tail
    CHECK_THAT(student_t_p_two_sided(1.96, 1e7), Catch::Matchers::WithinAbs(normal_p_two_sided(1.96), 1e-5));
    CHECK(student_t_p_two_sided(12.0, 5) < 1e-4);
    CHECK_THAT(normal_p_two_sided(1.959963984540054), Catch::Matchers::WithinAbs(0.05, 1e-9));
}

TEST_CASE("pearson correlation matches a frozen reference") {
    const Vec x = {0.2, -1.3, 0.7, 2.1, -0.5, 1.1, 0.05, -0.9};
    const Vec y = {1.0, -0.8, 0.3, 1.9, -1.1, 0.6, 0.2, -0.4};
    const Correlation c = pearson_correlation(x, y);
    CHECK_THAT(c.r, Catch::Matchers::WithinAbs(0.8789884579812237, 1e-12));
    CHECK_THAT(c.p_value, Catch::Matchers::WithinAbs(0.004037824915991919, 1e-9));
}

TEST_CASE("perfect anticorrelation gives r = -1") {
    Vec x = {1, 2, 3, 4, 5};
    Vec y = {-1, -2, -3, -4, -5};
    const Correlation c = pearson_correlation(x, y);
    CHECK_THAT(c.r, Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK(c.p_value < 1e-8);
}

// ----------------------------- dataset builders -----------------------------

namespace {

TransferMatrix tiny_matrix() {
    TransferMatrix m;
    m.prompt_ids = {10, 11, 12};
    for (int j = 0; j < 3; ++j) {
        SuffixEntry s;
        s.suffix_id = j;
        s.origin_prompt_id = 10 + j;
        s.seed = 0;
        s.tokens = {60, 61};
        m.suffixes.push_back(s);
    }
    m.cells = {{1, 0, 0}, {1, 1, 0}, {0, 0, 1}};
    m.source_model = m.target_model = "m";
    return m;
}

std::vector<std::pair<int, Vec>> tiny_embeddings() {
    return {{10, {1.0, 0.0}}, {11, {0.8, 0.6}}, {12, {0.0, 1.0}}};
}

} // namespace

TEST_CASE("pairwise dataset has one row per ordered pair") {
    const Dataset ds = pairwise_prompt_dataset(tiny_matrix(), tiny_embeddings(), PairwiseMode::fraction);
    CHECK(ds.y.size() == 6); // 3 * 2 ordered pairs
    CHECK(ds.design.names == std::vector<std::string>{"const", "semantic_sim"});
    // pair (10, 11): suffix of 10 jailbreaks 11 (cell[1][0] = 1),
    // suffix of 11 does not jailbreak 10 (cell[0][1] = 0) -> 0.5 both ways
    CHECK_THAT(ds.y[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(ds.y[2], Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("ordinal pairwise y follows the 0 / 0.5 / 1 rule") {
    const Dataset ds = pairwise_prompt_dataset(tiny_matrix(), tiny_embeddings(), PairwiseMode::ordinal);
    // (10,11): one direction transfers -> 0.5; (10,12): none -> 0; (11,12): none -> 0
    CHECK_THAT(ds.y[0], Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(ds.y[1], Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(ds.y[3], Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("saturated transfer gives all-ones targets") {
    TransferMatrix m = tiny_matrix();
    m.cells = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
    const Dataset ds = pairwise_prompt_dataset(m, tiny_embeddings(), PairwiseMode::fraction);
    for (double v : ds.y) CHECK(v == 1.0);
}

TEST_CASE("pairwise dataset validates its inputs") {
    TransferMatrix m = tiny_matrix();
    CHECK_THROWS_AS(pairwise_prompt_dataset(m, {{10, {1.0, 0.0}}, {11, {0.8, 0.6}}},
                                            PairwiseMode::fraction),
                    validation_error);
    m.suffixes[2].origin_prompt_id = 10; // prompt 12 loses its suffix
    CHECK_THROWS_AS(pairwise_prompt_dataset(m, tiny_embeddings(), PairwiseMode::fraction),
                    validation_error);
    TransferMatrix two = tiny_matrix();
    two.suffixes[1].origin_prompt_id = 10; // two suffixes for prompt 10
    two.suffixes[2].origin_prompt_id = 11;
    CHECK_THROWS_AS(pairwise_prompt_dataset(two, tiny_embeddings(), PairwiseMode::ordinal),
                    validation_error);
}

namespace {

std::vector<FeatureRow> tiny_rows() {
    std::vector<FeatureRow> rows;
    Rng rng(3);
    for (int i = 0; i < 24; ++i) {
        FeatureRow r;
        r.prompt_id = i / 4;
        r.suffix_id = i % 4;
        r.s_base_dot = rng.next_gauss();
        r.s_base_cos = 0.1 * r.s_base_dot;
        r.push = rng.next_gauss();
        r.orth = std::abs(rng.next_gauss());
        r.sem_sim_model = rng.next_gauss() * 0.3;
        r.sem_sim_indep = rng.next_gauss() * 0.3;
        r.label = rng.next_double() < 0.4 ? 1 : 0;
        rows.push_back(r);
    }
    return rows;
}

} // namespace

TEST_CASE("joint design has the documented seven columns") {
    const Dataset ds = joint_dataset(tiny_rows());
    REQUIRE(ds.design.names ==
            std::vector<std::string>{"const", "refusal_connec", "suffix_push", "orth_shift",
                                     "refusal_connec \xC3\x97 suffix_push",
                                     "refusal_connec \xC3\x97 orth_shift",
                                     "suffix_push \xC3\x97 orth_shift"});
    const auto rows = tiny_rows();
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(ds.y[i] == static_cast<double>(rows[i].label));
}

TEST_CASE("single-feature datasets are three two-column designs") {
    const auto datasets = single_feature_datasets(tiny_rows());
    REQUIRE(datasets.size() == 3);
    CHECK(datasets[0].name == "refusal_connec");
    CHECK(datasets[1].name == "suffix_push");
    CHECK(datasets[2].name == "orth_shift");
    for (const auto& ds : datasets) CHECK(ds.design.n_cols() == 2);
}

TEST_CASE("joint-semantic design appends the similarity main effect and interactions") {
    const Dataset ds = joint_semantic_dataset(tiny_rows());
    REQUIRE(ds.design.n_cols() == 11); // const + 4 mains + 6 interactions
    CHECK(ds.design.names[1] == "semantic_sim_model");
    CHECK(ds.design.names.back() == "semantic_sim_model \xC3\x97 orth_shift");
}
