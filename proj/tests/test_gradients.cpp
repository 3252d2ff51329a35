#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "suffixlab/model.hpp"

using namespace suffixlab;

namespace {

struct Instance {
    Parameters params;
    TokenSequence seq;
    int suffix_begin = 0;
    int suffix_len = 0;
    std::vector<int> target;
    ActivationObjective objective;
};

Instance random_instance(std::uint64_t seed, RegKind kind, double lambda) {
    ModelConfig cfg;
    cfg.n_layers = 3;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.vocab_size = 12;
    cfg.max_seq_len = 16;
    cfg.seed = seed;

    Rng rng(mix_seed(seed, 999));
    Instance inst{init_parameters(cfg), {}, 0, 3, {}, {}};
    inst.seq.tokens = {kBosToken};
    for (int i = 0; i < 3; ++i) inst.seq.tokens.push_back(2 + static_cast<int>(rng.next_below(9)));
    inst.suffix_begin = static_cast<int>(inst.seq.tokens.size());
    for (int i = 0; i < inst.suffix_len; ++i)
        inst.seq.tokens.push_back(2 + static_cast<int>(rng.next_below(9)));
    inst.seq.tokens.push_back(kEoiToken);
    inst.seq.eoi_index = static_cast<int>(inst.seq.tokens.size()) - 1;
    inst.target = {2 + static_cast<int>(rng.next_below(9)), 2 + static_cast<int>(rng.next_below(9))};

    inst.objective.reg.kind = kind;
    inst.objective.reg.lambda = lambda;
    if (kind != RegKind::none) {
        inst.objective.layer = 1 + static_cast<int>(rng.next_below(cfg.n_layers));
        inst.objective.direction.resize(cfg.d_model);
        inst.objective.base_activation.resize(cfg.d_model);
        for (auto& x : inst.objective.direction) x = rng.next_gauss();
        for (auto& x : inst.objective.base_activation) x = rng.next_gauss();
    }
    return inst;
}

double objective_on_relaxed(const Instance& inst, const Mat& x) {
    const ForwardTrace tr = forward_trace(inst.params, x);
    return objective_from_trace(tr, inst.seq.eoi_index, inst.target, inst.objective);
}

// max relative error between the analytic gradient and central differences
double max_rel_error(const Instance& inst, double h = 1e-4) {
    const GradientReport rep = input_gradient(inst.params, inst.seq, inst.suffix_begin,
                                              inst.suffix_len, inst.target, inst.objective);
    std::vector<int> full = inst.seq.tokens;
    full.insert(full.end(), inst.target.begin(), inst.target.end());
    const Mat x0 = onehot_rows(full, inst.params.config.vocab_size);
    double worst = 0.0;
    for (int i = 0; i < inst.suffix_len; ++i) {
        for (int t = 0; t < inst.params.config.vocab_size; ++t) {
            Mat xp = x0, xm = x0;
            xp.at(inst.suffix_begin + i, t) += h;
            xm.at(inst.suffix_begin + i, t) -= h;
            const double fd = (objective_on_relaxed(inst, xp) - objective_on_relaxed(inst, xm)) / (2 * h);
            const double an = rep.d_onehot.at(i, t);
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("analytic input gradients match central finite differences") {
    // all three regularizer kinds, many random instances
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 34; ++seed) {
        for (RegKind kind : {RegKind::none, RegKind::suffix_push, RegKind::orthogonal_shift}) {
            const double lambda = kind == RegKind::none ? 0.0 : 0.1 + 0.2 * (seed % 4);
            const Instance inst = random_instance(1000 + seed, kind, lambda);
            const double err = max_rel_error(inst);
            INFO("seed " << seed << " kind " << static_cast<int>(kind) << " rel err " << err);
            REQUIRE(err <= 1e-3);
            ++checked;
        }
    }
    REQUIRE(checked >= 100);
}

TEST_CASE("lambda zero reduces to the plain loss gradient") {
    Instance plain = random_instance(77, RegKind::none, 0.0);
    Instance reg = plain;
    reg.objective.reg.kind = RegKind::suffix_push;
    reg.objective.reg.lambda = 0.0;
    reg.objective.layer = 2;
    reg.objective.direction.assign(plain.params.config.d_model, 0.5);
    reg.objective.base_activation.assign(plain.params.config.d_model, 0.1);

    const GradientReport a = input_gradient(plain.params, plain.seq, plain.suffix_begin,
                                            plain.suffix_len, plain.target, plain.objective);
    const GradientReport b = input_gradient(reg.params, reg.seq, reg.suffix_begin, reg.suffix_len,
                                            reg.target, reg.objective);
    REQUIRE(a.d_onehot.data.size() == b.d_onehot.data.size());
    for (std::size_t i = 0; i < a.d_onehot.data.size(); ++i)
        CHECK_THAT(b.d_onehot.data[i], Catch::Matchers::WithinAbs(a.d_onehot.data[i], 1e-14));
}

TEST_CASE("regularizer gradient component is linear in lambda") {
    const Instance base = random_instance(311, RegKind::suffix_push, 0.3);
    Instance doubled = base;
    doubled.objective.reg.lambda = 0.6;
    Instance zero = base;
    zero.objective.reg.kind = RegKind::none;
    zero.objective.reg.lambda = 0.0;

    const auto g1 = input_gradient(base.params, base.seq, base.suffix_begin, base.suffix_len,
                                   base.target, base.objective);
    const auto g2 = input_gradient(doubled.params, doubled.seq, doubled.suffix_begin,
                                   doubled.suffix_len, doubled.target, doubled.objective);
    const auto g0 = input_gradient(zero.params, zero.seq, zero.suffix_begin, zero.suffix_len,
                                   zero.target, zero.objective);
    for (std::size_t i = 0; i < g1.d_onehot.data.size(); ++i) {
        const double comp1 = g1.d_onehot.data[i] - g0.d_onehot.data[i];
        const double comp2 = g2.d_onehot.data[i] - g0.d_onehot.data[i];
        CHECK_THAT(comp2, Catch::Matchers::WithinAbs(2.0 * comp1, 1e-10));
    }
}

TEST_CASE("gradients are finite everywhere") {
    const Instance inst = random_instance(555, RegKind::orthogonal_shift, 1.5);
    const GradientReport rep = input_gradient(inst.params, inst.seq, inst.suffix_begin,
                                              inst.suffix_len, inst.target, inst.objective);
    for (double g : rep.d_onehot.data) CHECK(std::isfinite(g));
}
