#pragma once

// Greedy coordinate gradient over suffix tokens, plus the regularized loss
// variants that reward pushing away from (or moving orthogonally to) the
// refusal direction. Single-token substitutions are ranked by the input
// gradient and re-scored with the full objective; the incumbent survives
// unless a candidate strictly improves on it.

#include <algorithm>
#include <string>
#include <vector>

#include "suffixlab/common.hpp"
#include "suffixlab/corpus.hpp"
#include "suffixlab/geometry.hpp"
#include "suffixlab/judge.hpp"
#include "suffixlab/model.hpp"
#include "suffixlab/prob.hpp"

namespace suffixlab {

struct GcgConfig {
    int suffix_len = 4;
    int n_iters = 24;
    int top_k = 8;
    int batch_size = 24;
    std::uint64_t seed = 0;
    RegularizerSpec regularizer;

    void validate(const ModelConfig& cfg) const {
        require(suffix_len >= 1, "GcgConfig: suffix_len must be >= 1");
        require(n_iters >= 0, "GcgConfig: n_iters must be >= 0");
        require(top_k >= 1 && top_k <= cfg.vocab_size, "GcgConfig: top_k must be in [1, vocab_size]");
        require(batch_size >= 1, "GcgConfig: batch_size must be >= 1");
        regularizer.validate();
    }
};

struct AttackResult {
    int prompt_id = -1;
    std::uint64_t seed = 0;
    std::vector<int> suffix;
    std::vector<double> loss_trajectory; // best objective after each iteration
    double final_loss = 0.0;
};

// top_k replacement tokens per suffix position, ranked by most-negative
// gradient with ties resolved toward the lowest token id. The template
// tokens (BOS, EOI) are never candidates: a suffix containing them would
// break the chat template.
inline std::vector<std::vector<int>> topk_candidates(const Mat& d_onehot, int top_k) {
    require(top_k >= 1 && top_k <= static_cast<int>(d_onehot.cols), "topk_candidates: bad top_k");
    std::vector<std::vector<int>> out(d_onehot.rows);
    std::vector<int> ids;
    for (std::size_t pos = 0; pos < d_onehot.rows; ++pos) {
        ids.clear();
        for (std::size_t t = 0; t < d_onehot.cols; ++t) {
            const int id = static_cast<int>(t);
            if (id != kBosToken && id != kEoiToken) ids.push_back(id);
        }
        const double* row = d_onehot.row(pos);
        std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
            if (row[a] != row[b]) return row[a] < row[b];
            return a < b;
        });
        const int take = std::min<int>(top_k, static_cast<int>(ids.size()));
        out[pos].assign(ids.begin(), ids.begin() + take);
    }
    return out;
}

namespace detail {

inline ActivationObjective make_objective(const Parameters& params, const RefusalDirection& direction,
                                          const TokenSequence& prompt, const RegularizerSpec& reg) {
    ActivationObjective obj;
    obj.reg = reg;
    if (reg.kind != RegKind::none) {
        direction.validate(params.config);
        obj.layer = direction.layer;
        obj.direction = direction.vector;
        obj.base_activation = eoi_activation(params, prompt, direction.layer);
    }
    return obj;
}

} // namespace detail

// target NLL minus lambda times the activation reward, evaluated for an
// explicit suffix
inline double regularized_objective(const Parameters& params, const RefusalDirection& direction,
                                    const TokenSequence& prompt, const std::vector<int>& suffix,
                                    const std::vector<int>& target, const RegularizerSpec& reg) {
    reg.validate();
    const ActivationObjective obj = detail::make_objective(params, direction, prompt, reg);
    return attack_objective(params, splice_suffix(prompt, suffix), target, obj);
}

inline AttackResult gcg_attack(const Parameters& params, const RefusalDirection& direction,
                               const Prompt& prompt, const std::vector<int>& target,
                               const GcgConfig& config) {
    config.validate(params.config);
    prompt.seq.validate(params.config);
    require(!target.empty(), "gcg_attack: empty target");
    require(prompt.seq.length() + config.suffix_len + static_cast<int>(target.size()) <=
                params.config.max_seq_len,
            "gcg_attack: prompt + suffix + target exceeds max_seq_len");

    const ActivationObjective obj =
        detail::make_objective(params, direction, prompt.seq, config.regularizer);

    AttackResult result;
    result.prompt_id = prompt.id;
    result.seed = config.seed;
    result.suffix.assign(config.suffix_len, params.config.vocab_size - 1);

    const int suffix_begin = prompt.seq.eoi_index;
    auto objective_of = [&](const std::vector<int>& suffix) {
        return attack_objective(params, splice_suffix(prompt.seq, suffix), target, obj);
    };

    double best = objective_of(result.suffix);
    Rng rng(mix_seed(config.seed, 0x6C67));
    for (int iter = 0; iter < config.n_iters; ++iter) {
        const TokenSequence seq = splice_suffix(prompt.seq, result.suffix);
        const GradientReport grad =
            input_gradient(params, seq, suffix_begin, config.suffix_len, target, obj);
        const auto candidates = topk_candidates(grad.d_onehot, config.top_k);

        double cand_best = best;
        int cand_pos = -1, cand_tok = -1;
        std::vector<int> trial = result.suffix;
        for (int b = 0; b < config.batch_size; ++b) {
            const int pos = static_cast<int>(rng.next_below(config.suffix_len));
            const int tok = candidates[pos][rng.next_below(candidates[pos].size())];
            if (tok == result.suffix[pos]) continue; // no-op substitution
            trial[pos] = tok;
            const double val = objective_of(trial);
            trial[pos] = result.suffix[pos];
            if (val < cand_best) {
                cand_best = val;
                cand_pos = pos;
                cand_tok = tok;
            }
        }
        if (cand_pos >= 0) {
            result.suffix[cand_pos] = cand_tok;
            best = cand_best;
        }
        result.loss_trajectory.push_back(best);
    }
    result.final_loss = best;
    return result;
}

// ----------------------------- regularizer sweep -----------------------------

struct SweepRow {
    double lambda = 0.0;
    double asr = 0.0;
    int n_jailbroken = 0;
    int n_total = 0;
    double mean_push = 0.0; // achieved suffix push on the origin prompt
    double mean_orth = 0.0;
};

struct SweepResult {
    RegKind kind = RegKind::none;
    std::vector<SweepRow> rows;                          // one per lambda
    std::vector<std::vector<SuffixEntry>> suffix_pools;  // per lambda
    std::vector<std::vector<double>> push_by_lambda;     // per lambda, per (prompt, seed) run
    std::vector<std::vector<double>> orth_by_lambda;
};

// For each lambda: optimize suffixes for every (prompt, seed) pair, judge
// every suffix against every prompt, and record ASR plus the achieved
// activation movement of each suffix on its own prompt.
inline SweepResult sweep_regularizer(const Parameters& params, const RefusalDirection& direction,
                                     const std::vector<const Prompt*>& prompts,
                                     const std::vector<std::vector<int>>& targets,
                                     const std::vector<double>& lambdas, RegKind kind,
                                     int suffixes_per_prompt, const GcgConfig& base_config,
                                     const std::vector<int>& refusal_target) {
    require(!prompts.empty(), "sweep_regularizer: no prompts");
    require(targets.size() == prompts.size(), "sweep_regularizer: targets must match prompts");
    require(suffixes_per_prompt >= 1, "sweep_regularizer: suffixes_per_prompt must be >= 1");
    require(std::find(lambdas.begin(), lambdas.end(), 0.0) != lambdas.end(),
            "sweep_regularizer: lambda list must include the 0 baseline");
    direction.validate(params.config);

    SweepResult sweep;
    sweep.kind = kind;
    for (double lambda : lambdas) {
        GcgConfig cfg = base_config;
        cfg.regularizer.kind = (lambda == 0.0) ? RegKind::none : kind;
        cfg.regularizer.lambda = lambda;

        std::vector<SuffixEntry> pool;
        std::vector<double> pushes, orths;
        int suffix_id = 0;
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            const Vec a_base = eoi_activation(params, prompts[i]->seq, direction.layer);
            for (int s = 0; s < suffixes_per_prompt; ++s) {
                cfg.seed = mix_seed(base_config.seed, static_cast<std::uint64_t>(prompts[i]->id), s);
                const AttackResult res = gcg_attack(params, direction, *prompts[i], targets[i], cfg);
                SuffixEntry entry;
                entry.suffix_id = suffix_id++;
                entry.origin_prompt_id = prompts[i]->id;
                entry.seed = s;
                entry.tokens = res.suffix;
                pool.push_back(entry);

                const Vec a_sfx =
                    eoi_activation(params, splice_suffix(prompts[i]->seq, res.suffix), direction.layer);
                pushes.push_back(suffix_push(a_base, a_sfx, direction.vector));
                orths.push_back(orthogonal_shift(a_base, a_sfx, direction.vector));
            }
        }

        const TransferMatrix matrix =
            intra_transfer_matrix(params, prompts, pool, refusal_target, "sweep");
        int jailbroken = 0;
        for (const auto& row : matrix.cells)
            for (int cell : row) jailbroken += cell;

        SweepRow row;
        row.lambda = lambda;
        row.n_total = static_cast<int>(prompts.size() * pool.size());
        row.n_jailbroken = jailbroken;
        row.asr = static_cast<double>(jailbroken) / static_cast<double>(row.n_total);
        double sp = 0.0, so = 0.0;
        for (double v : pushes) sp += v;
        for (double v : orths) so += v;
        row.mean_push = sp / pushes.size();
        row.mean_orth = so / orths.size();

        sweep.rows.push_back(row);
        sweep.suffix_pools.push_back(std::move(pool));
        sweep.push_by_lambda.push_back(std::move(pushes));
        sweep.orth_by_lambda.push_back(std::move(orths));
    }
    return sweep;
}

struct PairedPushTest {
    double mean_difference = 0.0;
    double t_statistic = 0.0;
    double p_one_sided = 1.0;
    int n_pairs = 0;
};

// Paired one-sided test that regularized runs (lambda > 0, averaged over the
// non-zero lambdas) achieve more movement than the matched baseline runs.
inline PairedPushTest paired_regularizer_test(const SweepResult& sweep) {
    int base_idx = -1;
    for (std::size_t i = 0; i < sweep.rows.size(); ++i)
        if (sweep.rows[i].lambda == 0.0) base_idx = static_cast<int>(i);
    require(base_idx >= 0, "paired_regularizer_test: missing lambda=0 baseline");
    const auto& metric = sweep.kind == RegKind::orthogonal_shift ? sweep.orth_by_lambda : sweep.push_by_lambda;
    const std::vector<double>& base = metric[base_idx];
    require(!base.empty(), "paired_regularizer_test: empty baseline");

    std::vector<double> diffs(base.size(), 0.0);
    int n_lambdas = 0;
    for (std::size_t l = 0; l < sweep.rows.size(); ++l) {
        if (static_cast<int>(l) == base_idx) continue;
        require(metric[l].size() == base.size(), "paired_regularizer_test: run counts differ");
        for (std::size_t i = 0; i < base.size(); ++i) diffs[i] += metric[l][i] - base[i];
        ++n_lambdas;
    }
    require(n_lambdas >= 1, "paired_regularizer_test: no non-zero lambdas");
    for (auto& d : diffs) d /= n_lambdas;

    const int n = static_cast<int>(diffs.size());
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= n;
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= (n - 1);
    PairedPushTest test;
    test.n_pairs = n;
    test.mean_difference = mean;
    if (var <= 0.0) {
        test.t_statistic = mean > 0.0 ? 1e12 : 0.0;
        test.p_one_sided = mean > 0.0 ? 0.0 : 1.0;
        return test;
    }
    test.t_statistic = mean / std::sqrt(var / n);
    const double two_sided = student_t_p_two_sided(test.t_statistic, n - 1);
    test.p_one_sided = test.t_statistic > 0.0 ? two_sided / 2.0 : 1.0 - two_sided / 2.0;
    return test;
}

} // namespace suffixlab
