#pragma once

// Builders that turn transfer matrices and feature tables into regression
// datasets mirroring the analysis setups: prompt-pair similarity (fraction
// and ordinal targets), single-feature designs, and the joint design with
// pairwise interactions (optionally including model-internal semantic
// similarity).

#include <string>
#include <vector>

#include "suffixlab/common.hpp"
#include "suffixlab/geometry.hpp"
#include "suffixlab/judge.hpp"
#include "suffixlab/stats.hpp"

namespace suffixlab {

struct Dataset {
    std::string name;
    DesignMatrix design;
    Vec y;
};

enum class PairwiseMode { fraction, ordinal };

// One row per ordered prompt pair (p, p'), p != p'; x = [1, cos(E(p), E(p'))].
// fraction: y = average of the two directed transfer fractions.
// ordinal:  y in {0, 0.5, 1} from the two single-suffix directions.
inline Dataset pairwise_prompt_dataset(const TransferMatrix& transfer,
                                       const std::vector<std::pair<int, Vec>>& embeddings,
                                       PairwiseMode mode) {
    transfer.validate();
    const std::size_t n_prompts = transfer.prompt_ids.size();

    auto embedding_of = [&](int prompt_id) -> const Vec& {
        for (const auto& [id, e] : embeddings)
            if (id == prompt_id) return e;
        throw validation_error("pairwise_prompt_dataset: missing embedding for prompt " +
                               std::to_string(prompt_id));
    };

    // suffix columns by origin prompt
    std::vector<std::vector<std::size_t>> by_origin(n_prompts);
    for (std::size_t j = 0; j < transfer.suffixes.size(); ++j) {
        for (std::size_t i = 0; i < n_prompts; ++i)
            if (transfer.prompt_ids[i] == transfer.suffixes[j].origin_prompt_id) {
                by_origin[i].push_back(j);
                break;
            }
    }
    for (std::size_t i = 0; i < n_prompts; ++i) {
        if (by_origin[i].empty())
            throw validation_error("pairwise_prompt_dataset: prompt " +
                                   std::to_string(transfer.prompt_ids[i]) + " has no suffixes");
        if (mode == PairwiseMode::ordinal)
            require(by_origin[i].size() == 1,
                    "pairwise_prompt_dataset: ordinal mode needs exactly one suffix per prompt");
    }

    auto directed_fraction = [&](std::size_t from, std::size_t to) {
        double s = 0.0;
        for (std::size_t j : by_origin[from]) s += transfer.cells[to][j];
        return s / static_cast<double>(by_origin[from].size());
    };

    Vec sim, y;
    for (std::size_t a = 0; a < n_prompts; ++a) {
        for (std::size_t b = 0; b < n_prompts; ++b) {
            if (a == b) continue;
            sim.push_back(semantic_similarity(embedding_of(transfer.prompt_ids[a]),
                                              embedding_of(transfer.prompt_ids[b])));
            if (mode == PairwiseMode::fraction) {
                y.push_back(0.5 * (directed_fraction(a, b) + directed_fraction(b, a)));
            } else {
                const int hits = transfer.cells[b][by_origin[a][0]] + transfer.cells[a][by_origin[b][0]];
                y.push_back(0.5 * hits);
            }
        }
    }

    Dataset ds;
    ds.name = mode == PairwiseMode::fraction ? "pairwise_fraction" : "pairwise_ordinal";
    ds.design = standardize(make_design({{"semantic_sim", sim}}, true));
    ds.y = std::move(y);
    return ds;
}

namespace detail {

inline NamedColumns feature_columns(const std::vector<FeatureRow>& rows, bool with_semantic) {
    require(!rows.empty(), "feature dataset: no rows");
    Vec s_base, push, orth, sem;
    for (const auto& r : rows) {
        s_base.push_back(r.s_base_dot);
        push.push_back(r.push);
        orth.push_back(r.orth);
        sem.push_back(r.sem_sim_model);
    }
    NamedColumns cols;
    if (with_semantic) cols.push_back({"semantic_sim_model", sem});
    cols.push_back({"refusal_connec", s_base});
    cols.push_back({"suffix_push", push});
    cols.push_back({"orth_shift", orth});
    return cols;
}

inline Vec labels_of(const std::vector<FeatureRow>& rows) {
    Vec y;
    for (const auto& r : rows) y.push_back(static_cast<double>(r.label));
    return y;
}

} // namespace detail

// three two-column designs: [1, v] for each feature of interest
inline std::vector<Dataset> single_feature_datasets(const std::vector<FeatureRow>& rows) {
    const NamedColumns cols = detail::feature_columns(rows, false);
    const Vec y = detail::labels_of(rows);
    std::vector<Dataset> out;
    for (const auto& [name, col] : cols) {
        Dataset ds;
        ds.name = name;
        ds.design = standardize(make_design({{name, col}}, true));
        ds.y = y;
        out.push_back(std::move(ds));
    }
    return out;
}

// [1, s_base, push, orth, s_base*push, s_base*orth, push*orth], standardized bases
inline Dataset joint_dataset(const std::vector<FeatureRow>& rows) {
    Dataset ds;
    ds.name = "joint";
    ds.design = build_interactions(detail::feature_columns(rows, false),
                                   {{"refusal_connec", "suffix_push"},
                                    {"refusal_connec", "orth_shift"},
                                    {"suffix_push", "orth_shift"}});
    ds.y = detail::labels_of(rows);
    return ds;
}

// joint design extended with model-internal semantic similarity and its
// interactions with every main effect
inline Dataset joint_semantic_dataset(const std::vector<FeatureRow>& rows) {
    Dataset ds;
    ds.name = "joint_semantic";
    ds.design = build_interactions(detail::feature_columns(rows, true),
                                   {{"refusal_connec", "suffix_push"},
                                    {"refusal_connec", "orth_shift"},
                                    {"suffix_push", "orth_shift"},
                                    {"semantic_sim_model", "refusal_connec"},
                                    {"semantic_sim_model", "suffix_push"},
                                    {"semantic_sim_model", "orth_shift"}});
    ds.y = detail::labels_of(rows);
    return ds;
}

} // namespace suffixlab
