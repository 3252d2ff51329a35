#pragma once

// Refusal-direction geometry: mean-difference direction per layer, steering
// effectiveness (ablate to bypass, add to induce), optimal-layer selection,
// and the per-pair activation features fed into the regressions.

#include <algorithm>
#include <string>
#include <vector>

#include "suffixlab/common.hpp"
#include "suffixlab/corpus.hpp"
#include "suffixlab/linalg.hpp"
#include "suffixlab/model.hpp"

namespace suffixlab {

enum class NormConvention { raw, unit };

struct RefusalDirection {
    int layer = -1;                 // capture index, in [1, n_layers]
    Vec vector;                     // mean(harmful) - mean(harmless) at `layer`
    double effectiveness = 0.0;     // bypass_rate + induce_rate, in [0, 2]
    NormConvention norm_convention = NormConvention::raw;
    double add_scale = 0.0;         // mean harmful projection onto the unit direction

    Vec unit() const { return normalized(vector); }

    void validate(const ModelConfig& cfg) const {
        require(layer >= 1 && layer <= cfg.n_layers, "RefusalDirection: layer out of range");
        require(static_cast<int>(vector.size()) == cfg.d_model, "RefusalDirection: dimension mismatch");
        if (norm2(vector) == 0.0) throw degenerate_error("RefusalDirection: zero vector");
        if (norm_convention == NormConvention::unit)
            require(std::abs(norm2(vector) - 1.0) <= 1e-12, "RefusalDirection: unit convention violated");
    }

    RefusalDirection as_unit() const {
        RefusalDirection r = *this;
        r.vector = unit();
        r.norm_convention = NormConvention::unit;
        return r;
    }
};

// mean(harmful) - mean(harmless); throws on empty input or a zero result
inline Vec compute_refusal_direction(const std::vector<Vec>& harmful_acts,
                                     const std::vector<Vec>& harmless_acts) {
    require(!harmful_acts.empty() && !harmless_acts.empty(),
            "compute_refusal_direction: empty activation list");
    require(harmful_acts[0].size() == harmless_acts[0].size(),
            "compute_refusal_direction: dimension mismatch");
    Vec diff = sub(mean_of(harmful_acts), mean_of(harmless_acts));
    if (norm2(diff) == 0.0)
        throw degenerate_error("compute_refusal_direction: degenerate (zero) direction");
    return diff;
}

// residual activation at the end-of-instruction position
inline Vec eoi_activation(const Parameters& params, const TokenSequence& seq, int layer) {
    seq.validate(params.config);
    require(layer >= 0 && layer <= params.config.n_layers, "eoi_activation: layer out of range");
    TraceOptions opt;
    opt.stop_layer = layer;
    ForwardTrace tr = forward_trace_tokens(params, seq.tokens, opt);
    const double* row = tr.residual[layer].row(seq.eoi_index);
    return Vec(row, row + params.config.d_model);
}

// activations at every capture point in one pass
inline std::vector<Vec> eoi_activation_stack(const Parameters& params, const TokenSequence& seq) {
    seq.validate(params.config);
    ForwardTrace tr = forward_trace_tokens(params, seq.tokens);
    std::vector<Vec> out;
    for (int l = 0; l <= params.config.n_layers; ++l) {
        const double* row = tr.residual[l].row(seq.eoi_index);
        out.emplace_back(row, row + params.config.d_model);
    }
    return out;
}

// ----------------------------- steering effectiveness -----------------------------

struct EffectivenessReport {
    double bypass_rate = 0.0; // harmful probes that stop refusing under ablation
    double induce_rate = 0.0; // harmless probes that start refusing under addition
    double add_scale = 0.0;
    double score() const { return bypass_rate + induce_rate; }
};

namespace detail {

inline bool begins_with(const std::vector<int>& response, const std::vector<int>& prefix) {
    if (response.size() < prefix.size()) return false;
    return std::equal(prefix.begin(), prefix.end(), response.begin());
}

inline bool refuses(const Parameters& params, const TokenSequence& prompt,
                    const std::vector<int>& refusal_target, const ResidualEdit& edit,
                    int window) {
    const std::vector<int> resp = greedy_decode(params, prompt, window, edit);
    return begins_with(resp, refusal_target);
}

} // namespace detail

constexpr int kJudgeWindow = 8;

// Appendix-style effectiveness of a candidate direction at a given layer:
// ablating the direction everywhere should stop refusal on harmful probes,
// adding it (scaled to the mean harmful projection) at its own layer should
// induce refusal on harmless probes.
inline EffectivenessReport direction_effectiveness(
    const Parameters& params, int layer, const Vec& candidate,
    const std::vector<const Prompt*>& harmful_probes,
    const std::vector<const Prompt*>& harmless_probes,
    const std::vector<int>& refusal_target) {
    require(!harmful_probes.empty() && !harmless_probes.empty(),
            "direction_effectiveness: empty probe set");
    if (norm2(candidate) == 0.0) throw degenerate_error("direction_effectiveness: zero candidate");
    const Vec unit_dir = normalized(candidate);

    double add_scale = 0.0;
    for (const Prompt* p : harmful_probes)
        add_scale += dot(eoi_activation(params, p->seq, layer), unit_dir);
    add_scale /= static_cast<double>(harmful_probes.size());

    const ResidualEdit ablate = ResidualEdit::ablation(unit_dir);
    const ResidualEdit addition = ResidualEdit::addition(unit_dir, layer, add_scale);

    int bypass = 0;
    for (const Prompt* p : harmful_probes) {
        const bool base = detail::refuses(params, p->seq, refusal_target, ResidualEdit::none(), kJudgeWindow);
        const bool edited = detail::refuses(params, p->seq, refusal_target, ablate, kJudgeWindow);
        bypass += (base && !edited);
    }
    int induce = 0;
    for (const Prompt* p : harmless_probes) {
        const bool base = detail::refuses(params, p->seq, refusal_target, ResidualEdit::none(), kJudgeWindow);
        const bool edited = detail::refuses(params, p->seq, refusal_target, addition, kJudgeWindow);
        induce += (!base && edited);
    }

    EffectivenessReport rep;
    rep.bypass_rate = static_cast<double>(bypass) / harmful_probes.size();
    rep.induce_rate = static_cast<double>(induce) / harmless_probes.size();
    rep.add_scale = add_scale;
    return rep;
}

struct LayerScore {
    int layer = 0;
    double bypass_rate = 0.0;
    double induce_rate = 0.0;
    double score = 0.0;
    bool degenerate = false;
};

struct LayerSelection {
    RefusalDirection direction;        // at the best layer, raw convention
    std::vector<LayerScore> scores;    // one entry per layer 1..n_layers
};

// Sweeps layers 1..n_layers, computing the mean-difference direction and its
// effectiveness at each; returns the argmax (ties -> lowest layer).
inline LayerSelection select_optimal_layer(const Parameters& params,
                                           const std::vector<const Prompt*>& harmful_probes,
                                           const std::vector<const Prompt*>& harmless_probes,
                                           const std::vector<int>& refusal_target) {
    require(params.config.n_layers >= 2, "select_optimal_layer: need >= 2 layers");
    require(!harmful_probes.empty() && !harmless_probes.empty(), "select_optimal_layer: empty probe set");

    // one trace per probe covers all layers
    std::vector<std::vector<Vec>> harm_stacks, benign_stacks;
    for (const Prompt* p : harmful_probes) harm_stacks.push_back(eoi_activation_stack(params, p->seq));
    for (const Prompt* p : harmless_probes) benign_stacks.push_back(eoi_activation_stack(params, p->seq));

    LayerSelection sel;
    for (int layer = 1; layer <= params.config.n_layers; ++layer) {
        LayerScore ls;
        ls.layer = layer;
        std::vector<Vec> ha, ba;
        for (const auto& s : harm_stacks) ha.push_back(s[layer]);
        for (const auto& s : benign_stacks) ba.push_back(s[layer]);
        Vec dir;
        try {
            dir = compute_refusal_direction(ha, ba);
        } catch (const degenerate_error&) {
            ls.degenerate = true;
            sel.scores.push_back(ls);
            continue;
        }
        const EffectivenessReport rep =
            direction_effectiveness(params, layer, dir, harmful_probes, harmless_probes, refusal_target);
        ls.bypass_rate = rep.bypass_rate;
        ls.induce_rate = rep.induce_rate;
        ls.score = rep.score();
        sel.scores.push_back(ls);
        if (sel.direction.layer < 0 || ls.score > sel.direction.effectiveness) {
            sel.direction.layer = layer;
            sel.direction.vector = dir;
            sel.direction.effectiveness = ls.score;
        }
    }
    if (sel.direction.layer < 0)
        throw degenerate_error("select_optimal_layer: all candidate directions degenerate");

    // recompute add_scale for the winning layer
    const EffectivenessReport rep = direction_effectiveness(
        params, sel.direction.layer, sel.direction.vector, harmful_probes, harmless_probes, refusal_target);
    sel.direction.add_scale = rep.add_scale;
    sel.direction.norm_convention = NormConvention::raw;
    return sel;
}

// ----------------------------- per-pair features -----------------------------

struct Connectivity {
    double dot_product = 0.0;
    double cosine = 0.0;
};

// <a_base, v> and its cosine; zero a_base makes the cosine undefined
inline Connectivity refusal_connectivity(const Vec& a_base, const Vec& v) {
    if (norm2(v) == 0.0) throw degenerate_error("refusal_connectivity: zero direction");
    Connectivity c;
    c.dot_product = dot(a_base, v);
    const double na = norm2(a_base);
    if (na == 0.0) throw degenerate_error("refusal_connectivity: zero activation (cosine undefined)");
    c.cosine = c.dot_product / (na * norm2(v));
    return c;
}

// <a_base, v> - <a_suffix, v>: positive values push away from refusal
inline double suffix_push(const Vec& a_base, const Vec& a_suffix, const Vec& v) {
    require(a_base.size() == a_suffix.size() && a_base.size() == v.size(),
            "suffix_push: dimension mismatch");
    if (norm2(v) == 0.0) throw degenerate_error("suffix_push: zero direction");
    return dot(a_base, v) - dot(a_suffix, v);
}

// || perp(a_suffix) - perp(a_base) ||_2 with perp(a) = a - p(a)
inline double orthogonal_shift(const Vec& a_base, const Vec& a_suffix, const Vec& v) {
    require(a_base.size() == a_suffix.size() && a_base.size() == v.size(),
            "orthogonal_shift: dimension mismatch");
    if (norm2(v) == 0.0) throw degenerate_error("orthogonal_shift: zero direction");
    const Vec perp_sfx = orthogonal_component(a_suffix, v);
    const Vec perp_base = orthogonal_component(a_base, v);
    return norm2(sub(perp_sfx, perp_base));
}

inline double semantic_similarity(const Vec& e_a, const Vec& e_b) {
    return cosine(e_a, e_b); // throws degenerate_error on zero norms
}

struct FeatureRow {
    int prompt_id = -1;
    int suffix_id = -1;
    double s_base_dot = 0.0;
    double s_base_cos = 0.0;
    double push = 0.0;
    double orth = 0.0;
    double sem_sim_model = 0.0;
    double sem_sim_indep = 0.0;
    int label = 0;
};

// A suffix as evaluated against prompts: token ids plus provenance.
struct SuffixEntry {
    int suffix_id = -1;
    int origin_prompt_id = -1;
    std::uint64_t seed = 0;
    std::vector<int> tokens;
};

// prompt with suffix spliced in ahead of EOI
inline TokenSequence splice_suffix(const TokenSequence& prompt, const std::vector<int>& suffix) {
    TokenSequence s;
    s.tokens.assign(prompt.tokens.begin(), prompt.tokens.begin() + prompt.eoi_index);
    s.tokens.insert(s.tokens.end(), suffix.begin(), suffix.end());
    s.tokens.push_back(kEoiToken);
    s.eoi_index = static_cast<int>(s.tokens.size()) - 1;
    return s;
}

// One row per (prompt, suffix) pair, ordered by (prompt_id, suffix_id).
// Verdicts are keyed [prompt_index][suffix_index] and must be complete.
inline std::vector<FeatureRow> build_feature_table(
    const Parameters& params, const RefusalDirection& direction,
    const std::vector<const Prompt*>& prompts, const std::vector<SuffixEntry>& suffixes,
    const std::vector<std::vector<int>>& verdicts) {
    direction.validate(params.config);
    require(!prompts.empty() && !suffixes.empty(), "build_feature_table: empty inputs");
    require(verdicts.size() == prompts.size(), "build_feature_table: verdicts missing prompt rows");
    for (const auto& row : verdicts)
        require(row.size() == suffixes.size(), "build_feature_table: verdicts missing suffix columns");

    const int layer = direction.layer;
    const Vec& v = direction.vector;

    std::vector<Vec> base_acts;
    std::vector<Vec> indep_embeds;
    for (const Prompt* p : prompts) {
        base_acts.push_back(eoi_activation(params, p->seq, layer));
        indep_embeds.push_back(token_frequency_embedding(p->seq, params.config.vocab_size));
    }
    // activations/embeddings of each suffix's origin prompt, for the
    // semantic-similarity features of the pair
    std::vector<Vec> origin_acts(suffixes.size());
    std::vector<Vec> origin_embeds(suffixes.size());
    for (std::size_t j = 0; j < suffixes.size(); ++j) {
        int origin_idx = -1;
        for (std::size_t i = 0; i < prompts.size(); ++i)
            if (prompts[i]->id == suffixes[j].origin_prompt_id) origin_idx = static_cast<int>(i);
        if (origin_idx < 0)
            throw validation_error("build_feature_table: suffix origin prompt " +
                                   std::to_string(suffixes[j].origin_prompt_id) +
                                   " not in prompt set");
        origin_acts[j] = base_acts[origin_idx];
        origin_embeds[j] = indep_embeds[origin_idx];
    }

    std::vector<FeatureRow> rows;
    rows.reserve(prompts.size() * suffixes.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        for (std::size_t j = 0; j < suffixes.size(); ++j) {
            const TokenSequence with_suffix = splice_suffix(prompts[i]->seq, suffixes[j].tokens);
            const Vec a_sfx = eoi_activation(params, with_suffix, layer);
            FeatureRow r;
            r.prompt_id = prompts[i]->id;
            r.suffix_id = suffixes[j].suffix_id;
            const Connectivity c = refusal_connectivity(base_acts[i], v);
            r.s_base_dot = c.dot_product;
            r.s_base_cos = c.cosine;
            r.push = suffix_push(base_acts[i], a_sfx, v);
            r.orth = orthogonal_shift(base_acts[i], a_sfx, v);
            r.sem_sim_model = semantic_similarity(base_acts[i], origin_acts[j]);
            r.sem_sim_indep = semantic_similarity(indep_embeds[i], origin_embeds[j]);
            r.label = verdicts[i][j] ? 1 : 0;
            rows.push_back(r);
        }
    }
    return rows;
}

} // namespace suffixlab
