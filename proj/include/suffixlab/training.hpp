#pragma once

// Deterministic full-batch training of the toy model: every harmful prompt
// maps to the fixed refusal continuation, every harmless prompt to its
// compliance continuation. A slice of prompts also appears with random
// gibberish suffixes so that a suffix by itself means nothing; harmful
// categories get different numbers of such hardening copies, which spreads
// the prompts over a range of attack difficulty.

#include <string>
#include <vector>

#include "suffixlab/common.hpp"
#include "suffixlab/corpus.hpp"
#include "suffixlab/model.hpp"

namespace suffixlab {

struct TrainConfig {
    enum class Optimizer { gd, adam };

    int max_steps = 600;
    int eval_every = 25;
    double learning_rate = 0.015;
    double weight_decay = 0.0;
    double target_accuracy = 0.95; // required on holdout at the end
    int holdout_stride = 4;
    int robust_copies_mod = 4;     // harmful category c gets (c % mod) suffixed copies
    int harmless_robust_copies = 1;
    int robust_suffix_len = 4;
    // extra grammar draws beyond the corpus prompts; without them the
    // compliance copy task memorizes instead of generalizing
    int synth_compliance = 120;
    int synth_refusal = 40;
    // full-batch Adam; plain gradient descent needs far more steps here
    Optimizer optimizer = Optimizer::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainExample {
    std::vector<int> tokens;  // prompt (+ optional suffix) ending at EOI
    int first_pred_row = 0;   // = eoi index
    std::vector<int> target;
};

namespace detail {

inline TrainExample example_for(const Prompt& p, const std::vector<int>& target) {
    TrainExample ex;
    ex.tokens = p.seq.tokens;
    ex.first_pred_row = p.seq.eoi_index;
    ex.target = target;
    return ex;
}

inline TrainExample suffixed_example(const Prompt& p, const std::vector<int>& target,
                                     int suffix_len, int vocab_size, Rng& rng) {
    TrainExample ex;
    ex.tokens.assign(p.seq.tokens.begin(), p.seq.tokens.end() - 1); // drop EOI
    const int n_free = vocab_size - kFreeTokenBase;
    for (int i = 0; i < suffix_len; ++i)
        ex.tokens.push_back(kFreeTokenBase + static_cast<int>(rng.next_below(n_free)));
    ex.tokens.push_back(kEoiToken);
    ex.first_pred_row = static_cast<int>(ex.tokens.size()) - 1;
    ex.target = target;
    return ex;
}

} // namespace detail

inline std::vector<TrainExample> build_training_set(const ToyCorpus& corpus, const CorpusSplit& split,
                                                    const ModelConfig& cfg, const TrainConfig& tc,
                                                    std::uint64_t seed) {
    std::vector<TrainExample> out;
    Rng rng(mix_seed(seed, 77));
    for (const Prompt* p : split.train_harmful) {
        out.push_back(detail::example_for(*p, corpus.refusal_target));
        const int copies = tc.robust_copies_mod > 0 ? p->category % tc.robust_copies_mod : 0;
        for (int r = 0; r < copies; ++r)
            out.push_back(detail::suffixed_example(*p, corpus.refusal_target, tc.robust_suffix_len,
                                                   cfg.vocab_size, rng));
    }
    for (const Prompt* p : split.train_harmless) {
        out.push_back(detail::example_for(*p, p->compliance_target));
        for (int r = 0; r < tc.harmless_robust_copies; ++r)
            out.push_back(detail::suffixed_example(*p, p->compliance_target, tc.robust_suffix_len,
                                                   cfg.vocab_size, rng));
    }

    // synthetic grammar draws; holdout prompts must stay unseen
    std::vector<std::vector<int>> holdout_tokens;
    for (const Prompt* p : split.holdout_harmful) holdout_tokens.push_back(p->seq.tokens);
    for (const Prompt* p : split.holdout_harmless) holdout_tokens.push_back(p->seq.tokens);
    std::sort(holdout_tokens.begin(), holdout_tokens.end());
    auto held_out = [&](const std::vector<int>& toks) {
        return std::binary_search(holdout_tokens.begin(), holdout_tokens.end(), toks);
    };
    auto draw_prompt = [&](bool harmful) {
        for (;;) {
            const int verb = harmful ? kVerbBase + static_cast<int>(rng.next_below(kVerbClassSize))
                                     : kVerbBase + static_cast<int>(rng.next_below(kVerbCount));
            const int object = harmful
                                   ? kObjectBase + static_cast<int>(rng.next_below(corpus.n_categories))
                                   : kObjectBase + static_cast<int>(rng.next_below(kObjectCount));
            if (combo_is_harmful(verb, object, corpus.n_categories) != harmful) continue;
            const int mod_opt = static_cast<int>(rng.next_below(kModifierCount + 1));
            detail::Combo c{verb, object, mod_opt == 0 ? -1 : kModifierBase + mod_opt - 1};
            Prompt p = detail::make_prompt(-1, c, harmful, -1);
            if (!held_out(p.seq.tokens)) return p;
        }
    };
    for (int i = 0; i < tc.synth_compliance; ++i) {
        const Prompt p = draw_prompt(false);
        out.push_back(detail::example_for(p, p.compliance_target));
    }
    for (int i = 0; i < tc.synth_refusal; ++i) {
        const Prompt p = draw_prompt(true);
        out.push_back(detail::example_for(p, corpus.refusal_target));
    }
    return out;
}

// fraction of prompts whose greedy continuation equals the full target
inline double continuation_accuracy(const Parameters& params, const std::vector<const Prompt*>& prompts,
                                    const ToyCorpus& corpus, bool expect_refusal) {
    if (prompts.empty()) return 1.0;
    int hits = 0;
    for (const Prompt* p : prompts) {
        const std::vector<int>& target = expect_refusal ? corpus.refusal_target : p->compliance_target;
        const std::vector<int> got = greedy_decode(params, p->seq, static_cast<int>(target.size()));
        hits += (got == target);
    }
    return static_cast<double>(hits) / static_cast<double>(prompts.size());
}

struct TrainReport {
    int steps_run = 0;
    double final_loss = 0.0;
    double holdout_harmful_accuracy = 0.0;
    double holdout_harmless_accuracy = 0.0;
};

inline Parameters train_toy_model(const ToyCorpus& corpus, ModelConfig cfg, std::uint64_t seed,
                                  const TrainConfig& tc = {}, TrainReport* report = nullptr) {
    cfg.seed = seed;
    cfg.validate();
    corpus.validate(cfg);

    const CorpusSplit split = split_corpus(corpus, tc.holdout_stride);
    const std::vector<TrainExample> examples = build_training_set(corpus, split, cfg, tc, seed);
    require(!examples.empty(), "train_toy_model: empty training set");
    for (const auto& ex : examples)
        require(static_cast<int>(ex.tokens.size() + ex.target.size()) <= cfg.max_seq_len,
                "train_toy_model: example exceeds max_seq_len");

    Parameters params = init_parameters(cfg);
    Parameters grads(cfg);
    Parameters adam_m(cfg), adam_v(cfg);
    const double inv_n = 1.0 / static_cast<double>(examples.size());

    // decoupled weight decay on everything except the norm gains
    std::vector<unsigned char> decay_mask(params.layout.total, 1);
    auto no_decay = [&](std::size_t off, int n) {
        for (int i = 0; i < n; ++i) decay_mask[off + i] = 0;
    };
    for (const auto& b : params.layout.blocks) {
        no_decay(b.attn_gain, cfg.d_model);
        no_decay(b.mlp_gain, cfg.d_model);
    }
    no_decay(params.layout.final_gain, cfg.d_model);

    double loss = 0.0;
    int steps = 0;
    for (int step = 0; step < tc.max_steps; ++step) {
        grads.zero();
        loss = 0.0;
        for (const auto& ex : examples) {
            std::vector<int> full = ex.tokens;
            full.insert(full.end(), ex.target.begin(), ex.target.end());
            ForwardCache cache = forward_cached(params, onehot_rows(full, cfg.vocab_size));
            loss += nll_from_logits(cache.logits, ex.first_pred_row, ex.target);
            Mat dlogits = dlogits_for_nll(cache.logits, ex.first_pred_row, ex.target);
            backward(params, cache, dlogits, {}, &grads, nullptr);
        }
        loss *= inv_n;

        if (tc.weight_decay > 0.0) {
            const double keep = 1.0 - tc.learning_rate * tc.weight_decay;
            for (std::size_t i = 0; i < params.data.size(); ++i)
                if (decay_mask[i]) params.data[i] *= keep;
        }
        if (tc.optimizer == TrainConfig::Optimizer::gd) {
            for (std::size_t i = 0; i < params.data.size(); ++i)
                params.data[i] -= tc.learning_rate * grads.data[i] * inv_n;
        } else {
            const double b1 = tc.adam_beta1, b2 = tc.adam_beta2;
            const double bc1 = 1.0 - std::pow(b1, step + 1);
            const double bc2 = 1.0 - std::pow(b2, step + 1);
            for (std::size_t i = 0; i < params.data.size(); ++i) {
                const double g = grads.data[i] * inv_n;
                adam_m.data[i] = b1 * adam_m.data[i] + (1.0 - b1) * g;
                adam_v.data[i] = b2 * adam_v.data[i] + (1.0 - b2) * g * g;
                params.data[i] -= tc.learning_rate * (adam_m.data[i] / bc1) /
                                  (std::sqrt(adam_v.data[i] / bc2) + tc.adam_eps);
            }
        }
        steps = step + 1;

        if (steps % tc.eval_every == 0) {
            const double acc_h = continuation_accuracy(params, split.holdout_harmful, corpus, true);
            const double acc_b = continuation_accuracy(params, split.holdout_harmless, corpus, false);
            if (acc_h >= 1.0 && acc_b >= 1.0) break; // deterministic early stop
        }
    }

    const double acc_h = continuation_accuracy(params, split.holdout_harmful, corpus, true);
    const double acc_b = continuation_accuracy(params, split.holdout_harmless, corpus, false);
    if (report) {
        report->steps_run = steps;
        report->final_loss = loss;
        report->holdout_harmful_accuracy = acc_h;
        report->holdout_harmless_accuracy = acc_b;
    }
    if (acc_h < tc.target_accuracy || acc_b < tc.target_accuracy)
        throw training_error("train_toy_model: accuracy targets not reached (harmful " + fmt_fixed(acc_h, 3) +
                                 ", harmless " + fmt_fixed(acc_b, 3) + ")",
                             acc_h, acc_b);
    return params;
}

} // namespace suffixlab
