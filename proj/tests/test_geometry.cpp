#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "suffixlab/corpus.hpp"
#include "suffixlab/geometry.hpp"

using namespace suffixlab;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 3) {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 32;
    c.n_heads = 2;
    c.d_ff = 32;
    c.vocab_size = 64;
    c.max_seq_len = 32;
    c.seed = seed;
    return c;
}

Vec random_vec(Rng& rng, int d) {
    Vec v(d);
    for (auto& x : v) x = rng.next_gauss();
    return v;
}

} // namespace

TEST_CASE("mean-difference direction oracle cases") {
    CHECK(compute_refusal_direction({{2, 0}, {4, 0}}, {{0, 0}, {2, 0}}) == Vec{2, 0});
    CHECK(compute_refusal_direction({{1, 5}}, {{4, 2}}) == Vec{-3, 3}); // n = m = 1
    CHECK_THROWS_AS(compute_refusal_direction({{1, 2}, {3, 4}}, {{1, 2}, {3, 4}}), degenerate_error);
    CHECK_THROWS_AS(compute_refusal_direction({}, {{1, 0}}), validation_error);
}

TEST_CASE("mean-difference direction is permutation invariant") {
    const std::vector<Vec> harm = {{1, 2}, {3, -1}, {0.5, 4}};
    const std::vector<Vec> benign = {{0, 1}, {2, 2}};
    const Vec a = compute_refusal_direction(harm, benign);
    const Vec b = compute_refusal_direction({harm[2], harm[0], harm[1]}, {benign[1], benign[0]});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK_THAT(a[i], Catch::Matchers::WithinAbs(b[i], 1e-15));
}

TEST_CASE("refusal connectivity oracle cases") {
    Connectivity c = refusal_connectivity({1, 0}, {1, 0});
    CHECK(c.dot_product == 1.0);
    CHECK(c.cosine == 1.0);

    c = refusal_connectivity({0, 3}, {1, 0});
    CHECK(c.dot_product == 0.0);
    CHECK(c.cosine == 0.0);

    c = refusal_connectivity({2, 3}, {1, 0});
    CHECK(c.dot_product == 2.0);
    CHECK_THAT(c.cosine, Catch::Matchers::WithinRel(2.0 / std::sqrt(13.0), 1e-14));

    CHECK_THROWS_AS(refusal_connectivity({1, 1}, {0, 0}), degenerate_error);
    CHECK_THROWS_AS(refusal_connectivity({0, 0}, {1, 0}), degenerate_error);
}

TEST_CASE("suffix push oracle cases and antisymmetry") {
    CHECK(suffix_push({5, 5}, {5, 5}, {1, 2}) == 0.0);
    CHECK(suffix_push({2, 0}, {1, 0}, {1, 0}) == 1.0);

    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const Vec a = random_vec(rng, 6), b = random_vec(rng, 6), v = random_vec(rng, 6);
        CHECK_THAT(suffix_push(a, b, v), Catch::Matchers::WithinAbs(-suffix_push(b, a, v), 1e-12));
    }
}

TEST_CASE("orthogonal shift oracle cases") {
    // hand projection: perp components (0,3) and (0,7)
    CHECK_THAT(orthogonal_shift({2, 3}, {5, 7}, {1, 0}), Catch::Matchers::WithinRel(4.0, 1e-14));
    // pure parallel movement
    CHECK_THAT(orthogonal_shift({1, 1}, {4, 1}, {1, 0}), Catch::Matchers::WithinAbs(0.0, 1e-12));

    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
        const Vec a = random_vec(rng, 5), b = random_vec(rng, 5), v = random_vec(rng, 5);
        const double base = orthogonal_shift(a, b, v);
        // adding c*v to both inputs changes nothing
        const double c = rng.next_gauss();
        Vec a2 = a, b2 = b;
        axpy(c, v.data(), a2.data(), 5);
        axpy(c, v.data(), b2.data(), 5);
        CHECK_THAT(orthogonal_shift(a2, b2, v), Catch::Matchers::WithinAbs(base, 1e-9));
        // rescaling v changes nothing; rescaling v scales suffix_push linearly
        CHECK_THAT(orthogonal_shift(a, b, scaled(v, 3.0)), Catch::Matchers::WithinRel(base, 1e-9));
        CHECK_THAT(suffix_push(a, b, scaled(v, 3.0)),
                   Catch::Matchers::WithinRel(3.0 * suffix_push(a, b, v), 1e-9));
    }
}

TEST_CASE("projection properties: idempotence and orthogonal decomposition") {
    Rng rng(14);
    for (int i = 0; i < 30; ++i) {
        const Vec a = random_vec(rng, 8), v = random_vec(rng, 8);
        const Vec p = project_onto(a, v);
        const Vec pp = project_onto(p, v);
        for (int j = 0; j < 8; ++j) CHECK_THAT(pp[j], Catch::Matchers::WithinAbs(p[j], 1e-12));
        const Vec perp = orthogonal_component(a, v);
        const Vec sum = add(p, perp);
        for (int j = 0; j < 8; ++j) CHECK_THAT(sum[j], Catch::Matchers::WithinAbs(a[j], 1e-12));
        CHECK_THAT(dot(p, perp), Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("semantic similarity oracle cases") {
    CHECK_THAT(semantic_similarity({2, 5}, {2, 5}), Catch::Matchers::WithinRel(1.0, 1e-14));
    CHECK_THAT(semantic_similarity({1, 0}, {0, 1}), Catch::Matchers::WithinAbs(0.0, 1e-14));
    CHECK_THAT(semantic_similarity({1, 1}, {1, 0}), Catch::Matchers::WithinRel(1.0 / std::sqrt(2.0), 1e-14));
    CHECK_THROWS_AS(semantic_similarity({0, 0}, {1, 0}), degenerate_error);
}

TEST_CASE("cosines stay in [-1, 1]") {
    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        const Vec a = random_vec(rng, 12), b = random_vec(rng, 12);
        const double c = semantic_similarity(a, b);
        CHECK(c >= -1.0 - 1e-12);
        CHECK(c <= 1.0 + 1e-12);
    }
}

TEST_CASE("splice inserts the suffix ahead of the end-of-instruction token") {
    TokenSequence prompt;
    prompt.tokens = {kBosToken, 10, 20, kEoiToken};
    prompt.eoi_index = 3;
    const TokenSequence s = splice_suffix(prompt, {50, 51});
    CHECK(s.tokens == std::vector<int>{kBosToken, 10, 20, 50, 51, kEoiToken});
    CHECK(s.eoi_index == 5);
}

TEST_CASE("effectiveness scoring is invariant to positive rescaling") {
    const ModelConfig cfg = tiny_config();
    const Parameters params = init_parameters(cfg);
    const ToyCorpus corpus = make_corpus(5, 20, 5);
    const auto harmful = corpus.harmful_ptrs();
    const auto harmless = corpus.harmless_ptrs();

    Rng rng(31);
    const Vec v = random_vec(rng, cfg.d_model);
    const auto a = direction_effectiveness(params, 1, v, harmful, harmless, corpus.refusal_target);
    const auto b = direction_effectiveness(params, 1, scaled(v, 4.2), harmful, harmless,
                                           corpus.refusal_target);
    CHECK(a.bypass_rate == b.bypass_rate);
    CHECK(a.induce_rate == b.induce_rate);
    CHECK_THAT(a.add_scale, Catch::Matchers::WithinRel(b.add_scale, 1e-9));
    CHECK_THROWS_AS(
        direction_effectiveness(params, 1, Vec(cfg.d_model, 0.0), harmful, harmless, corpus.refusal_target),
        degenerate_error);
}

TEST_CASE("a direction orthogonal to every residual value changes nothing") {
    ModelConfig cfg = tiny_config(8);
    const Parameters params = init_parameters(cfg);
    TokenSequence seq;
    seq.tokens = {kBosToken, 9, 17, kEoiToken};
    seq.eoi_index = 3;
    const ForwardTrace tr = forward_trace_tokens(params, seq.tokens);

    // orthonormal basis of the captured residual rows, then one projection
    std::vector<Vec> rows;
    for (const auto& r : tr.residual)
        for (std::size_t i = 0; i < r.rows; ++i) rows.emplace_back(r.row(i), r.row(i) + cfg.d_model);
    REQUIRE(rows.size() < static_cast<std::size_t>(cfg.d_model));
    std::vector<Vec> basis;
    for (const auto& r : rows) {
        Vec w = r;
        for (const auto& b : basis) axpy(-dot(w, b), b.data(), w.data(), cfg.d_model);
        for (const auto& b : basis) axpy(-dot(w, b), b.data(), w.data(), cfg.d_model);
        const double n = norm2(w);
        if (n > 1e-10) basis.push_back(scaled(w, 1.0 / n));
    }
    Rng rng(2);
    Vec u = random_vec(rng, cfg.d_model);
    for (const auto& b : basis) axpy(-dot(u, b), b.data(), u.data(), cfg.d_model);
    for (const auto& b : basis) axpy(-dot(u, b), b.data(), u.data(), cfg.d_model);
    REQUIRE(norm2(u) > 1e-8);
    for (const auto& r : rows) REQUIRE(std::abs(dot(u, r)) < 1e-9);

    TraceOptions opt;
    opt.edit = ResidualEdit::ablation(normalized(u));
    const ForwardTrace edited = forward_trace_tokens(params, seq.tokens, opt);
    for (std::size_t i = 0; i < tr.logits.data.size(); ++i)
        CHECK_THAT(edited.logits.data[i], Catch::Matchers::WithinAbs(tr.logits.data[i], 1e-9));
}

TEST_CASE("layer selection covers every layer once and breaks ties low") {
    const ModelConfig cfg = tiny_config(12);
    const Parameters params = init_parameters(cfg); // untrained: all scores identical (0)
    const ToyCorpus corpus = make_corpus(6, 20, 5);
    const LayerSelection sel = select_optimal_layer(params, corpus.harmful_ptrs(),
                                                    corpus.harmless_ptrs(), corpus.refusal_target);
    REQUIRE(sel.scores.size() == static_cast<std::size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) CHECK(sel.scores[l].layer == l + 1);
    bool all_equal = true;
    for (const auto& s : sel.scores) all_equal &= (s.score == sel.scores[0].score);
    if (all_equal) CHECK(sel.direction.layer == 1); // tie -> lowest layer
}

TEST_CASE("feature table has one consistent row per pair") {
    const ModelConfig cfg = tiny_config(21);
    const Parameters params = init_parameters(cfg);
    const ToyCorpus corpus = make_corpus(17, 20, 5);

    std::vector<const Prompt*> prompts = {&corpus.harmful[0], &corpus.harmful[1], &corpus.harmful[2]};
    std::vector<SuffixEntry> suffixes;
    for (int j = 0; j < 2; ++j) {
        SuffixEntry s;
        s.suffix_id = j;
        s.origin_prompt_id = prompts[j]->id;
        s.seed = j;
        s.tokens = {kFreeTokenBase + j, kFreeTokenBase + 5};
        suffixes.push_back(s);
    }

    RefusalDirection dir;
    dir.layer = 1;
    Rng rng(3);
    dir.vector = random_vec(rng, cfg.d_model);
    dir.effectiveness = 0.0;

    std::vector<std::vector<int>> verdicts = {{1, 0}, {0, 0}, {1, 1}};
    const auto rows = build_feature_table(params, dir, prompts, suffixes, verdicts);
    REQUIRE(rows.size() == 6); // P x S

    // rows ordered by (prompt, suffix) and consistent with the single-pair ops
    int idx = 0;
    for (int i = 0; i < 3; ++i) {
        const Vec a_base = eoi_activation(params, prompts[i]->seq, dir.layer);
        for (int j = 0; j < 2; ++j, ++idx) {
            const FeatureRow& r = rows[idx];
            CHECK(r.prompt_id == prompts[i]->id);
            CHECK(r.suffix_id == suffixes[j].suffix_id);
            CHECK(r.label == verdicts[i][j]);
            const Vec a_sfx =
                eoi_activation(params, splice_suffix(prompts[i]->seq, suffixes[j].tokens), dir.layer);
            CHECK_THAT(r.push, Catch::Matchers::WithinAbs(suffix_push(a_base, a_sfx, dir.vector), 1e-12));
            CHECK_THAT(r.orth,
                       Catch::Matchers::WithinAbs(orthogonal_shift(a_base, a_sfx, dir.vector), 1e-12));
            const Connectivity c = refusal_connectivity(a_base, dir.vector);
            CHECK_THAT(r.s_base_dot, Catch::Matchers::WithinAbs(c.dot_product, 1e-12));
            CHECK_THAT(r.s_base_cos, Catch::Matchers::WithinAbs(c.cosine, 1e-12));
            CHECK(r.orth >= 0.0);
        }
    }

    // incomplete verdicts are rejected
    std::vector<std::vector<int>> missing = {{1, 0}, {0, 0}};
    CHECK_THROWS_AS(build_feature_table(params, dir, prompts, suffixes, missing), validation_error);
}
