#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "suffixlab/model.hpp"

using namespace suffixlab;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 5) {
    ModelConfig c;
    c.n_layers = 3;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 24;
    c.vocab_size = 12;
    c.max_seq_len = 16;
    c.seed = seed;
    return c;
}

TokenSequence prompt_seq(std::initializer_list<int> body) {
    TokenSequence s;
    s.tokens = {kBosToken};
    s.tokens.insert(s.tokens.end(), body.begin(), body.end());
    s.tokens.push_back(kEoiToken);
    s.eoi_index = static_cast<int>(s.tokens.size()) - 1;
    return s;
}

// independent mean-NLL oracle straight from the definition, in long double
double nll_oracle(const Mat& logits, int first_row, const std::vector<int>& target) {
    long double total = 0.0L;
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double* row = logits.row(first_row + k);
        long double z = 0.0L;
        for (std::size_t t = 0; t < logits.cols; ++t) z += expl(static_cast<long double>(row[t]));
        total += -(static_cast<long double>(row[target[k]]) - logl(z));
    }
    return static_cast<double>(total / static_cast<long double>(target.size()));
}

} // namespace

TEST_CASE("forward trace has the documented shapes") {
    const ModelConfig cfg = tiny_config();
    const Parameters p = init_parameters(cfg);
    const TokenSequence seq = prompt_seq({3, 4, 5});
    const ForwardTrace tr = forward_with_trace(p, seq);

    REQUIRE(tr.residual.size() == static_cast<std::size_t>(cfg.n_layers + 1));
    for (const auto& r : tr.residual) {
        CHECK(r.rows == static_cast<std::size_t>(seq.length()));
        CHECK(r.cols == static_cast<std::size_t>(cfg.d_model));
    }
    CHECK(tr.logits.rows == static_cast<std::size_t>(seq.length()));
    CHECK(tr.logits.cols == static_cast<std::size_t>(cfg.vocab_size));
}

TEST_CASE("forward is deterministic bit for bit") {
    const Parameters p = init_parameters(tiny_config());
    const TokenSequence seq = prompt_seq({2, 7, 9, 4});
    const ForwardTrace a = forward_with_trace(p, seq);
    const ForwardTrace b = forward_with_trace(p, seq);
    REQUIRE(a.logits == b.logits);
    for (std::size_t l = 0; l < a.residual.size(); ++l) REQUIRE(a.residual[l] == b.residual[l]);
}

TEST_CASE("zero parameters give identical all-zero logits rows") {
    const ModelConfig cfg = tiny_config();
    Parameters p(cfg);
    const TokenSequence seq = prompt_seq({3, 8});
    const ForwardTrace tr = forward_with_trace(p, seq);
    for (std::size_t i = 0; i < tr.logits.rows; ++i)
        for (std::size_t j = 0; j < tr.logits.cols; ++j) CHECK(tr.logits.at(i, j) == 0.0);
    // uniform distribution: loss is ln(V) per token
    const double loss = target_loss(p, seq, {2, 3});
    CHECK_THAT(loss, Catch::Matchers::WithinAbs(std::log(cfg.vocab_size), 1e-12));
}

TEST_CASE("softmax rows of logits are normalized") {
    const Parameters p = init_parameters(tiny_config(11));
    const TokenSequence seq = prompt_seq({5, 6, 7, 8, 9});
    const ForwardTrace tr = forward_with_trace(p, seq);
    for (std::size_t i = 0; i < tr.logits.rows; ++i) {
        const double* row = tr.logits.row(i);
        double mx = row[0];
        for (std::size_t j = 1; j < tr.logits.cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < tr.logits.cols; ++j) z += std::exp(row[j] - mx);
        double total = 0.0;
        for (std::size_t j = 0; j < tr.logits.cols; ++j) total += std::exp(row[j] - mx) / z;
        CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("nll helper handles certainty and uniformity") {
    Mat logits(2, 4);
    // row 0: probability ~1 on token 2
    logits.at(0, 2) = 200.0;
    const double certain = nll_from_logits(logits, 0, {2});
    CHECK_THAT(certain, Catch::Matchers::WithinAbs(0.0, 1e-12));
    // row 1 is uniform
    const double uniform = nll_from_logits(logits, 1, {3});
    CHECK_THAT(uniform, Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
}

TEST_CASE("target loss matches an independent log-softmax oracle") {
    const Parameters p = init_parameters(tiny_config(17));
    const TokenSequence seq = prompt_seq({4, 9, 2});
    const std::vector<int> target = {6, 3, 10};
    std::vector<int> full = seq.tokens;
    full.insert(full.end(), target.begin(), target.end());
    const ForwardTrace tr = forward_trace_tokens(p, full);
    const double expected = nll_oracle(tr.logits, seq.eoi_index, target);
    CHECK_THAT(target_loss(p, seq, target), Catch::Matchers::WithinRel(expected, 1e-12));
    CHECK(target_loss(p, seq, target) >= 0.0);
}

TEST_CASE("input validation raises typed errors") {
    const ModelConfig cfg = tiny_config();
    const Parameters p = init_parameters(cfg);
    TokenSequence bad = prompt_seq({3});
    bad.tokens[1] = cfg.vocab_size; // out of range
    CHECK_THROWS_AS(forward_with_trace(p, bad), validation_error);

    TokenSequence no_eoi;
    no_eoi.tokens = {kBosToken, 3, 4};
    no_eoi.eoi_index = 1;
    CHECK_THROWS_AS(forward_with_trace(p, no_eoi), validation_error);

    TokenSequence two_eoi = prompt_seq({3});
    two_eoi.tokens.push_back(kEoiToken);
    CHECK_THROWS_AS(forward_with_trace(p, two_eoi), validation_error);

    CHECK_THROWS_AS(target_loss(p, prompt_seq({3}), {}), validation_error);
}

TEST_CASE("re-injecting captured residuals reproduces downstream layers bit-identically") {
    const ModelConfig cfg = tiny_config(23);
    const Parameters p = init_parameters(cfg);
    const TokenSequence seq = prompt_seq({7, 2, 11, 5});
    const Mat x = onehot_rows(seq.tokens, cfg.vocab_size);
    const ForwardTrace full = forward_trace(p, x);

    for (int layer = 0; layer <= cfg.n_layers; ++layer) {
        TraceOptions opt;
        opt.start_layer = layer;
        opt.injected = &full.residual[layer];
        const ForwardTrace resumed = forward_trace(p, x, opt);
        for (int l = layer; l <= cfg.n_layers; ++l) REQUIRE(resumed.residual[l] == full.residual[l]);
        REQUIRE(resumed.logits == full.logits);
    }
}

TEST_CASE("ablation edit removes the direction at every capture point") {
    const ModelConfig cfg = tiny_config(31);
    const Parameters p = init_parameters(cfg);
    const TokenSequence seq = prompt_seq({3, 4});
    Vec dir(cfg.d_model, 0.0);
    dir[2] = 1.0;
    TraceOptions opt;
    opt.edit = ResidualEdit::ablation(dir);
    const ForwardTrace tr = forward_trace(p, onehot_rows(seq.tokens, cfg.vocab_size), opt);
    for (const auto& resid : tr.residual)
        for (std::size_t i = 0; i < resid.rows; ++i)
            CHECK(std::abs(dot(resid.row(i), dir.data(), cfg.d_model)) < 1e-12);
}

TEST_CASE("addition edit shifts its layer by exactly scale times the direction") {
    const ModelConfig cfg = tiny_config(37);
    const Parameters p = init_parameters(cfg);
    const TokenSequence seq = prompt_seq({9, 6});
    const Mat x = onehot_rows(seq.tokens, cfg.vocab_size);
    Vec dir(cfg.d_model, 0.0);
    dir[0] = 0.6;
    dir[3] = 0.8;
    const int layer = 1;
    const double scale = 2.5;
    TraceOptions opt;
    opt.edit = ResidualEdit::addition(dir, layer, scale);
    const ForwardTrace plain = forward_trace(p, x);
    const ForwardTrace edited = forward_trace(p, x, opt);
    for (std::size_t i = 0; i < plain.residual[layer].rows; ++i)
        for (int j = 0; j < cfg.d_model; ++j)
            CHECK_THAT(edited.residual[layer].at(i, j),
                       Catch::Matchers::WithinAbs(plain.residual[layer].at(i, j) + scale * dir[j], 1e-12));
}

TEST_CASE("greedy decode breaks ties toward the lowest token id") {
    const ModelConfig cfg = tiny_config();
    Parameters p(cfg); // zero weights: all logits equal
    const TokenSequence seq = prompt_seq({4});
    const std::vector<int> resp = greedy_decode(p, seq, 3);
    REQUIRE(resp == std::vector<int>{0, 0, 0});
}

TEST_CASE("decode length guard respects max_seq_len") {
    const ModelConfig cfg = tiny_config();
    const Parameters p = init_parameters(cfg);
    const TokenSequence seq = prompt_seq({2, 3, 4, 5, 6, 7});
    CHECK_THROWS_AS(greedy_decode(p, seq, cfg.max_seq_len), validation_error);
}
