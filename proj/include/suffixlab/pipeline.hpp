#pragma once

// Command implementations behind the CLI. Each run function validates its
// inputs, produces its artifacts deterministically from the recorded seeds,
// and writes a manifest (<main output>.manifest.json) sufficient to replay
// the command bit-identically.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "suffixlab/common.hpp"
#include "suffixlab/corpus.hpp"
#include "suffixlab/datasets.hpp"
#include "suffixlab/gcg.hpp"
#include "suffixlab/geometry.hpp"
#include "suffixlab/judge.hpp"
#include "suffixlab/model.hpp"
#include "suffixlab/report.hpp"
#include "suffixlab/serialize.hpp"
#include "suffixlab/stats.hpp"
#include "suffixlab/training.hpp"

namespace suffixlab {

// relative outputs land under $SUFFIXLAB_OUT_DIR when it is set
inline std::string resolve_out(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* base = std::getenv("SUFFIXLAB_OUT_DIR");
    if (!base || !*base) return path;
    return (fs::path(base) / path).string();
}

inline std::string manifest_path_for(const std::string& main_output) {
    return main_output + ".manifest.json";
}

namespace detail {

inline std::string redirect(const std::string& path, const std::string& out_dir) {
    if (out_dir.empty()) return path;
    namespace fs = std::filesystem;
    return (fs::path(out_dir) / fs::path(path).filename()).string();
}

} // namespace detail

// ----------------------------- corpus -----------------------------

struct CorpusOptions {
    std::string out = "corpus.json";
    std::uint64_t seed = 1;
    int n_per_class = 40;
    int n_categories = 10;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CorpusOptions, out, seed, n_per_class, n_categories)

inline RunManifest run_corpus(CorpusOptions opt) {
    opt.out = resolve_out(opt.out);
    const ToyCorpus corpus = make_corpus(opt.seed, opt.n_per_class, opt.n_categories);
    corpus.validate(ModelConfig{});
    save_corpus(corpus, opt.out);
    RunManifest m;
    m.command = "corpus";
    m.config = opt;
    m.outputs = {{opt.out, ""}};
    write_manifest(m, manifest_path_for(opt.out));
    return m;
}

// ----------------------------- train -----------------------------

struct TrainOptions {
    std::string corpus = "corpus.json";
    std::string out = "model.bin";
    std::uint64_t seed = 7;
    int n_layers = 4;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 128;
    int vocab_size = 64;
    int max_seq_len = 48;
    int max_steps = 600;
    double learning_rate = 0.015;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainOptions, corpus, out, seed, n_layers, d_model, n_heads, d_ff,
                                   vocab_size, max_seq_len, max_steps, learning_rate)

inline RunManifest run_train(TrainOptions opt) {
    opt.out = resolve_out(opt.out);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    ModelConfig cfg;
    cfg.n_layers = opt.n_layers;
    cfg.d_model = opt.d_model;
    cfg.n_heads = opt.n_heads;
    cfg.d_ff = opt.d_ff;
    cfg.vocab_size = opt.vocab_size;
    cfg.max_seq_len = opt.max_seq_len;
    TrainConfig tc;
    tc.max_steps = opt.max_steps;
    tc.learning_rate = opt.learning_rate;
    const Parameters params = train_toy_model(corpus, cfg, opt.seed, tc);
    save_model(params, opt.out);
    RunManifest m;
    m.command = "train";
    m.config = opt;
    m.inputs = {{opt.corpus, ""}};
    m.outputs = {{opt.out, ""}};
    write_manifest(m, manifest_path_for(opt.out));
    return m;
}

// ----------------------------- refusal direction -----------------------------

struct RefusalOptions {
    std::string model = "model.bin";
    std::string corpus = "corpus.json";
    std::string out = "direction.json";
    std::string scores_out = "layer_scores.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RefusalOptions, model, corpus, out, scores_out)

inline RunManifest run_refusal(RefusalOptions opt) {
    opt.out = resolve_out(opt.out);
    opt.scores_out = resolve_out(opt.scores_out);
    const Parameters params = load_model(opt.model);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    corpus.validate(params.config);
    const LayerSelection sel = select_optimal_layer(params, corpus.harmful_ptrs(),
                                                    corpus.harmless_ptrs(), corpus.refusal_target);
    save_direction(sel.direction, sel.scores, opt.out);
    CsvTable t;
    t.schema = "suffixlab.layer_scores.v1";
    t.header = {"layer", "bypass_rate", "induce_rate", "effectiveness", "degenerate"};
    for (const auto& s : sel.scores)
        t.rows.push_back({std::to_string(s.layer), fmt_full(s.bypass_rate), fmt_full(s.induce_rate),
                          fmt_full(s.score), s.degenerate ? "1" : "0"});
    atomic_write(opt.scores_out, t.dump());
    RunManifest m;
    m.command = "refusal";
    m.config = opt;
    m.inputs = {{opt.model, ""}, {opt.corpus, ""}};
    m.outputs = {{opt.out, ""}, {opt.scores_out, ""}};
    write_manifest(m, manifest_path_for(opt.out));
    return m;
}

// ----------------------------- attack -----------------------------

struct AttackOptions {
    std::string model = "model.bin";
    std::string direction = "direction.json";
    std::string corpus = "corpus.json";
    std::string out = "attacks.jsonl";
    std::string scale = "desk"; // desk: 2 prompts/category; full: every harmful prompt
    int n_seeds = 10;
    int suffix_len = 4;
    int n_iters = 24;
    int top_k = 8;
    int batch_size = 24;
    std::uint64_t seed = 11;
    double lambda = 0.0;
    std::string reg = "none"; // none | push | orth
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AttackOptions, model, direction, corpus, out, scale, n_seeds,
                                   suffix_len, n_iters, top_k, batch_size, seed, lambda, reg)

inline RegKind reg_kind_from_flag(const std::string& flag) {
    if (flag == "none") return RegKind::none;
    if (flag == "push") return RegKind::suffix_push;
    if (flag == "orth") return RegKind::orthogonal_shift;
    throw validation_error("unknown regularizer '" + flag + "' (expected none|push|orth)");
}

// 2 prompts per category at desk scale, every harmful prompt at full scale
inline std::vector<const Prompt*> select_attack_prompts(const ToyCorpus& corpus,
                                                        const std::string& scale) {
    std::vector<const Prompt*> out;
    if (scale == "full") {
        for (const auto& p : corpus.harmful) out.push_back(&p);
        return out;
    }
    require(scale == "desk", "scale must be desk or full");
    std::map<int, int> taken;
    for (const auto& p : corpus.harmful)
        if (taken[p.category] < 2) {
            out.push_back(&p);
            taken[p.category]++;
        }
    return out;
}

inline RunManifest run_attack(AttackOptions opt) {
    opt.out = resolve_out(opt.out);
    const Parameters params = load_model(opt.model);
    const RefusalDirection direction = load_direction(opt.direction);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    corpus.validate(params.config);

    const std::vector<const Prompt*> prompts = select_attack_prompts(corpus, opt.scale);
    GcgConfig cfg;
    cfg.suffix_len = opt.suffix_len;
    cfg.n_iters = opt.n_iters;
    cfg.top_k = opt.top_k;
    cfg.batch_size = opt.batch_size;
    cfg.regularizer.kind = reg_kind_from_flag(opt.reg);
    cfg.regularizer.lambda = opt.lambda;

    std::vector<AttackRunRecord> runs;
    for (const Prompt* p : prompts) {
        for (int s = 0; s < opt.n_seeds; ++s) {
            cfg.seed = mix_seed(opt.seed, static_cast<std::uint64_t>(p->id), s);
            AttackRunRecord rec;
            rec.result = gcg_attack(params, direction, *p, p->compliance_target, cfg);
            rec.result.seed = s; // record the run index, not the mixed stream seed
            rec.lambda = opt.lambda;
            rec.kind = cfg.regularizer.kind;
            runs.push_back(rec);
        }
    }
    atomic_write(opt.out, attack_runs_to_jsonl(runs));
    RunManifest m;
    m.command = "attack";
    m.config = opt;
    m.inputs = {{opt.model, ""}, {opt.direction, ""}, {opt.corpus, ""}};
    m.outputs = {{opt.out, ""}};
    write_manifest(m, manifest_path_for(opt.out));
    return m;
}

// ----------------------------- transfer -----------------------------

struct TransferOptions {
    std::string model = "model.bin";
    std::string target_model;        // empty: intra-model
    std::string suffixes = "attacks.jsonl";
    std::string corpus = "corpus.json";
    std::string scale = "desk";
    std::string out_csv = "transfer.csv";
    std::string out_svg = "transfer.svg";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TransferOptions, model, target_model, suffixes, corpus, scale,
                                   out_csv, out_svg)

inline RunManifest run_transfer(TransferOptions opt) {
    opt.out_csv = resolve_out(opt.out_csv);
    opt.out_svg = resolve_out(opt.out_svg);
    const Parameters params = load_model(opt.model);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    corpus.validate(params.config);
    const std::vector<AttackRunRecord> runs = attack_runs_from_jsonl(read_file(opt.suffixes));
    const std::vector<SuffixEntry> pool = suffix_pool_from_runs(runs);
    const std::vector<const Prompt*> prompts = select_attack_prompts(corpus, opt.scale);

    TransferMatrix matrix;
    if (opt.target_model.empty()) {
        matrix = intra_transfer_matrix(params, prompts, pool, corpus.refusal_target,
                                       std::filesystem::path(opt.model).filename().string());
    } else {
        const Parameters target = load_model(opt.target_model);
        corpus.validate(target.config);
        matrix = inter_transfer_matrix(pool, target, prompts, corpus.refusal_target,
                                       std::filesystem::path(opt.model).filename().string(),
                                       std::filesystem::path(opt.target_model).filename().string());
    }
    atomic_write(opt.out_csv, transfer_to_csv(matrix));
    atomic_write(opt.out_svg, transfer_to_svg(matrix, matrix.source_model + " -> " + matrix.target_model));

    RunManifest m;
    m.command = "transfer";
    m.config = opt;
    m.inputs = {{opt.model, ""}, {opt.suffixes, ""}, {opt.corpus, ""}};
    if (!opt.target_model.empty()) m.inputs.push_back({opt.target_model, ""});
    m.outputs = {{opt.out_csv, ""}, {opt.out_svg, ""}};
    write_manifest(m, manifest_path_for(opt.out_csv));
    return m;
}

// ----------------------------- features -----------------------------

struct FeaturesOptions {
    std::string model = "model.bin";
    std::string direction = "direction.json";
    std::string corpus = "corpus.json";
    std::string suffixes = "attacks.jsonl";
    std::string transfer = "transfer.csv";
    std::string out = "features.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FeaturesOptions, model, direction, corpus, suffixes, transfer, out)

inline RunManifest run_features(FeaturesOptions opt) {
    opt.out = resolve_out(opt.out);
    const Parameters params = load_model(opt.model);
    const RefusalDirection direction = load_direction(opt.direction);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    corpus.validate(params.config);
    const TransferMatrix matrix = transfer_from_csv(read_file(opt.transfer));
    const std::vector<SuffixEntry> pool =
        suffix_pool_from_runs(attack_runs_from_jsonl(read_file(opt.suffixes)));

    // the matrix columns must be this pool
    require(pool.size() == matrix.suffixes.size(), "run_features: suffix pool / matrix mismatch");
    for (std::size_t j = 0; j < pool.size(); ++j)
        require(pool[j].suffix_id == matrix.suffixes[j].suffix_id &&
                    pool[j].origin_prompt_id == matrix.suffixes[j].origin_prompt_id &&
                    pool[j].seed == matrix.suffixes[j].seed,
                "run_features: suffix pool does not match the transfer matrix columns");

    std::vector<const Prompt*> prompts;
    for (int id : matrix.prompt_ids) prompts.push_back(&corpus.by_id(id));

    const std::vector<FeatureRow> rows =
        build_feature_table(params, direction, prompts, pool, matrix.cells);
    atomic_write(opt.out, features_to_csv(rows));

    RunManifest m;
    m.command = "features";
    m.config = opt;
    m.inputs = {{opt.model, ""}, {opt.direction, ""}, {opt.corpus, ""}, {opt.suffixes, ""}, {opt.transfer, ""}};
    m.outputs = {{opt.out, ""}};
    write_manifest(m, manifest_path_for(opt.out));
    return m;
}

// ----------------------------- regress -----------------------------

struct RegressOptions {
    std::string spec = "joint"; // single | joint | joint-semantic | pairwise-frac | pairwise-ord
    std::string features = "features.csv";
    std::string transfer;       // pairwise modes
    std::string model;          // pairwise modes, embedding=model
    std::string direction;      // pairwise modes, embedding=model
    std::string corpus;         // pairwise modes
    std::string embedding = "model"; // model | indep
    std::string out_csv = "fit.csv";
    std::string out_table = "fit.txt";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RegressOptions, spec, features, transfer, model, direction, corpus,
                                   embedding, out_csv, out_table)

namespace detail {

inline std::string fit_title(ModelKind kind) {
    switch (kind) {
        case ModelKind::ols: return "Linear regression coefficients (standardized)";
        case ModelKind::logistic: return "Logistic regression coefficients (standardized)";
        case ModelKind::ordinal_logistic: return "Ordinal logistic regression coefficients (standardized)";
    }
    return "";
}

} // namespace detail

inline RunManifest run_regress(RegressOptions opt) {
    opt.out_csv = resolve_out(opt.out_csv);
    opt.out_table = resolve_out(opt.out_table);

    RunManifest m;
    m.command = "regress";
    m.config = opt;
    m.outputs = {{opt.out_csv, ""}, {opt.out_table, ""}};

    if (opt.spec == "single" || opt.spec == "joint" || opt.spec == "joint-semantic") {
        const std::vector<FeatureRow> rows = features_from_csv(read_file(opt.features));
        m.inputs = {{opt.features, ""}};
        if (opt.spec == "single") {
            std::string table;
            CsvTable combined;
            combined.schema = "suffixlab.fit.v1 spec=single";
            combined.header = {"design", "term", "coefficient", "std_error", "statistic",
                               "p_value", "stars", "odds_ratio"};
            for (const Dataset& ds : single_feature_datasets(rows)) {
                const FitResult fit = fit_logistic(ds.design, ds.y);
                table += format_fit_table(fit, detail::fit_title(fit.kind) + " [" +
                                                   display_term(ds.name) + "]") + "\n";
                for (std::size_t j = 0; j < fit.names.size(); ++j)
                    combined.rows.push_back({ds.name, fit.names[j], fmt_full(fit.coefficients[j]),
                                             fmt_full(fit.std_errors[j]), fmt_full(fit.z_or_t[j]),
                                             fmt_full(fit.p_values[j]), fit.stars[j],
                                             fmt_full(fit.odds_ratios[j])});
                combined.rows.push_back({ds.name, "_n_obs", std::to_string(fit.n_obs), "", "", "", "", ""});
                combined.rows.push_back({ds.name, "_pseudo_r2", fmt_full(fit.pseudo_r2), "", "", "", "", ""});
            }
            atomic_write(opt.out_csv, combined.dump());
            atomic_write(opt.out_table, table);
        } else {
            const Dataset ds = opt.spec == "joint" ? joint_dataset(rows) : joint_semantic_dataset(rows);
            const FitResult fit = fit_logistic(ds.design, ds.y);
            atomic_write(opt.out_csv, fit_to_csv(fit));
            atomic_write(opt.out_table, format_fit_table(fit, detail::fit_title(fit.kind)));
        }
    } else if (opt.spec == "pairwise-frac" || opt.spec == "pairwise-ord") {
        const TransferMatrix matrix = transfer_from_csv(read_file(opt.transfer));
        const ToyCorpus corpus = load_corpus(opt.corpus);
        m.inputs = {{opt.transfer, ""}, {opt.corpus, ""}};

        std::vector<std::pair<int, Vec>> embeddings;
        if (opt.embedding == "model") {
            const Parameters params = load_model(opt.model);
            const RefusalDirection direction = load_direction(opt.direction);
            m.inputs.push_back({opt.model, ""});
            m.inputs.push_back({opt.direction, ""});
            for (int id : matrix.prompt_ids)
                embeddings.push_back({id, eoi_activation(params, corpus.by_id(id).seq, direction.layer)});
        } else {
            require(opt.embedding == "indep", "embedding must be model or indep");
            for (int id : matrix.prompt_ids)
                embeddings.push_back({id, token_frequency_embedding(corpus.by_id(id).seq, kFreeTokenBase)});
        }

        const PairwiseMode mode =
            opt.spec == "pairwise-frac" ? PairwiseMode::fraction : PairwiseMode::ordinal;
        const Dataset ds = pairwise_prompt_dataset(matrix, embeddings, mode);
        const FitResult fit = mode == PairwiseMode::fraction ? fit_ols(ds.design, ds.y)
                                                             : fit_ordinal_logistic(ds.design, ds.y);
        atomic_write(opt.out_csv, fit_to_csv(fit));
        atomic_write(opt.out_table, format_fit_table(fit, detail::fit_title(fit.kind)));
    } else {
        throw validation_error("unknown regress spec '" + opt.spec + "'");
    }

    write_manifest(m, manifest_path_for(opt.out_csv));
    return m;
}

// ----------------------------- intervene -----------------------------

struct InterveneOptions {
    std::string mode = "rephrase"; // rephrase | gcg-sweep
    std::string model = "model.bin";
    std::string direction = "direction.json";
    std::string corpus = "corpus.json";
    std::string suffixes = "attacks.jsonl"; // rephrase mode
    std::string scale = "desk";
    std::string out = "intervention.csv";
    std::string out_table = "intervention.txt";
    int n_rephrases = 10;
    std::uint64_t seed = 21;
    // gcg-sweep mode
    std::string reg = "push";
    std::vector<double> lambdas = {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.5};
    int n_seeds = 10;
    int suffix_len = 4;
    int n_iters = 24;
    int top_k = 8;
    int batch_size = 24;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(InterveneOptions, mode, model, direction, corpus, suffixes, scale,
                                   out, out_table, n_rephrases, seed, reg, lambdas, n_seeds, suffix_len,
                                   n_iters, top_k, batch_size)

inline RunManifest run_intervene(InterveneOptions opt) {
    opt.out = resolve_out(opt.out);
    opt.out_table = resolve_out(opt.out_table);
    const Parameters params = load_model(opt.model);
    const RefusalDirection direction = load_direction(opt.direction);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    corpus.validate(params.config);

    RunManifest m;
    m.command = "intervene";
    m.config = opt;
    m.inputs = {{opt.model, ""}, {opt.direction, ""}, {opt.corpus, ""}};
    m.outputs = {{opt.out, ""}, {opt.out_table, ""}};

    const std::vector<const Prompt*> prompts = select_attack_prompts(corpus, opt.scale);

    if (opt.mode == "rephrase") {
        const std::vector<SuffixEntry> pool =
            suffix_pool_from_runs(attack_runs_from_jsonl(read_file(opt.suffixes)));
        m.inputs.push_back({opt.suffixes, ""});
        const RephraseOutcome outcome = rephrase_intervention(params, direction, prompts, pool,
                                                              opt.n_rephrases, opt.seed,
                                                              corpus.refusal_target);
        CsvTable t;
        t.schema = "suffixlab.rephrase.v1";
        t.header = {"prompt_id", "rephrase_id", "delta_dot", "delta_asr"};
        for (const auto& r : outcome.records)
            t.rows.push_back({std::to_string(r.prompt_id), std::to_string(r.rephrase_id),
                              fmt_full(r.delta_dot), fmt_full(r.delta_asr)});
        atomic_write(opt.out, t.dump());
        std::string table = "Rephrasing intervention\n";
        table += "records: " + std::to_string(outcome.records.size()) + "\n";
        table += "correlation(delta_dot, delta_asr): " + fmt_fixed(outcome.correlation, 4) + "\n";
        table += "p_value: " + fmt_sig(outcome.p_value, 6) + "\n";
        atomic_write(opt.out_table, table);
    } else if (opt.mode == "gcg-sweep") {
        GcgConfig cfg;
        cfg.suffix_len = opt.suffix_len;
        cfg.n_iters = opt.n_iters;
        cfg.top_k = opt.top_k;
        cfg.batch_size = opt.batch_size;
        cfg.seed = opt.seed;
        std::vector<std::vector<int>> targets;
        for (const Prompt* p : prompts) targets.push_back(p->compliance_target);
        const SweepResult sweep =
            sweep_regularizer(params, direction, prompts, targets, opt.lambdas,
                              reg_kind_from_flag(opt.reg), opt.n_seeds, cfg, corpus.refusal_target);
        atomic_write(opt.out, sweep_to_csv(sweep));
        const PairedPushTest paired = paired_regularizer_test(sweep);
        std::string table = format_sweep_table(
            sweep, std::string("Altered GCG loss: ") + reg_kind_name(sweep.kind));
        table += "\npaired test (regularized vs baseline movement): mean_diff=" +
                 fmt_sig(paired.mean_difference, 6) + " t=" + fmt_fixed(paired.t_statistic, 3) +
                 " one-sided p=" + fmt_sig(paired.p_one_sided, 6) + " n=" +
                 std::to_string(paired.n_pairs) + "\n";
        atomic_write(opt.out_table, table);
    } else {
        throw validation_error("unknown intervene mode '" + opt.mode + "'");
    }

    write_manifest(m, manifest_path_for(opt.out));
    return m;
}

// ----------------------------- qualitative plots -----------------------------

struct QualplotsOptions {
    std::string model = "model.bin";
    std::string direction = "direction.json";
    std::string corpus = "corpus.json";
    std::string suffixes = "attacks.jsonl";
    std::string transfer = "transfer.csv";
    std::string out_dir = "qualplots";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(QualplotsOptions, model, direction, corpus, suffixes, transfer, out_dir)

inline RunManifest run_qualplots(QualplotsOptions opt) {
    namespace fs = std::filesystem;
    opt.out_dir = resolve_out(opt.out_dir);
    const Parameters params = load_model(opt.model);
    const RefusalDirection direction = load_direction(opt.direction);
    const ToyCorpus corpus = load_corpus(opt.corpus);
    corpus.validate(params.config);
    const TransferMatrix matrix = transfer_from_csv(read_file(opt.transfer));
    const std::vector<SuffixEntry> pool =
        suffix_pool_from_runs(attack_runs_from_jsonl(read_file(opt.suffixes)));
    require(pool.size() == matrix.suffixes.size(), "run_qualplots: suffix pool / matrix mismatch");

    fs::create_directories(opt.out_dir);
    auto path_of = [&](const std::string& name) { return (fs::path(opt.out_dir) / name).string(); };
    std::vector<std::pair<std::string, std::string>> outputs;

    // 1) refusal-connectivity distributions over prompts
    {
        CsvTable t;
        t.schema = "suffixlab.connectivity.v1";
        t.header = {"prompt_id", "harmful", "cos", "dot_raw", "dot_unit"};
        Vec harm_cos, benign_cos;
        const Vec unit_dir = direction.unit();
        for (const Prompt* p : corpus.all_prompts()) {
            const Vec a = eoi_activation(params, p->seq, direction.layer);
            const Connectivity c = refusal_connectivity(a, direction.vector);
            t.rows.push_back({std::to_string(p->id), p->harmful ? "1" : "0", fmt_full(c.cosine),
                              fmt_full(c.dot_product), fmt_full(dot(a, unit_dir))});
            (p->harmful ? harm_cos : benign_cos).push_back(c.cosine);
        }
        atomic_write(path_of("connectivity.csv"), t.dump());

        // coarse histogram rendered as two line series
        const int bins = 12;
        double lo = 1e300, hi = -1e300;
        for (double v : harm_cos) { lo = std::min(lo, v); hi = std::max(hi, v); }
        for (double v : benign_cos) { lo = std::min(lo, v); hi = std::max(hi, v); }
        if (hi == lo) hi = lo + 1.0;
        auto hist = [&](const Vec& vs) {
            Vec h(bins, 0.0);
            for (double v : vs) {
                int b = static_cast<int>((v - lo) / (hi - lo) * bins);
                if (b == bins) b = bins - 1;
                h[b] += 1.0;
            }
            return h;
        };
        const std::vector<NamedSeries> series = {{"harmful", "#d95f02", hist(harm_cos)},
                                                 {"harmless", "#1b6ca8", hist(benign_cos)}};
        atomic_write(path_of("connectivity.svg"),
                     lines_to_svg(series, "Refusal connectivity (cosine) distribution", "bin", "count"));
        outputs.push_back({path_of("connectivity.csv"), ""});
        outputs.push_back({path_of("connectivity.svg"), ""});
    }

    // 2) cross-layer suppression: per-layer cosine with that layer's own
    //    mean-difference direction, for bare prompts and for the most/least
    //    transferable suffixes
    {
        const int n_layers = params.config.n_layers;
        std::vector<Vec> layer_dirs(n_layers + 1);
        {
            std::vector<std::vector<Vec>> harm_stacks, benign_stacks;
            for (const Prompt& p : corpus.harmful) harm_stacks.push_back(eoi_activation_stack(params, p.seq));
            for (const Prompt& p : corpus.harmless) benign_stacks.push_back(eoi_activation_stack(params, p.seq));
            for (int l = 1; l <= n_layers; ++l) {
                std::vector<Vec> ha, ba;
                for (const auto& s : harm_stacks) ha.push_back(s[l]);
                for (const auto& s : benign_stacks) ba.push_back(s[l]);
                layer_dirs[l] = compute_refusal_direction(ha, ba);
            }
        }

        std::vector<std::pair<double, std::size_t>> ranked; // (asr, suffix index)
        for (std::size_t j = 0; j < pool.size(); ++j) ranked.push_back({matrix.column_asr(j), j});
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        const int n_pick = std::min<std::size_t>(3, ranked.size());
        std::vector<std::size_t> best, worst;
        for (int i = 0; i < n_pick; ++i) {
            best.push_back(ranked[i].second);
            worst.push_back(ranked[ranked.size() - 1 - i].second);
        }

        const std::vector<const Prompt*> prompts = corpus.harmful_ptrs();
        auto mean_layer_cos = [&](const std::vector<std::size_t>* suffix_idx) {
            Vec out;
            for (int l = 1; l <= n_layers; ++l) {
                double total = 0.0;
                int count = 0;
                for (const Prompt* p : prompts) {
                    if (!suffix_idx) {
                        total += cosine(eoi_activation(params, p->seq, l), layer_dirs[l]);
                        ++count;
                    } else {
                        for (std::size_t j : *suffix_idx) {
                            const TokenSequence seq = splice_suffix(p->seq, pool[j].tokens);
                            total += cosine(eoi_activation(params, seq, l), layer_dirs[l]);
                            ++count;
                        }
                    }
                }
                out.push_back(total / count);
            }
            return out;
        };
        const Vec base_curve = mean_layer_cos(nullptr);
        const Vec best_curve = mean_layer_cos(&best);
        const Vec worst_curve = mean_layer_cos(&worst);

        CsvTable t;
        t.schema = "suffixlab.crosslayer.v1";
        t.header = {"layer", "series", "mean_cos"};
        for (int l = 1; l <= n_layers; ++l) {
            t.rows.push_back({std::to_string(l), "harmful_base", fmt_full(base_curve[l - 1])});
            t.rows.push_back({std::to_string(l), "most_successful_suffixes", fmt_full(best_curve[l - 1])});
            t.rows.push_back({std::to_string(l), "least_successful_suffixes", fmt_full(worst_curve[l - 1])});
        }
        atomic_write(path_of("cross_layer.csv"), t.dump());
        const std::vector<NamedSeries> series = {
            {"harmful prompts", "#1b6ca8", base_curve},
            {"top suffixes", "#2a9d3a", best_curve},
            {"bottom suffixes", "#d95f02", worst_curve}};
        atomic_write(path_of("cross_layer.svg"),
                     lines_to_svg(series, "Cross-layer refusal-direction cosine", "layer", "mean cos"));
        outputs.push_back({path_of("cross_layer.csv"), ""});
        outputs.push_back({path_of("cross_layer.svg"), ""});
    }

    // 3) per-suffix mean push / orthogonal shift vs ASR
    {
        std::vector<const Prompt*> prompts;
        for (int id : matrix.prompt_ids) prompts.push_back(&corpus.by_id(id));
        std::vector<Vec> base_acts;
        for (const Prompt* p : prompts)
            base_acts.push_back(eoi_activation(params, p->seq, direction.layer));

        CsvTable t;
        t.schema = "suffixlab.suffix_effects.v1";
        t.header = {"suffix_id", "origin_prompt_id", "seed", "asr", "mean_push", "mean_orth"};
        std::vector<XyPoint> push_points, orth_points;
        for (std::size_t j = 0; j < pool.size(); ++j) {
            double mean_push = 0.0, mean_orth = 0.0;
            for (std::size_t i = 0; i < prompts.size(); ++i) {
                const TokenSequence seq = splice_suffix(prompts[i]->seq, pool[j].tokens);
                const Vec a_sfx = eoi_activation(params, seq, direction.layer);
                mean_push += suffix_push(base_acts[i], a_sfx, direction.vector);
                mean_orth += orthogonal_shift(base_acts[i], a_sfx, direction.vector);
            }
            mean_push /= prompts.size();
            mean_orth /= prompts.size();
            const double col_asr = matrix.column_asr(j);
            t.rows.push_back({std::to_string(pool[j].suffix_id), std::to_string(pool[j].origin_prompt_id),
                              std::to_string(pool[j].seed), fmt_full(col_asr), fmt_full(mean_push),
                              fmt_full(mean_orth)});
            push_points.push_back({mean_push, col_asr});
            orth_points.push_back({mean_orth, col_asr});
        }
        atomic_write(path_of("suffix_effects.csv"), t.dump());
        atomic_write(path_of("push_vs_asr.svg"),
                     scatter_to_svg(push_points, "Suffix push vs ASR", "mean suffix push", "ASR"));
        atomic_write(path_of("orth_vs_asr.svg"),
                     scatter_to_svg(orth_points, "Orthogonal shift vs ASR", "mean orthogonal shift", "ASR"));
        outputs.push_back({path_of("suffix_effects.csv"), ""});
        outputs.push_back({path_of("push_vs_asr.svg"), ""});
        outputs.push_back({path_of("orth_vs_asr.svg"), ""});
    }

    RunManifest m;
    m.command = "qualplots";
    m.config = opt;
    m.inputs = {{opt.model, ""}, {opt.direction, ""}, {opt.corpus, ""}, {opt.suffixes, ""}, {opt.transfer, ""}};
    m.outputs = outputs;
    write_manifest(m, manifest_path_for(path_of("qualplots")));
    return m;
}

// ----------------------------- replay -----------------------------

// Re-runs the manifest's command from its recorded config. With a non-empty
// out_dir, every output path is redirected there (same basenames).
inline RunManifest replay_manifest(const std::string& manifest_file, const std::string& out_dir = "") {
    const RunManifest m = load_manifest(manifest_file);
    const json& c = m.config;
    if (m.command == "corpus") {
        CorpusOptions opt = c.get<CorpusOptions>();
        opt.out = detail::redirect(opt.out, out_dir);
        return run_corpus(opt);
    }
    if (m.command == "train") {
        TrainOptions opt = c.get<TrainOptions>();
        opt.out = detail::redirect(opt.out, out_dir);
        return run_train(opt);
    }
    if (m.command == "refusal") {
        RefusalOptions opt = c.get<RefusalOptions>();
        opt.out = detail::redirect(opt.out, out_dir);
        opt.scores_out = detail::redirect(opt.scores_out, out_dir);
        return run_refusal(opt);
    }
    if (m.command == "attack") {
        AttackOptions opt = c.get<AttackOptions>();
        opt.out = detail::redirect(opt.out, out_dir);
        return run_attack(opt);
    }
    if (m.command == "transfer") {
        TransferOptions opt = c.get<TransferOptions>();
        opt.out_csv = detail::redirect(opt.out_csv, out_dir);
        opt.out_svg = detail::redirect(opt.out_svg, out_dir);
        return run_transfer(opt);
    }
    if (m.command == "features") {
        FeaturesOptions opt = c.get<FeaturesOptions>();
        opt.out = detail::redirect(opt.out, out_dir);
        return run_features(opt);
    }
    if (m.command == "regress") {
        RegressOptions opt = c.get<RegressOptions>();
        opt.out_csv = detail::redirect(opt.out_csv, out_dir);
        opt.out_table = detail::redirect(opt.out_table, out_dir);
        return run_regress(opt);
    }
    if (m.command == "intervene") {
        InterveneOptions opt = c.get<InterveneOptions>();
        opt.out = detail::redirect(opt.out, out_dir);
        opt.out_table = detail::redirect(opt.out_table, out_dir);
        return run_intervene(opt);
    }
    if (m.command == "qualplots") {
        QualplotsOptions opt = c.get<QualplotsOptions>();
        if (!out_dir.empty()) opt.out_dir = out_dir;
        return run_qualplots(opt);
    }
    throw validation_error("replay: unknown command '" + m.command + "'");
}

} // namespace suffixlab
