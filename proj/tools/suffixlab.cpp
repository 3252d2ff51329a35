// suffixlab command-line driver: corpus generation, training, refusal
// direction extraction, GCG attacks, transfer matrices, feature tables,
// regressions, interventions, qualitative plots, and manifest replay.
//
// Exit codes: 0 success, 2 validation/input error, 3 numeric failure.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "suffixlab/pipeline.hpp"

using namespace suffixlab;

int main(int argc, char** argv) {
    CLI::App app{"suffixlab: a desk-scale adversarial-suffix transfer laboratory"};
    app.require_subcommand(1);

    CorpusOptions corpus_opt;
    auto* corpus_cmd = app.add_subcommand("corpus", "generate a synthetic prompt corpus");
    corpus_cmd->add_option("--out", corpus_opt.out, "output corpus JSON");
    corpus_cmd->add_option("--seed", corpus_opt.seed, "corpus seed");
    corpus_cmd->add_option("--n-per-class", corpus_opt.n_per_class, "prompts per class (>= 20)");
    corpus_cmd->add_option("--n-categories", corpus_opt.n_categories, "restricted topic categories");

    TrainOptions train_opt;
    auto* train_cmd = app.add_subcommand("train", "train the refusal-tuned toy model");
    train_cmd->add_option("--corpus", train_opt.corpus, "corpus JSON");
    train_cmd->add_option("--out", train_opt.out, "output model file");
    train_cmd->add_option("--seed", train_opt.seed, "training seed");
    train_cmd->add_option("--layers", train_opt.n_layers, "transformer blocks");
    train_cmd->add_option("--d-model", train_opt.d_model, "residual width");
    train_cmd->add_option("--heads", train_opt.n_heads, "attention heads");
    train_cmd->add_option("--d-ff", train_opt.d_ff, "MLP width");
    train_cmd->add_option("--vocab", train_opt.vocab_size, "vocabulary size");
    train_cmd->add_option("--max-seq", train_opt.max_seq_len, "maximum sequence length");
    train_cmd->add_option("--steps", train_opt.max_steps, "optimization step budget");
    train_cmd->add_option("--lr", train_opt.learning_rate, "learning rate");

    RefusalOptions refusal_opt;
    auto* refusal_cmd = app.add_subcommand("refusal", "extract the refusal direction");
    refusal_cmd->add_option("--model", refusal_opt.model, "model file");
    refusal_cmd->add_option("--corpus", refusal_opt.corpus, "corpus JSON");
    refusal_cmd->add_option("--out", refusal_opt.out, "output direction JSON");
    refusal_cmd->add_option("--scores-out", refusal_opt.scores_out, "per-layer effectiveness CSV");

    AttackOptions attack_opt;
    auto* attack_cmd = app.add_subcommand("attack", "optimize adversarial suffixes with GCG");
    attack_cmd->add_option("--model", attack_opt.model, "model file");
    attack_cmd->add_option("--direction", attack_opt.direction, "refusal direction JSON");
    attack_cmd->add_option("--corpus", attack_opt.corpus, "corpus JSON");
    attack_cmd->add_option("--out", attack_opt.out, "output JSON-lines run file");
    attack_cmd->add_option("--scale", attack_opt.scale, "desk | full");
    attack_cmd->add_option("--n-seeds", attack_opt.n_seeds, "suffixes per prompt");
    attack_cmd->add_option("--suffix-len", attack_opt.suffix_len, "suffix length");
    attack_cmd->add_option("--iters", attack_opt.n_iters, "GCG iterations");
    attack_cmd->add_option("--top-k", attack_opt.top_k, "gradient candidates per position");
    attack_cmd->add_option("--batch", attack_opt.batch_size, "substitutions evaluated per iteration");
    attack_cmd->add_option("--seed", attack_opt.seed, "base seed");
    attack_cmd->add_option("--lambda", attack_opt.lambda, "regularizer coefficient");
    attack_cmd->add_option("--reg", attack_opt.reg, "regularizer: none | push | orth");

    TransferOptions transfer_opt;
    auto* transfer_cmd = app.add_subcommand("transfer", "evaluate suffixes against prompts");
    transfer_cmd->add_option("--model", transfer_opt.model, "model the suffixes came from");
    transfer_cmd->add_option("--target-model", transfer_opt.target_model,
                             "evaluate on this model instead (inter-model)");
    transfer_cmd->add_option("--suffixes", transfer_opt.suffixes, "attack JSON-lines");
    transfer_cmd->add_option("--corpus", transfer_opt.corpus, "corpus JSON");
    transfer_cmd->add_option("--scale", transfer_opt.scale, "desk | full");
    transfer_cmd->add_option("--out-csv", transfer_opt.out_csv, "matrix CSV");
    transfer_cmd->add_option("--out-svg", transfer_opt.out_svg, "heatmap SVG");

    FeaturesOptions features_opt;
    auto* features_cmd = app.add_subcommand("features", "per-pair activation feature table");
    features_cmd->add_option("--model", features_opt.model, "model file");
    features_cmd->add_option("--direction", features_opt.direction, "refusal direction JSON");
    features_cmd->add_option("--corpus", features_opt.corpus, "corpus JSON");
    features_cmd->add_option("--suffixes", features_opt.suffixes, "attack JSON-lines");
    features_cmd->add_option("--transfer", features_opt.transfer, "transfer matrix CSV");
    features_cmd->add_option("--out", features_opt.out, "feature CSV");

    RegressOptions regress_opt;
    auto* regress_cmd = app.add_subcommand("regress", "fit the analysis regressions");
    regress_cmd->add_option("--spec", regress_opt.spec,
                            "single | joint | joint-semantic | pairwise-frac | pairwise-ord");
    regress_cmd->add_option("--features", regress_opt.features, "feature CSV (pair specs)");
    regress_cmd->add_option("--transfer", regress_opt.transfer, "transfer CSV (pairwise specs)");
    regress_cmd->add_option("--model", regress_opt.model, "model file (pairwise, embedding=model)");
    regress_cmd->add_option("--direction", regress_opt.direction, "direction JSON (pairwise, embedding=model)");
    regress_cmd->add_option("--corpus", regress_opt.corpus, "corpus JSON (pairwise specs)");
    regress_cmd->add_option("--embedding", regress_opt.embedding, "model | indep");
    regress_cmd->add_option("--out-csv", regress_opt.out_csv, "fit CSV");
    regress_cmd->add_option("--out-table", regress_opt.out_table, "formatted text table");

    InterveneOptions intervene_opt;
    auto* intervene_cmd = app.add_subcommand("intervene", "rephrasing / regularizer interventions");
    intervene_cmd->add_option("--mode", intervene_opt.mode, "rephrase | gcg-sweep");
    intervene_cmd->add_option("--model", intervene_opt.model, "model file");
    intervene_cmd->add_option("--direction", intervene_opt.direction, "refusal direction JSON");
    intervene_cmd->add_option("--corpus", intervene_opt.corpus, "corpus JSON");
    intervene_cmd->add_option("--suffixes", intervene_opt.suffixes, "attack JSON-lines (rephrase mode)");
    intervene_cmd->add_option("--scale", intervene_opt.scale, "desk | full");
    intervene_cmd->add_option("--out", intervene_opt.out, "records / sweep CSV");
    intervene_cmd->add_option("--out-table", intervene_opt.out_table, "summary text");
    intervene_cmd->add_option("--n-rephrases", intervene_opt.n_rephrases, "rephrases per prompt");
    intervene_cmd->add_option("--seed", intervene_opt.seed, "seed");
    intervene_cmd->add_option("--reg", intervene_opt.reg, "push | orth (gcg-sweep mode)");
    intervene_cmd->add_option("--lambda", intervene_opt.lambdas, "sweep coefficients (repeatable)");
    intervene_cmd->add_option("--n-seeds", intervene_opt.n_seeds, "suffixes per prompt (gcg-sweep)");
    intervene_cmd->add_option("--suffix-len", intervene_opt.suffix_len, "suffix length");
    intervene_cmd->add_option("--iters", intervene_opt.n_iters, "GCG iterations");
    intervene_cmd->add_option("--top-k", intervene_opt.top_k, "gradient candidates per position");
    intervene_cmd->add_option("--batch", intervene_opt.batch_size, "substitutions per iteration");

    QualplotsOptions qual_opt;
    auto* qual_cmd = app.add_subcommand("qualplots", "connectivity, cross-layer, and scatter figures");
    qual_cmd->add_option("--model", qual_opt.model, "model file");
    qual_cmd->add_option("--direction", qual_opt.direction, "refusal direction JSON");
    qual_cmd->add_option("--corpus", qual_opt.corpus, "corpus JSON");
    qual_cmd->add_option("--suffixes", qual_opt.suffixes, "attack JSON-lines");
    qual_cmd->add_option("--transfer", qual_opt.transfer, "transfer matrix CSV");
    qual_cmd->add_option("--out-dir", qual_opt.out_dir, "output directory");

    std::string replay_manifest_path, replay_out_dir;
    auto* replay_cmd = app.add_subcommand("replay", "re-run a recorded manifest");
    replay_cmd->add_option("--manifest", replay_manifest_path, "manifest JSON")->required();
    replay_cmd->add_option("--out-dir", replay_out_dir, "redirect outputs into this directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (corpus_cmd->parsed()) run_corpus(corpus_opt);
        else if (train_cmd->parsed()) run_train(train_opt);
        else if (refusal_cmd->parsed()) run_refusal(refusal_opt);
        else if (attack_cmd->parsed()) run_attack(attack_opt);
        else if (transfer_cmd->parsed()) run_transfer(transfer_opt);
        else if (features_cmd->parsed()) run_features(features_opt);
        else if (regress_cmd->parsed()) run_regress(regress_opt);
        else if (intervene_cmd->parsed()) run_intervene(intervene_opt);
        else if (qual_cmd->parsed()) run_qualplots(qual_opt);
        else if (replay_cmd->parsed()) replay_manifest(replay_manifest_path, replay_out_dir);
    } catch (const validation_error& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "input/output error: %s\n", e.what());
        return 2;
    } catch (const degenerate_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const training_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
