#pragma once

// File formats: versioned little-endian binary for model parameters, JSON
// for the corpus and refusal direction, JSON-lines for attack runs. All
// writes are atomic (temp file + rename).

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "suffixlab/common.hpp"
#include "suffixlab/corpus.hpp"
#include "suffixlab/gcg.hpp"
#include "suffixlab/geometry.hpp"
#include "suffixlab/model.hpp"

namespace suffixlab {

using json = nlohmann::json;

inline void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("atomic_write: cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw io_error("atomic_write: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_file: cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

inline std::uint64_t file_hash(const std::string& path) {
    const std::string content = read_file(path);
    return fnv1a64(content.data(), content.size());
}

// ----------------------------- model binary -----------------------------
// layout: magic "SLMODEL1", 7 x int64 config fields, then doubles, all LE

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t& off) {
    require(off + 8 <= in.size(), "model file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    off += 8;
    return v;
}

inline void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

inline double get_f64(const std::string& in, std::size_t& off) {
    const std::uint64_t bits = get_u64(in, off);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace detail

constexpr char kModelMagic[9] = "SLMODEL1";

inline void save_model(const Parameters& params, const std::string& path) {
    std::string out;
    out.reserve(params.data.size() * 8 + 128);
    out.append(kModelMagic, 8);
    detail::put_u64(out, static_cast<std::uint64_t>(params.config.n_layers));
    detail::put_u64(out, static_cast<std::uint64_t>(params.config.d_model));
    detail::put_u64(out, static_cast<std::uint64_t>(params.config.n_heads));
    detail::put_u64(out, static_cast<std::uint64_t>(params.config.d_ff));
    detail::put_u64(out, static_cast<std::uint64_t>(params.config.vocab_size));
    detail::put_u64(out, static_cast<std::uint64_t>(params.config.max_seq_len));
    detail::put_u64(out, params.config.seed);
    detail::put_u64(out, params.data.size());
    for (double d : params.data) detail::put_f64(out, d);
    atomic_write(path, out);
}

inline Parameters load_model(const std::string& path) {
    const std::string in = read_file(path);
    require(in.size() >= 8 && std::memcmp(in.data(), kModelMagic, 8) == 0,
            "load_model: bad magic in " + path);
    std::size_t off = 8;
    ModelConfig cfg;
    cfg.n_layers = static_cast<int>(detail::get_u64(in, off));
    cfg.d_model = static_cast<int>(detail::get_u64(in, off));
    cfg.n_heads = static_cast<int>(detail::get_u64(in, off));
    cfg.d_ff = static_cast<int>(detail::get_u64(in, off));
    cfg.vocab_size = static_cast<int>(detail::get_u64(in, off));
    cfg.max_seq_len = static_cast<int>(detail::get_u64(in, off));
    cfg.seed = detail::get_u64(in, off);
    cfg.validate();
    const std::uint64_t count = detail::get_u64(in, off);
    Parameters params(cfg);
    require(count == params.data.size(), "load_model: parameter count mismatch");
    for (auto& d : params.data) d = detail::get_f64(in, off);
    return params;
}

// ----------------------------- corpus JSON -----------------------------

inline json prompt_to_json(const Prompt& p) {
    return json{{"id", p.id},
                {"tokens", p.seq.tokens},
                {"eoi_index", p.seq.eoi_index},
                {"harmful", p.harmful},
                {"category", p.category},
                {"compliance_target", p.compliance_target}};
}

inline Prompt prompt_from_json(const json& j) {
    Prompt p;
    p.id = j.at("id").get<int>();
    p.seq.tokens = j.at("tokens").get<std::vector<int>>();
    p.seq.eoi_index = j.at("eoi_index").get<int>();
    p.harmful = j.at("harmful").get<bool>();
    p.category = j.at("category").get<int>();
    p.compliance_target = j.at("compliance_target").get<std::vector<int>>();
    return p;
}

inline void save_corpus(const ToyCorpus& corpus, const std::string& path) {
    json j;
    j["schema"] = "suffixlab.corpus.v1";
    j["seed"] = corpus.seed;
    j["n_categories"] = corpus.n_categories;
    j["refusal_target"] = corpus.refusal_target;
    j["harmful"] = json::array();
    for (const auto& p : corpus.harmful) j["harmful"].push_back(prompt_to_json(p));
    j["harmless"] = json::array();
    for (const auto& p : corpus.harmless) j["harmless"].push_back(prompt_to_json(p));
    atomic_write(path, j.dump(2) + "\n");
}

inline ToyCorpus load_corpus(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw io_error("load_corpus: " + std::string(e.what()));
    }
    require(j.value("schema", "") == "suffixlab.corpus.v1", "load_corpus: unknown schema");
    ToyCorpus corpus;
    corpus.seed = j.at("seed").get<std::uint64_t>();
    corpus.n_categories = j.at("n_categories").get<int>();
    corpus.refusal_target = j.at("refusal_target").get<std::vector<int>>();
    for (const auto& pj : j.at("harmful")) corpus.harmful.push_back(prompt_from_json(pj));
    for (const auto& pj : j.at("harmless")) corpus.harmless.push_back(prompt_from_json(pj));
    return corpus;
}

// ----------------------------- refusal direction JSON -----------------------------

inline void save_direction(const RefusalDirection& dir, const std::vector<LayerScore>& scores,
                           const std::string& path) {
    json j;
    j["schema"] = "suffixlab.direction.v1";
    j["layer"] = dir.layer;
    j["vector"] = dir.vector;
    j["effectiveness"] = dir.effectiveness;
    j["norm_convention"] = dir.norm_convention == NormConvention::unit ? "unit" : "raw";
    j["add_scale"] = dir.add_scale;
    j["layer_scores"] = json::array();
    for (const auto& s : scores)
        j["layer_scores"].push_back(json{{"layer", s.layer},
                                         {"bypass_rate", s.bypass_rate},
                                         {"induce_rate", s.induce_rate},
                                         {"score", s.score},
                                         {"degenerate", s.degenerate}});
    atomic_write(path, j.dump(2) + "\n");
}

inline RefusalDirection load_direction(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw io_error("load_direction: " + std::string(e.what()));
    }
    require(j.value("schema", "") == "suffixlab.direction.v1", "load_direction: unknown schema");
    RefusalDirection dir;
    dir.layer = j.at("layer").get<int>();
    dir.vector = j.at("vector").get<Vec>();
    dir.effectiveness = j.at("effectiveness").get<double>();
    dir.norm_convention =
        j.at("norm_convention").get<std::string>() == "unit" ? NormConvention::unit : NormConvention::raw;
    dir.add_scale = j.at("add_scale").get<double>();
    return dir;
}

// ----------------------------- attack runs (JSON lines) -----------------------------

struct AttackRunRecord {
    AttackResult result;
    double lambda = 0.0;
    RegKind kind = RegKind::none;
};

inline std::string attack_runs_to_jsonl(const std::vector<AttackRunRecord>& runs) {
    std::string out = "{\"schema\":\"suffixlab.attacks.v1\"}\n";
    for (const auto& r : runs) {
        json j{{"prompt_id", r.result.prompt_id},
               {"seed", r.result.seed},
               {"lambda", r.lambda},
               {"kind", reg_kind_name(r.kind)},
               {"suffix", r.result.suffix},
               {"final_loss", r.result.final_loss},
               {"loss_trajectory", r.result.loss_trajectory}};
        out += j.dump();
        out += "\n";
    }
    return out;
}

inline std::vector<AttackRunRecord> attack_runs_from_jsonl(const std::string& content) {
    std::vector<AttackRunRecord> runs;
    std::size_t pos = 0;
    bool first = true;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        const std::string line = content.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw io_error("attack_runs_from_jsonl: " + std::string(e.what()));
        }
        if (first) {
            require(j.value("schema", "") == "suffixlab.attacks.v1",
                    "attack_runs_from_jsonl: unknown schema");
            first = false;
            continue;
        }
        AttackRunRecord r;
        r.result.prompt_id = j.at("prompt_id").get<int>();
        r.result.seed = j.at("seed").get<std::uint64_t>();
        r.result.suffix = j.at("suffix").get<std::vector<int>>();
        r.result.final_loss = j.at("final_loss").get<double>();
        r.result.loss_trajectory = j.at("loss_trajectory").get<std::vector<double>>();
        r.lambda = j.at("lambda").get<double>();
        const std::string kind = j.at("kind").get<std::string>();
        r.kind = kind == "suffix_push"        ? RegKind::suffix_push
                 : kind == "orthogonal_shift" ? RegKind::orthogonal_shift
                                              : RegKind::none;
        runs.push_back(r);
    }
    require(!first, "attack_runs_from_jsonl: missing schema line");
    return runs;
}

inline std::vector<SuffixEntry> suffix_pool_from_runs(const std::vector<AttackRunRecord>& runs) {
    std::vector<SuffixEntry> pool;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        SuffixEntry e;
        e.suffix_id = static_cast<int>(i);
        e.origin_prompt_id = runs[i].result.prompt_id;
        e.seed = runs[i].result.seed;
        e.tokens = runs[i].result.suffix;
        pool.push_back(e);
    }
    return pool;
}

} // namespace suffixlab
