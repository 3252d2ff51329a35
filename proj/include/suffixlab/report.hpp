#pragma once

// Diff-able artifacts: CSV tables (with a schema comment line), SVG figures
// (heatmap, scatter, line chart), the formatted regression tables, and run
// manifests for bit-identical replay.

#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "suffixlab/common.hpp"
#include "suffixlab/gcg.hpp"
#include "suffixlab/geometry.hpp"
#include "suffixlab/judge.hpp"
#include "suffixlab/serialize.hpp"
#include "suffixlab/stats.hpp"

namespace suffixlab {

constexpr const char* kToolVersion = "0.1.0";

// ----------------------------- CSV -----------------------------

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

struct CsvTable {
    std::string schema;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string dump() const {
        std::string out = "#schema: " + schema + "\n";
        auto append_row = [&out](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ",";
                out += csv_escape(cells[i]);
            }
            out += "\n";
        };
        append_row(header);
        for (const auto& row : rows) append_row(row);
        return out;
    }
};

// quote-aware scan; a quoted cell may contain commas, quotes, and newlines
inline CsvTable parse_csv(const std::string& content) {
    CsvTable t;
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    bool cell_started = false;
    auto end_cell = [&]() {
        cells.push_back(cur);
        cur.clear();
        cell_started = false;
    };
    auto end_record = [&]() {
        if (cells.empty() && cur.empty() && !cell_started) return; // blank line
        end_cell();
        records.push_back(cells);
        cells.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"' && i + 1 < content.size() && content[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
            cell_started = true;
        } else if (c == ',') {
            end_cell();
            cell_started = true;
        } else if (c == '\n') {
            end_record();
        } else {
            cur += c;
            cell_started = true;
        }
    }
    end_record();

    bool have_header = false;
    for (auto& rec : records) {
        if (rec.size() == 1 && rec[0].rfind("#schema: ", 0) == 0) {
            t.schema = rec[0].substr(9);
            continue;
        }
        if (!have_header) {
            t.header = std::move(rec);
            have_header = true;
        } else {
            t.rows.push_back(std::move(rec));
        }
    }
    require(have_header, "parse_csv: missing header row");
    return t;
}

// ----------------------------- transfer matrix CSV -----------------------------

inline std::string suffix_tag(const SuffixEntry& s) {
    return "s" + std::to_string(s.suffix_id) + ":p" + std::to_string(s.origin_prompt_id) + ":seed" +
           std::to_string(s.seed);
}

inline std::string transfer_to_csv(const TransferMatrix& m) {
    m.validate();
    CsvTable t;
    t.schema = "suffixlab.transfer.v1 source=" + m.source_model + " target=" + m.target_model;
    t.header.push_back("prompt_id");
    for (const auto& s : m.suffixes) t.header.push_back(suffix_tag(s));
    for (std::size_t i = 0; i < m.prompt_ids.size(); ++i) {
        std::vector<std::string> row{std::to_string(m.prompt_ids[i])};
        for (int cell : m.cells[i]) row.push_back(std::to_string(cell));
        t.rows.push_back(row);
    }
    return t.dump();
}

inline TransferMatrix transfer_from_csv(const std::string& content) {
    const CsvTable t = parse_csv(content);
    require(t.schema.rfind("suffixlab.transfer.v1", 0) == 0, "transfer_from_csv: unknown schema");
    TransferMatrix m;
    {
        std::istringstream meta(t.schema);
        std::string word;
        while (meta >> word) {
            if (word.rfind("source=", 0) == 0) m.source_model = word.substr(7);
            if (word.rfind("target=", 0) == 0) m.target_model = word.substr(7);
        }
    }
    for (std::size_t j = 1; j < t.header.size(); ++j) {
        SuffixEntry s;
        const std::string& tag = t.header[j]; // s<id>:p<origin>:seed<seed>
        const std::size_t p1 = tag.find(":p");
        const std::size_t p2 = tag.find(":seed");
        require(tag.size() > 1 && tag[0] == 's' && p1 != std::string::npos && p2 != std::string::npos,
                "transfer_from_csv: bad suffix tag " + tag);
        s.suffix_id = std::stoi(tag.substr(1, p1 - 1));
        s.origin_prompt_id = std::stoi(tag.substr(p1 + 2, p2 - p1 - 2));
        s.seed = std::stoull(tag.substr(p2 + 5));
        m.suffixes.push_back(s);
    }
    for (const auto& row : t.rows) {
        require(row.size() == t.header.size(), "transfer_from_csv: ragged row");
        m.prompt_ids.push_back(std::stoi(row[0]));
        std::vector<int> cells;
        for (std::size_t j = 1; j < row.size(); ++j) cells.push_back(std::stoi(row[j]));
        m.cells.push_back(cells);
    }
    m.validate();
    return m;
}

// ----------------------------- feature table CSV -----------------------------

inline std::string features_to_csv(const std::vector<FeatureRow>& rows) {
    CsvTable t;
    t.schema = "suffixlab.features.v1";
    t.header = {"prompt_id", "suffix_id",      "s_base_dot",    "s_base_cos", "suffix_push",
                "orth_shift", "sem_sim_model", "sem_sim_indep", "label"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.prompt_id), std::to_string(r.suffix_id),
                          fmt_full(r.s_base_dot), fmt_full(r.s_base_cos), fmt_full(r.push),
                          fmt_full(r.orth), fmt_full(r.sem_sim_model), fmt_full(r.sem_sim_indep),
                          std::to_string(r.label)});
    }
    return t.dump();
}

inline std::vector<FeatureRow> features_from_csv(const std::string& content) {
    const CsvTable t = parse_csv(content);
    require(t.schema == "suffixlab.features.v1", "features_from_csv: unknown schema");
    require(t.header.size() == 9, "features_from_csv: unexpected column count");
    std::vector<FeatureRow> rows;
    for (const auto& row : t.rows) {
        require(row.size() == 9, "features_from_csv: ragged row");
        FeatureRow r;
        r.prompt_id = std::stoi(row[0]);
        r.suffix_id = std::stoi(row[1]);
        r.s_base_dot = std::stod(row[2]);
        r.s_base_cos = std::stod(row[3]);
        r.push = std::stod(row[4]);
        r.orth = std::stod(row[5]);
        r.sem_sim_model = std::stod(row[6]);
        r.sem_sim_indep = std::stod(row[7]);
        r.label = std::stoi(row[8]);
        rows.push_back(r);
    }
    return rows;
}

// ----------------------------- fit result CSV + text table -----------------------------

inline std::string fit_to_csv(const FitResult& fit) {
    CsvTable t;
    t.schema = "suffixlab.fit.v1";
    t.header = {"term", "coefficient", "std_error", "statistic", "p_value", "stars", "odds_ratio"};
    for (std::size_t j = 0; j < fit.names.size(); ++j) {
        t.rows.push_back({fit.names[j], fmt_full(fit.coefficients[j]), fmt_full(fit.std_errors[j]),
                          fmt_full(fit.z_or_t[j]), fmt_full(fit.p_values[j]), fit.stars[j],
                          fit.odds_ratios.empty() ? "" : fmt_full(fit.odds_ratios[j])});
    }
    t.rows.push_back({"_n_obs", std::to_string(fit.n_obs), "", "", "", "", ""});
    if (fit.kind == ModelKind::ols) {
        t.rows.push_back({"_r2", fmt_full(fit.r2), "", "", "", "", ""});
    } else {
        t.rows.push_back({"_pseudo_r2", fmt_full(fit.pseudo_r2), "", "", "", "", ""});
        t.rows.push_back({"_log_lik", fmt_full(fit.log_lik), "", "", "", "", ""});
    }
    t.rows.push_back({"_converged", fit.converged ? "1" : "0", "", "", "", "", ""});
    return t.dump();
}

inline std::string display_term(const std::string& name) {
    if (name == "const") return "Constant";
    if (name == "refusal_connec") return "Refusal connec.";
    if (name == "suffix_push") return "Suffix push";
    if (name == "orth_shift") return "Orthogonal shift";
    if (name == "semantic_sim_model") return "Semantic sim. (model)";
    if (name == "semantic_sim_indep") return "Semantic sim. (indep.)";
    if (name == "semantic_sim") return "Semantic sim.";
    const std::size_t cross = name.find(" \xC3\x97 ");
    if (cross != std::string::npos)
        return display_term(name.substr(0, cross)) + " \xC3\x97 " +
               display_term(name.substr(cross + 4));
    if (name.rfind("cut_", 0) == 0) return "Cutpoint " + name.substr(4);
    return name;
}

// Paper-style coefficient table: main effects, interaction block, constant,
// then N and the fit statistic, with the significance footnote.
inline std::string format_fit_table(const FitResult& fit, const std::string& title) {
    constexpr int kNameWidth = 42;
    constexpr int kValueWidth = 16;
    const std::string rule(kNameWidth + kValueWidth, '-');
    const std::string heavy(kNameWidth + kValueWidth, '=');

    auto pad = [&](const std::string& s, int width) {
        // column widths count display characters, not UTF-8 bytes
        int chars = 0;
        for (char c : s) chars += (static_cast<unsigned char>(c) & 0xC0) != 0x80;
        std::string out = s;
        for (int i = chars; i < width; ++i) out += ' ';
        return out;
    };
    auto value_cell = [&](std::size_t j) {
        std::string v = fmt_fixed(fit.coefficients[j], 2) + fit.stars[j];
        if (fit.kind == ModelKind::ordinal_logistic && fit.names[j].rfind("cut_", 0) != 0)
            v += " (" + fmt_fixed(fit.odds_ratios[j], 2) + ")";
        return v;
    };

    std::vector<std::size_t> mains, interactions, cuts;
    std::size_t const_idx = fit.names.size();
    for (std::size_t j = 0; j < fit.names.size(); ++j) {
        if (fit.names[j] == "const") const_idx = j;
        else if (fit.names[j].find(" \xC3\x97 ") != std::string::npos) interactions.push_back(j);
        else if (fit.names[j].rfind("cut_", 0) == 0) cuts.push_back(j);
        else mains.push_back(j);
    }

    std::string out = title + "\n" + heavy + "\n";
    out += pad("Variable", kNameWidth) + "Coef.\n" + rule + "\n";
    for (std::size_t j : mains) out += pad(display_term(fit.names[j]), kNameWidth) + value_cell(j) + "\n";
    if (!interactions.empty()) {
        out += rule + "\n";
        for (std::size_t j : interactions)
            out += pad(display_term(fit.names[j]), kNameWidth) + value_cell(j) + "\n";
    }
    if (const_idx < fit.names.size())
        out += pad("Constant", kNameWidth) + value_cell(const_idx) + "\n";
    for (std::size_t j : cuts) out += pad(display_term(fit.names[j]), kNameWidth) + value_cell(j) + "\n";
    out += rule + "\n";
    out += pad("N", kNameWidth) + std::to_string(fit.n_obs) + "\n";
    if (fit.kind == ModelKind::ols)
        out += pad("R2", kNameWidth) + fmt_fixed(fit.r2, 3) + "\n";
    else
        out += pad("Pseudo R2", kNameWidth) + fmt_fixed(fit.pseudo_r2, 3) + "\n";
    if (!fit.converged) out += pad("Converged", kNameWidth) + "no\n";
    out += heavy + "\n";
    out += "Note: * p<0.05, ** p<0.01, *** p<0.001\n";
    return out;
}

// ----------------------------- sweep table -----------------------------

inline std::string sweep_to_csv(const SweepResult& sweep) {
    CsvTable t;
    t.schema = "suffixlab.sweep.v1 kind=" + std::string(reg_kind_name(sweep.kind));
    t.header = {"coefficient", "asr", "n_jailbroken", "n_total", "mean_push", "mean_orth"};
    for (const auto& r : sweep.rows)
        t.rows.push_back({fmt_sig(r.lambda, 10), fmt_fixed(r.asr, 4), std::to_string(r.n_jailbroken),
                          std::to_string(r.n_total), fmt_full(r.mean_push), fmt_full(r.mean_orth)});
    return t.dump();
}

inline std::string format_sweep_table(const SweepResult& sweep, const std::string& title) {
    std::string out = title + "\n";
    out += "Coefficient    ASR      # jailbroken\n";
    out += "-------------------------------------\n";
    for (const auto& r : sweep.rows) {
        std::string lam = fmt_sig(r.lambda, 10);
        while (lam.size() < 15) lam += ' ';
        std::string asr_s = fmt_fixed(r.asr, 4);
        while (asr_s.size() < 9) asr_s += ' ';
        out += lam + asr_s + std::to_string(r.n_jailbroken) + "\n";
    }
    return out;
}

// ----------------------------- SVG figures -----------------------------

namespace detail {

inline std::string svg_open(int width, int height, const std::string& schema) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                    "\" height=\"" + std::to_string(height) + "\">\n";
    s += "<!-- schema: " + schema + " -->\n";
    return s;
}

inline std::string svg_text(double x, double y, const std::string& text, int size = 11) {
    return "<text x=\"" + fmt_fixed(x, 1) + "\" y=\"" + fmt_fixed(y, 1) + "\" font-size=\"" +
           std::to_string(size) + "\" font-family=\"monospace\">" + text + "</text>\n";
}

} // namespace detail

constexpr const char* kCellOn = "#d95f02";
constexpr const char* kCellOff = "#ffffff";

// boolean grid; one rect per cell with a data-value attribute
inline std::string transfer_to_svg(const TransferMatrix& m, const std::string& title) {
    m.validate();
    const int cell = 6;
    const int left = 60, top = 40;
    const int width = left + cell * static_cast<int>(m.suffixes.size()) + 20;
    const int height = top + cell * static_cast<int>(m.prompt_ids.size()) + 20;
    std::string s = detail::svg_open(width, height, "suffixlab.svg.transfer.v1");
    s += detail::svg_text(left, 20, title, 12);
    s += detail::svg_text(left, 32, "rows: prompts, cols: suffixes", 9);
    for (std::size_t i = 0; i < m.prompt_ids.size(); ++i) {
        s += detail::svg_text(4, top + cell * static_cast<double>(i) + cell, std::to_string(m.prompt_ids[i]), 8);
        for (std::size_t j = 0; j < m.suffixes.size(); ++j) {
            s += "<rect x=\"" + std::to_string(left + cell * static_cast<int>(j)) + "\" y=\"" +
                 std::to_string(top + cell * static_cast<int>(i)) + "\" width=\"" + std::to_string(cell) +
                 "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
                 (m.cells[i][j] ? kCellOn : kCellOff) + "\" stroke=\"#cccccc\" stroke-width=\"0.5\" data-value=\"" +
                 std::to_string(m.cells[i][j]) + "\"/>\n";
        }
    }
    s += "</svg>\n";
    return s;
}

// cell values parsed back out of the data-value attributes, row-major
inline std::vector<std::vector<int>> transfer_cells_from_svg(const std::string& svg,
                                                             std::size_t n_rows, std::size_t n_cols) {
    std::vector<int> values;
    std::size_t pos = 0;
    const std::string key = "data-value=\"";
    while ((pos = svg.find(key, pos)) != std::string::npos) {
        pos += key.size();
        const std::size_t end = svg.find('"', pos);
        values.push_back(std::stoi(svg.substr(pos, end - pos)));
        pos = end;
    }
    require(values.size() == n_rows * n_cols, "transfer_cells_from_svg: cell count mismatch");
    std::vector<std::vector<int>> cells(n_rows, std::vector<int>(n_cols));
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < n_cols; ++j) cells[i][j] = values[i * n_cols + j];
    return cells;
}

struct XyPoint {
    double x = 0.0;
    double y = 0.0;
};

inline std::string scatter_to_svg(const std::vector<XyPoint>& points, const std::string& title,
                                  const std::string& x_label, const std::string& y_label) {
    require(!points.empty(), "scatter_to_svg: no points");
    const int width = 420, height = 320, left = 50, top = 40, right = 20, bottom = 40;
    double xmin = points[0].x, xmax = points[0].x, ymin = points[0].y, ymax = points[0].y;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (width - left - right); };
    auto sy = [&](double y) { return height - bottom - (y - ymin) / (ymax - ymin) * (height - top - bottom); };

    std::string s = detail::svg_open(width, height, "suffixlab.svg.scatter.v1");
    s += detail::svg_text(left, 20, title, 12);
    s += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(height - bottom, 1) + "\" x2=\"" +
         fmt_fixed(width - right, 1) + "\" y2=\"" + fmt_fixed(height - bottom, 1) +
         "\" stroke=\"#000000\"/>\n";
    s += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(top, 1) + "\" x2=\"" +
         fmt_fixed(left, 1) + "\" y2=\"" + fmt_fixed(height - bottom, 1) + "\" stroke=\"#000000\"/>\n";
    s += detail::svg_text(width / 2.0 - 30, height - 8, x_label, 10);
    s += detail::svg_text(4, top - 10, y_label, 10);
    for (const auto& p : points)
        s += "<circle cx=\"" + fmt_fixed(sx(p.x), 2) + "\" cy=\"" + fmt_fixed(sy(p.y), 2) +
             "\" r=\"2.5\" fill=\"#1b6ca8\" fill-opacity=\"0.7\"/>\n";
    s += "</svg>\n";
    return s;
}

struct NamedSeries {
    std::string name;
    std::string color;
    Vec values; // y per integer x = 0, 1, ...
};

inline std::string lines_to_svg(const std::vector<NamedSeries>& series, const std::string& title,
                                const std::string& x_label, const std::string& y_label) {
    require(!series.empty(), "lines_to_svg: no series");
    const int width = 420, height = 320, left = 50, top = 40, right = 120, bottom = 40;
    double ymin = 1e300, ymax = -1e300;
    std::size_t nx = 0;
    for (const auto& s : series) {
        nx = std::max(nx, s.values.size());
        for (double v : s.values) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    require(nx >= 2, "lines_to_svg: need at least 2 points");
    if (ymax == ymin) ymax = ymin + 1.0;
    auto sx = [&](double x) { return left + x / (nx - 1) * (width - left - right); };
    auto sy = [&](double y) { return height - bottom - (y - ymin) / (ymax - ymin) * (height - top - bottom); };

    std::string s = detail::svg_open(width, height, "suffixlab.svg.lines.v1");
    s += detail::svg_text(left, 20, title, 12);
    s += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(height - bottom, 1) + "\" x2=\"" +
         fmt_fixed(width - right, 1) + "\" y2=\"" + fmt_fixed(height - bottom, 1) +
         "\" stroke=\"#000000\"/>\n";
    s += "<line x1=\"" + fmt_fixed(left, 1) + "\" y1=\"" + fmt_fixed(top, 1) + "\" x2=\"" +
         fmt_fixed(left, 1) + "\" y2=\"" + fmt_fixed(height - bottom, 1) + "\" stroke=\"#000000\"/>\n";
    s += detail::svg_text(width / 2.0 - 40, height - 8, x_label, 10);
    s += detail::svg_text(4, top - 10, y_label, 10);
    double legend_y = top;
    for (const auto& ser : series) {
        std::string pts;
        for (std::size_t i = 0; i < ser.values.size(); ++i) {
            if (i) pts += " ";
            pts += fmt_fixed(sx(static_cast<double>(i)), 2) + "," + fmt_fixed(sy(ser.values[i]), 2);
        }
        s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + ser.color +
             "\" stroke-width=\"1.5\"/>\n";
        s += "<rect x=\"" + std::to_string(width - right + 8) + "\" y=\"" + fmt_fixed(legend_y - 8, 1) +
             "\" width=\"10\" height=\"10\" fill=\"" + ser.color + "\"/>\n";
        s += detail::svg_text(width - right + 22, legend_y, ser.name, 9);
        legend_y += 14;
    }
    s += "</svg>\n";
    return s;
}

// ----------------------------- run manifests -----------------------------

struct RunManifest {
    std::string command;
    json config;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, fnv1a64 hex
    std::vector<std::pair<std::string, std::string>> outputs; // path, fnv1a64 hex

    json to_json() const {
        json j;
        j["schema"] = "suffixlab.manifest.v1";
        j["tool_version"] = kToolVersion;
        j["command"] = command;
        j["config"] = config;
        j["inputs"] = json::array();
        for (const auto& [p, h] : inputs) j["inputs"].push_back(json{{"path", p}, {"hash", h}});
        j["outputs"] = json::array();
        for (const auto& [p, h] : outputs) j["outputs"].push_back(json{{"path", p}, {"hash", h}});
        return j;
    }

    static RunManifest from_json(const json& j) {
        require(j.value("schema", "") == "suffixlab.manifest.v1", "RunManifest: unknown schema");
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        for (const auto& e : j.at("inputs"))
            m.inputs.push_back({e.at("path").get<std::string>(), e.at("hash").get<std::string>()});
        for (const auto& e : j.at("outputs"))
            m.outputs.push_back({e.at("path").get<std::string>(), e.at("hash").get<std::string>()});
        return m;
    }
};

inline void write_manifest(RunManifest m, const std::string& path) {
    // output hashes recorded from the files actually written
    for (auto& [p, h] : m.outputs) h = hash_hex(file_hash(p));
    for (auto& [p, h] : m.inputs) h = hash_hex(file_hash(p));
    atomic_write(path, m.to_json().dump(2) + "\n");
}

inline RunManifest load_manifest(const std::string& path) {
    try {
        return RunManifest::from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw io_error("load_manifest: " + std::string(e.what()));
    }
}

} // namespace suffixlab
