#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "balacc/common.hpp"

namespace balacc {

enum class SourceDataset { Dreaddit, DepSeverity, SDCNL, CSSRS };

inline const char* to_string(SourceDataset d) {
    switch (d) {
        case SourceDataset::Dreaddit: return "Dreaddit";
        case SourceDataset::DepSeverity: return "DepSeverity";
        case SourceDataset::SDCNL: return "SDCNL";
        case SourceDataset::CSSRS: return "CSSRS";
    }
    return "?";
}

// Static description of one classification task: label schema plus the
// question asked about each post.
struct TaskSpec {
    TaskId task_id;
    std::string name;
    int num_classes;
    std::vector<std::string> label_names;
    int label_base;  // first valid numeric label (0 for T1-T5, 1 for T6)
    std::string question;
    SourceDataset source_dataset;

    int min_label() const { return label_base; }
    int max_label() const { return label_base + num_classes - 1; }
    bool label_in_range(int label) const { return label >= min_label() && label <= max_label(); }
};

inline const TaskSpec& task_spec(TaskId id) {
    static const std::array<TaskSpec, 6> specs = {{
        {TaskId::T1, "stress", 2, {"Not stressed", "Stressed"}, 0,
         "Is the author of this post stressed (1) or not stressed (0)?",
         SourceDataset::Dreaddit},
        {TaskId::T2, "depression", 2, {"No depression", "Depression"}, 0,
         "Does this post show signs of depression (1) or no depression (0)?",
         SourceDataset::DepSeverity},
        {TaskId::T3, "depression_severity", 4, {"Minimal", "Mild", "Moderate", "Severe"}, 0,
         "What is the depression severity of this post: minimal (0), mild (1), moderate (2), or severe (3)?",
         SourceDataset::DepSeverity},
        {TaskId::T4, "suicide_ideation", 2, {"No suicidal ideation", "Suicidal ideation"}, 0,
         "Does this post express suicidal ideation (1) or no suicidal ideation (0)?",
         SourceDataset::SDCNL},
        {TaskId::T5, "suicide_risk_indicator", 2,
         {"No indicator of suicide risk", "Indicator of suicide risk"}, 0,
         "Does this post contain an indicator of suicide risk (1) or no indicator (0)?",
         SourceDataset::CSSRS},
        {TaskId::T6, "suicide_risk_level", 5,
         {"Supportive", "Indicator", "Ideation", "Behavior", "Attempt"}, 1,
         "What is the suicide risk level of this post: supportive (1), indicator (2), ideation (3), behavior (4), or attempt (5)?",
         SourceDataset::CSSRS},
    }};
    return specs[static_cast<size_t>(id)];
}

struct LabeledExample {
    TaskId task_id;
    std::string text;
    int label;
};

struct TaskDataset {
    TaskSpec spec;
    std::vector<LabeledExample> examples;
    std::vector<int64_t> class_counts;  // indexed by label - label_base
    int64_t dropped_rows = 0;           // rows removed because the label was unmappable

    size_t size() const { return examples.size(); }

    void recount() {
        class_counts.assign(spec.num_classes, 0);
        for (const auto& ex : examples) {
            if (!spec.label_in_range(ex.label))
                throw Error(Errc::InvalidLabel,
                            "label " + std::to_string(ex.label) + " out of range for " + spec.name);
            ++class_counts[ex.label - spec.label_base];
        }
    }
};

struct SplitBundle {
    TaskDataset train;
    TaskDataset validation;
    TaskDataset test;
    std::array<double, 3> ratios{0.72, 0.08, 0.20};
    uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Text truncation
// ---------------------------------------------------------------------------

// Truncates to at most `limit` bytes, cutting only at a UTF-8 sequence
// boundary so multi-byte characters are never split.
inline std::string truncate_text(const std::string& text, size_t limit = 6000) {
    if (text.size() <= limit) return text;
    size_t cut = limit;
    // step back over continuation bytes (10xxxxxx)
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return text.substr(0, cut);
}

// ---------------------------------------------------------------------------
// CSV parsing (RFC 4180: quoted fields, "" escapes, embedded newlines)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;
    int ch;
    while ((ch = in.get()) != EOF) {
        char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                row_started = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                row_started = true;
                break;
            case '\r':
                break;  // swallow; LF terminates the record
            case '\n':
                if (row_started || !field.empty() || !row.empty()) {
                    row.push_back(std::move(field));
                    field.clear();
                    rows.push_back(std::move(row));
                    row.clear();
                    row_started = false;
                }
                break;
            default:
                field.push_back(c);
                row_started = true;
                break;
        }
    }
    if (row_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

// Raw label string -> numeric label. Externalized because the raw
// vocabularies of the public CSV releases vary.
using LabelMap = std::map<std::string, int>;

inline LabelMap load_label_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open label map " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::IoError, "bad label map " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(Errc::IoError, "label map must be a JSON object");
    LabelMap map;
    for (auto& [k, v] : j.items()) {
        if (!v.is_number_integer())
            throw Error(Errc::IoError, "label map value for '" + k + "' is not an integer");
        map[k] = v.get<int>();
    }
    return map;
}

struct CsvColumns {
    std::string text = "text";
    std::string label = "label";
};

// Loads a task CSV and maps raw labels through `label_map`. Rows whose label
// is not in the map (or maps out of range) are dropped and counted.
inline TaskDataset load_task_csv(const std::filesystem::path& path, const TaskSpec& spec,
                                 const LabelMap& label_map, const CsvColumns& cols = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    auto rows = detail::parse_csv(in);
    if (rows.empty()) throw Error(Errc::EmptyDataset, path.string() + " has no header row");

    const auto& header = rows.front();
    auto find_col = [&](const std::string& name) -> int {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    int text_col = find_col(cols.text);
    int label_col = find_col(cols.label);
    if (text_col < 0) throw Error(Errc::MissingColumn, "no '" + cols.text + "' column in " + path.string());
    if (label_col < 0) throw Error(Errc::MissingColumn, "no '" + cols.label + "' column in " + path.string());

    TaskDataset ds;
    ds.spec = spec;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (static_cast<int>(row.size()) <= std::max(text_col, label_col)) {
            ++ds.dropped_rows;
            continue;
        }
        auto it = label_map.find(row[label_col]);
        if (it == label_map.end() || !spec.label_in_range(it->second) || row[text_col].empty()) {
            ++ds.dropped_rows;
            continue;
        }
        ds.examples.push_back({spec.task_id, row[text_col], it->second});
    }
    if (ds.examples.empty())
        throw Error(Errc::EmptyDataset, "no mappable rows in " + path.string());
    ds.recount();
    return ds;
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

// Largest-remainder allocation of n into parts proportional to `ratios`.
inline std::vector<int64_t> largest_remainder(int64_t n, const std::vector<double>& ratios) {
    size_t k = ratios.size();
    std::vector<int64_t> out(k, 0);
    std::vector<double> frac(k, 0.0);
    int64_t assigned = 0;
    for (size_t i = 0; i < k; ++i) {
        double exact = static_cast<double>(n) * ratios[i];
        out[i] = static_cast<int64_t>(std::floor(exact + 1e-12));
        frac[i] = exact - static_cast<double>(out[i]);
        assigned += out[i];
    }
    // hand out the remainder by descending fractional part; ties favor the
    // earlier part so the result is deterministic
    std::vector<size_t> order(k);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return frac[a] > frac[b]; });
    for (int64_t i = 0; i < n - assigned; ++i) out[order[static_cast<size_t>(i) % k]] += 1;
    return out;
}

// Deterministic per-class largest-remainder split. Within each class the
// assignment order is a seeded shuffle of that class's examples.
inline SplitBundle stratified_split(const TaskDataset& ds, std::array<double, 3> ratios,
                                    uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(Errc::InvalidConfig, "split ratios must sum to 1");
    for (int64_t c : ds.class_counts)
        if (c < 1) throw Error(Errc::EmptyClass, "every class needs at least one example to split");

    SplitBundle out;
    out.ratios = ratios;
    out.seed = seed;
    for (TaskDataset* part : {&out.train, &out.validation, &out.test}) {
        part->spec = ds.spec;
        part->class_counts.assign(ds.spec.num_classes, 0);
    }

    Rng rng(seed);
    for (int c = 0; c < ds.spec.num_classes; ++c) {
        std::vector<size_t> members;
        for (size_t i = 0; i < ds.examples.size(); ++i)
            if (ds.examples[i].label - ds.spec.label_base == c) members.push_back(i);
        rng.shuffle(members);
        auto alloc = largest_remainder(static_cast<int64_t>(members.size()),
                                       {ratios[0], ratios[1], ratios[2]});
        if (alloc[0] == 0)
            throw Error(Errc::DegenerateClass,
                        "class " + ds.spec.label_names[static_cast<size_t>(c)] +
                            " would receive 0 training examples");
        size_t pos = 0;
        TaskDataset* parts[3] = {&out.train, &out.validation, &out.test};
        for (int p = 0; p < 3; ++p) {
            for (int64_t i = 0; i < alloc[static_cast<size_t>(p)]; ++i, ++pos)
                parts[p]->examples.push_back(ds.examples[members[pos]]);
        }
    }
    out.train.recount();
    out.validation.recount();
    out.test.recount();
    return out;
}

// ---------------------------------------------------------------------------
// JSONL persistence ({task_id, text, label} records)
// ---------------------------------------------------------------------------

inline void write_jsonl(const TaskDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    for (const auto& ex : ds.examples) {
        nlohmann::json j{{"task_id", to_string(ex.task_id)}, {"text", ex.text}, {"label", ex.label}};
        out << j.dump() << '\n';
    }
}

inline TaskDataset read_jsonl(const std::filesystem::path& path, const TaskSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    TaskDataset ds;
    ds.spec = spec;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::IoError, "bad JSONL line in " + path.string() + ": " + e.what());
        }
        LabeledExample ex{task_from_string(j.at("task_id").get<std::string>()),
                          j.at("text").get<std::string>(), j.at("label").get<int>()};
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.empty()) throw Error(Errc::EmptyDataset, path.string() + " is empty");
    ds.recount();
    return ds;
}

}  // namespace balacc
