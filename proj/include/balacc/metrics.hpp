#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "balacc/common.hpp"

namespace balacc {

// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<int64_t> counts;  // row-major C x C

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int c) : num_classes(c), counts(static_cast<size_t>(c) * c, 0) {}

    int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * num_classes + pred]; }
    int64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * num_classes + pred]; }

    int64_t total() const {
        int64_t t = 0;
        for (int64_t v : counts) t += v;
        return t;
    }

    int64_t row_total(int truth) const {
        int64_t t = 0;
        for (int c = 0; c < num_classes; ++c) t += at(truth, c);
        return t;
    }

    // Merging partial matrices is additive (associative and commutative).
    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        if (other.num_classes != num_classes)
            throw Error(Errc::DimensionMismatch, "cannot merge confusion matrices of different sizes");
        for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
        return *this;
    }
};

inline double accuracy(const ConfusionMatrix& cm) {
    int64_t total = cm.total();
    if (total == 0) throw Error(Errc::EmptyMatrix, "accuracy of an empty confusion matrix");
    int64_t correct = 0;
    for (int c = 0; c < cm.num_classes; ++c) correct += cm.at(c, c);
    return static_cast<double>(correct) / static_cast<double>(total);
}

// Mean per-class recall. Classes with zero true instances are excluded from
// the average: evaluation measures the realized test distribution, unlike the
// training surrogate where an absent class scores 0 by definition.
inline double balanced_accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw Error(Errc::EmptyMatrix, "balanced accuracy of an empty confusion matrix");
    double sum = 0.0;
    int included = 0;
    for (int c = 0; c < cm.num_classes; ++c) {
        int64_t row = cm.row_total(c);
        if (row == 0) continue;
        sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
        ++included;
    }
    return sum / static_cast<double>(included);
}

inline std::vector<double> per_class_tpr(const ConfusionMatrix& cm) {
    std::vector<double> tpr(static_cast<size_t>(cm.num_classes), 0.0);
    for (int c = 0; c < cm.num_classes; ++c) {
        int64_t row = cm.row_total(c);
        tpr[static_cast<size_t>(c)] = row == 0 ? 0.0 : static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
    }
    return tpr;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TaskMetrics {
    double acc = 0.0;
    double bacc = 0.0;
    std::vector<double> tpr;     // per class
    int64_t examples = 0;
    int64_t parse_failures = 0;  // backend evaluation only; counted as incorrect
};

struct MetricStat {
    double mean = 0.0;
    std::optional<double> stddev;  // present only when aggregated over >= 2 runs
};

struct MetricReport {
    std::map<TaskId, TaskMetrics> tasks;
    uint64_t seed = 0;
    std::string config_hash;
    int runs = 1;
    // populated by aggregate(); empty for single-run reports
    std::map<TaskId, MetricStat> acc_stats;
    std::map<TaskId, MetricStat> bacc_stats;
};

// Sample mean and (n-1)-denominator standard deviation over repeated runs.
inline MetricReport aggregate(const std::vector<MetricReport>& runs) {
    if (runs.empty()) throw Error(Errc::EmptyDataset, "aggregate of zero runs");
    for (const auto& r : runs)
        for (const auto& [task, _] : r.tasks)
            if (!runs.front().tasks.count(task))
                throw Error(Errc::MismatchedTasks, "runs cover different task sets");
    for (const auto& [task, _] : runs.front().tasks)
        for (const auto& r : runs)
            if (!r.tasks.count(task))
                throw Error(Errc::MismatchedTasks, "runs cover different task sets");

    MetricReport out = runs.front();
    out.runs = static_cast<int>(runs.size());
    auto stat = [&](auto pick) {
        std::map<TaskId, MetricStat> stats;
        for (const auto& [task, _] : runs.front().tasks) {
            double mean = 0.0;
            for (const auto& r : runs) mean += pick(r.tasks.at(task));
            mean /= static_cast<double>(runs.size());
            MetricStat st;
            st.mean = mean;
            if (runs.size() >= 2) {
                double var = 0.0;
                for (const auto& r : runs) {
                    double d = pick(r.tasks.at(task)) - mean;
                    var += d * d;
                }
                st.stddev = std::sqrt(var / static_cast<double>(runs.size() - 1));
            }
            stats[task] = st;
        }
        return stats;
    };
    out.acc_stats = stat([](const TaskMetrics& m) { return m.acc; });
    out.bacc_stats = stat([](const TaskMetrics& m) { return m.bacc; });
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json tasks = nlohmann::json::object();
    for (const auto& [task, m] : r.tasks) {
        nlohmann::json jt{{"acc", m.acc},
                          {"bacc", m.bacc},
                          {"tpr", m.tpr},
                          {"examples", m.examples},
                          {"parse_failures", m.parse_failures}};
        if (auto it = r.acc_stats.find(task); it != r.acc_stats.end()) {
            jt["acc_mean"] = it->second.mean;
            if (it->second.stddev) jt["acc_std"] = *it->second.stddev;
        }
        if (auto it = r.bacc_stats.find(task); it != r.bacc_stats.end()) {
            jt["bacc_mean"] = it->second.mean;
            if (it->second.stddev) jt["bacc_std"] = *it->second.stddev;
        }
        tasks[to_string(task)] = std::move(jt);
    }
    return nlohmann::json{{"tasks", std::move(tasks)},
                          {"seed", r.seed},
                          {"config_hash", r.config_hash},
                          {"runs", r.runs}};
}

// CSV mirroring the task-per-column layout: one row per metric.
inline std::string to_csv(const MetricReport& r) {
    std::string header = "metric";
    for (const auto& [task, _] : r.tasks) header += std::string(",") + to_string(task);
    std::string out = header + "\n";
    auto row = [&](const std::string& name, auto pick) {
        out += name;
        for (const auto& [task, m] : r.tasks) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.6f", pick(m));
            out += buf;
        }
        out += "\n";
    };
    row("acc", [](const TaskMetrics& m) { return m.acc; });
    row("bacc", [](const TaskMetrics& m) { return m.bacc; });
    if (!r.acc_stats.empty() && r.runs >= 2) {
        out += "acc_std";
        for (const auto& [task, _] : r.tasks) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.6f", r.acc_stats.at(task).stddev.value_or(0.0));
            out += buf;
        }
        out += "\nbacc_std";
        for (const auto& [task, _] : r.tasks) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.6f", r.bacc_stats.at(task).stddev.value_or(0.0));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace balacc
