#pragma once

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "balacc/common.hpp"
#include "balacc/corpus.hpp"

namespace balacc {

// Per-task sampling/loss weights (lambda_t). Positive; interpreted
// proportionally, so any positive scaling is equivalent.
struct TaskWeights {
    std::map<TaskId, double> weights;

    double total() const {
        double s = 0.0;
        for (const auto& [_, w] : weights) s += w;
        return s;
    }

    static TaskWeights uniform(const std::vector<TaskId>& tasks) {
        TaskWeights tw;
        for (TaskId t : tasks) tw.weights[t] = 1.0;
        return tw;
    }
};

// Per-class weights for one task (w_c).
struct ClassWeights {
    std::vector<double> weights;
};

// w_c = N / (C * n_c); mean-one when classes are balanced.
inline ClassWeights inverse_freq_weights(const std::vector<int64_t>& class_counts) {
    if (class_counts.empty()) throw Error(Errc::EmptyClass, "no classes");
    int64_t total = 0;
    for (int64_t n : class_counts) {
        if (n < 1) throw Error(Errc::EmptyClass, "class with zero examples; fix the mapping or drop the class");
        total += n;
    }
    ClassWeights w;
    w.weights.reserve(class_counts.size());
    double c = static_cast<double>(class_counts.size());
    for (int64_t n : class_counts)
        w.weights.push_back(static_cast<double>(total) / (c * static_cast<double>(n)));
    return w;
}

// Draws tasks with probability lambda_t / sum(lambda). Owns its generator;
// clone with distinct seeds for parallel use.
class TaskSampler {
public:
    TaskSampler(const TaskWeights& weights, uint64_t seed) : rng_(seed) {
        if (weights.weights.empty()) throw Error(Errc::InvalidConfig, "sampler needs at least one task");
        double total = 0.0;
        for (const auto& [task, w] : weights.weights) {
            if (!(w > 0.0)) throw Error(Errc::InvalidConfig, "task weights must be positive");
            total += w;
            tasks_.push_back(task);
            cumulative_.push_back(total);
        }
        for (double& c : cumulative_) c /= total;
        cumulative_.back() = 1.0;  // guard against rounding
    }

    TaskId sample() {
        double u = rng_.uniform_real();
        for (size_t i = 0; i < cumulative_.size(); ++i)
            if (u < cumulative_[i]) return tasks_[i];
        return tasks_.back();
    }

    Rng& rng() { return rng_; }

private:
    std::vector<TaskId> tasks_;
    std::vector<double> cumulative_;
    Rng rng_;
};

// One sampled slot: which task and which example within its train set.
struct BatchRef {
    TaskId task;
    size_t index;
};

// Samples batch_size slots: task via the sampler, then a uniform example
// (with replacement) from that task's train set.
inline std::vector<BatchRef> make_batch_refs(const std::map<TaskId, size_t>& train_sizes,
                                             TaskSampler& sampler, size_t batch_size) {
    for (const auto& [task, n] : train_sizes)
        if (n == 0)
            throw Error(Errc::EmptyTrainSet, std::string("empty train set for ") + to_string(task));
    std::vector<BatchRef> refs;
    refs.reserve(batch_size);
    for (size_t i = 0; i < batch_size; ++i) {
        TaskId t = sampler.sample();
        auto it = train_sizes.find(t);
        if (it == train_sizes.end() || it->second == 0)
            throw Error(Errc::EmptyTrainSet, std::string("no train set for ") + to_string(t));
        refs.push_back({t, sampler.rng().uniform_index(it->second)});
    }
    return refs;
}

inline std::vector<LabeledExample> make_batch(const std::map<TaskId, TaskDataset>& train_sets,
                                              TaskSampler& sampler, size_t batch_size) {
    std::map<TaskId, size_t> sizes;
    for (const auto& [task, ds] : train_sets) sizes[task] = ds.examples.size();
    auto refs = make_batch_refs(sizes, sampler, batch_size);
    std::vector<LabeledExample> batch;
    batch.reserve(refs.size());
    for (const auto& ref : refs) batch.push_back(train_sets.at(ref.task).examples[ref.index]);
    return batch;
}

}  // namespace balacc
