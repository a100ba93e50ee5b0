#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "balacc/common.hpp"
#include "balacc/imbalance.hpp"

namespace balacc {

// One task's logits and labels. Labels are zero-based class indices here
// (callers subtract the task's label_base before building a batch).
struct LogitBatch {
    Matrix z;                // [N x C]
    std::vector<int> labels; // length N, values in [0, C)
    TaskId task_id = TaskId::T1;

    int size() const { return z.rows; }
    int num_classes() const { return z.cols; }

    void validate() const {
        if (z.rows < 1 || z.cols < 1) throw Error(Errc::EmptyDataset, "empty logit batch");
        if (static_cast<int>(labels.size()) != z.rows)
            throw Error(Errc::DimensionMismatch, "labels length != batch rows");
        if (!z.all_finite()) throw Error(Errc::NonFiniteInput, "non-finite logit");
        for (int y : labels)
            if (y < 0 || y >= z.cols) throw Error(Errc::InvalidLabel, "label out of range");
    }
};

// Hyperparameters of the combined objective. gamma / lambda / class_weights
// are keyed per task; missing entries fall back to ones (gamma, lambda) or
// to unweighted CE (class_weights).
struct LossConfig {
    double alpha = 10.0;  // sigmoid sharpness on margins
    double beta = 1.0;    // CE vs surrogate-BACC trade-off
    std::map<TaskId, std::vector<double>> gamma;          // per-class scaling
    std::map<TaskId, double> lambda;                      // per-task loss weight
    std::map<TaskId, std::vector<double>> class_weights;  // optional weighted CE

    void validate() const {
        if (!(alpha > 0.0)) throw Error(Errc::InvalidConfig, "alpha must be > 0");
        if (beta < 0.0) throw Error(Errc::InvalidConfig, "beta must be >= 0");
        for (const auto& [t, g] : gamma)
            for (double v : g)
                if (!(v > 0.0)) throw Error(Errc::InvalidConfig, "gamma entries must be > 0");
        for (const auto& [t, l] : lambda)
            if (!(l > 0.0)) throw Error(Errc::InvalidConfig, "lambda entries must be > 0");
    }

    std::vector<double> gamma_for(TaskId t, int num_classes) const {
        auto it = gamma.find(t);
        if (it == gamma.end()) return std::vector<double>(static_cast<size_t>(num_classes), 1.0);
        if (static_cast<int>(it->second.size()) != num_classes)
            throw Error(Errc::DimensionMismatch, "gamma size != num_classes");
        return it->second;
    }

    double lambda_for(TaskId t) const {
        auto it = lambda.find(t);
        return it == lambda.end() ? 1.0 : it->second;
    }

    const std::vector<double>* class_weights_for(TaskId t) const {
        auto it = class_weights.find(t);
        return it == class_weights.end() ? nullptr : &it->second;
    }
};

// Value plus gradient w.r.t. the logits, with per-class soft-TPR and
// per-sample true-class margins as diagnostics where applicable.
struct LossOutput {
    double value = 0.0;
    Matrix grad;                    // [N x C]
    std::vector<double> soft_tpr;   // per class (surrogate loss only)
    std::vector<double> margins;    // per sample, margin of the true class
};

// Fine-tuning recipe constants recorded verbatim into run reports. They
// describe the full-scale training configuration; nothing here executes.
struct TrainRecipe {
    int lora_rank = 16;
    double lora_scale = 32.0;
    double lora_dropout = 0.05;
    std::vector<std::string> target_projections{"query", "value"};
    double trainable_fraction = 0.001;
};

// ---------------------------------------------------------------------------
// Elementary pieces
// ---------------------------------------------------------------------------

namespace detail {

// Neumaier compensated accumulator. The loss values feed a central-difference
// gradient oracle, so their summation error must stay near one ulp.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double v) {
        double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            comp += (sum - t) + v;
        else
            comp += (v - t) + sum;
        sum = t;
    }

    double get() const { return sum + comp; }
};

}  // namespace detail

// Row-wise log-softmax via max-shifted logsumexp.
inline Matrix log_softmax(const LogitBatch& batch) {
    batch.validate();
    Matrix out(batch.z.rows, batch.z.cols);
    for (int i = 0; i < batch.z.rows; ++i) {
        const double* row = &batch.z.data[static_cast<size_t>(i) * batch.z.cols];
        double lse = logsumexp(row, batch.z.cols);
        for (int c = 0; c < batch.z.cols; ++c) out(i, c) = row[c] - lse;
    }
    return out;
}

// m_{i,c} = z_{i,c} - logsumexp_{k != c} z_{i,k}. Positive exactly when
// class c's softmax probability exceeds 1/2.
inline Matrix margins(const LogitBatch& batch) {
    batch.validate();
    if (batch.z.cols < 2) throw Error(Errc::SingleClass, "margins need at least 2 classes");
    int n = batch.z.rows, c_count = batch.z.cols;
    Matrix m(n, c_count);
    std::vector<double> rest(static_cast<size_t>(c_count) - 1);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < c_count; ++c) {
            int k = 0;
            for (int j = 0; j < c_count; ++j)
                if (j != c) rest[static_cast<size_t>(k++)] = batch.z(i, j);
            m(i, c) = batch.z(i, c) - logsumexp(rest.data(), c_count - 1);
        }
    }
    return m;
}

// s = sigmoid(alpha * m), elementwise.
inline Matrix soft_scores(const Matrix& m, double alpha) {
    if (!(alpha > 0.0)) throw Error(Errc::InvalidConfig, "alpha must be > 0");
    Matrix s(m.rows, m.cols);
    for (size_t i = 0; i < m.data.size(); ++i) s.data[i] = sigmoid(alpha * m.data[i]);
    return s;
}

// Per-class mean of s_{i,c} over samples whose label is c. A class with no
// samples in the batch gets exactly 0.
inline std::vector<double> soft_tpr(const Matrix& s, const std::vector<int>& labels, int num_classes) {
    std::vector<detail::CompensatedSum> sum(static_cast<size_t>(num_classes));
    std::vector<int64_t> count(static_cast<size_t>(num_classes), 0);
    for (int i = 0; i < s.rows; ++i) {
        int y = labels[static_cast<size_t>(i)];
        sum[static_cast<size_t>(y)].add(s(i, y));
        ++count[static_cast<size_t>(y)];
    }
    std::vector<double> tpr(static_cast<size_t>(num_classes), 0.0);
    for (int c = 0; c < num_classes; ++c)
        if (count[static_cast<size_t>(c)] > 0)
            tpr[static_cast<size_t>(c)] =
                sum[static_cast<size_t>(c)].get() / static_cast<double>(count[static_cast<size_t>(c)]);
    return tpr;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean negative log-likelihood. With class weights w, each sample term is
// scaled by w_{y_i} and the sum is normalized by sum_i w_{y_i} so the loss
// scale stays stable as imbalance varies.
inline LossOutput ce_loss(const LogitBatch& batch, const std::vector<double>* class_weights = nullptr) {
    batch.validate();
    int n = batch.z.rows, c_count = batch.z.cols;
    if (class_weights && static_cast<int>(class_weights->size()) != c_count)
        throw Error(Errc::DimensionMismatch, "class_weights size != num_classes");

    Matrix logp = log_softmax(batch);
    double weight_sum = 0.0;
    for (int i = 0; i < n; ++i)
        weight_sum += class_weights ? (*class_weights)[static_cast<size_t>(batch.labels[static_cast<size_t>(i)])] : 1.0;

    LossOutput out;
    out.grad = Matrix(n, c_count);
    detail::CompensatedSum value;
    for (int i = 0; i < n; ++i) {
        int y = batch.labels[static_cast<size_t>(i)];
        double w = class_weights ? (*class_weights)[static_cast<size_t>(y)] : 1.0;
        value.add(-w * logp(i, y));
        double scale = w / weight_sum;
        for (int c = 0; c < c_count; ++c) {
            double p = std::exp(logp(i, c));
            out.grad(i, c) = scale * (p - (c == y ? 1.0 : 0.0));
        }
    }
    out.value = value.get() / weight_sum;
    return out;
}

// Surrogate balanced-accuracy loss:
//   value = 1 - sum_c gamma_c * softTPR_c / sum_c gamma_c
// The gamma sum runs over all schema classes; classes absent from the batch
// contribute softTPR 0 and no gradient. Gradients are the closed-form chain
// through margin -> sigmoid -> per-class mean: for sample i with label c,
//   d/dz_{i,c}       = -(gamma_c/G) * (1/|I_c|) * alpha * s(1-s)
//   d/dz_{i,k}, k!=c = +(gamma_c/G) * (1/|I_c|) * alpha * s(1-s) * softmax_{k != c}(z_{i,k})
inline LossOutput bacc_loss(const LogitBatch& batch, const LossConfig& cfg) {
    batch.validate();
    cfg.validate();
    int n = batch.z.rows, c_count = batch.z.cols;
    std::vector<double> gamma = cfg.gamma_for(batch.task_id, c_count);
    double gamma_sum = 0.0;
    for (double g : gamma) gamma_sum += g;

    Matrix m = margins(batch);
    Matrix s = soft_scores(m, cfg.alpha);
    std::vector<double> tpr = soft_tpr(s, batch.labels, c_count);

    std::vector<int64_t> class_n(static_cast<size_t>(c_count), 0);
    for (int y : batch.labels) ++class_n[static_cast<size_t>(y)];

    LossOutput out;
    out.soft_tpr = tpr;
    out.margins.resize(static_cast<size_t>(n));
    out.grad = Matrix(n, c_count);

    detail::CompensatedSum weighted;
    for (int c = 0; c < c_count; ++c) weighted.add(gamma[static_cast<size_t>(c)] * tpr[static_cast<size_t>(c)]);
    out.value = 1.0 - weighted.get() / gamma_sum;

    std::vector<double> rest(static_cast<size_t>(c_count) - 1);
    for (int i = 0; i < n; ++i) {
        int y = batch.labels[static_cast<size_t>(i)];
        out.margins[static_cast<size_t>(i)] = m(i, y);
        double si = s(i, y);
        double coeff = (gamma[static_cast<size_t>(y)] / gamma_sum) *
                       (1.0 / static_cast<double>(class_n[static_cast<size_t>(y)])) * cfg.alpha * si *
                       (1.0 - si);
        // softmax over logits excluding the true class
        int k = 0;
        for (int j = 0; j < c_count; ++j)
            if (j != y) rest[static_cast<size_t>(k++)] = batch.z(i, j);
        double lse = logsumexp(rest.data(), c_count - 1);
        out.grad(i, y) = -coeff;
        for (int j = 0; j < c_count; ++j)
            if (j != y) out.grad(i, j) = coeff * std::exp(batch.z(i, j) - lse);
    }
    return out;
}

// Total objective over one or more task batches:
//   sum_t lambda_t * (CE_t + beta * BACC_t)
// Gradients come back per input batch, already lambda/beta weighted.
struct TotalLossOutput {
    double value = 0.0;
    std::vector<Matrix> grads;            // parallel to the input batches
    std::map<TaskId, double> per_task;    // unweighted CE_t + beta*BACC_t
};

inline TotalLossOutput total_loss(const std::vector<LogitBatch>& batches, const LossConfig& cfg) {
    if (batches.empty()) throw Error(Errc::EmptyDataset, "total_loss needs at least one batch");
    cfg.validate();
    TotalLossOutput out;
    out.grads.reserve(batches.size());
    detail::CompensatedSum value;
    for (const auto& batch : batches) {
        double lambda = cfg.lambda_for(batch.task_id);
        LossOutput ce = ce_loss(batch, cfg.class_weights_for(batch.task_id));
        double task_value = ce.value;
        Matrix grad = ce.grad;
        if (cfg.beta > 0.0) {
            LossOutput bacc = bacc_loss(batch, cfg);
            task_value += cfg.beta * bacc.value;
            for (size_t i = 0; i < grad.data.size(); ++i)
                grad.data[i] += cfg.beta * bacc.grad.data[i];
        }
        for (double& g : grad.data) g *= lambda;
        value.add(lambda * task_value);
        out.per_task[batch.task_id] += task_value;
        out.grads.push_back(std::move(grad));
    }
    out.value = value.get();
    return out;
}

// ---------------------------------------------------------------------------
// Gradient validation oracle
// ---------------------------------------------------------------------------

enum class LossKind { CrossEntropy, Bacc, Total };

// Central finite differences against the analytic gradient. Returns the max
// over coordinates of |analytic - numeric| / max(1e-8, |numeric|).
inline double finite_diff_check(LossKind kind, std::vector<LogitBatch> batches,
                                const LossConfig& cfg, double eps) {
    if (eps < 1e-6 || eps > 1e-3) throw Error(Errc::InvalidConfig, "eps must be in [1e-6, 1e-3]");
    if (batches.empty()) throw Error(Errc::EmptyDataset, "no batches");

    auto eval = [&](const std::vector<LogitBatch>& b) -> double {
        switch (kind) {
            case LossKind::CrossEntropy:
                return ce_loss(b[0], cfg.class_weights_for(b[0].task_id)).value;
            case LossKind::Bacc:
                return bacc_loss(b[0], cfg).value;
            case LossKind::Total:
                return total_loss(b, cfg).value;
        }
        return 0.0;
    };

    std::vector<Matrix> analytic;
    switch (kind) {
        case LossKind::CrossEntropy:
            analytic.push_back(ce_loss(batches[0], cfg.class_weights_for(batches[0].task_id)).grad);
            break;
        case LossKind::Bacc:
            analytic.push_back(bacc_loss(batches[0], cfg).grad);
            break;
        case LossKind::Total:
            analytic = total_loss(batches, cfg).grads;
            break;
    }
    size_t n_batches = kind == LossKind::Total ? batches.size() : size_t{1};

    double worst = 0.0;
    for (size_t b = 0; b < n_batches; ++b) {
        for (size_t i = 0; i < batches[b].z.data.size(); ++i) {
            double orig = batches[b].z.data[i];
            batches[b].z.data[i] = orig + eps;
            double up = eval(batches);
            batches[b].z.data[i] = orig - eps;
            double down = eval(batches);
            batches[b].z.data[i] = orig;
            double numeric = (up - down) / (2.0 * eps);
            double err = std::abs(analytic[b].data[i] - numeric) / std::max(1e-8, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace balacc
