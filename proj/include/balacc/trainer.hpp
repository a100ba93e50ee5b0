#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "balacc/common.hpp"
#include "balacc/corpus.hpp"
#include "balacc/imbalance.hpp"
#include "balacc/loss.hpp"
#include "balacc/metrics.hpp"

namespace balacc {

// Sparse feature vector, sorted by index.
using SparseVec = std::vector<std::pair<int32_t, double>>;

// Deterministic hashed bag-of-words: lowercase, split on non-alphanumeric,
// seeded FNV-1a into `dim` buckets, L2-normalized counts.
struct Featurizer {
    int dim = 16384;
    uint64_t seed = 0x5eedbacc;
};

inline SparseVec featurize(const std::string& text, const Featurizer& f) {
    std::map<int32_t, double> buckets;
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        uint64_t h = fnv1a64(token, f.seed);
        buckets[static_cast<int32_t>(h % static_cast<uint64_t>(f.dim))] += 1.0;
        token.clear();
    };
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u))
            token.push_back(static_cast<char>(std::tolower(u)));
        else
            flush();
    }
    flush();
    double norm = 0.0;
    for (const auto& [_, v] : buckets) norm += v * v;
    norm = std::sqrt(norm);
    SparseVec out;
    out.reserve(buckets.size());
    for (const auto& [idx, v] : buckets) out.push_back({idx, norm > 0.0 ? v / norm : 0.0});
    return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct HeadParams {
    int num_classes = 0;
    std::vector<double> w;  // [hidden][C] row-major
    std::vector<double> b;  // [C]
};

// Shared relu trunk with one linear head per task.
struct ClassifierModel {
    int input_dim = 0;
    int hidden_dim = 0;
    Featurizer featurizer;
    std::vector<double> trunk_w;  // [input_dim][hidden] row-major
    std::vector<double> trunk_b;  // [hidden]
    std::map<TaskId, HeadParams> heads;
    uint64_t seed = 0;
    TrainRecipe recipe;  // recorded configuration, serialized into checkpoints

    static ClassifierModel init(int input_dim, int hidden_dim,
                                const std::map<TaskId, int>& task_classes, uint64_t seed,
                                Featurizer featurizer = {}) {
        ClassifierModel m;
        m.input_dim = input_dim;
        m.hidden_dim = hidden_dim;
        m.featurizer = featurizer;
        m.seed = seed;
        Rng rng(seed);
        double std_dev = 1.0 / std::sqrt(static_cast<double>(input_dim));
        m.trunk_w.resize(static_cast<size_t>(input_dim) * hidden_dim);
        for (double& w : m.trunk_w) w = rng.gaussian() * std_dev;
        m.trunk_b.assign(static_cast<size_t>(hidden_dim), 0.0);
        for (const auto& [task, c] : task_classes) {
            HeadParams h;
            h.num_classes = c;
            h.w.assign(static_cast<size_t>(hidden_dim) * c, 0.0);  // zero heads: all-tie start
            h.b.assign(static_cast<size_t>(c), 0.0);
            m.heads[task] = std::move(h);
        }
        return m;
    }

    bool all_finite() const {
        auto ok = [](const std::vector<double>& v) {
            for (double x : v)
                if (!std::isfinite(x)) return false;
            return true;
        };
        if (!ok(trunk_w) || !ok(trunk_b)) return false;
        for (const auto& [_, h] : heads)
            if (!ok(h.w) || !ok(h.b)) return false;
        return true;
    }
};

struct ForwardCache {
    Matrix hidden_pre;  // [N x hidden]
    Matrix hidden_act;
    Matrix logits;  // [N x C]
};

inline ForwardCache forward_cached(const ClassifierModel& model, const std::vector<SparseVec>& xs,
                                   TaskId task) {
    auto it = model.heads.find(task);
    if (it == model.heads.end())
        throw Error(Errc::InvalidConfig, std::string("model has no head for ") + to_string(task));
    const HeadParams& head = it->second;
    int n = static_cast<int>(xs.size());
    int h = model.hidden_dim, c = head.num_classes;

    ForwardCache out;
    out.hidden_pre = Matrix(n, h);
    out.hidden_act = Matrix(n, h);
    out.logits = Matrix(n, c);
    for (int i = 0; i < n; ++i) {
        double* pre = &out.hidden_pre.data[static_cast<size_t>(i) * h];
        for (int j = 0; j < h; ++j) pre[j] = model.trunk_b[static_cast<size_t>(j)];
        for (const auto& [idx, val] : xs[static_cast<size_t>(i)]) {
            if (idx < 0 || idx >= model.input_dim)
                throw Error(Errc::DimensionMismatch, "feature index out of range");
            const double* row = &model.trunk_w[static_cast<size_t>(idx) * h];
            for (int j = 0; j < h; ++j) pre[j] += val * row[j];
        }
        double* act = &out.hidden_act.data[static_cast<size_t>(i) * h];
        for (int j = 0; j < h; ++j) act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
        double* z = &out.logits.data[static_cast<size_t>(i) * c];
        for (int k = 0; k < c; ++k) z[k] = head.b[static_cast<size_t>(k)];
        for (int j = 0; j < h; ++j) {
            double a = act[j];
            if (a == 0.0) continue;
            const double* wrow = &head.w[static_cast<size_t>(j) * c];
            for (int k = 0; k < c; ++k) z[k] += a * wrow[k];
        }
    }
    return out;
}

inline Matrix forward(const ClassifierModel& model, const std::vector<SparseVec>& xs, TaskId task) {
    return forward_cached(model, xs, task).logits;
}

// ---------------------------------------------------------------------------
// Gradients and updates
// ---------------------------------------------------------------------------

// One task's slice of a mixed batch. Labels are zero-based class indices.
struct BatchData {
    TaskId task;
    std::vector<SparseVec> xs;
    std::vector<int> ys;
};

struct HeadGrads {
    std::vector<double> w;
    std::vector<double> b;
};

struct ModelGrads {
    double loss = 0.0;
    std::map<int32_t, std::vector<double>> trunk_rows;  // touched input rows only
    std::vector<double> trunk_b;
    std::map<TaskId, HeadGrads> heads;  // only tasks present in the batch
};

inline ModelGrads compute_grads(const ClassifierModel& model, const std::vector<BatchData>& batches,
                                const LossConfig& loss_cfg) {
    std::vector<LogitBatch> logit_batches;
    std::vector<ForwardCache> caches;
    logit_batches.reserve(batches.size());
    caches.reserve(batches.size());
    for (const auto& b : batches) {
        caches.push_back(forward_cached(model, b.xs, b.task));
        LogitBatch lb;
        lb.z = caches.back().logits;
        lb.labels = b.ys;
        lb.task_id = b.task;
        logit_batches.push_back(std::move(lb));
    }
    TotalLossOutput total = total_loss(logit_batches, loss_cfg);

    ModelGrads grads;
    grads.loss = total.value;
    grads.trunk_b.assign(static_cast<size_t>(model.hidden_dim), 0.0);
    int h = model.hidden_dim;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
        const auto& b = batches[bi];
        const auto& cache = caches[bi];
        const Matrix& g = total.grads[bi];
        const HeadParams& head = model.heads.at(b.task);
        int c = head.num_classes;
        auto& hg = grads.heads[b.task];
        if (hg.w.empty()) {
            hg.w.assign(static_cast<size_t>(h) * c, 0.0);
            hg.b.assign(static_cast<size_t>(c), 0.0);
        }
        std::vector<double> dhidden(static_cast<size_t>(h));
        for (int i = 0; i < g.rows; ++i) {
            const double* grow = &g.data[static_cast<size_t>(i) * c];
            const double* act = &cache.hidden_act.data[static_cast<size_t>(i) * h];
            const double* pre = &cache.hidden_pre.data[static_cast<size_t>(i) * h];
            for (int k = 0; k < c; ++k) hg.b[static_cast<size_t>(k)] += grow[k];
            for (int j = 0; j < h; ++j) {
                double a = act[j];
                const double* wrow = &head.w[static_cast<size_t>(j) * c];
                double dh = 0.0;
                for (int k = 0; k < c; ++k) {
                    if (a != 0.0) hg.w[static_cast<size_t>(j) * c + k] += a * grow[k];
                    dh += wrow[k] * grow[k];
                }
                dhidden[static_cast<size_t>(j)] = pre[j] > 0.0 ? dh : 0.0;
            }
            for (int j = 0; j < h; ++j) grads.trunk_b[static_cast<size_t>(j)] += dhidden[static_cast<size_t>(j)];
            for (const auto& [idx, val] : b.xs[static_cast<size_t>(i)]) {
                auto& row = grads.trunk_rows[idx];
                if (row.empty()) row.assign(static_cast<size_t>(h), 0.0);
                for (int j = 0; j < h; ++j) row[static_cast<size_t>(j)] += val * dhidden[static_cast<size_t>(j)];
            }
        }
    }
    return grads;
}

inline void apply_sgd(ClassifierModel& model, const ModelGrads& grads, double lr) {
    int h = model.hidden_dim;
    for (const auto& [idx, row] : grads.trunk_rows) {
        double* w = &model.trunk_w[static_cast<size_t>(idx) * h];
        for (int j = 0; j < h; ++j) w[j] -= lr * row[static_cast<size_t>(j)];
    }
    for (int j = 0; j < h; ++j) model.trunk_b[static_cast<size_t>(j)] -= lr * grads.trunk_b[static_cast<size_t>(j)];
    for (const auto& [task, hg] : grads.heads) {
        HeadParams& head = model.heads.at(task);
        for (size_t i = 0; i < hg.w.size(); ++i) head.w[i] -= lr * hg.w[i];
        for (size_t i = 0; i < hg.b.size(); ++i) head.b[i] -= lr * hg.b[i];
    }
}

// Adam with lazy moment updates on sparse trunk rows: a row's moments decay
// only on steps that touch it. Heads of tasks absent from a batch are never
// updated, matching the multi-task trace contract.
class AdamState {
public:
    AdamState(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void apply(ClassifierModel& model, const ModelGrads& grads, double lr) {
        int h = model.hidden_dim;
        if (trunk_m_.empty()) {
            trunk_m_.assign(model.trunk_w.size(), 0.0);
            trunk_v_.assign(model.trunk_w.size(), 0.0);
            trunk_b_m_.assign(model.trunk_b.size(), 0.0);
            trunk_b_v_.assign(model.trunk_b.size(), 0.0);
        }
        ++trunk_t_;
        for (const auto& [idx, row] : grads.trunk_rows)
            for (int j = 0; j < h; ++j)
                step_one(model.trunk_w[static_cast<size_t>(idx) * h + j],
                         trunk_m_[static_cast<size_t>(idx) * h + j],
                         trunk_v_[static_cast<size_t>(idx) * h + j], row[static_cast<size_t>(j)], lr,
                         trunk_t_);
        for (size_t j = 0; j < model.trunk_b.size(); ++j)
            step_one(model.trunk_b[j], trunk_b_m_[j], trunk_b_v_[j], grads.trunk_b[j], lr, trunk_t_);
        for (const auto& [task, hg] : grads.heads) {
            auto& st = heads_[task];
            HeadParams& head = model.heads.at(task);
            if (st.m_w.empty()) {
                st.m_w.assign(head.w.size(), 0.0);
                st.v_w.assign(head.w.size(), 0.0);
                st.m_b.assign(head.b.size(), 0.0);
                st.v_b.assign(head.b.size(), 0.0);
            }
            ++st.t;
            for (size_t i = 0; i < head.w.size(); ++i)
                step_one(head.w[i], st.m_w[i], st.v_w[i], hg.w[i], lr, st.t);
            for (size_t i = 0; i < head.b.size(); ++i)
                step_one(head.b[i], st.m_b[i], st.v_b[i], hg.b[i], lr, st.t);
        }
    }

private:
    void step_one(double& p, double& m, double& v, double g, double lr, int64_t t) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        double mhat = m / (1.0 - std::pow(beta1_, static_cast<double>(t)));
        double vhat = v / (1.0 - std::pow(beta2_, static_cast<double>(t)));
        p -= lr * mhat / (std::sqrt(vhat) + eps_);
    }

    struct HeadState {
        std::vector<double> m_w, v_w, m_b, v_b;
        int64_t t = 0;
    };
    double beta1_, beta2_, eps_;
    std::vector<double> trunk_m_, trunk_v_, trunk_b_m_, trunk_b_v_;
    int64_t trunk_t_ = 0;
    std::map<TaskId, HeadState> heads_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    int steps = 2000;
    int batch_size = 32;
    double lr = 0.01;
    enum class Schedule { Constant, Cosine } schedule = Schedule::Constant;
    enum class Optimizer { Sgd, Adam } optimizer = Optimizer::Sgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossConfig loss;
    TaskWeights sampler;  // task sampling weights; empty = uniform over tasks
    uint64_t seed = 1;
    int eval_every = 100;
    Featurizer featurizer;
    int hidden_dim = 64;

    void validate(bool allow_zero_steps = true) const {
        if (steps < 0 || (!allow_zero_steps && steps < 1))
            throw Error(Errc::InvalidConfig, "steps must be >= 1");
        if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
        if (eval_every < 1) throw Error(Errc::InvalidConfig, "eval_every must be >= 1");
        loss.validate();
    }
};

struct StepRecord {
    int step;
    double train_loss;
};

struct EvalRecord {
    int step;
    TaskId task;
    double val_loss;  // CE + beta*BACC on the task's validation split
    double acc;
    double bacc;
};

struct TrainTrace {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    std::vector<std::pair<int, double>> val_total;  // lambda-weighted total per eval point
    int best_step = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

class DivergedError : public Error {
public:
    DivergedError(std::string msg, TrainTrace trace)
        : Error(Errc::DivergedLoss, std::move(msg)), trace(std::move(trace)) {}
    TrainTrace trace;
};

// Pre-featurized per-task data; labels zero-based.
struct FeatureDataset {
    TaskId task;
    int num_classes = 0;
    std::vector<SparseVec> x;
    std::vector<int> y;
};

struct FeatureSplits {
    FeatureDataset train;
    FeatureDataset validation;
};

struct TrainResult {
    ClassifierModel model;
    TrainTrace trace;
};

inline ConfusionMatrix evaluate_features(const ClassifierModel& model, const FeatureDataset& ds) {
    Matrix logits = forward(model, ds.x, ds.task);
    ConfusionMatrix cm(ds.num_classes);
    for (int i = 0; i < logits.rows; ++i) {
        int pred = 0;
        for (int c = 1; c < logits.cols; ++c)
            if (logits(i, c) > logits(i, pred)) pred = c;  // ties keep the lowest index
        ++cm.at(ds.y[static_cast<size_t>(i)], pred);
    }
    return cm;
}

inline TrainResult train_features(const std::map<TaskId, FeatureSplits>& data, const TrainConfig& cfg,
                                  int input_dim) {
    cfg.validate();
    if (data.empty()) throw Error(Errc::EmptyTrainSet, "no tasks to train on");
    std::map<TaskId, int> task_classes;
    std::map<TaskId, size_t> train_sizes;
    for (const auto& [task, splits] : data) {
        if (splits.train.x.empty())
            throw Error(Errc::EmptyTrainSet, std::string("empty train split for ") + to_string(task));
        if (splits.validation.x.empty())
            throw Error(Errc::EmptyTrainSet, std::string("empty validation split for ") + to_string(task));
        task_classes[task] = splits.train.num_classes;
        train_sizes[task] = splits.train.x.size();
    }

    ClassifierModel model =
        ClassifierModel::init(input_dim, cfg.hidden_dim, task_classes, cfg.seed, cfg.featurizer);
    TrainResult result;
    result.model = model;
    if (cfg.steps == 0) return result;

    TaskWeights weights = cfg.sampler.weights.empty()
                              ? TaskWeights::uniform([&] {
                                    std::vector<TaskId> ts;
                                    for (const auto& [t, _] : data) ts.push_back(t);
                                    return ts;
                                }())
                              : cfg.sampler;
    TaskSampler sampler(weights, cfg.seed ^ 0x7a5c0ffeeull);
    AdamState adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    TrainTrace trace;

    auto evaluate_all = [&](int step) {
        double total = 0.0;
        for (const auto& [task, splits] : data) {
            LogitBatch lb;
            lb.z = forward(model, splits.validation.x, task);
            lb.labels = splits.validation.y;
            lb.task_id = task;
            LossOutput ce = ce_loss(lb, cfg.loss.class_weights_for(task));
            double val = ce.value;
            if (cfg.loss.beta > 0.0) val += cfg.loss.beta * bacc_loss(lb, cfg.loss).value;
            total += cfg.loss.lambda_for(task) * val;
            ConfusionMatrix cm = evaluate_features(model, splits.validation);
            trace.evals.push_back({step, task, val, accuracy(cm), balanced_accuracy(cm)});
        }
        trace.val_total.push_back({step, total});
        if (total < trace.best_val_loss) {
            trace.best_val_loss = total;
            trace.best_step = step;
            result.model = model;
        }
    };

    for (int step = 1; step <= cfg.steps; ++step) {
        auto refs = make_batch_refs(train_sizes, sampler, static_cast<size_t>(cfg.batch_size));
        std::map<TaskId, BatchData> grouped;
        for (const auto& ref : refs) {
            auto& bd = grouped[ref.task];
            bd.task = ref.task;
            const auto& train = data.at(ref.task).train;
            bd.xs.push_back(train.x[ref.index]);
            bd.ys.push_back(train.y[ref.index]);
        }
        std::vector<BatchData> batches;
        batches.reserve(grouped.size());
        for (auto& [_, bd] : grouped) batches.push_back(std::move(bd));

        ModelGrads grads = compute_grads(model, batches, cfg.loss);
        trace.steps.push_back({step, grads.loss});
        if (!std::isfinite(grads.loss))
            throw DivergedError("training loss became non-finite at step " + std::to_string(step),
                                std::move(trace));

        double lr = cfg.lr;
        if (cfg.schedule == TrainConfig::Schedule::Cosine)
            lr = cfg.lr * 0.5 *
                 (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step - 1) /
                                 static_cast<double>(cfg.steps)));
        if (cfg.optimizer == TrainConfig::Optimizer::Sgd)
            apply_sgd(model, grads, lr);
        else
            adam.apply(model, grads, lr);
        if (!model.all_finite())
            throw DivergedError("parameters became non-finite at step " + std::to_string(step),
                                std::move(trace));

        if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate_all(step);
    }
    result.trace = std::move(trace);
    return result;
}

inline FeatureDataset featurize_dataset(const TaskDataset& ds, const Featurizer& f) {
    FeatureDataset out;
    out.task = ds.spec.task_id;
    out.num_classes = ds.spec.num_classes;
    out.x.reserve(ds.examples.size());
    out.y.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) {
        out.x.push_back(featurize(ex.text, f));
        out.y.push_back(ex.label - ds.spec.label_base);
    }
    return out;
}

inline TrainResult train(const std::map<TaskId, SplitBundle>& splits, const TrainConfig& cfg) {
    std::map<TaskId, FeatureSplits> data;
    for (const auto& [task, bundle] : splits) {
        FeatureSplits fs;
        fs.train = featurize_dataset(bundle.train, cfg.featurizer);
        fs.validation = featurize_dataset(bundle.validation, cfg.featurizer);
        data[task] = std::move(fs);
    }
    return train_features(data, cfg, cfg.featurizer.dim);
}

inline ConfusionMatrix evaluate(const ClassifierModel& model, const TaskDataset& ds) {
    return evaluate_features(model, featurize_dataset(ds, model.featurizer));
}

// ---------------------------------------------------------------------------
// Checkpoints: magic + JSON header + raw little-endian doubles
// ---------------------------------------------------------------------------

inline void save_checkpoint(const ClassifierModel& model, const std::filesystem::path& path) {
    nlohmann::json header{{"format", "balacc-checkpoint"},
                          {"version", 1},
                          {"input_dim", model.input_dim},
                          {"hidden_dim", model.hidden_dim},
                          {"featurizer", {{"dim", model.featurizer.dim}, {"seed", model.featurizer.seed}}},
                          {"seed", model.seed},
                          {"recipe",
                           {{"lora_rank", model.recipe.lora_rank},
                            {"lora_scale", model.recipe.lora_scale},
                            {"lora_dropout", model.recipe.lora_dropout},
                            {"target_projections", model.recipe.target_projections},
                            {"trainable_fraction", model.recipe.trainable_fraction}}}};
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& [task, head] : model.heads)
        tasks.push_back({{"task", to_string(task)}, {"num_classes", head.num_classes}});
    header["tasks"] = std::move(tasks);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    std::string hs = header.dump();
    uint64_t len = hs.size();
    out.write("BALACCK1", 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    auto dump = [&](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    dump(model.trunk_w);
    dump(model.trunk_b);
    for (const auto& [_, head] : model.heads) {
        dump(head.w);
        dump(head.b);
    }
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

inline ClassifierModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "BALACCK1", 8) != 0)
        throw Error(Errc::IoError, path.string() + " is not a checkpoint file");
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(len));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::IoError, std::string("bad checkpoint header: ") + e.what());
    }

    ClassifierModel m;
    m.input_dim = header.at("input_dim").get<int>();
    m.hidden_dim = header.at("hidden_dim").get<int>();
    m.featurizer.dim = header.at("featurizer").at("dim").get<int>();
    m.featurizer.seed = header.at("featurizer").at("seed").get<uint64_t>();
    m.seed = header.at("seed").get<uint64_t>();
    const auto& recipe = header.at("recipe");
    m.recipe.lora_rank = recipe.at("lora_rank").get<int>();
    m.recipe.lora_scale = recipe.at("lora_scale").get<double>();
    m.recipe.lora_dropout = recipe.at("lora_dropout").get<double>();
    m.recipe.target_projections = recipe.at("target_projections").get<std::vector<std::string>>();
    m.recipe.trainable_fraction = recipe.at("trainable_fraction").get<double>();

    auto slurp = [&](std::vector<double>& v, size_t n) {
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    };
    slurp(m.trunk_w, static_cast<size_t>(m.input_dim) * m.hidden_dim);
    slurp(m.trunk_b, static_cast<size_t>(m.hidden_dim));
    for (const auto& jt : header.at("tasks")) {
        TaskId task = task_from_string(jt.at("task").get<std::string>());
        HeadParams h;
        h.num_classes = jt.at("num_classes").get<int>();
        slurp(h.w, static_cast<size_t>(m.hidden_dim) * h.num_classes);
        slurp(h.b, static_cast<size_t>(h.num_classes));
        m.heads[task] = std::move(h);
    }
    if (!in) throw Error(Errc::IoError, "truncated checkpoint " + path.string());
    return m;
}

// Trace CSV: training rows carry task "train"; per-task validation rows and
// the lambda-weighted total follow each eval point.
inline void write_trace_csv(const TrainTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out << "step,task,loss,acc,bacc\n";
    char buf[128];
    size_t ei = 0, vi = 0;
    for (const auto& s : trace.steps) {
        std::snprintf(buf, sizeof(buf), "%d,train,%.9g,,\n", s.step, s.train_loss);
        out << buf;
        while (ei < trace.evals.size() && trace.evals[ei].step == s.step) {
            const auto& e = trace.evals[ei++];
            std::snprintf(buf, sizeof(buf), "%d,%s,%.9g,%.6f,%.6f\n", e.step, to_string(e.task),
                          e.val_loss, e.acc, e.bacc);
            out << buf;
        }
        while (vi < trace.val_total.size() && trace.val_total[vi].first == s.step) {
            std::snprintf(buf, sizeof(buf), "%d,val_total,%.9g,,\n", trace.val_total[vi].first,
                          trace.val_total[vi].second);
            out << buf;
            ++vi;
        }
    }
    if (trace.best_step >= 0) {
        std::snprintf(buf, sizeof(buf), "%d,best,%.9g,,\n", trace.best_step, trace.best_val_loss);
        out << buf;
    }
}

}  // namespace balacc
