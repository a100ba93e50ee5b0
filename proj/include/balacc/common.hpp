#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace balacc {

// Error kinds surfaced by the library. Tests match on these rather than
// on message text.
enum class Errc {
    MissingColumn,
    EmptyDataset,
    IoError,
    DegenerateClass,
    EmptyClass,
    NonFiniteInput,
    SingleClass,
    DimensionMismatch,
    DivergedLoss,
    EmptyTrainSet,
    TooManyShots,
    EmptyPost,
    InsufficientExamples,
    Timeout,
    ConnectionError,
    ContextOverflow,
    StreamInterrupted,
    PortUnavailable,
    EmptyMatrix,
    MismatchedTasks,
    InvalidConfig,
    InvalidLabel,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::MissingColumn: return "MissingColumn";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::IoError: return "IoError";
        case Errc::DegenerateClass: return "DegenerateClass";
        case Errc::EmptyClass: return "EmptyClass";
        case Errc::NonFiniteInput: return "NonFiniteInput";
        case Errc::SingleClass: return "SingleClass";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::DivergedLoss: return "DivergedLoss";
        case Errc::EmptyTrainSet: return "EmptyTrainSet";
        case Errc::TooManyShots: return "TooManyShots";
        case Errc::EmptyPost: return "EmptyPost";
        case Errc::InsufficientExamples: return "InsufficientExamples";
        case Errc::Timeout: return "Timeout";
        case Errc::ConnectionError: return "ConnectionError";
        case Errc::ContextOverflow: return "ContextOverflow";
        case Errc::StreamInterrupted: return "StreamInterrupted";
        case Errc::PortUnavailable: return "PortUnavailable";
        case Errc::EmptyMatrix: return "EmptyMatrix";
        case Errc::MismatchedTasks: return "MismatchedTasks";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::InvalidLabel: return "InvalidLabel";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

// The six classification tasks.
enum class TaskId { T1, T2, T3, T4, T5, T6 };

inline const char* to_string(TaskId id) {
    switch (id) {
        case TaskId::T1: return "T1";
        case TaskId::T2: return "T2";
        case TaskId::T3: return "T3";
        case TaskId::T4: return "T4";
        case TaskId::T5: return "T5";
        case TaskId::T6: return "T6";
    }
    return "?";
}

inline TaskId task_from_string(const std::string& s) {
    if (s == "T1") return TaskId::T1;
    if (s == "T2") return TaskId::T2;
    if (s == "T3") return TaskId::T3;
    if (s == "T4") return TaskId::T4;
    if (s == "T5") return TaskId::T5;
    if (s == "T6") return TaskId::T6;
    throw Error(Errc::InvalidConfig, "unknown task id '" + s + "'");
}

inline std::vector<TaskId> all_tasks() {
    return {TaskId::T1, TaskId::T2, TaskId::T3, TaskId::T4, TaskId::T5, TaskId::T6};
}

// Row-major dense matrix of doubles, sized once at construction.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Deterministic RNG. std::mt19937_64 is bit-exact by the standard; the
// distribution helpers below are hand-rolled because the std distributions
// are not portable across library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // splitmix64; tiny, portable, passes the statistical needs here.
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). n must be >= 1.
    size_t uniform_index(size_t n) {
        return static_cast<size_t>(next_u64() % n);
    }

    // Uniform double in [0, 1).
    double uniform_real() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Standard normal via Box-Muller, with a cached spare.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform_real();
        double u2 = uniform_real();
        while (u1 <= 0.0) u1 = uniform_real();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Fisher-Yates shuffle, deterministic for a fixed seed.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent sub-generator (for per-run or per-thread use).
    Rng fork(uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Overflow-safe logistic sigmoid.
inline double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Max-shifted log(sum(exp(v))) over a contiguous range.
inline double logsumexp(const double* v, int n) {
    double m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;  // all -inf
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

// FNV-1a 64-bit, optionally seeded. Used for feature hashing and config ids.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 1469598103934665603ull ^ seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0) {
    return fnv1a64(s.data(), s.size(), seed);
}

}  // namespace balacc
