#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "balacc/common.hpp"
#include "balacc/corpus.hpp"

namespace balacc {

enum class PromptMode { ZeroShot, FewShot };

inline const char* to_string(PromptMode m) {
    return m == PromptMode::ZeroShot ? "zero_shot" : "few_shot";
}

constexpr int kMaxShots = 4;

// One in-context example.
struct Shot {
    std::string text;
    int label;
};

// Structured prompt; `render` produces the final string. Element order is
// fixed: context, examples (few-shot only), user text, question, constraint.
struct PromptSpec {
    TaskId task_id;
    PromptMode mode;
    std::string context_statement;
    std::vector<Shot> examples;
    std::string user_text;
    std::string question;
    std::string response_constraint;
};

// Template wording is configuration: structure is the contract, the words
// are replaceable. Placeholders: {context}, {examples}, {post}, {question},
// {constraint}; example blocks use {text} and {label}.
struct PromptTemplates {
    std::string zero_shot;
    std::string few_shot;
    std::string example_block;
    std::string example_sep;
    std::string context;
    std::string constraint;  // {min}/{max} expand to the task's label range

    static PromptTemplates defaults() {
        PromptTemplates t;
        t.context =
            "You are a psychologist evaluating a social media post for indicators of "
            "mental health conditions.";
        t.constraint =
            "Respond only with a single numeric label from {min} to {max}. Do not add any "
            "explanation or other text.";
        t.zero_shot =
            "{context}\n"
            "\n"
            "Post to evaluate:\n"
            "{post}\n"
            "\n"
            "Question: {question}\n"
            "\n"
            "{constraint}\n";
        t.few_shot =
            "{context}\n"
            "\n"
            "{examples}\n"
            "\n"
            "Post to evaluate:\n"
            "{post}\n"
            "\n"
            "Question: {question}\n"
            "\n"
            "{constraint}\n";
        t.example_block =
            "Example post:\n"
            "{text}\n"
            "Label: {label}";
        t.example_sep = "\n\n";
        return t;
    }

    // Reads any of the template files present in `dir`; missing files keep
    // the default wording.
    static PromptTemplates load(const std::filesystem::path& dir) {
        PromptTemplates t = defaults();
        auto maybe = [&](const char* name, std::string& slot) {
            std::ifstream in(dir / name, std::ios::binary);
            if (!in) return;
            std::ostringstream ss;
            ss << in.rdbuf();
            slot = ss.str();
        };
        maybe("zero_shot.txt", t.zero_shot);
        maybe("few_shot.txt", t.few_shot);
        maybe("example_block.txt", t.example_block);
        maybe("context.txt", t.context);
        maybe("constraint.txt", t.constraint);
        return t;
    }
};

namespace detail {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

// Literal text immediately surrounding a placeholder, up to the neighboring
// placeholders. Used to locate the user post when parsing a rendered prompt.
inline std::pair<std::string, std::string> placeholder_context(const std::string& tmpl,
                                                               const std::string& placeholder) {
    size_t pos = tmpl.find(placeholder);
    if (pos == std::string::npos)
        throw Error(Errc::InvalidConfig, "template lacks " + placeholder + " placeholder");
    size_t prev = tmpl.rfind('}', pos == 0 ? 0 : pos - 1);
    std::string prefix = tmpl.substr(prev == std::string::npos ? 0 : prev + 1,
                                     pos - (prev == std::string::npos ? 0 : prev + 1));
    size_t after = pos + placeholder.size();
    size_t next = tmpl.find('{', after);
    std::string suffix = tmpl.substr(after, (next == std::string::npos ? tmpl.size() : next) - after);
    return {prefix, suffix};
}

}  // namespace detail

// Class-stratified selection: visit classes round-robin in label order,
// drawing one seeded uniform example (without replacement) per visited
// class, until k examples are chosen. Exhausted classes are skipped.
inline std::vector<Shot> select_shots(const TaskDataset& train, int k, uint64_t seed) {
    if (train.examples.empty()) throw Error(Errc::EmptyTrainSet, "no training examples to select from");
    if (k < 0 || static_cast<size_t>(k) > train.examples.size())
        throw Error(Errc::InsufficientExamples,
                    "need " + std::to_string(k) + " shots but train has " +
                        std::to_string(train.examples.size()));

    std::vector<std::vector<size_t>> pools(static_cast<size_t>(train.spec.num_classes));
    for (size_t i = 0; i < train.examples.size(); ++i)
        pools[static_cast<size_t>(train.examples[i].label - train.spec.label_base)].push_back(i);

    Rng rng(seed);
    std::vector<Shot> shots;
    int c = 0;
    while (static_cast<int>(shots.size()) < k) {
        auto& pool = pools[static_cast<size_t>(c)];
        if (!pool.empty()) {
            size_t pick = rng.uniform_index(pool.size());
            const auto& ex = train.examples[pool[pick]];
            shots.push_back({ex.text, ex.label});
            pool[pick] = pool.back();
            pool.pop_back();
        }
        c = (c + 1) % train.spec.num_classes;
    }
    return shots;
}

struct RenderedPrompt {
    PromptSpec spec;
    std::string text;
};

inline RenderedPrompt build_prompt(const TaskSpec& task, PromptMode mode, const std::string& post,
                                   const std::vector<Shot>& shots,
                                   const PromptTemplates& templates = PromptTemplates::defaults()) {
    if (post.empty()) throw Error(Errc::EmptyPost, "post text must be non-empty");
    if (mode == PromptMode::ZeroShot && !shots.empty())
        throw Error(Errc::InvalidConfig, "zero-shot prompts carry no examples");
    if (mode == PromptMode::FewShot) {
        if (shots.size() > kMaxShots)
            throw Error(Errc::TooManyShots, "few-shot supports at most " + std::to_string(kMaxShots) + " examples");
        if (shots.empty())
            throw Error(Errc::InvalidConfig, "few-shot needs at least one example; use zero-shot mode instead");
    }
    for (const auto& s : shots)
        if (!task.label_in_range(s.label))
            throw Error(Errc::InvalidLabel, "shot label out of range for task " + task.name);

    RenderedPrompt out;
    out.spec.task_id = task.task_id;
    out.spec.mode = mode;
    out.spec.context_statement = templates.context;
    out.spec.examples = shots;
    out.spec.user_text = post;
    out.spec.question = task.question;
    out.spec.response_constraint = detail::replace_all(
        detail::replace_all(templates.constraint, "{min}", std::to_string(task.min_label())), "{max}",
        std::to_string(task.max_label()));

    std::string body = mode == PromptMode::ZeroShot ? templates.zero_shot : templates.few_shot;
    if (mode == PromptMode::FewShot) {
        std::string blocks;
        for (size_t i = 0; i < shots.size(); ++i) {
            if (i) blocks += templates.example_sep;
            blocks += detail::replace_all(
                detail::replace_all(templates.example_block, "{text}", shots[i].text), "{label}",
                std::to_string(shots[i].label));
        }
        body = detail::replace_all(body, "{examples}", blocks);
    }
    body = detail::replace_all(body, "{context}", out.spec.context_statement);
    body = detail::replace_all(body, "{post}", post);
    body = detail::replace_all(body, "{question}", out.spec.question);
    body = detail::replace_all(body, "{constraint}", out.spec.response_constraint);
    out.text = std::move(body);
    return out;
}

// Recovers the user post from a rendered prompt. The post section is located
// by the literal text around {post}: the first occurrence of its prefix and
// the last occurrence of its suffix. Exact provided the context/example
// wording does not itself contain the post-section prefix.
inline std::string parse_user_post(const std::string& rendered, PromptMode mode,
                                   const PromptTemplates& templates = PromptTemplates::defaults()) {
    const std::string& tmpl = mode == PromptMode::ZeroShot ? templates.zero_shot : templates.few_shot;
    auto [prefix, suffix] = detail::placeholder_context(tmpl, "{post}");
    size_t start = rendered.find(prefix);
    if (start == std::string::npos) throw Error(Errc::InvalidConfig, "prompt does not match template");
    start += prefix.size();
    size_t end = rendered.rfind(suffix);
    if (end == std::string::npos || end < start)
        throw Error(Errc::InvalidConfig, "prompt does not match template");
    return rendered.substr(start, end - start);
}

// JSONL export for batch evaluation. The gold label rides alongside the
// prompt (never inside it).
inline void write_prompts_jsonl(const std::vector<std::pair<RenderedPrompt, int>>& prompts,
                                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    for (const auto& [p, gold] : prompts) {
        nlohmann::json j{{"task_id", to_string(p.spec.task_id)},
                         {"mode", to_string(p.spec.mode)},
                         {"k", p.spec.examples.size()},
                         {"label", gold},
                         {"prompt", p.text}};
        out << j.dump() << '\n';
    }
}

}  // namespace balacc
