#pragma once

// Desk-scale "Gauntlet-lite": synthetic multiple-choice tasks in the same
// byte formats the domain corpus emits (copy, induction, modular
// arithmetic), scored with baseline-subtracted normalized accuracy and
// aggregated into a core average. The scoring math is the real thing; the
// tasks are stand-ins sized for a laptop.

#include <string>
#include <vector>

#include "upcy/checkpoint.hpp"
#include "upcy/core.hpp"
#include "upcy/corpus.hpp"
#include "upcy/kernels.hpp"
#include "upcy/model.hpp"
#include "upcy/trainer.hpp"

namespace upcy {

struct mc_item {
    std::string prompt;
    std::vector<std::string> choices;  // single- or multi-byte completions
    std::size_t correct = 0;
};

struct mc_task {
    std::string name;
    double baseline = 0.25;  // random-chance accuracy
    std::vector<mc_item> items;
};

namespace detail {

inline std::vector<std::string> distinct_choices(rng_stream& rng, char correct,
                                                 const char* pool, std::size_t pool_n,
                                                 std::size_t n_choices) {
    std::vector<std::string> choices;
    choices.emplace_back(1, correct);
    while (choices.size() < n_choices) {
        const char c = pool[rng.next_below(pool_n)];
        bool dup = false;
        for (const auto& s : choices) dup |= (s[0] == c);
        if (!dup) choices.emplace_back(1, c);
    }
    return choices;
}

}  // namespace detail

inline mc_task make_copy_task(rng_stream rng, std::size_t n_items) {
    static const char pool[] = "abcdefghijklmnopqrstuvwxyz";
    mc_task task;
    task.name = "copy";
    task.baseline = 0.25;
    for (std::size_t i = 0; i < n_items; ++i) {
        const std::string w = detail::random_word(rng, 4, 7);
        mc_item item;
        item.prompt = "C:" + w + ">" + w.substr(0, w.size() - 1);
        auto choices = detail::distinct_choices(rng, w.back(), pool, 26, 4);
        const std::size_t slot = rng.next_below(4);
        std::swap(choices[0], choices[slot]);
        item.choices = choices;
        item.correct = slot;
        task.items.push_back(std::move(item));
    }
    return task;
}

inline mc_task make_induction_task(rng_stream rng, std::size_t n_items) {
    static const char pool[] = "abcdefghijklmnopqrstuvwxyz";
    mc_task task;
    task.name = "induction";
    task.baseline = 0.25;
    for (std::size_t i = 0; i < n_items; ++i) {
        const std::string w = detail::random_word(rng, 3, 5);
        // two full repetitions, third truncated mid-word
        const std::size_t cut = 1 + rng.next_below(w.size() - 1);
        mc_item item;
        item.prompt = w + " " + w + " " + w.substr(0, cut);
        auto choices = detail::distinct_choices(rng, w[cut], pool, 26, 4);
        const std::size_t slot = rng.next_below(4);
        std::swap(choices[0], choices[slot]);
        item.choices = choices;
        item.correct = slot;
        task.items.push_back(std::move(item));
    }
    return task;
}

inline mc_task make_arithmetic_task(rng_stream rng, std::size_t n_items) {
    static const char pool[] = "0123456789";
    mc_task task;
    task.name = "mod_arithmetic";
    task.baseline = 0.25;
    for (std::size_t i = 0; i < n_items; ++i) {
        const int a = static_cast<int>(rng.next_below(10));
        const int b = static_cast<int>(rng.next_below(10));
        const char correct = static_cast<char>('0' + (a + b) % 10);
        mc_item item;
        item.prompt = std::string() + static_cast<char>('0' + a) + "+" +
                      static_cast<char>('0' + b) + "=";
        auto choices = detail::distinct_choices(rng, correct, pool, 10, 4);
        const std::size_t slot = rng.next_below(4);
        std::swap(choices[0], choices[slot]);
        item.choices = choices;
        item.correct = slot;
        task.items.push_back(std::move(item));
    }
    return task;
}

inline std::vector<mc_task> gauntlet_lite(rng_stream rng, std::size_t items_per_task = 96) {
    return {make_copy_task(rng.split("copy"), items_per_task),
            make_induction_task(rng.split("induction"), items_per_task),
            make_arithmetic_task(rng.split("arith"), items_per_task)};
}

// ----------------------------------------------------------------------
// scoring: pick the choice with the highest summed next-byte log-likelihood
// ----------------------------------------------------------------------

inline double score_task(const checkpoint& ckpt, const mc_task& task) {
    std::vector<std::vector<int>> sequences;
    sequences.reserve(task.items.size() * 4);
    std::vector<std::size_t> prompt_lens;
    for (const auto& item : task.items) {
        for (const auto& choice : item.choices) {
            std::vector<int> seq;
            seq.reserve(item.prompt.size() + choice.size());
            for (const unsigned char c : item.prompt) seq.push_back(c);
            for (const unsigned char c : choice) seq.push_back(c);
            sequences.push_back(std::move(seq));
            prompt_lens.push_back(item.prompt.size());
        }
    }

    const auto fwd = forward(ckpt, sequences, /*want_tape=*/false);

    std::size_t correct = 0;
    std::size_t row0 = 0;
    std::size_t flat = 0;
    for (const auto& item : task.items) {
        double best = -1e300;
        std::size_t best_choice = 0;
        for (std::size_t c = 0; c < item.choices.size(); ++c, ++flat) {
            const auto& seq = sequences[flat];
            const std::size_t plen = prompt_lens[flat];
            double lp = 0.0;
            // logits at position p predict seq[p+1]
            for (std::size_t p = plen - 1; p + 1 < seq.size(); ++p) {
                const auto row = fwd.logits.row(row0 + p);
                double m = row[0];
                for (const float v : row) m = std::max<double>(m, v);
                double denom = 0.0;
                for (const float v : row) denom += std::exp(static_cast<double>(v) - m);
                lp += static_cast<double>(row[seq[p + 1]]) - m - std::log(denom);
            }
            if (lp > best) {
                best = lp;
                best_choice = c;
            }
            row0 += seq.size();
        }
        correct += (best_choice == item.correct) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(task.items.size());
}

struct eval_result {
    std::vector<std::string> task_names;
    std::vector<double> accuracies;
    std::vector<double> baselines;
    double core_avg = 0.0;
};

inline eval_result evaluate(const checkpoint& ckpt, const std::vector<mc_task>& tasks) {
    eval_result res;
    for (const auto& t : tasks) {
        res.task_names.push_back(t.name);
        res.accuracies.push_back(score_task(ckpt, t));
        res.baselines.push_back(t.baseline);
    }
    res.core_avg = core_average(res.accuracies, res.baselines);
    return res;
}

}  // namespace upcy
