#pragma once

// Deterministic synthetic byte corpora for desk-scale runs.
//
// Two mixes mirror the two training phases: a generic "web" mix for dense
// pretraining, and a "domain" mix for CPT/upcycling whose lines use the
// same formats as the evaluation tasks (copy, induction, modular
// arithmetic), so continued training produces measurable downstream
// movement.

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "upcy/core.hpp"

namespace upcy {

enum class corpus_kind { web, domain };

namespace detail {

inline const std::vector<std::string>& lexicon() {
    static const std::vector<std::string> words = {
        "the",    "model",  "train",  "data",   "token",  "layer",  "dense",  "sparse",
        "expert", "route",  "batch",  "loss",   "scale",  "weight", "learn",  "deep",
        "signal", "noise",  "graph",  "stream", "cache",  "stack",  "queue",  "value",
        "input",  "output", "state",  "logic",  "prime",  "field",  "space",  "curve",
        "optim",  "anneal", "warmup", "decay",  "tensor", "matrix", "vector", "scalar",
        "gather", "spread", "merge",  "phase",  "block",  "probe",  "trace",  "bound"};
    return words;
}

inline std::string random_word(rng_stream& rng, std::size_t lo = 3, std::size_t hi = 6) {
    const std::size_t n = lo + static_cast<std::size_t>(rng.next_below(hi - lo + 1));
    std::string s(n, 'a');
    for (auto& c : s) c = static_cast<char>('a' + rng.next_below(26));
    return s;
}

}  // namespace detail

// copy line:      "C:" word ">" word "\n"
// induction line:  word " " word " " word "\n"  (same word three times)
// arithmetic line: "a+b=c\n" with c = (a+b) mod 10
inline std::string copy_line(rng_stream& rng) {
    const std::string w = detail::random_word(rng, 4, 7);
    return "C:" + w + ">" + w + "\n";
}

inline std::string induction_line(rng_stream& rng) {
    const std::string w = detail::random_word(rng, 3, 5);
    return w + " " + w + " " + w + "\n";
}

inline std::string arithmetic_line(rng_stream& rng) {
    const int a = static_cast<int>(rng.next_below(10));
    const int b = static_cast<int>(rng.next_below(10));
    const int c = (a + b) % 10;
    std::string s;
    s += static_cast<char>('0' + a);
    s += '+';
    s += static_cast<char>('0' + b);
    s += '=';
    s += static_cast<char>('0' + c);
    s += '\n';
    return s;
}

inline std::string web_line(rng_stream& rng) {
    const auto& words = detail::lexicon();
    const std::size_t n = 4 + static_cast<std::size_t>(rng.next_below(7));
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) s += ' ';
        s += words[rng.next_below(words.size())];
    }
    s += ".\n";
    return s;
}

// Pure function of (kind, rng.seed): the emitted byte sequence never
// depends on read chunking.
class byte_corpus {
public:
    byte_corpus(corpus_kind kind, rng_stream rng) : kind_(kind), rng_(rng) {}

    int next() {
        if (buffer_.empty()) refill();
        const int b = static_cast<unsigned char>(buffer_.front());
        buffer_.pop_front();
        return b;
    }

    std::function<int()> as_stream() {
        return [this] { return next(); };
    }

private:
    void refill() {
        std::string line;
        if (kind_ == corpus_kind::web) {
            line = web_line(rng_);
        } else {
            // domain mix: 35% arithmetic, 30% copy, 20% induction, 15% web
            const std::uint64_t pick = rng_.next_below(100);
            if (pick < 35) {
                line = arithmetic_line(rng_);
            } else if (pick < 65) {
                line = copy_line(rng_);
            } else if (pick < 85) {
                line = induction_line(rng_);
            } else {
                line = web_line(rng_);
            }
        }
        buffer_.insert(buffer_.end(), line.begin(), line.end());
    }

    corpus_kind kind_;
    rng_stream rng_;
    std::deque<char> buffer_;
};

}  // namespace upcy
