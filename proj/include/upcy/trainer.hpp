#pragma once

// Deterministic training loop: Lion optimizer, linear-warmup + cosine-decay
// schedule annealing fully to zero, auxiliary load-balance loss for MoE
// models, milestone checkpointing, and the evaluation scoring math
// (smoothed final loss, baseline-normalized core average, relative
// improvement).

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "upcy/checkpoint.hpp"
#include "upcy/core.hpp"
#include "upcy/kernels.hpp"
#include "upcy/model.hpp"

namespace upcy {

enum class train_phase { pretrain, cpt, upcycle_cpt };

inline const char* to_string(train_phase p) {
    switch (p) {
        case train_phase::pretrain: return "pretrain";
        case train_phase::cpt: return "cpt";
        case train_phase::upcycle_cpt: return "upcycle_cpt";
    }
    return "?";
}

struct train_plan {
    train_phase phase = train_phase::pretrain;
    double peak_lr = 1e-3;
    double weight_decay = 0.05;
    std::size_t batch_size = 16;
    std::size_t seq_len = 64;
    std::uint64_t warmup_tokens = 0;
    std::uint64_t total_tokens = 0;
    double lb_coeff = 0.01;  // used only when the model is MoE
    std::uint64_t seed = 0;
    std::size_t log_every = 10;  // steps
    std::vector<std::uint64_t> milestones;  // token counts for checkpoint snapshots

    void validate() const {
        if (total_tokens == 0) throw config_error("train_plan: total_tokens must be > 0");
        if (warmup_tokens >= total_tokens) {
            throw config_error("train_plan: warmup_tokens must be < total_tokens");
        }
        if (batch_size == 0 || seq_len == 0) {
            throw config_error("train_plan: batch_size and seq_len must be > 0");
        }
        if (peak_lr <= 0) throw config_error("train_plan: peak_lr must be > 0");
    }
};

// linear warmup from 0 to peak, then cosine decay from peak to exactly 0
inline double cosine_lr(std::uint64_t tokens_seen, const train_plan& plan) {
    if (tokens_seen > plan.total_tokens) {
        throw config_error("cosine_lr: tokens_seen beyond total_tokens");
    }
    if (plan.warmup_tokens > 0 && tokens_seen < plan.warmup_tokens) {
        return plan.peak_lr * static_cast<double>(tokens_seen) /
               static_cast<double>(plan.warmup_tokens);
    }
    const double span = static_cast<double>(plan.total_tokens - plan.warmup_tokens);
    const double t = static_cast<double>(tokens_seen - plan.warmup_tokens) / span;
    return plan.peak_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
}

// ----------------------------------------------------------------------
// Lion: update = -lr * (sign(b1*m + (1-b1)*g) + wd*w); m <- b2*m + (1-b2)*g
// ----------------------------------------------------------------------

inline void lion_step(tensor& w, const tensor& g, tensor& m, double lr, double weight_decay,
                      double beta1 = 0.9, double beta2 = 0.99) {
    if (!w.same_shape(g) || !w.same_shape(m)) throw shape_error("lion_step: shape mismatch");
    if (!g.all_finite()) throw numeric_error("lion_step: non-finite gradient");
    float* pw = w.data();
    const float* pg = g.data();
    float* pm = m.data();
    const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    const float flr = static_cast<float>(lr), fwd = static_cast<float>(weight_decay);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const float u = b1 * pm[i] + (1.0f - b1) * pg[i];
        const float s = (u > 0.0f) ? 1.0f : (u < 0.0f ? -1.0f : 0.0f);
        pw[i] -= flr * (s + fwd * pw[i]);
        pm[i] = b2 * pm[i] + (1.0f - b2) * pg[i];
    }
}

// ----------------------------------------------------------------------
// metrics
// ----------------------------------------------------------------------

struct metrics_row {
    std::uint64_t tokens = 0;
    double lr = 0;
    double ce = 0;
    double aux = 0;  // mean per-layer balance loss (0 for dense)
    std::vector<double> layer_balance;            // per layer
    std::vector<std::vector<double>> layer_f;     // per layer, per expert dispatch fraction
    std::vector<std::vector<double>> layer_p;     // per layer, per expert mean probability
};

struct run_metrics {
    std::vector<metrics_row> rows;
    bool diverged = false;
    std::uint64_t tokens_completed = 0;

    std::vector<double> ce_curve() const {
        std::vector<double> c;
        c.reserve(rows.size());
        for (const auto& r : rows) c.push_back(r.ce);
        return c;
    }
};

// arithmetic mean of the last 50 logged values
inline double smoothed_final_loss(std::span<const double> curve) {
    if (curve.size() < 50) {
        throw length_error("smoothed_final_loss: needs at least 50 logged steps");
    }
    double acc = 0.0;
    for (std::size_t i = curve.size() - 50; i < curve.size(); ++i) acc += curve[i];
    return acc / 50.0;
}

// mean over tasks of (acc - baseline) / (1 - baseline)
inline double core_average(std::span<const double> accuracy, std::span<const double> baseline) {
    if (accuracy.size() != baseline.size() || accuracy.empty()) {
        throw shape_error("core_average: accuracy/baseline lists must match and be non-empty");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < accuracy.size(); ++i) {
        if (baseline[i] < 0.0 || baseline[i] >= 1.0) {
            throw std::domain_error("core_average: baseline must be in [0, 1)");
        }
        acc += (accuracy[i] - baseline[i]) / (1.0 - baseline[i]);
    }
    return acc / static_cast<double>(accuracy.size());
}

inline double relative_improvement(double upcycled_score, double cpt_score) {
    if (cpt_score == 0.0) {
        throw std::domain_error("relative_improvement: cpt score is zero");
    }
    return (upcycled_score - cpt_score) / cpt_score;
}

// ----------------------------------------------------------------------
// training loop
// ----------------------------------------------------------------------

using milestone_sink = std::function<void(const checkpoint&, std::uint64_t tokens)>;

struct train_result {
    checkpoint ckpt;
    run_metrics metrics;
};

// Deterministic given (start, corpus, plan): batches are drawn from the
// stream in a fixed order and every kernel has a pinned reduction order.
// On divergence (non-finite loss/activation) the run aborts and returns
// the last logged snapshot with diverged = true.
inline train_result train_run(const checkpoint& start, const std::function<int()>& next_token,
                              const train_plan& plan, const milestone_sink& on_milestone = {}) {
    plan.validate();
    start.validate();
    const model_config& cfg = start.config;
    const bool moe = cfg.is_moe();
    const double lb = moe ? plan.lb_coeff : 0.0;
    const double aux_scale = moe ? lb / static_cast<double>(cfg.n_layers) : 0.0;

    checkpoint ckpt = start;
    checkpoint last_logged = start;
    named_tensors<float> momentum = zero_grads<float>(cfg);

    run_metrics metrics;
    const std::uint64_t tokens_per_step =
        static_cast<std::uint64_t>(plan.batch_size) * plan.seq_len;
    const std::uint64_t n_steps = (plan.total_tokens + tokens_per_step - 1) / tokens_per_step;

    std::vector<std::uint64_t> milestones = plan.milestones;
    std::sort(milestones.begin(), milestones.end());

    std::uint64_t tokens_seen = 0;
    std::size_t next_milestone = 0;

    std::vector<std::vector<int>> inputs(plan.batch_size, std::vector<int>(plan.seq_len));
    std::vector<int> targets(plan.batch_size * plan.seq_len);

    for (std::uint64_t step = 0; step < n_steps; ++step) {
        // non-overlapping windows of seq_len+1 bytes per sequence
        for (std::size_t b = 0; b < plan.batch_size; ++b) {
            int prev = next_token();
            for (std::size_t s = 0; s < plan.seq_len; ++s) {
                const int nxt = next_token();
                inputs[b][s] = prev;
                targets[b * plan.seq_len + s] = nxt;
                prev = nxt;
            }
        }

        const std::uint64_t tokens_after =
            std::min<std::uint64_t>(tokens_seen + tokens_per_step, plan.total_tokens);
        // schedule sampled at the step midpoint so neither the first nor the
        // fully-annealed last step degenerates to lr = 0
        const double lr = cosine_lr((tokens_seen + tokens_after) / 2, plan);

        double ce = 0.0, aux = 0.0;
        forward_result<float> fwd;
        try {
            fwd = forward(ckpt, inputs, /*want_tape=*/true);
            ce = cross_entropy(fwd.logits, targets);
            aux = fwd.mean_balance_loss;
        } catch (const numeric_error&) {
            metrics.diverged = true;
            metrics.tokens_completed = tokens_seen;
            return {last_logged, metrics};
        }
        const double loss = ce + lb * aux;
        if (!std::isfinite(loss)) {
            metrics.diverged = true;
            metrics.tokens_completed = tokens_seen;
            return {last_logged, metrics};
        }

        auto dlogits = cross_entropy_grad(fwd.logits, targets);
        named_tensors<float> grads = backward(ckpt, fwd.tape, dlogits, aux_scale);

        for (auto& [name, w] : ckpt.tensors) {
            const bool no_decay = name.find("norm") != std::string::npos ||
                                  name == schema::tok_embed || name == schema::lm_head;
            lion_step(w, grads.at(name), momentum.at(name), lr,
                      no_decay ? 0.0 : plan.weight_decay);
        }

        tokens_seen = tokens_after;
        ckpt.meta.tokens_trained = start.meta.tokens_trained + tokens_seen;

        while (next_milestone < milestones.size() && tokens_seen >= milestones[next_milestone]) {
            if (on_milestone) on_milestone(ckpt, milestones[next_milestone]);
            ++next_milestone;
        }

        if ((step + 1) % plan.log_every == 0 || step + 1 == n_steps) {
            metrics_row row;
            row.tokens = tokens_seen;
            row.lr = lr;
            row.ce = ce;
            row.aux = aux;
            if (moe) {
                for (const auto& st : fwd.moe_stats) {
                    row.layer_balance.push_back(st.balance_loss);
                    row.layer_f.push_back(st.dispatch_fraction);
                    row.layer_p.push_back(st.mean_prob);
                }
            }
            metrics.rows.push_back(std::move(row));
            last_logged = ckpt;
        }
    }

    metrics.tokens_completed = tokens_seen;
    return {ckpt, metrics};
}

}  // namespace upcy
