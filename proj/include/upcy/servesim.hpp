#pragma once

// Discrete-event inference simulator: Poisson arrivals swept over request
// rates, continuous batching at step granularity with FIFO admission,
// roofline step costs, and a memory-capacity bound on concurrent requests.
//
// Cost model. A step processing P prefill tokens while D sequences decode
// costs max(compute, memory):
//   compute = (P * prefill_flops + D * decode_flops) / (peak * mfu * tp)
//   memory  = (active_weight_bytes + D * kv_bytes_per_token) / (bw * mbu * tp)
// Attention's cache reads are carried in the FLOP terms (which include the
// 4 * L * d * context score term); the memory term models weight streaming
// plus the per-token KV append, which is what the D=1 decode limit
// (time ~ active weights / effective bandwidth) reflects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <json.hpp>

#include "upcy/budget.hpp"
#include "upcy/config.hpp"
#include "upcy/core.hpp"

namespace upcy {

// ----------------------------------------------------------------------
// inputs
// ----------------------------------------------------------------------

struct hardware_profile {
    double peak_matmul_flops = 989e12;  // per device
    double hbm_bandwidth = 3.35e12;     // bytes/s per device
    double hbm_capacity = 80e9;         // bytes per device
    std::size_t n_devices = 1;
    std::size_t tensor_parallel = 1;
    double mfu_prefill = 0.5;   // calibration knob, not a measured fact
    double mbu_decode = 0.6;    // calibration knob, not a measured fact
    double memory_util = 0.9;   // fraction of capacity usable

    void validate() const {
        if (n_devices == 0 || tensor_parallel == 0 || n_devices % tensor_parallel != 0) {
            throw config_error("hardware_profile: tensor_parallel must divide n_devices");
        }
        auto frac = [](double f) { return f > 0.0 && f <= 1.0; };
        if (!frac(mfu_prefill) || !frac(mbu_decode) || !frac(memory_util)) {
            throw config_error("hardware_profile: efficiency fractions must be in (0, 1]");
        }
        if (peak_matmul_flops <= 0 || hbm_bandwidth <= 0 || hbm_capacity <= 0) {
            throw config_error("hardware_profile: rates and capacity must be positive");
        }
    }
};

inline hardware_profile h100_preset(std::size_t n_devices = 1, std::size_t tensor_parallel = 1) {
    hardware_profile p;
    p.n_devices = n_devices;
    p.tensor_parallel = tensor_parallel;
    return p;
}

struct workload_spec {
    std::size_t input_tokens = 3500;
    std::size_t output_tokens = 300;
    double rps_start = 0.1;
    double rps_stop = 2.0;
    double rps_step = 0.1;
    std::size_t n_trials = 5;
    double trial_duration = 10.0;  // simulated seconds of arrivals
    std::uint64_t seed = 0;

    void validate() const {
        if (input_tokens == 0 || output_tokens == 0) {
            throw config_error("workload_spec: token counts must be > 0");
        }
        if (rps_step <= 0 || rps_start <= 0 || rps_stop < rps_start) {
            throw config_error("workload_spec: bad rps sweep range");
        }
        if (n_trials == 0 || trial_duration <= 0) {
            throw config_error("workload_spec: trials and duration must be positive");
        }
    }

    std::size_t request_tokens() const { return input_tokens + output_tokens; }
};

struct serving_model_spec {
    std::string name;
    double weight_bytes = 0;         // total parameters * precision
    double active_weight_bytes = 0;  // active parameters * precision
    double kv_bytes_per_token = 0;
    double prefill_flops_per_token = 0;
    double decode_flops_per_token = 0;
    double decode_bytes_per_token = 0;  // single-request decode traffic per token
    std::size_t top_k = 0;              // 0 for dense
};

// precision default 2 bytes (fp16-class serving); the context convention
// for the FLOP terms comes from the workload (prefill at input length,
// decode at the mean context input + output/2)
inline serving_model_spec model_footprint(const model_config& cfg, std::size_t top_k,
                                          std::size_t weight_precision_bytes = 2,
                                          const workload_spec& wl = {}) {
    cfg.validate();
    model_config run_cfg = cfg;
    if (cfg.moe) {
        if (top_k == 0) throw config_error("model_footprint: MoE model needs top_k >= 1");
        run_cfg.moe->top_k = top_k;
    }

    const param_counts counts = count_params(run_cfg);
    serving_model_spec spec;
    spec.top_k = cfg.moe ? top_k : 0;
    spec.weight_bytes = static_cast<double>(counts.total) * weight_precision_bytes;
    spec.active_weight_bytes = static_cast<double>(counts.active) * weight_precision_bytes;
    spec.kv_bytes_per_token = 2.0 * static_cast<double>(cfg.n_layers) * cfg.n_kv_heads *
                              cfg.head_dim() * weight_precision_bytes;
    spec.prefill_flops_per_token = flops_per_token(run_cfg, wl.input_tokens, flop_phase::infer);
    const std::size_t decode_ctx = wl.input_tokens + wl.output_tokens / 2;
    spec.decode_flops_per_token = flops_per_token(run_cfg, decode_ctx, flop_phase::infer);
    spec.decode_bytes_per_token = spec.active_weight_bytes + spec.kv_bytes_per_token;
    return spec;
}

// ----------------------------------------------------------------------
// capacity and step cost
// ----------------------------------------------------------------------

inline std::size_t max_batch_from_memory(const hardware_profile& hw,
                                         const serving_model_spec& spec, std::size_t seq_len) {
    hw.validate();
    const double usable = hw.memory_util * hw.hbm_capacity * hw.tensor_parallel;
    if (spec.weight_bytes / hw.tensor_parallel >= hw.memory_util * hw.hbm_capacity) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "weights need %.2f GB/device but only %.2f GB usable per device",
                      spec.weight_bytes / hw.tensor_parallel / 1e9,
                      hw.memory_util * hw.hbm_capacity / 1e9);
        throw capacity_error(buf);
    }
    const double kv_per_request = spec.kv_bytes_per_token * static_cast<double>(seq_len);
    return static_cast<std::size_t>((usable - spec.weight_bytes) / kv_per_request);
}

inline double step_time(double prefill_tokens, double decode_seqs,
                        const serving_model_spec& spec, const hardware_profile& hw) {
    const double tp = static_cast<double>(hw.tensor_parallel);
    const double compute = (prefill_tokens * spec.prefill_flops_per_token +
                            decode_seqs * spec.decode_flops_per_token) /
                           (hw.peak_matmul_flops * hw.mfu_prefill * tp);
    const double memory = (spec.active_weight_bytes + decode_seqs * spec.kv_bytes_per_token) /
                          (hw.hbm_bandwidth * hw.mbu_decode * tp);
    return std::max(compute, memory);
}

// ----------------------------------------------------------------------
// event loop
// ----------------------------------------------------------------------

struct sim_result {
    std::size_t completed_requests = 0;
    double completed_tokens = 0;
    double elapsed = 0;       // arrival of first request to last completion
    double throughput = 0;    // (input + output tokens completed) / elapsed
    double mean_latency = 0;
    double p50_latency = 0;
    double p99_latency = 0;
    bool conservation_ok = true;  // arrivals == completed + in flight + queued, every step
};

// Fixed request rate, arrivals over [0, trial_duration), run to drain.
// Requests join at step boundaries (FIFO, bounded by the memory-derived
// batch limit), spend one step prefilling, then output_tokens decode steps.
inline sim_result simulate(double rps, const workload_spec& wl, const serving_model_spec& spec,
                           const hardware_profile& hw, rng_stream rng) {
    wl.validate();
    if (rps <= 0) throw config_error("simulate: rps must be > 0");
    const std::size_t max_batch = max_batch_from_memory(hw, spec, wl.request_tokens());
    if (max_batch == 0) {
        throw capacity_error("simulate: memory bound admits zero concurrent requests");
    }

    // Poisson arrivals; the uniform draws are rate-independent so sweeps
    // with a shared seed are pathwise coupled across rps points
    std::vector<double> arrivals;
    double t = 0.0;
    for (;;) {
        t += -std::log(1.0 - rng.next_unit()) / rps;
        if (t >= wl.trial_duration) break;
        arrivals.push_back(t);
    }
    sim_result res;
    if (arrivals.empty()) return res;

    struct cohort {
        std::size_t first_arrival = 0;  // index range into arrivals
        std::size_t n = 0;
        std::uint64_t complete_step = 0;
    };

    std::deque<cohort> decoding;        // FIFO by admission
    cohort prefilling{};                // cohort admitted this step (n = 0 if none)
    std::size_t next_arrival = 0;       // arrivals consumed into the queue
    std::size_t queue_head = 0;         // queued = next_arrival - queue_head
    std::size_t in_flight = 0;
    std::size_t decode_seqs = 0;
    std::size_t completed = 0;
    std::uint64_t step = 0;
    double clock = 0.0;
    std::vector<double> latencies;
    latencies.reserve(arrivals.size());

    while (completed < arrivals.size()) {
        while (next_arrival < arrivals.size() && arrivals[next_arrival] <= clock) ++next_arrival;
        const std::size_t queued = next_arrival - queue_head;
        if (queued == 0 && in_flight == 0) {
            clock = arrivals[next_arrival];  // idle: jump to the next arrival
            continue;
        }

        // flow conservation, checked before every step:
        // completed + in-flight + queued = arrivals so far
        if (completed + in_flight + queued != next_arrival) {
            res.conservation_ok = false;
        }

        const std::size_t admit = std::min(queued, max_batch - in_flight);
        prefilling = {};
        if (admit > 0) {
            prefilling = {queue_head, admit, 0};
            queue_head += admit;
            in_flight += admit;
        }

        const double dt = step_time(static_cast<double>(admit * wl.input_tokens),
                                    static_cast<double>(decode_seqs), spec, hw);
        clock += dt;
        ++step;

        // completions: each cohort decodes for output_tokens steps after its
        // prefill step, all in lockstep, so the front finishes first
        while (!decoding.empty() && decoding.front().complete_step == step) {
            const cohort& c = decoding.front();
            for (std::size_t i = 0; i < c.n; ++i) {
                latencies.push_back(clock - arrivals[c.first_arrival + i]);
            }
            completed += c.n;
            in_flight -= c.n;
            decode_seqs -= c.n;
            decoding.pop_front();
        }

        if (prefilling.n > 0) {
            prefilling.complete_step = step + wl.output_tokens;
            decode_seqs += prefilling.n;
            decoding.push_back(prefilling);
        }
    }

    res.completed_requests = completed;
    res.completed_tokens =
        static_cast<double>(completed) * static_cast<double>(wl.request_tokens());
    res.elapsed = clock - arrivals.front();
    res.throughput = res.elapsed > 0 ? res.completed_tokens / res.elapsed : 0.0;
    double acc = 0.0;
    for (const double l : latencies) acc += l;
    res.mean_latency = acc / static_cast<double>(latencies.size());
    std::sort(latencies.begin(), latencies.end());
    auto pct = [&](double q) {
        const std::size_t idx = static_cast<std::size_t>(
            std::ceil(q * static_cast<double>(latencies.size()))) - 1;
        return latencies[std::min(idx, latencies.size() - 1)];
    };
    res.p50_latency = pct(0.50);
    res.p99_latency = pct(0.99);
    return res;
}

// ----------------------------------------------------------------------
// sweep
// ----------------------------------------------------------------------

struct sweep_point {
    double rps = 0;
    double mean_latency = 0, p50_latency = 0, p99_latency = 0;
    double throughput = 0;
    bool conservation_ok = true;
};

struct sweep_result {
    std::string model_name;
    std::vector<sweep_point> points;
    double max_throughput = 0;
    double saturation_rps = 0;  // first rps within 1% of max throughput
};

// Runs n_trials seeds per rps step and averages; trial seeds are shared
// across rps points so latency curves are pathwise coupled.
inline sweep_result sweep_rps(const workload_spec& wl, const serving_model_spec& spec,
                              const hardware_profile& hw) {
    wl.validate();
    hw.validate();
    sweep_result out;
    out.model_name = spec.name;
    const rng_stream base{wl.seed, 0};
    const std::size_t n_points =
        static_cast<std::size_t>(std::floor((wl.rps_stop - wl.rps_start) / wl.rps_step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n_points; ++i) {
        const double rps = wl.rps_start + static_cast<double>(i) * wl.rps_step;
        sweep_point pt;
        pt.rps = rps;
        for (std::size_t trial = 0; trial < wl.n_trials; ++trial) {
            const sim_result r = simulate(rps, wl, spec, hw, base.split(trial));
            pt.mean_latency += r.mean_latency;
            pt.p50_latency += r.p50_latency;
            pt.p99_latency += r.p99_latency;
            pt.throughput += r.throughput;
            pt.conservation_ok = pt.conservation_ok && r.conservation_ok;
        }
        const double inv = 1.0 / static_cast<double>(wl.n_trials);
        pt.mean_latency *= inv;
        pt.p50_latency *= inv;
        pt.p99_latency *= inv;
        pt.throughput *= inv;
        out.points.push_back(pt);
    }
    for (const auto& p : out.points) out.max_throughput = std::max(out.max_throughput, p.throughput);
    for (const auto& p : out.points) {
        if (p.throughput >= 0.99 * out.max_throughput) {
            out.saturation_rps = p.rps;
            break;
        }
    }
    return out;
}

inline double pct_decrease(double baseline_max, double moe_max) {
    return 100.0 * (baseline_max - moe_max) / baseline_max;
}

// rough saturation estimate used to center sweep windows
inline double estimate_saturation_rps(const workload_spec& wl, const serving_model_spec& spec,
                                      const hardware_profile& hw) {
    const std::size_t B = max_batch_from_memory(hw, spec, wl.request_tokens());
    const double steps_per_req = static_cast<double>(wl.output_tokens) + 1.0;
    const double pbar = static_cast<double>(B) * wl.input_tokens / steps_per_req;
    const double dbar = static_cast<double>(B) * wl.output_tokens / steps_per_req;
    const double dt = step_time(pbar, dbar, spec, hw);
    const double tokens_per_s = static_cast<double>(B) * wl.request_tokens() / (steps_per_req * dt);
    return tokens_per_s / static_cast<double>(wl.request_tokens());
}

// ----------------------------------------------------------------------
// JSON
// ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const hardware_profile& p) {
    j = nlohmann::json{{"peak_matmul_flops", p.peak_matmul_flops},
                       {"hbm_bandwidth", p.hbm_bandwidth},
                       {"hbm_capacity", p.hbm_capacity},
                       {"n_devices", p.n_devices},
                       {"tensor_parallel", p.tensor_parallel},
                       {"mfu_prefill", p.mfu_prefill},
                       {"mbu_decode", p.mbu_decode},
                       {"memory_util", p.memory_util}};
}

inline void from_json(const nlohmann::json& j, hardware_profile& p) {
    hardware_profile d;
    p.peak_matmul_flops = j.value("peak_matmul_flops", d.peak_matmul_flops);
    p.hbm_bandwidth = j.value("hbm_bandwidth", d.hbm_bandwidth);
    p.hbm_capacity = j.value("hbm_capacity", d.hbm_capacity);
    p.n_devices = j.value("n_devices", d.n_devices);
    p.tensor_parallel = j.value("tensor_parallel", d.tensor_parallel);
    p.mfu_prefill = j.value("mfu_prefill", d.mfu_prefill);
    p.mbu_decode = j.value("mbu_decode", d.mbu_decode);
    p.memory_util = j.value("memory_util", d.memory_util);
}

inline void to_json(nlohmann::json& j, const workload_spec& w) {
    j = nlohmann::json{{"input_tokens", w.input_tokens},
                       {"output_tokens", w.output_tokens},
                       {"rps_start", w.rps_start},
                       {"rps_stop", w.rps_stop},
                       {"rps_step", w.rps_step},
                       {"n_trials", w.n_trials},
                       {"trial_duration", w.trial_duration},
                       {"seed", w.seed}};
}

inline void from_json(const nlohmann::json& j, workload_spec& w) {
    workload_spec d;
    w.input_tokens = j.value("input_tokens", d.input_tokens);
    w.output_tokens = j.value("output_tokens", d.output_tokens);
    w.rps_start = j.value("rps_start", d.rps_start);
    w.rps_stop = j.value("rps_stop", d.rps_stop);
    w.rps_step = j.value("rps_step", d.rps_step);
    w.n_trials = j.value("n_trials", d.n_trials);
    w.trial_duration = j.value("trial_duration", d.trial_duration);
    w.seed = j.value("seed", d.seed);
}

}  // namespace upcy
