#pragma once

// Experiment manifests: named stages over the pipeline operations, executed
// in dependency order (file-producer before file-consumer) with cycle
// detection up front. Every artifact lands under the manifest's output
// directory; re-running an identical manifest reproduces identical bytes.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "upcy/budget.hpp"
#include "upcy/checkpoint.hpp"
#include "upcy/config.hpp"
#include "upcy/core.hpp"
#include "upcy/corpus.hpp"
#include "upcy/evalsuite.hpp"
#include "upcy/model.hpp"
#include "upcy/report.hpp"
#include "upcy/servesim.hpp"
#include "upcy/surgeon.hpp"
#include "upcy/trainer.hpp"

namespace upcy {

struct manifest_stage {
    std::string name;
    std::string kind;  // pretrain | cpt | upcycle | plan_budget | eval | bench_sim | report
    nlohmann::json params;
};

struct experiment_manifest {
    std::uint64_t seed = 0;
    std::string output_dir;
    std::vector<manifest_stage> stages;
};

inline experiment_manifest manifest_from_json(const nlohmann::json& j) {
    experiment_manifest m;
    if (!j.is_object()) throw config_error("manifest: root must be an object (at /)");
    if (!j.contains("output_dir") || !j.at("output_dir").is_string()) {
        throw config_error("manifest: missing string field (at /output_dir)");
    }
    m.output_dir = j.at("output_dir").get<std::string>();
    m.seed = j.value("seed", 0ull);
    const auto stages = j.value("stages", nlohmann::json::array());
    if (!stages.is_array()) throw config_error("manifest: stages must be an array (at /stages)");
    static const std::set<std::string> kinds = {"pretrain", "cpt",       "upcycle", "plan_budget",
                                                "eval",     "bench_sim", "report"};
    std::set<std::string> seen;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string at = "/stages/" + std::to_string(i);
        const auto& js = stages[i];
        manifest_stage st;
        if (!js.contains("name") || !js.at("name").is_string()) {
            throw config_error("manifest: missing stage name (at " + at + "/name)");
        }
        st.name = js.at("name").get<std::string>();
        if (!seen.insert(st.name).second) {
            throw config_error("manifest: duplicate stage name '" + st.name + "' (at " + at + ")");
        }
        if (!js.contains("kind") || !js.at("kind").is_string() ||
            !kinds.count(js.at("kind").get<std::string>())) {
            throw config_error("manifest: unknown stage kind (at " + at + "/kind)");
        }
        st.kind = js.at("kind").get<std::string>();
        st.params = js;
        m.stages.push_back(std::move(st));
    }
    return m;
}

// ----------------------------------------------------------------------
// produced / consumed paths per stage (for DAG ordering)
// ----------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> strings_at(const nlohmann::json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    const auto& v = j.at(key);
    if (v.is_string()) {
        out.push_back(v.get<std::string>());
    } else if (v.is_array()) {
        for (const auto& e : v) {
            if (e.is_string()) out.push_back(e.get<std::string>());
        }
    }
    return out;
}

inline void stage_io(const manifest_stage& st, std::vector<std::string>& consumed,
                     std::vector<std::string>& produced) {
    const auto& p = st.params;
    auto add = [](std::vector<std::string>& v, const std::vector<std::string>& more) {
        v.insert(v.end(), more.begin(), more.end());
    };
    if (st.kind == "pretrain" || st.kind == "cpt") {
        add(consumed, strings_at(p, "in_checkpoint"));
        add(produced, strings_at(p, "out_checkpoint"));
        add(produced, strings_at(p, "out_metrics"));
        if (p.contains("milestones") && p.contains("milestone_prefix")) {
            for (const auto& m : p.at("milestones")) {
                produced.push_back(p.at("milestone_prefix").get<std::string>() + "_m" +
                                   std::to_string(m.get<std::uint64_t>()) + ".upcy");
            }
        }
    } else if (st.kind == "upcycle") {
        add(consumed, strings_at(p, "in_checkpoint"));
        add(produced, strings_at(p, "out_checkpoint"));
    } else if (st.kind == "plan_budget") {
        add(produced, strings_at(p, "out_plan"));
    } else if (st.kind == "eval") {
        if (p.contains("checkpoints")) {
            for (const auto& c : p.at("checkpoints")) consumed.push_back(c.at("path"));
        }
        add(produced, strings_at(p, "out_csv"));
    } else if (st.kind == "bench_sim") {
        const std::string prefix = p.value("out_prefix", std::string("bench"));
        produced.push_back(prefix + "_model.csv");
        produced.push_back(prefix + "_baseline.csv");
        produced.push_back(prefix + "_summary.json");
        produced.push_back(prefix + ".svg");
    } else if (st.kind == "report") {
        if (p.contains("ce_curves")) {
            for (const auto& c : p.at("ce_curves")) consumed.push_back(c.at("metrics_csv"));
        }
        if (p.contains("relative")) {
            consumed.push_back(p.at("relative").at("cpt_eval"));
            consumed.push_back(p.at("relative").at("upcycled_eval"));
        }
        if (p.contains("figure2")) {
            for (const auto& r : p.at("figure2").at("rows")) consumed.push_back(r.at("sweep_csv"));
        }
        const std::string prefix = p.value("out_prefix", std::string("report"));
        produced.push_back(prefix + "_ce_curves.svg");
        produced.push_back(prefix + "_relative.csv");
        produced.push_back(prefix + "_relative.svg");
        produced.push_back(prefix + "_throughput.csv");
        produced.push_back(prefix + "_latency_throughput.svg");
    }
}

}  // namespace detail

// Kahn topological order over produced -> consumed file edges; original
// order breaks ties. Throws config_error on cycles or duplicate producers.
inline std::vector<std::size_t> stage_execution_order(const experiment_manifest& m) {
    const std::size_t n = m.stages.size();
    std::map<std::string, std::size_t> producer;
    std::vector<std::vector<std::string>> consumed(n), produced(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::stage_io(m.stages[i], consumed[i], produced[i]);
        for (const auto& path : produced[i]) {
            if (producer.count(path)) {
                throw config_error("manifest: file '" + path + "' produced by two stages (at /stages/" +
                                   std::to_string(i) + ")");
            }
            producer[path] = i;
        }
    }
    std::vector<std::set<std::size_t>> deps(n);
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> dependents(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& path : consumed[i]) {
            const auto it = producer.find(path);
            if (it != producer.end() && it->second != i && deps[i].insert(it->second).second) {
                dependents[it->second].push_back(i);
                ++indegree[i];
            }
        }
    }
    std::vector<std::size_t> ready, order;
    for (std::size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) ready.push_back(i);
    }
    while (!ready.empty()) {
        std::sort(ready.begin(), ready.end());
        const std::size_t i = ready.front();
        ready.erase(ready.begin());
        order.push_back(i);
        for (const std::size_t d : dependents[i]) {
            if (--indegree[d] == 0) ready.push_back(d);
        }
    }
    if (order.size() != n) {
        throw config_error("manifest: cyclic stage references (at /stages)");
    }
    return order;
}

// ----------------------------------------------------------------------
// stage executors
// ----------------------------------------------------------------------

namespace detail {

inline std::string joined(const std::string& dir, const std::string& rel) {
    return (std::filesystem::path(dir) / rel).string();
}

inline train_plan plan_from_json(const nlohmann::json& p, std::uint64_t stage_seed) {
    train_plan plan;
    plan.peak_lr = p.value("peak_lr", 1e-3);
    plan.weight_decay = p.value("weight_decay", 0.05);
    plan.batch_size = p.value("batch_size", std::size_t{16});
    plan.seq_len = p.value("seq_len", std::size_t{64});
    plan.warmup_tokens = p.value("warmup_tokens", std::uint64_t{0});
    plan.total_tokens = p.at("total_tokens").get<std::uint64_t>();
    plan.lb_coeff = p.value("lb_coeff", 0.01);
    plan.log_every = p.value("log_every", std::size_t{10});
    plan.seed = stage_seed;
    if (p.contains("milestones")) {
        plan.milestones = p.at("milestones").get<std::vector<std::uint64_t>>();
    }
    return plan;
}

inline void execute_train(const manifest_stage& st, const std::string& dir,
                          std::uint64_t global_seed) {
    const auto& p = st.params;
    const std::uint64_t stage_seed = mix64(global_seed, fnv1a64("stage:" + st.name));
    train_plan plan = plan_from_json(p, stage_seed);

    checkpoint start;
    if (st.kind == "pretrain") {
        plan.phase = train_phase::pretrain;
        const model_config cfg = p.at("config").get<model_config>();
        start = init_dense(cfg, rng_stream{stage_seed, 0}.split("init"));
    } else {
        const std::string in = joined(dir, p.at("in_checkpoint").get<std::string>());
        start = read_checkpoint(in);
        plan.phase = start.config.is_moe() ? train_phase::upcycle_cpt : train_phase::cpt;
        if (start.config.is_moe()) plan.lb_coeff = start.config.moe->load_balance_coeff;
    }

    const std::string corpus_name =
        p.value("corpus", st.kind == "pretrain" ? std::string("web") : std::string("domain"));
    const corpus_kind ck = corpus_name == "web" ? corpus_kind::web : corpus_kind::domain;
    byte_corpus corpus(ck, rng_stream{plan.seed, 0}.split("corpus"));

    milestone_sink sink;
    std::string milestone_prefix;
    if (p.contains("milestone_prefix")) {
        milestone_prefix = joined(dir, p.at("milestone_prefix").get<std::string>());
        sink = [&](const checkpoint& c, std::uint64_t tokens) {
            write_checkpoint(c, milestone_prefix + "_m" + std::to_string(tokens) + ".upcy");
        };
    }

    auto stream = [&corpus] { return corpus.next(); };
    const train_result result = train_run(start, stream, plan, sink);
    if (result.metrics.diverged) {
        throw numeric_error("stage " + st.name + ": training diverged at " +
                            std::to_string(result.metrics.tokens_completed) + " tokens");
    }
    if (p.contains("out_checkpoint")) {
        write_checkpoint(result.ckpt, joined(dir, p.at("out_checkpoint").get<std::string>()));
    }
    if (p.contains("out_metrics")) {
        write_metrics_csv(result.metrics, joined(dir, p.at("out_metrics").get<std::string>()));
    }
}

inline void execute_upcycle(const manifest_stage& st, const std::string& dir,
                            std::uint64_t global_seed) {
    const auto& p = st.params;
    const std::uint64_t stage_seed = mix64(global_seed, fnv1a64("stage:" + st.name));
    const checkpoint dense = read_checkpoint(joined(dir, p.at("in_checkpoint").get<std::string>()));
    const checkpoint moe = upcycle(dense, p.value("experts", std::size_t{8}),
                                   p.value("top_k", std::size_t{2}), p.value("router_std", 0.02),
                                   p.value("noise_std", 0.0), rng_stream{stage_seed, 0},
                                   p.value("lb_coeff", 0.01));
    write_checkpoint(moe, joined(dir, p.at("out_checkpoint").get<std::string>()));
}

inline void execute_plan_budget(const manifest_stage& st, const std::string& dir) {
    const auto& p = st.params;
    const model_config cpt_cfg = p.at("cpt_config").get<model_config>();
    const model_config upc_cfg = p.at("upcycled_config").get<model_config>();
    const budget_mode mode =
        p.value("mode", std::string("analytic")) == "table4" ? budget_mode::table4
                                                             : budget_mode::analytic;
    const duration_label dur = duration_from_string(p.value("duration", std::string("medium")));
    const budget_plan plan =
        iso_flop_tokens(cpt_cfg, upc_cfg, p.at("cpt_tokens").get<double>(), mode, dur);
    nlohmann::json out = plan;
    std::ofstream f(joined(dir, p.at("out_plan").get<std::string>()), std::ios::trunc);
    f << out.dump(2) << "\n";
}

inline void execute_eval(const manifest_stage& st, const std::string& dir,
                         std::uint64_t global_seed) {
    const auto& p = st.params;
    // tasks split from the global seed so paired runs see identical items
    const auto tasks = gauntlet_lite(rng_stream{global_seed, 0}.split("gauntlet"),
                                     p.value("items_per_task", std::size_t{96}));
    std::vector<std::pair<std::uint64_t, eval_result>> rows;
    for (const auto& c : p.at("checkpoints")) {
        const checkpoint ckpt = read_checkpoint(joined(dir, c.at("path").get<std::string>()));
        rows.emplace_back(c.at("tokens").get<std::uint64_t>(), evaluate(ckpt, tasks));
    }
    write_eval_csv(rows, joined(dir, p.at("out_csv").get<std::string>()));
}

inline void execute_bench_sim(const manifest_stage& st, const std::string& dir) {
    const auto& p = st.params;
    const model_config model_cfg = p.at("model").get<model_config>();
    const model_config baseline_cfg = p.at("baseline").get<model_config>();
    hardware_profile hw;
    if (p.contains("hardware")) hw = p.at("hardware").get<hardware_profile>();
    workload_spec wl;
    if (p.contains("workload")) wl = p.at("workload").get<workload_spec>();

    const std::size_t top_k = model_cfg.moe ? model_cfg.moe->top_k : 0;
    serving_model_spec model_spec = model_footprint(model_cfg, top_k, 2, wl);
    model_spec.name = p.value("model_name", std::string("model"));
    serving_model_spec base_spec =
        model_footprint(baseline_cfg, baseline_cfg.moe ? baseline_cfg.moe->top_k : 0, 2, wl);
    base_spec.name = p.value("baseline_name", std::string("baseline"));

    const sweep_result model_sweep = sweep_rps(wl, model_spec, hw);
    const sweep_result base_sweep = sweep_rps(wl, base_spec, hw);

    const std::string prefix = joined(dir, p.value("out_prefix", std::string("bench")));
    write_sweep_csv(model_sweep, prefix + "_model.csv");
    write_sweep_csv(base_sweep, prefix + "_baseline.csv");
    nlohmann::json summary = {
        {"max_throughput", model_sweep.max_throughput},
        {"baseline_max_throughput", base_sweep.max_throughput},
        {"pct_decrease_vs_baseline",
         pct_decrease(base_sweep.max_throughput, model_sweep.max_throughput)},
        {"saturation_rps", model_sweep.saturation_rps}};
    std::ofstream f(prefix + "_summary.json", std::ios::trunc);
    f << summary.dump(2) << "\n";
    write_latency_throughput_svg(
        {{base_spec.name, base_sweep}, {model_spec.name, model_sweep}}, prefix + ".svg");
}

inline void execute_report(const manifest_stage& st, const std::string& dir) {
    const auto& p = st.params;
    const std::string prefix = joined(dir, p.value("out_prefix", std::string("report")));
    if (p.contains("ce_curves")) {
        std::vector<std::pair<std::string, std::string>> curves;
        for (const auto& c : p.at("ce_curves")) {
            curves.emplace_back(c.at("name").get<std::string>(),
                                joined(dir, c.at("metrics_csv").get<std::string>()));
        }
        write_ce_curves(curves, prefix + "_ce_curves.svg");
    }
    if (p.contains("relative")) {
        const auto series = relative_improvement_series(
            joined(dir, p.at("relative").at("cpt_eval").get<std::string>()),
            joined(dir, p.at("relative").at("upcycled_eval").get<std::string>()));
        write_relative_improvement(series, prefix + "_relative.csv", prefix + "_relative.svg");
    }
    if (p.contains("figure2")) {
        std::vector<throughput_row> rows;
        std::vector<std::pair<std::string, sweep_result>> sweeps;
        for (const auto& r : p.at("figure2").at("rows")) {
            const auto csv = detail::read_csv(joined(dir, r.at("sweep_csv").get<std::string>()));
            sweep_result sweep;
            const std::size_t ct = csv_column(csv[0], "throughput_tok_s");
            const std::size_t cr = csv_column(csv[0], "rps");
            const std::size_t cm = csv_column(csv[0], "mean_latency_s");
            for (std::size_t i = 1; i < csv.size(); ++i) {
                sweep_point pt;
                pt.rps = std::stod(csv[i][cr]);
                pt.mean_latency = std::stod(csv[i][cm]);
                pt.throughput = std::stod(csv[i][ct]);
                sweep.points.push_back(pt);
                sweep.max_throughput = std::max(sweep.max_throughput, pt.throughput);
            }
            throughput_row row;
            row.model = r.at("name").get<std::string>();
            row.devices = r.value("devices", std::size_t{1});
            row.top_k = r.value("top_k", std::size_t{0});
            row.baseline = r.value("baseline", false);
            row.max_throughput = sweep.max_throughput;
            rows.push_back(row);
            sweeps.emplace_back(row.model, std::move(sweep));
        }
        write_throughput_table(rows, prefix + "_throughput.csv");
        write_latency_throughput_svg(sweeps, prefix + "_latency_throughput.svg");
    }
}

}  // namespace detail

struct manifest_outcome {
    bool ok = true;
    bool config_failure = false;
    std::string failed_stage;
    std::string message;
};

// Validates the DAG up front, creates the output directory, executes
// stages in dependency order, checks consumed files exist at stage start.
inline manifest_outcome run_manifest(const experiment_manifest& m) {
    manifest_outcome outcome;
    std::vector<std::size_t> order;
    try {
        order = stage_execution_order(m);
    } catch (const config_error& e) {
        return {false, true, "", e.what()};
    }
    std::filesystem::create_directories(m.output_dir);

    for (const std::size_t idx : order) {
        const manifest_stage& st = m.stages[idx];
        try {
            std::vector<std::string> consumed, produced;
            detail::stage_io(st, consumed, produced);
            for (const auto& rel : consumed) {
                const std::string path = detail::joined(m.output_dir, rel);
                if (!std::filesystem::exists(path)) {
                    throw io_error("input '" + rel + "' does not exist at stage start");
                }
            }
            if (st.kind == "pretrain" || st.kind == "cpt") {
                detail::execute_train(st, m.output_dir, m.seed);
            } else if (st.kind == "upcycle") {
                detail::execute_upcycle(st, m.output_dir, m.seed);
            } else if (st.kind == "plan_budget") {
                detail::execute_plan_budget(st, m.output_dir);
            } else if (st.kind == "eval") {
                detail::execute_eval(st, m.output_dir, m.seed);
            } else if (st.kind == "bench_sim") {
                detail::execute_bench_sim(st, m.output_dir);
            } else if (st.kind == "report") {
                detail::execute_report(st, m.output_dir);
            }
        } catch (const config_error& e) {
            return {false, true, st.name, e.what()};
        } catch (const nlohmann::json::exception& e) {
            return {false, true, st.name, std::string("bad stage parameters: ") + e.what()};
        } catch (const std::exception& e) {
            return {false, false, st.name, e.what()};
        }
    }
    return outcome;
}

}  // namespace upcy
