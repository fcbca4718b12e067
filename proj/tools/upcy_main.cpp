// upcy: single entry point for the sparse-upcycling pipeline.
//
// Subcommands: pretrain, cpt, upcycle, plan-budget, bench-sim, eval,
// report, run. Exit codes: 0 success, 2 config error, 3 runtime error.
// UPCYCLE_SEED overrides the manifest seed.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "upcy/upcy.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

nlohmann::json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw upcy::io_error("cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw upcy::config_error("bad JSON in " + path + ": " + e.what());
    }
}

// stage params live in the current directory unless --output-dir is given
struct common_opts {
    std::string output_dir = ".";
    std::uint64_t seed = 0;
};

int run_stage(const upcy::manifest_stage& stage, const common_opts& opts) {
    upcy::experiment_manifest m;
    m.seed = opts.seed;
    m.output_dir = opts.output_dir;
    m.stages = {stage};
    const upcy::manifest_outcome out = upcy::run_manifest(m);
    if (out.ok) return kExitOk;
    std::cerr << "upcy: stage '" << out.failed_stage << "' failed: " << out.message << "\n";
    return out.config_failure ? kExitConfig : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale sparse-upcycling laboratory"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads for kernels (0 = hardware)");

    common_opts opts;

    // ---- pretrain / cpt ----
    struct train_opts {
        std::string config_path, in_checkpoint, out_checkpoint, out_metrics, corpus;
        std::string milestone_prefix;
        std::vector<std::uint64_t> milestones;
        double peak_lr = 1e-3, weight_decay = 0.05, lb_coeff = 0.01;
        std::uint64_t total_tokens = 0, warmup_tokens = 0;
        std::size_t batch_size = 16, seq_len = 64, log_every = 10;
    } topt;

    auto add_train_flags = [&](CLI::App* cmd, bool pretrain) {
        if (pretrain) {
            cmd->add_option("--config", topt.config_path, "model config JSON")->required();
        } else {
            cmd->add_option("--in", topt.in_checkpoint, "input checkpoint (.upcy)")->required();
        }
        cmd->add_option("--out", topt.out_checkpoint, "output checkpoint (.upcy)")->required();
        cmd->add_option("--metrics", topt.out_metrics, "metrics CSV path");
        cmd->add_option("--tokens", topt.total_tokens, "total training tokens")->required();
        cmd->add_option("--warmup-tokens", topt.warmup_tokens, "linear warmup tokens");
        cmd->add_option("--lr", topt.peak_lr, "peak learning rate");
        cmd->add_option("--weight-decay", topt.weight_decay, "Lion weight decay");
        cmd->add_option("--batch-size", topt.batch_size, "sequences per step");
        cmd->add_option("--seq-len", topt.seq_len, "tokens per sequence");
        cmd->add_option("--log-every", topt.log_every, "steps between metric rows");
        cmd->add_option("--corpus", topt.corpus, "corpus kind: web|domain");
        cmd->add_option("--milestone", topt.milestones, "checkpoint milestone (tokens), repeatable");
        cmd->add_option("--milestone-prefix", topt.milestone_prefix, "milestone file prefix");
        cmd->add_option("--seed", opts.seed, "global seed");
        cmd->add_option("--output-dir", opts.output_dir, "directory for artifacts");
    };

    CLI::App* pretrain = app.add_subcommand("pretrain", "dense pretraining from scratch");
    add_train_flags(pretrain, true);
    CLI::App* cpt = app.add_subcommand("cpt", "continued pretraining of a checkpoint");
    add_train_flags(cpt, false);

    // ---- upcycle ----
    struct upcycle_opts {
        std::string in, out;
        std::size_t experts = 8, top_k = 2;
        double router_std = 0.02, noise_std = 0.0, lb_coeff = 0.01;
        std::uint64_t seed = 0;
    } uopt;
    CLI::App* upc = app.add_subcommand("upcycle", "dense -> MoE checkpoint surgery");
    upc->add_option("--in", uopt.in, "dense checkpoint (.upcy)")->required();
    upc->add_option("--out", uopt.out, "upcycled checkpoint (.upcy)")->required();
    upc->add_option("--experts", uopt.experts, "number of experts");
    upc->add_option("--top-k", uopt.top_k, "routed experts per token");
    upc->add_option("--router-std", uopt.router_std, "router init stddev");
    upc->add_option("--noise-std", uopt.noise_std, "expert weight noise stddev");
    upc->add_option("--lb-coeff", uopt.lb_coeff, "load-balance loss coefficient");
    upc->add_option("--seed", uopt.seed, "surgery seed");
    upc->add_option("--output-dir", opts.output_dir, "directory for artifacts");

    // ---- plan-budget ----
    struct plan_opts {
        std::string mode = "analytic", cpt_config, moe_config, duration = "medium", out;
        double cpt_tokens = 0;
    } popt;
    CLI::App* plan = app.add_subcommand("plan-budget", "iso-FLOP token planning");
    plan->add_option("--mode", popt.mode, "analytic|table4");
    plan->add_option("--cpt-config", popt.cpt_config, "dense model config JSON")->required();
    plan->add_option("--moe-config", popt.moe_config, "upcycled model config JSON")->required();
    plan->add_option("--cpt-tokens", popt.cpt_tokens, "CPT tokens")->required();
    plan->add_option("--duration", popt.duration, "published duration: medium|long|extra_long");
    plan->add_option("--out", popt.out, "plan JSON output path");
    plan->add_option("--output-dir", opts.output_dir, "directory for artifacts");

    // ---- bench-sim ----
    struct bench_opts {
        std::string model, baseline, hardware, workload, out_prefix = "bench";
        std::string model_name = "model", baseline_name = "baseline";
    } bopt;
    CLI::App* bench = app.add_subcommand("bench-sim", "serving simulator sweep");
    bench->add_option("--model", bopt.model, "model config JSON")->required();
    bench->add_option("--baseline", bopt.baseline, "baseline model config JSON")->required();
    bench->add_option("--hardware", bopt.hardware, "hardware profile JSON");
    bench->add_option("--workload", bopt.workload, "workload spec JSON");
    bench->add_option("--out-prefix", bopt.out_prefix, "output file prefix");
    bench->add_option("--model-name", bopt.model_name, "label for the model");
    bench->add_option("--baseline-name", bopt.baseline_name, "label for the baseline");
    bench->add_option("--output-dir", opts.output_dir, "directory for artifacts");

    // ---- eval ----
    struct eval_opts {
        std::vector<std::string> checkpoints;  // path or path:tokens
        std::string out_csv;
        std::size_t items = 96;
        std::uint64_t seed = 0;
    } eopt;
    CLI::App* ev = app.add_subcommand("eval", "Gauntlet-lite scoring of checkpoints");
    ev->add_option("--checkpoint", eopt.checkpoints, "checkpoint path[:tokens], repeatable")
        ->required();
    ev->add_option("--out", eopt.out_csv, "eval CSV output")->required();
    ev->add_option("--items", eopt.items, "items per task");
    ev->add_option("--seed", eopt.seed, "task generation seed");
    ev->add_option("--output-dir", opts.output_dir, "directory for artifacts");

    // ---- report ----
    struct report_opts {
        std::string params;
    } ropt;
    CLI::App* rep = app.add_subcommand("report", "emit figure/table analogues");
    rep->add_option("--params", ropt.params, "report stage params JSON")->required();
    rep->add_option("--output-dir", opts.output_dir, "directory for artifacts");

    // ---- run ----
    struct run_opts {
        std::string manifest;
    } runo;
    CLI::App* run = app.add_subcommand("run", "execute an experiment manifest");
    run->add_option("--manifest", runo.manifest, "manifest JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (threads > 0) upcy::set_thread_count(threads);

    try {
        if (pretrain->parsed() || cpt->parsed()) {
            const bool is_pre = pretrain->parsed();
            upcy::manifest_stage st;
            st.name = is_pre ? "pretrain" : "cpt";
            st.kind = st.name;
            nlohmann::json p;
            if (is_pre) {
                p["config"] = load_json(topt.config_path).get<upcy::model_config>();
            } else {
                p["in_checkpoint"] = topt.in_checkpoint;
            }
            p["out_checkpoint"] = topt.out_checkpoint;
            if (!topt.out_metrics.empty()) p["out_metrics"] = topt.out_metrics;
            p["total_tokens"] = topt.total_tokens;
            p["warmup_tokens"] = topt.warmup_tokens;
            p["peak_lr"] = topt.peak_lr;
            p["weight_decay"] = topt.weight_decay;
            p["batch_size"] = topt.batch_size;
            p["seq_len"] = topt.seq_len;
            p["log_every"] = topt.log_every;
            if (!topt.corpus.empty()) p["corpus"] = topt.corpus;
            if (!topt.milestones.empty()) {
                p["milestones"] = topt.milestones;
                p["milestone_prefix"] =
                    topt.milestone_prefix.empty() ? topt.out_checkpoint : topt.milestone_prefix;
            }
            st.params = p;
            return run_stage(st, opts);
        }
        if (upc->parsed()) {
            upcy::manifest_stage st;
            st.name = "upcycle";
            st.kind = "upcycle";
            st.params = {{"in_checkpoint", uopt.in},   {"out_checkpoint", uopt.out},
                         {"experts", uopt.experts},    {"top_k", uopt.top_k},
                         {"router_std", uopt.router_std}, {"noise_std", uopt.noise_std},
                         {"lb_coeff", uopt.lb_coeff}};
            common_opts o = opts;
            o.seed = uopt.seed;
            return run_stage(st, o);
        }
        if (plan->parsed()) {
            upcy::manifest_stage st;
            st.name = "plan_budget";
            st.kind = "plan_budget";
            nlohmann::json p;
            p["mode"] = popt.mode;
            p["cpt_config"] = load_json(popt.cpt_config).get<upcy::model_config>();
            p["upcycled_config"] = load_json(popt.moe_config).get<upcy::model_config>();
            p["cpt_tokens"] = popt.cpt_tokens;
            p["duration"] = popt.duration;
            p["out_plan"] = popt.out.empty() ? "budget_plan.json" : popt.out;
            st.params = p;
            const int rc = run_stage(st, opts);
            if (rc == kExitOk) {
                const auto plan_json =
                    load_json((std::filesystem::path(opts.output_dir) / p["out_plan"]).string());
                upcy::budget_plan bp;
                bp.cpt_tokens = plan_json.at("cpt_tokens").get<double>();
                bp.upcycled_tokens = plan_json.at("upcycled_tokens").get<double>();
                bp.flops_per_token_cpt = plan_json.at("flops_per_token_cpt").get<double>();
                bp.flops_per_token_upcycled =
                    plan_json.at("flops_per_token_upcycled").get<double>();
                bp.mode = popt.mode == "table4" ? upcy::budget_mode::table4
                                                : upcy::budget_mode::analytic;
                std::cout << upcy::budget_plan_table(bp);
            }
            return rc;
        }
        if (bench->parsed()) {
            upcy::manifest_stage st;
            st.name = "bench_sim";
            st.kind = "bench_sim";
            nlohmann::json p;
            p["model"] = load_json(bopt.model).get<upcy::model_config>();
            p["baseline"] = load_json(bopt.baseline).get<upcy::model_config>();
            if (!bopt.hardware.empty()) p["hardware"] = load_json(bopt.hardware);
            if (!bopt.workload.empty()) p["workload"] = load_json(bopt.workload);
            p["out_prefix"] = bopt.out_prefix;
            p["model_name"] = bopt.model_name;
            p["baseline_name"] = bopt.baseline_name;
            st.params = p;
            return run_stage(st, opts);
        }
        if (ev->parsed()) {
            upcy::manifest_stage st;
            st.name = "eval";
            st.kind = "eval";
            nlohmann::json cks = nlohmann::json::array();
            for (const auto& spec : eopt.checkpoints) {
                const std::size_t colon = spec.rfind(':');
                nlohmann::json c;
                if (colon != std::string::npos && colon + 1 < spec.size() &&
                    spec.find_first_not_of("0123456789", colon + 1) == std::string::npos) {
                    c["path"] = spec.substr(0, colon);
                    c["tokens"] = std::stoull(spec.substr(colon + 1));
                } else {
                    c["path"] = spec;
                    c["tokens"] = 0;
                }
                cks.push_back(c);
            }
            st.params = {{"checkpoints", cks}, {"out_csv", eopt.out_csv},
                         {"items_per_task", eopt.items}};
            common_opts o = opts;
            o.seed = eopt.seed;
            return run_stage(st, o);
        }
        if (rep->parsed()) {
            upcy::manifest_stage st;
            st.name = "report";
            st.kind = "report";
            st.params = load_json(ropt.params);
            return run_stage(st, opts);
        }
        if (run->parsed()) {
            upcy::experiment_manifest m = upcy::manifest_from_json(load_json(runo.manifest));
            if (const char* env = std::getenv("UPCYCLE_SEED")) {
                m.seed = std::strtoull(env, nullptr, 10);
            }
            const upcy::manifest_outcome out = upcy::run_manifest(m);
            if (!out.ok) {
                std::cerr << "upcy: stage '" << out.failed_stage << "' failed: " << out.message
                          << "\n";
                return out.config_failure ? kExitConfig : kExitRuntime;
            }
            return kExitOk;
        }
    } catch (const upcy::config_error& e) {
        std::cerr << "upcy: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const upcy::format_error& e) {
        std::cerr << "upcy: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "upcy: error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
