#pragma once

// Architecture description for the dense / MoE decoder family, the canonical
// tensor naming schema, and closed-form parameter accounting.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "upcy/core.hpp"

namespace upcy {

struct moe_config {
    std::size_t n_experts = 8;
    std::size_t top_k = 2;
    double router_init_std = 0.02;
    double load_balance_coeff = 0.01;

    void validate() const {
        if (top_k < 1 || top_k > n_experts) {
            throw config_error("moe_config: top_k must be in [1, n_experts]");
        }
        if (load_balance_coeff < 0.0) {
            throw config_error("moe_config: load_balance_coeff must be >= 0");
        }
    }
    bool operator==(const moe_config&) const = default;
};

struct model_config {
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t n_kv_heads = 2;
    std::size_t ffn_hidden = 128;
    std::size_t vocab_size = 256;
    std::size_t max_seq_len = 256;
    std::string norm_kind = "rmsnorm";
    bool tie_embeddings = false;
    std::optional<moe_config> moe;

    std::size_t head_dim() const { return d_model / n_heads; }
    std::size_t kv_dim() const { return n_kv_heads * head_dim(); }
    bool is_moe() const { return moe.has_value(); }

    void validate() const {
        if (d_model == 0 || n_layers == 0 || n_heads == 0 || n_kv_heads == 0 ||
            ffn_hidden == 0 || vocab_size == 0 || max_seq_len == 0) {
            throw config_error("model_config: zero-sized dimension");
        }
        if (n_heads % n_kv_heads != 0) {
            throw config_error("model_config: n_heads must be divisible by n_kv_heads");
        }
        if (d_model % n_heads != 0) {
            throw config_error("model_config: d_model must be divisible by n_heads");
        }
        if (norm_kind != "rmsnorm") {
            throw config_error("model_config: unsupported norm_kind '" + norm_kind + "'");
        }
        if (moe) moe->validate();
    }

    bool operator==(const model_config&) const = default;
};

// ----------------------------------------------------------------------
// tensor naming schema
// ----------------------------------------------------------------------

struct tensor_spec {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

namespace schema {

inline std::string attn_norm(std::size_t l) { return "layers." + std::to_string(l) + ".attn_norm"; }
inline std::string wq(std::size_t l) { return "layers." + std::to_string(l) + ".attn.wq"; }
inline std::string wk(std::size_t l) { return "layers." + std::to_string(l) + ".attn.wk"; }
inline std::string wv(std::size_t l) { return "layers." + std::to_string(l) + ".attn.wv"; }
inline std::string wo(std::size_t l) { return "layers." + std::to_string(l) + ".attn.wo"; }
inline std::string ffn_norm(std::size_t l) { return "layers." + std::to_string(l) + ".ffn_norm"; }
inline std::string w_in(std::size_t l) { return "layers." + std::to_string(l) + ".ffn.w_in"; }
inline std::string w_gate(std::size_t l) { return "layers." + std::to_string(l) + ".ffn.w_gate"; }
inline std::string w_out(std::size_t l) { return "layers." + std::to_string(l) + ".ffn.w_out"; }
inline std::string expert_w_in(std::size_t l, std::size_t e) {
    return "layers." + std::to_string(l) + ".ffn.expert" + std::to_string(e) + ".w_in";
}
inline std::string expert_w_gate(std::size_t l, std::size_t e) {
    return "layers." + std::to_string(l) + ".ffn.expert" + std::to_string(e) + ".w_gate";
}
inline std::string expert_w_out(std::size_t l, std::size_t e) {
    return "layers." + std::to_string(l) + ".ffn.expert" + std::to_string(e) + ".w_out";
}
inline std::string router(std::size_t l) { return "layers." + std::to_string(l) + ".router"; }

inline constexpr const char* tok_embed = "tok_embed";
inline constexpr const char* lm_head = "lm_head";
inline constexpr const char* final_norm = "final_norm";

}  // namespace schema

// Every tensor implied by the config, in canonical order.
inline std::vector<tensor_spec> tensor_schema(const model_config& cfg) {
    cfg.validate();
    std::vector<tensor_spec> out;
    out.push_back({schema::tok_embed, cfg.vocab_size, cfg.d_model});
    if (!cfg.tie_embeddings) out.push_back({schema::lm_head, cfg.d_model, cfg.vocab_size});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        out.push_back({schema::attn_norm(l), 1, cfg.d_model});
        out.push_back({schema::wq(l), cfg.d_model, cfg.n_heads * cfg.head_dim()});
        out.push_back({schema::wk(l), cfg.d_model, cfg.kv_dim()});
        out.push_back({schema::wv(l), cfg.d_model, cfg.kv_dim()});
        out.push_back({schema::wo(l), cfg.n_heads * cfg.head_dim(), cfg.d_model});
        out.push_back({schema::ffn_norm(l), 1, cfg.d_model});
        if (cfg.moe) {
            out.push_back({schema::router(l), cfg.d_model, cfg.moe->n_experts});
            for (std::size_t e = 0; e < cfg.moe->n_experts; ++e) {
                out.push_back({schema::expert_w_in(l, e), cfg.d_model, cfg.ffn_hidden});
                out.push_back({schema::expert_w_gate(l, e), cfg.d_model, cfg.ffn_hidden});
                out.push_back({schema::expert_w_out(l, e), cfg.ffn_hidden, cfg.d_model});
            }
        } else {
            out.push_back({schema::w_in(l), cfg.d_model, cfg.ffn_hidden});
            out.push_back({schema::w_gate(l), cfg.d_model, cfg.ffn_hidden});
            out.push_back({schema::w_out(l), cfg.ffn_hidden, cfg.d_model});
        }
    }
    out.push_back({schema::final_norm, 1, cfg.d_model});
    return out;
}

// ----------------------------------------------------------------------
// parameter accounting
// ----------------------------------------------------------------------

struct param_counts {
    std::uint64_t total = 0;   // every stored parameter
    std::uint64_t active = 0;  // parameters exercised per token
};

// Convention (also printed by the CLI):
//   total  = all stored parameters, embedding and output head both counted.
//   active = dense: equal to total (every weight participates per token).
//            MoE:   attention + norms + router + top_k experts per layer,
//                   with the embedding/output-head pair counted ONCE. The
//                   single-counted embedding is what makes the published
//                   active-parameter figures for upcycled models line up.
inline const char* param_count_convention() {
    return "total counts every stored parameter (both embedding matrices); "
           "active counts per-token parameters: dense = total; "
           "MoE = attention + norms + router + top_k experts per layer "
           "+ embeddings counted once";
}

inline std::uint64_t glu_params_per_layer(const model_config& cfg) {
    return 3ull * cfg.d_model * cfg.ffn_hidden;
}

inline param_counts count_params(const model_config& cfg) {
    cfg.validate();
    std::uint64_t total = 0;
    for (const auto& t : tensor_schema(cfg)) total += static_cast<std::uint64_t>(t.rows) * t.cols;

    param_counts out;
    out.total = total;
    if (!cfg.moe) {
        out.active = total;
        return out;
    }
    const std::uint64_t inactive_experts =
        static_cast<std::uint64_t>(cfg.moe->n_experts - cfg.moe->top_k) * cfg.n_layers *
        glu_params_per_layer(cfg);
    const std::uint64_t one_embedding =
        static_cast<std::uint64_t>(cfg.vocab_size) * cfg.d_model;
    const std::uint64_t double_counted_embedding = cfg.tie_embeddings ? 0 : one_embedding;
    out.active = total - inactive_experts - double_counted_embedding;
    return out;
}

// ----------------------------------------------------------------------
// presets
// ----------------------------------------------------------------------

namespace presets {

// 436M dense (vocab chosen so the published total is reproduced exactly)
inline model_config dense_436m() {
    model_config c;
    c.d_model = 1024;
    c.n_layers = 22;
    c.n_heads = 16;
    c.n_kv_heads = 4;
    c.ffn_hidden = 2560;
    c.vocab_size = 100277;
    c.max_seq_len = 4096;
    return c;
}

// 1.4B dense
inline model_config dense_1p4b() {
    model_config c;
    c.d_model = 2048;
    c.n_layers = 24;
    c.n_heads = 16;
    c.n_kv_heads = 4;
    c.ffn_hidden = 5120;
    c.vocab_size = 100277;
    c.max_seq_len = 4096;
    return c;
}

// 8B dense (Llama-3-8B shape; upcycling it with 8 experts lands at 47B)
inline model_config dense_8b() {
    model_config c;
    c.d_model = 4096;
    c.n_layers = 32;
    c.n_heads = 32;
    c.n_kv_heads = 8;
    c.ffn_hidden = 14336;
    c.vocab_size = 128256;
    c.max_seq_len = 8192;
    return c;
}

inline model_config with_moe(model_config c, std::size_t n_experts = 8, std::size_t top_k = 2) {
    moe_config m;
    m.n_experts = n_experts;
    m.top_k = top_k;
    c.moe = m;
    return c;
}

// byte-vocab toy used by tests and the desk-scale pipeline
inline model_config toy(std::size_t n_layers = 2, std::size_t d_model = 64,
                        std::size_t ffn_hidden = 128) {
    model_config c;
    c.d_model = d_model;
    c.n_layers = n_layers;
    c.n_heads = 4;
    c.n_kv_heads = 2;
    c.ffn_hidden = ffn_hidden;
    c.vocab_size = 256;
    c.max_seq_len = 256;
    return c;
}

}  // namespace presets

// ----------------------------------------------------------------------
// JSON
// ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const moe_config& m) {
    j = nlohmann::json{{"n_experts", m.n_experts},
                       {"top_k", m.top_k},
                       {"router_init_std", m.router_init_std},
                       {"load_balance_coeff", m.load_balance_coeff}};
}

inline void from_json(const nlohmann::json& j, moe_config& m) {
    j.at("n_experts").get_to(m.n_experts);
    j.at("top_k").get_to(m.top_k);
    m.router_init_std = j.value("router_init_std", 0.02);
    m.load_balance_coeff = j.value("load_balance_coeff", 0.01);
}

inline void to_json(nlohmann::json& j, const model_config& c) {
    j = nlohmann::json{{"d_model", c.d_model},
                       {"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},
                       {"n_kv_heads", c.n_kv_heads},
                       {"ffn_hidden", c.ffn_hidden},
                       {"vocab_size", c.vocab_size},
                       {"max_seq_len", c.max_seq_len},
                       {"norm_kind", c.norm_kind},
                       {"tie_embeddings", c.tie_embeddings}};
    if (c.moe) {
        j["moe"] = *c.moe;
    } else {
        j["moe"] = nullptr;
    }
}

inline void from_json(const nlohmann::json& j, model_config& c) {
    j.at("d_model").get_to(c.d_model);
    j.at("n_layers").get_to(c.n_layers);
    j.at("n_heads").get_to(c.n_heads);
    j.at("n_kv_heads").get_to(c.n_kv_heads);
    j.at("ffn_hidden").get_to(c.ffn_hidden);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_seq_len").get_to(c.max_seq_len);
    c.norm_kind = j.value("norm_kind", std::string("rmsnorm"));
    c.tie_embeddings = j.value("tie_embeddings", false);
    if (j.contains("moe") && !j.at("moe").is_null()) {
        c.moe = j.at("moe").get<moe_config>();
    } else {
        c.moe.reset();
    }
}

}  // namespace upcy
