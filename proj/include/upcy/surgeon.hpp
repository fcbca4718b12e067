#pragma once

// Sparse-upcycling checkpoint surgery: clone a dense checkpoint's GLU
// weights into n experts per block, attach a freshly initialized router,
// and carry everything else over untouched.
//
// With zero expert noise the upcycled model is functionally identical to
// its parent for any K and any router weights: all experts compute the
// same function and the gates sum to 1, so the gated mixture collapses to
// the single dense GLU output.

#include <cstring>
#include <string>
#include <vector>

#include "upcy/checkpoint.hpp"
#include "upcy/config.hpp"
#include "upcy/core.hpp"
#include "upcy/model.hpp"

namespace upcy {

inline tensor add_noise(const tensor& src, rng_stream rng, double stddev) {
    tensor out = src;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += static_cast<float>(rng.gaussian(0.0, stddev));
    }
    return out;
}

inline checkpoint upcycle(const checkpoint& dense, std::size_t n_experts, std::size_t top_k,
                          double router_init_std, double noise_std, rng_stream rng,
                          double load_balance_coeff = 0.01) {
    if (dense.config.moe) throw state_error("upcycle: input checkpoint is already MoE");
    if (n_experts < top_k) throw config_error("upcycle: n_experts must be >= top_k");
    if (top_k < 1) throw config_error("upcycle: top_k must be >= 1");
    if (noise_std < 0.0) throw config_error("upcycle: noise_std must be >= 0");
    dense.validate();

    checkpoint out;
    out.config = dense.config;
    moe_config m;
    m.n_experts = n_experts;
    m.top_k = top_k;
    m.router_init_std = router_init_std;
    m.load_balance_coeff = load_balance_coeff;
    out.config.moe = m;
    out.config.validate();

    out.meta.seed = rng.seed;
    out.meta.tokens_trained = dense.meta.tokens_trained;
    out.meta.parent_hash = content_hash(dense);

    for (const auto& [name, t] : dense.tensors) {
        const bool is_glu = name.ends_with(".ffn.w_in") || name.ends_with(".ffn.w_gate") ||
                            name.ends_with(".ffn.w_out");
        if (!is_glu) out.tensors.emplace(name, t);
    }
    for (std::size_t l = 0; l < dense.config.n_layers; ++l) {
        const tensor& w_in = dense.tensors.at(schema::w_in(l));
        const tensor& w_gate = dense.tensors.at(schema::w_gate(l));
        const tensor& w_out = dense.tensors.at(schema::w_out(l));
        for (std::size_t e = 0; e < n_experts; ++e) {
            auto place = [&](const std::string& name, const tensor& src) {
                if (noise_std > 0.0) {
                    out.tensors.emplace(name, add_noise(src, rng.split(name), noise_std));
                } else {
                    out.tensors.emplace(name, src);
                }
            };
            place(schema::expert_w_in(l, e), w_in);
            place(schema::expert_w_gate(l, e), w_gate);
            place(schema::expert_w_out(l, e), w_out);
        }
        const std::string rname = schema::router(l);
        out.tensors.emplace(
            rname, random_normal<float>(dense.config.d_model, n_experts, rng.split(rname),
                                        router_init_std, /*truncated=*/false));
    }
    out.validate();
    return out;
}

// exact parameter arithmetic for the surgery:
// total_moe = total_dense + (n_experts - 1) * GLU params + router params
inline std::uint64_t expected_upcycled_total(const model_config& dense_cfg,
                                             std::size_t n_experts) {
    const std::uint64_t dense_total = count_params(dense_cfg).total;
    const std::uint64_t glu = static_cast<std::uint64_t>(dense_cfg.n_layers) *
                              glu_params_per_layer(dense_cfg);
    const std::uint64_t router =
        static_cast<std::uint64_t>(dense_cfg.n_layers) * dense_cfg.d_model * n_experts;
    return dense_total + (n_experts - 1) * glu + router;
}

// Max |logits_moe - logits_dense| over the probe batch. The upcycled
// checkpoint must be a zero-noise child of the dense one (same non-GLU
// weights, same architecture apart from the MoE section).
inline double verify_preservation(const checkpoint& dense, const checkpoint& upcycled,
                                  const std::vector<std::vector<int>>& probe_sequences) {
    model_config stripped = upcycled.config;
    stripped.moe.reset();
    if (!(stripped == dense.config)) {
        throw state_error("verify_preservation: configs differ beyond the MoE section");
    }
    if (!upcycled.config.moe) {
        throw state_error("verify_preservation: second checkpoint is not MoE");
    }

    // one batched pass per model; per-sequence rows are independent, so
    // batching does not change any value
    const auto d = forward(dense, probe_sequences, /*want_tape=*/false);
    const auto m = forward(upcycled, probe_sequences, /*want_tape=*/false);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.logits.size(); ++i) {
        worst = std::max(worst,
                         static_cast<double>(std::abs(d.logits.data()[i] - m.logits.data()[i])));
    }
    return worst;
}

}  // namespace upcy
