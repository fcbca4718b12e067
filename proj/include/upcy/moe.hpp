#pragma once

// Mixture-of-Experts feed-forward layer: top-K learned dropless routing,
// per-expert grouped GLU computation, load-balancing auxiliary loss, and
// the manual backward pass.
//
// Routing contract: every token is dispatched to exactly its K
// highest-scoring experts (no capacity limit, nothing dropped), ties break
// toward the lowest expert index, and the gates are a softmax over the K
// selected logits so they always sum to 1.

#include <cstddef>
#include <numeric>
#include <vector>

#include "upcy/core.hpp"
#include "upcy/kernels.hpp"

namespace upcy {

template <class T>
T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

template <class T>
T silu(T z) {
    return z * sigmoid(z);
}

template <class T>
T silu_grad(T z) {
    const T s = sigmoid(z);
    return s * (T(1) + z * (T(1) - s));
}

// ----------------------------------------------------------------------
// routing
// ----------------------------------------------------------------------

template <class T>
struct topk_routing {
    std::size_t top_k = 0;
    // per token, k entries in descending-logit order (ties: lowest index first)
    std::vector<int> expert_ids;  // tokens * k
    tensor2d<T> gates;            // tokens x k, each row sums to 1

    std::span<const int> ids_for(std::size_t token) const {
        return {expert_ids.data() + token * top_k, top_k};
    }
};

template <class T>
topk_routing<T> route_topk(const tensor2d<T>& router_logits, std::size_t k) {
    const std::size_t n_experts = router_logits.cols();
    if (k < 1 || k > n_experts) throw config_error("route_topk: k must be in [1, n_experts]");
    const std::size_t tokens = router_logits.rows();

    topk_routing<T> out;
    out.top_k = k;
    out.expert_ids.resize(tokens * k);
    out.gates = tensor2d<T>(tokens, k);

    std::vector<int> order(n_experts);
    for (std::size_t t = 0; t < tokens; ++t) {
        const auto row = router_logits.row(t);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return row[a] > row[b]; });
        // softmax over the selected logits only
        T m = row[order[0]];
        T denom = T(0);
        auto g = out.gates.row(t);
        for (std::size_t s = 0; s < k; ++s) {
            out.expert_ids[t * k + s] = order[s];
            g[s] = std::exp(row[order[s]] - m);
            denom += g[s];
        }
        const T inv = T(1) / denom;
        for (std::size_t s = 0; s < k; ++s) g[s] *= inv;
    }
    return out;
}

// loss = n_experts * sum_e f_e * p_e, with sum f = sum p = 1. Equals 1 at
// perfect balance and n_experts at full collapse.
inline double load_balance_loss(std::span<const double> dispatch_fraction,
                                std::span<const double> mean_prob, std::size_t n_experts) {
    if (dispatch_fraction.size() != n_experts || mean_prob.size() != n_experts) {
        throw shape_error("load_balance_loss: expects one entry per expert");
    }
    double acc = 0.0;
    for (std::size_t e = 0; e < n_experts; ++e) acc += dispatch_fraction[e] * mean_prob[e];
    return static_cast<double>(n_experts) * acc;
}

// per-batch routing statistics (one layer)
struct router_stats {
    std::vector<std::size_t> dispatch_counts;   // tokens routed to each expert
    std::vector<double> dispatch_fraction;      // counts / tokens, sums to top_k
    std::vector<double> mean_prob;              // mean full-softmax prob, sums to 1
    double balance_loss = 0.0;                  // n * sum(f_norm * p)

    std::vector<double> normalized_dispatch() const {
        std::vector<double> f(dispatch_fraction.size());
        const double k = std::accumulate(dispatch_fraction.begin(), dispatch_fraction.end(), 0.0);
        for (std::size_t e = 0; e < f.size(); ++e) {
            f[e] = k > 0 ? dispatch_fraction[e] / k : 0.0;
        }
        return f;
    }
};

// ----------------------------------------------------------------------
// layer weights and tape
// ----------------------------------------------------------------------

template <class T>
struct expert_view {
    const tensor2d<T>* w_in = nullptr;    // d x ffn
    const tensor2d<T>* w_gate = nullptr;  // d x ffn
    const tensor2d<T>* w_out = nullptr;   // ffn x d
};

template <class T>
struct moe_layer_view {
    const tensor2d<T>* router = nullptr;  // d x n_experts
    std::vector<expert_view<T>> experts;
};

template <class T>
struct moe_tape {
    tensor2d<T> input;          // tokens x d (ffn input, also router input)
    tensor2d<T> router_logits;  // tokens x E
    tensor2d<T> router_probs;   // tokens x E (full softmax, for stats + aux grad)
    topk_routing<T> routing;
    // one entry per expert: which tokens it served and its intermediates
    std::vector<std::vector<std::size_t>> token_ids;
    std::vector<tensor2d<T>> act_in;    // gathered x * w_in
    std::vector<tensor2d<T>> act_gate;  // gathered x * w_gate (pre-silu)
    std::vector<tensor2d<T>> out_rows;  // expert outputs before gating
    router_stats stats;
};

template <class T>
struct moe_grads {
    tensor2d<T> input;   // dL/dx
    tensor2d<T> router;  // dL/dW_router
    std::vector<tensor2d<T>> w_in, w_gate, w_out;
};

// ----------------------------------------------------------------------
// forward
// ----------------------------------------------------------------------

template <class T>
tensor2d<T> moe_forward(const moe_layer_view<T>& layer, const tensor2d<T>& x,
                        std::size_t top_k, moe_tape<T>* tape = nullptr) {
    const std::size_t tokens = x.rows();
    const std::size_t d = x.cols();
    const std::size_t n_experts = layer.experts.size();

    tensor2d<T> logits = matmul(x, *layer.router);
    topk_routing<T> routing = route_topk(logits, top_k);
    tensor2d<T> probs = softmax_rows(logits);

    // gather per expert in ascending token order; grouping does not change
    // any per-token result because matmul rows are independent
    std::vector<std::vector<std::size_t>> token_ids(n_experts);
    for (std::size_t t = 0; t < tokens; ++t) {
        for (const int e : routing.ids_for(t)) token_ids[e].push_back(t);
    }

    tensor2d<T> y(tokens, d);
    moe_tape<T> local;
    moe_tape<T>& tp = tape ? *tape : local;
    if (tape) {
        tp.input = x;
        tp.router_logits = logits;
        tp.routing = routing;
        tp.token_ids = token_ids;
        tp.act_in.assign(n_experts, {});
        tp.act_gate.assign(n_experts, {});
        tp.out_rows.assign(n_experts, {});
    }

    for (std::size_t e = 0; e < n_experts; ++e) {
        const auto& ids = token_ids[e];
        if (ids.empty()) continue;
        tensor2d<T> gathered(ids.size(), d);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            std::memcpy(gathered.row(r).data(), x.row(ids[r]).data(), d * sizeof(T));
        }
        const auto& ex = layer.experts[e];
        tensor2d<T> a = matmul(gathered, *ex.w_in);
        tensor2d<T> g = matmul(gathered, *ex.w_gate);
        tensor2d<T> h(a.rows(), a.cols());
        for (std::size_t i = 0; i < h.size(); ++i) {
            h.data()[i] = a.data()[i] * silu(g.data()[i]);
        }
        tensor2d<T> o = matmul(h, *ex.w_out);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            const std::size_t t = ids[r];
            // the token's gate for this expert
            T gate = T(0);
            const auto tids = routing.ids_for(t);
            for (std::size_t s = 0; s < top_k; ++s) {
                if (tids[s] == static_cast<int>(e)) {
                    gate = routing.gates(t, s);
                    break;
                }
            }
            auto yrow = y.row(t);
            const auto orow = o.row(r);
            for (std::size_t c = 0; c < d; ++c) yrow[c] += gate * orow[c];
        }
        if (tape) {
            tp.act_in[e] = std::move(a);
            tp.act_gate[e] = std::move(g);
            tp.out_rows[e] = std::move(o);
        }
    }

    // batch statistics
    router_stats st;
    st.dispatch_counts.assign(n_experts, 0);
    st.dispatch_fraction.assign(n_experts, 0.0);
    st.mean_prob.assign(n_experts, 0.0);
    for (std::size_t e = 0; e < n_experts; ++e) st.dispatch_counts[e] = token_ids[e].size();
    if (tokens > 0) {
        for (std::size_t e = 0; e < n_experts; ++e) {
            st.dispatch_fraction[e] =
                static_cast<double>(st.dispatch_counts[e]) / static_cast<double>(tokens);
            double acc = 0.0;
            for (std::size_t t = 0; t < tokens; ++t) acc += static_cast<double>(probs(t, e));
            st.mean_prob[e] = acc / static_cast<double>(tokens);
        }
        st.balance_loss = load_balance_loss(st.normalized_dispatch(), st.mean_prob, n_experts);
    }
    if (tape) {
        tp.router_probs = std::move(probs);
        tp.stats = st;
    }
    return y;
}

// ----------------------------------------------------------------------
// backward
//
// Gradients flow through the gates (softmax over the selected logits) and
// the expert outputs; the top-K selection itself is non-differentiable.
// aux_grad_scale is dLoss/d(balance_loss of this layer); the dispatch
// fractions are treated as constants, so the aux gradient reaches the
// router only through the mean probabilities.
// ----------------------------------------------------------------------

template <class T>
moe_grads<T> moe_backward(const moe_layer_view<T>& layer, const moe_tape<T>& tape,
                          const tensor2d<T>& upstream, double aux_grad_scale = 0.0) {
    const std::size_t tokens = tape.input.rows();
    const std::size_t d = tape.input.cols();
    const std::size_t n_experts = layer.experts.size();
    const std::size_t top_k = tape.routing.top_k;
    if (!upstream.same_shape(tape.input)) {
        throw state_error("moe_backward: upstream gradient does not match tape");
    }
    if (tape.token_ids.size() != n_experts) {
        throw state_error("moe_backward: tape does not match layer");
    }

    moe_grads<T> grads;
    grads.input = tensor2d<T>(tokens, d);
    grads.router = tensor2d<T>(layer.router->rows(), layer.router->cols());
    grads.w_in.resize(n_experts);
    grads.w_gate.resize(n_experts);
    grads.w_out.resize(n_experts);

    // d(loss)/d(gate) per token/slot, filled while walking experts
    tensor2d<T> dgate(tokens, top_k);

    for (std::size_t e = 0; e < n_experts; ++e) {
        const auto& ex = layer.experts[e];
        grads.w_in[e] = tensor2d<T>(ex.w_in->rows(), ex.w_in->cols());
        grads.w_gate[e] = tensor2d<T>(ex.w_gate->rows(), ex.w_gate->cols());
        grads.w_out[e] = tensor2d<T>(ex.w_out->rows(), ex.w_out->cols());
        const auto& ids = tape.token_ids[e];
        if (ids.empty()) continue;  // no dispatch, no gradient

        // gather upstream rows scaled by the gate, and gate grads
        tensor2d<T> do_rows(ids.size(), d);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            const std::size_t t = ids[r];
            T gate = T(0);
            std::size_t slot = 0;
            const auto tids = tape.routing.ids_for(t);
            for (std::size_t s = 0; s < top_k; ++s) {
                if (tids[s] == static_cast<int>(e)) {
                    gate = tape.routing.gates(t, s);
                    slot = s;
                    break;
                }
            }
            const auto up = upstream.row(t);
            const auto orow = tape.out_rows[e].row(r);
            T dot = T(0);
            for (std::size_t c = 0; c < d; ++c) dot += up[c] * orow[c];
            dgate(t, slot) = dot;
            auto dorow = do_rows.row(r);
            for (std::size_t c = 0; c < d; ++c) dorow[c] = gate * up[c];
        }

        // expert GLU backward
        const auto& a = tape.act_in[e];
        const auto& g = tape.act_gate[e];
        tensor2d<T> h(a.rows(), a.cols());
        for (std::size_t i = 0; i < h.size(); ++i) {
            h.data()[i] = a.data()[i] * silu(g.data()[i]);
        }
        grads.w_out[e] = matmul_tn(h, do_rows);
        tensor2d<T> dh = matmul_nt(do_rows, *ex.w_out);
        tensor2d<T> da(a.rows(), a.cols());
        tensor2d<T> dg(a.rows(), a.cols());
        for (std::size_t i = 0; i < dh.size(); ++i) {
            da.data()[i] = dh.data()[i] * silu(g.data()[i]);
            dg.data()[i] = dh.data()[i] * a.data()[i] * silu_grad(g.data()[i]);
        }
        tensor2d<T> gathered(ids.size(), d);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            std::memcpy(gathered.row(r).data(), tape.input.row(ids[r]).data(), d * sizeof(T));
        }
        grads.w_in[e] = matmul_tn(gathered, da);
        grads.w_gate[e] = matmul_tn(gathered, dg);
        tensor2d<T> dx_e = matmul_nt(da, *ex.w_in);
        add_inplace(dx_e, matmul_nt(dg, *ex.w_gate));
        for (std::size_t r = 0; r < ids.size(); ++r) {
            auto dst = grads.input.row(ids[r]);
            const auto src = dx_e.row(r);
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    }

    // gate softmax backward into router logits
    tensor2d<T> dlogits(tokens, n_experts);
    for (std::size_t t = 0; t < tokens; ++t) {
        const auto gates = tape.routing.gates.row(t);
        const auto dgrow = dgate.row(t);
        T inner = T(0);
        for (std::size_t s = 0; s < top_k; ++s) inner += dgrow[s] * gates[s];
        const auto tids = tape.routing.ids_for(t);
        for (std::size_t s = 0; s < top_k; ++s) {
            dlogits(t, tids[s]) += gates[s] * (dgrow[s] - inner);
        }
    }

    // auxiliary balance loss: d(aux)/d(p_te) = n * f_norm_e / tokens
    if (aux_grad_scale != 0.0 && tokens > 0) {
        const auto f = tape.stats.normalized_dispatch();
        std::vector<T> dp(n_experts);
        for (std::size_t e = 0; e < n_experts; ++e) {
            dp[e] = static_cast<T>(aux_grad_scale * static_cast<double>(n_experts) * f[e] /
                                   static_cast<double>(tokens));
        }
        for (std::size_t t = 0; t < tokens; ++t) {
            const auto p = tape.router_probs.row(t);
            T inner = T(0);
            for (std::size_t e = 0; e < n_experts; ++e) inner += dp[e] * p[e];
            for (std::size_t e = 0; e < n_experts; ++e) {
                dlogits(t, e) += p[e] * (dp[e] - inner);
            }
        }
    }

    grads.router = matmul_tn(tape.input, dlogits);
    add_inplace(grads.input, matmul_nt(dlogits, *layer.router));
    return grads;
}

}  // namespace upcy
