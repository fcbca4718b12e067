#pragma once

// Dense decoder-only transformer (RMSNorm pre-norm, GQA attention with
// rotary embeddings, GLU feed-forward with a sigmoid-weighted linear gate)
// plus the MoE variant of the feed-forward sublayer. Forward records an
// activation tape sufficient for the manual backward pass.
//
// Forward and backward are pure with respect to the weights: concurrent
// evaluations on one checkpoint are safe as long as nobody mutates it.

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "upcy/checkpoint.hpp"
#include "upcy/config.hpp"
#include "upcy/core.hpp"
#include "upcy/kernels.hpp"
#include "upcy/moe.hpp"

namespace upcy {

template <class T>
using named_tensors = std::map<std::string, tensor2d<T>>;

template <class T>
named_tensors<T> widen(const checkpoint& ckpt) {
    named_tensors<T> out;
    for (const auto& [name, t] : ckpt.tensors) out.emplace(name, t.template cast<T>());
    return out;
}

inline named_tensors<double> widen64(const checkpoint& ckpt) { return widen<double>(ckpt); }

// ----------------------------------------------------------------------
// initialization
// ----------------------------------------------------------------------

// Truncated normal std 0.02, scaled 0.02/sqrt(2*n_layers) on the residual
// output projections (wo, w_out); norm gains 1; router plain normal with
// its configured std. Each tensor draws from a stream split by name, so
// the result is independent of initialization order.
inline checkpoint init_model(const model_config& cfg, rng_stream rng) {
    cfg.validate();
    const double base_std = 0.02;
    const double resid_std = base_std / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));

    checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.meta.seed = rng.seed;
    for (const auto& spec : tensor_schema(cfg)) {
        rng_stream s = rng.split(spec.name);
        const bool is_norm = spec.name.find("norm") != std::string::npos;
        const bool is_resid_out = spec.name.ends_with(".attn.wo") || spec.name.ends_with(".w_out");
        const bool is_router = spec.name.ends_with(".router");
        tensor t(spec.rows, spec.cols);
        if (is_norm) {
            t.fill(1.0f);
        } else if (is_router) {
            t = random_normal<float>(spec.rows, spec.cols, s, cfg.moe->router_init_std,
                                     /*truncated=*/false);
        } else {
            t = random_normal<float>(spec.rows, spec.cols, s,
                                     is_resid_out ? resid_std : base_std);
        }
        ckpt.tensors.emplace(spec.name, std::move(t));
    }
    return ckpt;
}

inline checkpoint init_dense(const model_config& cfg, rng_stream rng) {
    if (cfg.moe) throw config_error("init_dense: config must not carry an MoE section");
    return init_model(cfg, rng);
}

// ----------------------------------------------------------------------
// weight views
// ----------------------------------------------------------------------

template <class T>
struct layer_view {
    const tensor2d<T>*attn_norm, *wq, *wk, *wv, *wo, *ffn_norm;
    const tensor2d<T>*w_in = nullptr, *w_gate = nullptr, *w_out = nullptr;  // dense path
    moe_layer_view<T> moe;                                                  // MoE path
};

template <class T>
struct model_view {
    const model_config* cfg;
    const named_tensors<T>* tensors;
    const tensor2d<T>*tok_embed, *lm_head /*null when tied*/, *final_norm;
    std::vector<layer_view<T>> layers;
};

template <class T>
const tensor2d<T>& need(const named_tensors<T>& ts, const std::string& name) {
    const auto it = ts.find(name);
    if (it == ts.end()) throw state_error("missing tensor " + name);
    return it->second;
}

template <class T>
model_view<T> make_view(const model_config& cfg, const named_tensors<T>& ts) {
    model_view<T> v;
    v.cfg = &cfg;
    v.tensors = &ts;
    v.tok_embed = &need(ts, schema::tok_embed);
    v.lm_head = cfg.tie_embeddings ? nullptr : &need(ts, schema::lm_head);
    v.final_norm = &need(ts, schema::final_norm);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        layer_view<T> lv{};
        lv.attn_norm = &need(ts, schema::attn_norm(l));
        lv.wq = &need(ts, schema::wq(l));
        lv.wk = &need(ts, schema::wk(l));
        lv.wv = &need(ts, schema::wv(l));
        lv.wo = &need(ts, schema::wo(l));
        lv.ffn_norm = &need(ts, schema::ffn_norm(l));
        if (cfg.moe) {
            lv.moe.router = &need(ts, schema::router(l));
            lv.moe.experts.resize(cfg.moe->n_experts);
            for (std::size_t e = 0; e < cfg.moe->n_experts; ++e) {
                lv.moe.experts[e] = {&need(ts, schema::expert_w_in(l, e)),
                                     &need(ts, schema::expert_w_gate(l, e)),
                                     &need(ts, schema::expert_w_out(l, e))};
            }
        } else {
            lv.w_in = &need(ts, schema::w_in(l));
            lv.w_gate = &need(ts, schema::w_gate(l));
            lv.w_out = &need(ts, schema::w_out(l));
        }
        v.layers.push_back(lv);
    }
    return v;
}

// ----------------------------------------------------------------------
// RMSNorm / RoPE helpers
// ----------------------------------------------------------------------

constexpr double kRmsEps = 1e-5;

template <class T>
tensor2d<T> rmsnorm_rows(const tensor2d<T>& x, const tensor2d<T>& gain,
                         std::vector<T>* inv_rms_out = nullptr) {
    const std::size_t d = x.cols();
    tensor2d<T> y(x.rows(), d);
    if (inv_rms_out) inv_rms_out->resize(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        T ms = T(0);
        for (const T v : in) ms += v * v;
        const T inv = T(1) / std::sqrt(ms / static_cast<T>(d) + static_cast<T>(kRmsEps));
        if (inv_rms_out) (*inv_rms_out)[r] = inv;
        auto out = y.row(r);
        const auto gn = gain.row(0);
        for (std::size_t c = 0; c < d; ++c) out[c] = in[c] * inv * gn[c];
    }
    return y;
}

// dL/dx and dL/dgain given dL/dy; inv_rms from the forward pass
template <class T>
void rmsnorm_backward(const tensor2d<T>& x, const tensor2d<T>& gain,
                      const std::vector<T>& inv_rms, const tensor2d<T>& dy,
                      tensor2d<T>& dx, tensor2d<T>& dgain) {
    const std::size_t d = x.cols();
    const auto gn = gain.row(0);
    auto dg = dgain.row(0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto in = x.row(r);
        const auto dyr = dy.row(r);
        auto dxr = dx.row(r);
        const T inv = inv_rms[r];
        T inner = T(0);  // sum_j (dy_j * gain_j) * x_j
        for (std::size_t c = 0; c < d; ++c) inner += dyr[c] * gn[c] * in[c];
        const T coef = inv * inv * inv * inner / static_cast<T>(d);
        for (std::size_t c = 0; c < d; ++c) {
            dxr[c] += dyr[c] * gn[c] * inv - in[c] * coef;
            dg[c] += dyr[c] * in[c] * inv;
        }
    }
}

constexpr double kRopeBase = 10000.0;

// rotate q/k pairs in place; dir = -1 undoes the rotation (used in backward)
template <class T>
void rope_apply(tensor2d<T>& x, std::size_t n_heads, std::size_t head_dim,
                std::span<const std::size_t> positions, int dir = 1) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double pos = static_cast<double>(positions[r]);
        auto row = x.row(r);
        for (std::size_t h = 0; h < n_heads; ++h) {
            T* base = row.data() + h * head_dim;
            for (std::size_t i = 0; i + 1 < head_dim; i += 2) {
                const double theta =
                    pos * std::pow(kRopeBase, -static_cast<double>(i) /
                                                  static_cast<double>(head_dim));
                const T c = static_cast<T>(std::cos(theta));
                const T s = static_cast<T>(std::sin(theta)) * static_cast<T>(dir);
                const T x0 = base[i], x1 = base[i + 1];
                base[i] = x0 * c - x1 * s;
                base[i + 1] = x0 * s + x1 * c;
            }
        }
    }
}

// ----------------------------------------------------------------------
// forward
// ----------------------------------------------------------------------

template <class T>
struct layer_tape {
    tensor2d<T> x_in;  // residual stream entering the layer
    tensor2d<T> h_attn;
    std::vector<T> inv_rms_attn;
    tensor2d<T> q, k, v;               // q/k post-rope
    std::vector<tensor2d<T>> probs;    // per seq*head, lower-triangular S x S
    tensor2d<T> ctx;                   // concatenated head outputs, pre-wo
    tensor2d<T> x_mid;                 // after attention residual
    tensor2d<T> h_ffn;
    std::vector<T> inv_rms_ffn;
    tensor2d<T> a, g;                  // dense GLU intermediates
    moe_tape<T> moe;
};

template <class T>
struct activation_tape {
    model_config config;
    std::vector<int> tokens;                // flattened
    std::vector<std::size_t> seq_lens;
    std::vector<std::size_t> positions;     // per flattened row
    std::vector<layer_tape<T>> layers;
    tensor2d<T> final_in;
    std::vector<T> inv_rms_final;
    tensor2d<T> h_final;
};

template <class T>
struct forward_result {
    tensor2d<T> logits;  // positions x vocab
    std::vector<router_stats> moe_stats;
    double mean_balance_loss = 0.0;
    activation_tape<T> tape;  // populated when want_tape
};

template <class T>
forward_result<T> forward(const model_config& cfg, const named_tensors<T>& weights,
                          const std::vector<std::vector<int>>& sequences,
                          bool want_tape = true) {
    cfg.validate();
    const model_view<T> mv = make_view(cfg, weights);
    const std::size_t d = cfg.d_model;
    const std::size_t hd = cfg.head_dim();
    if (hd % 2 != 0) throw config_error("forward: head_dim must be even for rotary embeddings");
    const std::size_t group = cfg.n_heads / cfg.n_kv_heads;

    std::size_t total = 0;
    for (const auto& s : sequences) {
        if (s.size() > cfg.max_seq_len) {
            throw shape_error("forward: sequence length " + std::to_string(s.size()) +
                              " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
        }
        total += s.size();
    }
    if (total == 0) throw shape_error("forward: empty batch");

    forward_result<T> res;
    activation_tape<T>& tape = res.tape;
    tape.config = cfg;
    tape.seq_lens.reserve(sequences.size());
    tape.tokens.reserve(total);
    tape.positions.reserve(total);
    for (const auto& s : sequences) {
        tape.seq_lens.push_back(s.size());
        for (std::size_t p = 0; p < s.size(); ++p) {
            const int t = s[p];
            if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
                throw index_error("forward: token id " + std::to_string(t) + " outside vocab");
            }
            tape.tokens.push_back(t);
            tape.positions.push_back(p);
        }
    }

    tensor2d<T> x(total, d);
    for (std::size_t r = 0; r < total; ++r) {
        const auto src = mv.tok_embed->row(static_cast<std::size_t>(tape.tokens[r]));
        std::memcpy(x.row(r).data(), src.data(), d * sizeof(T));
    }

    if (want_tape) tape.layers.resize(cfg.n_layers);
    if (cfg.moe) res.moe_stats.resize(cfg.n_layers);

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const layer_view<T>& lv = mv.layers[l];
        layer_tape<T> scratch;
        layer_tape<T>& lt = want_tape ? tape.layers[l] : scratch;
        if (want_tape) lt.x_in = x;

        // attention sublayer
        tensor2d<T> h = rmsnorm_rows(x, *lv.attn_norm, &lt.inv_rms_attn);
        tensor2d<T> q = matmul(h, *lv.wq);
        tensor2d<T> k = matmul(h, *lv.wk);
        tensor2d<T> v = matmul(h, *lv.wv);
        rope_apply(q, cfg.n_heads, hd, tape.positions);
        rope_apply(k, cfg.n_kv_heads, hd, tape.positions);

        tensor2d<T> ctx(total, d);
        if (want_tape) lt.probs.resize(sequences.size() * cfg.n_heads);
        const T scale = T(1) / std::sqrt(static_cast<T>(hd));
        std::size_t row0 = 0;
        for (std::size_t si = 0; si < sequences.size(); ++si) {
            const std::size_t S = tape.seq_lens[si];
            for (std::size_t hh = 0; hh < cfg.n_heads; ++hh) {
                const std::size_t kv = hh / group;
                tensor2d<T> probs(S, S);
                for (std::size_t i = 0; i < S; ++i) {
                    const T* qi = q.row(row0 + i).data() + hh * hd;
                    // causal: scores only over j <= i, softmax over that prefix
                    T m = -std::numeric_limits<T>::infinity();
                    auto prow = probs.row(i);
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T* kj = k.row(row0 + j).data() + kv * hd;
                        T acc = T(0);
                        for (std::size_t c = 0; c < hd; ++c) acc += qi[c] * kj[c];
                        prow[j] = acc * scale;
                        m = std::max(m, prow[j]);
                    }
                    T denom = T(0);
                    for (std::size_t j = 0; j <= i; ++j) {
                        prow[j] = std::exp(prow[j] - m);
                        denom += prow[j];
                    }
                    const T inv = T(1) / denom;
                    for (std::size_t j = 0; j <= i; ++j) prow[j] *= inv;
                    T* out = ctx.row(row0 + i).data() + hh * hd;
                    for (std::size_t c = 0; c < hd; ++c) out[c] = T(0);
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T* vj = v.row(row0 + j).data() + kv * hd;
                        const T p = prow[j];
                        for (std::size_t c = 0; c < hd; ++c) out[c] += p * vj[c];
                    }
                }
                if (want_tape) lt.probs[si * cfg.n_heads + hh] = std::move(probs);
            }
            row0 += S;
        }

        tensor2d<T> attn_out = matmul(ctx, *lv.wo);
        add_inplace(x, attn_out);
        if (!x.all_finite()) {
            throw numeric_error("forward: non-finite activation in layer " + std::to_string(l) +
                                " (attention)");
        }
        if (want_tape) {
            lt.h_attn = std::move(h);
            lt.q = std::move(q);
            lt.k = std::move(k);
            lt.v = std::move(v);
            lt.ctx = std::move(ctx);
            lt.x_mid = x;
        }

        // feed-forward sublayer
        tensor2d<T> h2 = rmsnorm_rows(x, *lv.ffn_norm, &lt.inv_rms_ffn);
        tensor2d<T> y;
        if (cfg.moe) {
            // stats are wanted either way; without want_tape the scratch tape
            // is discarded at the end of this layer
            y = moe_forward(lv.moe, h2, cfg.moe->top_k, &lt.moe);
            res.moe_stats[l] = lt.moe.stats;
        } else {
            tensor2d<T> a = matmul(h2, *lv.w_in);
            tensor2d<T> g = matmul(h2, *lv.w_gate);
            y = tensor2d<T>(a.rows(), d);
            tensor2d<T> act(a.rows(), a.cols());
            for (std::size_t i = 0; i < a.size(); ++i) {
                act.data()[i] = a.data()[i] * silu(g.data()[i]);
            }
            y = matmul(act, *lv.w_out);
            if (want_tape) {
                lt.a = std::move(a);
                lt.g = std::move(g);
            }
        }
        add_inplace(x, y);
        if (!x.all_finite()) {
            throw numeric_error("forward: non-finite activation in layer " + std::to_string(l) +
                                " (ffn)");
        }
        if (want_tape) lt.h_ffn = std::move(h2);
    }

    if (want_tape) tape.final_in = x;
    tensor2d<T> fn = rmsnorm_rows(x, *mv.final_norm, &tape.inv_rms_final);
    res.logits = cfg.tie_embeddings ? matmul_nt(fn, *mv.tok_embed) : matmul(fn, *mv.lm_head);
    if (!res.logits.all_finite()) throw numeric_error("forward: non-finite logits");
    if (want_tape) tape.h_final = std::move(fn);

    if (cfg.moe) {
        double acc = 0.0;
        for (const auto& st : res.moe_stats) acc += st.balance_loss;
        res.mean_balance_loss = acc / static_cast<double>(cfg.n_layers);
    }
    return res;
}

inline forward_result<float> forward(const checkpoint& ckpt,
                                     const std::vector<std::vector<int>>& sequences,
                                     bool want_tape = true) {
    return forward<float>(ckpt.config, ckpt.tensors, sequences, want_tape);
}

// ----------------------------------------------------------------------
// backward
// ----------------------------------------------------------------------

template <class T>
named_tensors<T> zero_grads(const model_config& cfg) {
    named_tensors<T> g;
    for (const auto& spec : tensor_schema(cfg)) {
        g.emplace(spec.name, tensor2d<T>(spec.rows, spec.cols));
    }
    return g;
}

// loss_grad: dL/dlogits (positions x vocab). aux_grad_scale: dL/d(per-layer
// balance loss); pass lb_coeff / n_layers when the loss adds
// lb_coeff * mean-per-layer balance.
template <class T>
named_tensors<T> backward(const model_config& cfg, const named_tensors<T>& weights,
                          const activation_tape<T>& tape, const tensor2d<T>& loss_grad,
                          double aux_grad_scale = 0.0) {
    if (!(tape.config == cfg)) throw state_error("backward: tape was produced by another config");
    const model_view<T> mv = make_view(cfg, weights);
    const std::size_t d = cfg.d_model;
    const std::size_t hd = cfg.head_dim();
    const std::size_t group = cfg.n_heads / cfg.n_kv_heads;
    const std::size_t total = tape.tokens.size();
    if (loss_grad.rows() != total || loss_grad.cols() != cfg.vocab_size) {
        throw state_error("backward: loss gradient shape does not match tape");
    }
    if (tape.layers.size() != cfg.n_layers) {
        throw state_error("backward: tape is missing layer activations");
    }

    named_tensors<T> grads = zero_grads<T>(cfg);

    // head
    tensor2d<T> dfn(total, d);
    if (cfg.tie_embeddings) {
        dfn = matmul(loss_grad, *mv.tok_embed);
        add_inplace(grads.at(schema::tok_embed), matmul_tn(loss_grad, tape.h_final));
    } else {
        dfn = matmul_nt(loss_grad, *mv.lm_head);
        add_inplace(grads.at(schema::lm_head), matmul_tn(tape.h_final, loss_grad));
    }
    tensor2d<T> dx(total, d);
    rmsnorm_backward(tape.final_in, *mv.final_norm, tape.inv_rms_final, dfn, dx,
                     grads.at(schema::final_norm));

    for (std::size_t li = cfg.n_layers; li-- > 0;) {
        const layer_view<T>& lv = mv.layers[li];
        const layer_tape<T>& lt = tape.layers[li];

        // ffn sublayer: x_out = x_mid + ffn(rmsnorm(x_mid))
        tensor2d<T> dh2(total, d);
        if (cfg.moe) {
            moe_grads<T> mg = moe_backward(lv.moe, lt.moe, dx, aux_grad_scale);
            dh2 = std::move(mg.input);
            add_inplace(grads.at(schema::router(li)), mg.router);
            for (std::size_t e = 0; e < cfg.moe->n_experts; ++e) {
                add_inplace(grads.at(schema::expert_w_in(li, e)), mg.w_in[e]);
                add_inplace(grads.at(schema::expert_w_gate(li, e)), mg.w_gate[e]);
                add_inplace(grads.at(schema::expert_w_out(li, e)), mg.w_out[e]);
            }
        } else {
            const tensor2d<T>& a = lt.a;
            const tensor2d<T>& g = lt.g;
            tensor2d<T> act(a.rows(), a.cols());
            for (std::size_t i = 0; i < a.size(); ++i) {
                act.data()[i] = a.data()[i] * silu(g.data()[i]);
            }
            add_inplace(grads.at(schema::w_out(li)), matmul_tn(act, dx));
            tensor2d<T> dact = matmul_nt(dx, *lv.w_out);
            tensor2d<T> da(a.rows(), a.cols());
            tensor2d<T> dg(a.rows(), a.cols());
            for (std::size_t i = 0; i < da.size(); ++i) {
                da.data()[i] = dact.data()[i] * silu(g.data()[i]);
                dg.data()[i] = dact.data()[i] * a.data()[i] * silu_grad(g.data()[i]);
            }
            add_inplace(grads.at(schema::w_in(li)), matmul_tn(lt.h_ffn, da));
            add_inplace(grads.at(schema::w_gate(li)), matmul_tn(lt.h_ffn, dg));
            dh2 = matmul_nt(da, *lv.w_in);
            add_inplace(dh2, matmul_nt(dg, *lv.w_gate));
        }
        // residual: dx flows through both the skip and the norm
        rmsnorm_backward(lt.x_mid, *lv.ffn_norm, lt.inv_rms_ffn, dh2, dx,
                         grads.at(schema::ffn_norm(li)));

        // attention sublayer: x_mid = x_in + wo(attend(rope(qkv(rmsnorm(x_in)))))
        tensor2d<T> dctx = matmul_nt(dx, *lv.wo);
        add_inplace(grads.at(schema::wo(li)), matmul_tn(lt.ctx, dx));

        tensor2d<T> dq(total, cfg.n_heads * hd);
        tensor2d<T> dk(total, cfg.kv_dim());
        tensor2d<T> dv(total, cfg.kv_dim());
        const T scale = T(1) / std::sqrt(static_cast<T>(hd));
        std::size_t row0 = 0;
        for (std::size_t si = 0; si < tape.seq_lens.size(); ++si) {
            const std::size_t S = tape.seq_lens[si];
            for (std::size_t hh = 0; hh < cfg.n_heads; ++hh) {
                const std::size_t kv = hh / group;
                const tensor2d<T>& probs = lt.probs[si * cfg.n_heads + hh];
                for (std::size_t i = 0; i < S; ++i) {
                    const T* dctx_i = dctx.row(row0 + i).data() + hh * hd;
                    const auto prow = probs.row(i);
                    // dprobs and softmax jacobian over the causal prefix
                    T inner = T(0);
                    std::vector<T> dprobs(i + 1);
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T* vj = lt.v.row(row0 + j).data() + kv * hd;
                        T acc = T(0);
                        for (std::size_t c = 0; c < hd; ++c) acc += dctx_i[c] * vj[c];
                        dprobs[j] = acc;
                        inner += acc * prow[j];
                        // dv accumulation
                        T* dvj = dv.row(row0 + j).data() + kv * hd;
                        const T p = prow[j];
                        for (std::size_t c = 0; c < hd; ++c) dvj[c] += p * dctx_i[c];
                    }
                    T* dqi = dq.row(row0 + i).data() + hh * hd;
                    const T* qi = lt.q.row(row0 + i).data() + hh * hd;
                    for (std::size_t j = 0; j <= i; ++j) {
                        const T ds = prow[j] * (dprobs[j] - inner) * scale;
                        const T* kj = lt.k.row(row0 + j).data() + kv * hd;
                        T* dkj = dk.row(row0 + j).data() + kv * hd;
                        for (std::size_t c = 0; c < hd; ++c) {
                            dqi[c] += ds * kj[c];
                            dkj[c] += ds * qi[c];
                        }
                    }
                }
            }
            row0 += S;
        }

        rope_apply(dq, cfg.n_heads, hd, tape.positions, -1);
        rope_apply(dk, cfg.n_kv_heads, hd, tape.positions, -1);

        add_inplace(grads.at(schema::wq(li)), matmul_tn(lt.h_attn, dq));
        add_inplace(grads.at(schema::wk(li)), matmul_tn(lt.h_attn, dk));
        add_inplace(grads.at(schema::wv(li)), matmul_tn(lt.h_attn, dv));
        tensor2d<T> dh = matmul_nt(dq, *lv.wq);
        add_inplace(dh, matmul_nt(dk, *lv.wk));
        add_inplace(dh, matmul_nt(dv, *lv.wv));
        rmsnorm_backward(lt.x_in, *lv.attn_norm, lt.inv_rms_attn, dh, dx,
                         grads.at(schema::attn_norm(li)));
    }

    // embedding scatter
    tensor2d<T>& dembed = grads.at(schema::tok_embed);
    for (std::size_t r = 0; r < total; ++r) {
        auto dst = dembed.row(static_cast<std::size_t>(tape.tokens[r]));
        const auto src = dx.row(r);
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    return grads;
}

inline named_tensors<float> backward(const checkpoint& ckpt, const activation_tape<float>& tape,
                                     const tensor2d<float>& loss_grad,
                                     double aux_grad_scale = 0.0) {
    return backward<float>(ckpt.config, ckpt.tensors, tape, loss_grad, aux_grad_scale);
}

}  // namespace upcy
