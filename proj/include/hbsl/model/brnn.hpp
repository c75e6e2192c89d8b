#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/model/parameters.hpp"

namespace hbsl::model {

using TokenId = std::int32_t;

/// How the per-timestep logits z_t are reduced to the single logit fed to the loss.
enum class OutputPooling { mean, last };

/// Everything the backward pass needs from one forward evaluation.
/// Matrices are stored row-major with one row per timestep.
struct ForwardTrace {
    std::vector<TokenId> tokens;
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;
    std::vector<double> embeddings;  // T x E
    std::vector<double> h_fwd;       // T x H
    std::vector<double> h_bwd;       // T x H
    std::vector<double> step_logits; // T
    double logit = 0.0;
    double probability = 0.5;
    OutputPooling pooling = OutputPooling::mean;

    std::size_t length() const noexcept { return tokens.size(); }
    std::span<const double> embedding_at(std::size_t t) const { return {embeddings.data() + t * embed_dim, embed_dim}; }
    std::span<const double> h_fwd_at(std::size_t t) const { return {h_fwd.data() + t * hidden_dim, hidden_dim}; }
    std::span<const double> h_bwd_at(std::size_t t) const { return {h_bwd.data() + t * hidden_dim, hidden_dim}; }
};

inline double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace detail {

// out = tanh(h_prev * W_h + e * W_e + b); h_prev may be empty for the first step.
inline void recurrent_step(const Tensor& w_e, const Tensor& w_h, const Tensor& b, std::span<const double> e,
                           std::span<const double> h_prev, std::span<double> out_span) {
    const std::size_t hidden = b.size();
    double* __restrict out = out_span.data();
    std::copy(b.values.begin(), b.values.end(), out);
    for (std::size_t k = 0; k < e.size(); ++k) {
        const double ek = e[k];
        const double* __restrict row = w_e.values.data() + k * hidden;
        for (std::size_t j = 0; j < hidden; ++j) out[j] += ek * row[j];
    }
    for (std::size_t i = 0; i < h_prev.size(); ++i) {
        const double hi = h_prev[i];
        const double* __restrict row = w_h.values.data() + i * hidden;
        for (std::size_t j = 0; j < hidden; ++j) out[j] += hi * row[j];
    }
    for (std::size_t j = 0; j < hidden; ++j) out[j] = std::tanh(out[j]);
}

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

inline void validate_tokens(const ModelParameters& params, std::span<const TokenId> tokens) {
    if (tokens.empty()) throw InputError("forward: token sequence is empty");
    const auto vocab = params.dims().vocab_size;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= vocab) {
            throw InputError("forward: token " + std::to_string(tokens[t]) + " at position " + std::to_string(t) +
                             " outside vocabulary of size " + std::to_string(vocab));
        }
    }
}

/// Bidirectional pass: h^f left to right from a zero state, h^b right to left
/// from a zero state, z_t = w_z^f . h^f_t + w_z^b . h^b_t + b_z, and the
/// sequence logit is the pooled z_t.
inline ForwardTrace forward(const ModelParameters& params, std::span<const TokenId> tokens,
                            OutputPooling pooling = OutputPooling::mean) {
    validate_tokens(params, tokens);
    const auto& d = params.dims();
    const std::size_t n = tokens.size();
    const std::size_t E = d.embed_dim;
    const std::size_t H = d.hidden_dim;

    ForwardTrace tr;
    tr.tokens.assign(tokens.begin(), tokens.end());
    tr.embed_dim = E;
    tr.hidden_dim = H;
    tr.pooling = pooling;
    tr.embeddings.resize(n * E);
    tr.h_fwd.resize(n * H);
    tr.h_bwd.resize(n * H);
    tr.step_logits.resize(n);

    const auto& emb = params[Slot::embedding];
    for (std::size_t t = 0; t < n; ++t) {
        auto src = emb.row(static_cast<std::size_t>(tokens[t]));
        std::copy(src.begin(), src.end(), tr.embeddings.begin() + static_cast<std::ptrdiff_t>(t * E));
    }

    for (std::size_t t = 0; t < n; ++t) {
        std::span<const double> prev = t == 0 ? std::span<const double>{} : tr.h_fwd_at(t - 1);
        detail::recurrent_step(params[Slot::w_e_fwd], params[Slot::w_h_fwd], params[Slot::b_h_fwd],
                               tr.embedding_at(t), prev, {tr.h_fwd.data() + t * H, H});
    }
    for (std::size_t t = n; t-- > 0;) {
        std::span<const double> next = t + 1 == n ? std::span<const double>{} : tr.h_bwd_at(t + 1);
        detail::recurrent_step(params[Slot::w_e_bwd], params[Slot::w_h_bwd], params[Slot::b_h_bwd],
                               tr.embedding_at(t), next, {tr.h_bwd.data() + t * H, H});
    }

    const auto& wzf = params[Slot::w_z_fwd].values;
    const auto& wzb = params[Slot::w_z_bwd].values;
    double sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        tr.step_logits[t] = detail::dot(wzf, tr.h_fwd_at(t)) + detail::dot(wzb, tr.h_bwd_at(t)) + params.b_z();
        sum += tr.step_logits[t];
    }
    tr.logit = pooling == OutputPooling::mean ? sum / static_cast<double>(n) : tr.step_logits[n - 1];
    tr.probability = sigmoid(tr.logit);
    return tr;
}

inline constexpr double kProbabilityClamp = 1e-12;

/// Binary cross-entropy of the trace's probability against a {0,1} label.
inline double loss(double probability, int label) {
    const double p = std::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

inline double loss(const ForwardTrace& trace, int label) { return loss(trace.probability, label); }

/// Adds d(loss)/d(params) for one example into `grads`. Only embedding rows of
/// tokens present in the trace are touched.
inline void accumulate_gradients(const ModelParameters& params, const ForwardTrace& tr, int label, Gradients& grads,
                                 double scale = 1.0) {
    const auto& d = params.dims();
    const std::size_t n = tr.length();
    const std::size_t E = d.embed_dim;
    const std::size_t H = d.hidden_dim;
    if (tr.embed_dim != E || tr.hidden_dim != H || tr.embeddings.size() != n * E || tr.h_fwd.size() != n * H ||
        tr.h_bwd.size() != n * H || n == 0) {
        throw InternalError("backward: trace shape does not match parameters");
    }
    if (!(grads.dims() == d)) throw InternalError("backward: gradient accumulator shape does not match parameters");

    // The loss depends on the logit only through sigmoid, so dL/dz = phi(z) - y.
    const double dz = (tr.probability - static_cast<double>(label)) * scale;
    std::vector<double> step_grad(n, 0.0);
    if (tr.pooling == OutputPooling::mean) {
        std::fill(step_grad.begin(), step_grad.end(), dz / static_cast<double>(n));
    } else {
        step_grad[n - 1] = dz;
    }

    grads.b_z() += dz;
    auto& g_wzf = grads[Slot::w_z_fwd].values;
    auto& g_wzb = grads[Slot::w_z_bwd].values;
    const auto& wzf = params[Slot::w_z_fwd].values;
    const auto& wzb = params[Slot::w_z_bwd].values;

    std::vector<double> d_emb(n * E, 0.0);
    std::vector<double> carry(H, 0.0);
    std::vector<double> da(H, 0.0);
    std::vector<double> de_step(E, 0.0);
    std::vector<double> w_e_t(H * E);
    std::vector<double> w_h_t(H * H);

    auto run_direction = [&](bool forward_dir) {
        const auto& w_e = params[forward_dir ? Slot::w_e_fwd : Slot::w_e_bwd].values;
        const auto& w_h = params[forward_dir ? Slot::w_h_fwd : Slot::w_h_bwd].values;
        auto& g_we = grads[forward_dir ? Slot::w_e_fwd : Slot::w_e_bwd].values;
        auto& g_wh = grads[forward_dir ? Slot::w_h_fwd : Slot::w_h_bwd].values;
        auto& g_b = grads[forward_dir ? Slot::b_h_fwd : Slot::b_h_bwd].values;
        auto& g_wz = forward_dir ? g_wzf : g_wzb;
        const auto& wz = forward_dir ? wzf : wzb;
        const auto& states = forward_dir ? tr.h_fwd : tr.h_bwd;
        // Transposed copies turn the W * da products into contiguous axpy loops.
        for (std::size_t k = 0; k < E; ++k)
            for (std::size_t j = 0; j < H; ++j) w_e_t[j * E + k] = w_e[k * H + j];
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < H; ++j) w_h_t[j * H + i] = w_h[i * H + j];
        std::fill(carry.begin(), carry.end(), 0.0);

        // Walk against the direction the states were produced in.
        for (std::size_t step = 0; step < n; ++step) {
            const std::size_t t = forward_dir ? n - 1 - step : step;
            const double* h = states.data() + t * H;
            const bool has_prev = forward_dir ? t > 0 : t + 1 < n;
            const double* h_prev = has_prev ? states.data() + (forward_dir ? t - 1 : t + 1) * H : nullptr;
            const double gs = step_grad[t];

            for (std::size_t j = 0; j < H; ++j) {
                g_wz[j] += gs * h[j];
                const double dh = gs * wz[j] + carry[j];
                da[j] = dh * (1.0 - h[j] * h[j]);
                g_b[j] += da[j];
            }
            const double* e = tr.embeddings.data() + t * E;
            for (std::size_t k = 0; k < E; ++k) {
                const double ek = e[k];
                double* grow = g_we.data() + k * H;
                for (std::size_t j = 0; j < H; ++j) grow[j] += ek * da[j];
            }
            std::fill(de_step.begin(), de_step.end(), 0.0);
            for (std::size_t j = 0; j < H; ++j) {
                const double dj = da[j];
                const double* col = w_e_t.data() + j * E;
                for (std::size_t k = 0; k < E; ++k) de_step[k] += col[k] * dj;
            }
            double* de = d_emb.data() + t * E;
            for (std::size_t k = 0; k < E; ++k) de[k] += de_step[k];

            std::fill(carry.begin(), carry.end(), 0.0);
            if (h_prev) {
                for (std::size_t i = 0; i < H; ++i) {
                    const double hp = h_prev[i];
                    double* grow = g_wh.data() + i * H;
                    for (std::size_t j = 0; j < H; ++j) grow[j] += hp * da[j];
                }
                for (std::size_t j = 0; j < H; ++j) {
                    const double dj = da[j];
                    const double* col = w_h_t.data() + j * H;
                    for (std::size_t i = 0; i < H; ++i) carry[i] += col[i] * dj;
                }
            }
        }
    };
    run_direction(true);
    run_direction(false);

    auto& g_emb = grads[Slot::embedding];
    for (std::size_t t = 0; t < n; ++t) {
        auto row = g_emb.row(static_cast<std::size_t>(tr.tokens[t]));
        for (std::size_t k = 0; k < E; ++k) row[k] += d_emb[t * E + k];
    }
}

/// Exact gradient of the loss for one labelled sequence.
inline Gradients backward(const ModelParameters& params, const ForwardTrace& trace, int label) {
    Gradients g = Gradients::zeros_like(params);
    accumulate_gradients(params, trace, label, g);
    return g;
}

struct Prediction {
    int label = 0;
    double probability = 0.5;
};

/// label 1 (True) iff probability >= 0.5.
inline int label_for(double probability) noexcept { return probability >= 0.5 ? 1 : 0; }

inline Prediction predict(const ModelParameters& params, std::span<const TokenId> tokens,
                          OutputPooling pooling = OutputPooling::mean) {
    const auto tr = forward(params, tokens, pooling);
    return {label_for(tr.probability), tr.probability};
}

}  // namespace hbsl::model
