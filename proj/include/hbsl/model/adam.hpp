#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "hbsl/errors.hpp"
#include "hbsl/model/parameters.hpp"

namespace hbsl::model {

struct MomentTag {};
using Moments = TensorBundle<MomentTag>;

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    Moments first;
    Moments second;
    std::uint64_t step = 0;
    AdamConfig config;

    OptimizerState() = default;
    OptimizerState(const ModelParameters& params, AdamConfig cfg = {})
        : first(Moments::zeros_like(params)), second(Moments::zeros_like(params)), config(cfg) {}

    /// Zero both moment accumulators and the bias-correction step counter.
    void reset() {
        first.fill(0.0);
        second.fill(0.0);
        step = 0;
    }

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

inline bool operator==(const AdamConfig& a, const AdamConfig& b) {
    return a.learning_rate == b.learning_rate && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.epsilon == b.epsilon;
}

/// One bias-corrected Adam update. Parameters are left untouched if any
/// gradient entry is non-finite.
inline void adam_step(ModelParameters& params, const Gradients& grads, OptimizerState& state) {
    if (auto bad = shape_mismatches(params, grads); !bad.empty()) {
        throw InternalError("adam_step: gradient shape mismatch in " + join_names(bad));
    }
    if (auto bad = shape_mismatches(params, state.first); !bad.empty()) {
        throw InternalError("adam_step: optimizer state shape mismatch in " + join_names(bad));
    }
    for (std::size_t i = 0; i < kSlotCount; ++i) {
        for (double g : grads.tensors()[i].values) {
            if (!std::isfinite(g)) {
                throw TrainingError("adam_step: non-finite gradient in tensor '" + std::string(kSlotNames[i]) + "'");
            }
        }
    }

    const auto& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    const double step_size = c.learning_rate / correction1;

    for (std::size_t i = 0; i < kSlotCount; ++i) {
        auto& p = params.tensors()[i].values;
        const auto& g = grads.tensors()[i].values;
        auto& m = state.first.tensors()[i].values;
        auto& v = state.second.tensors()[i].values;
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            p[k] -= step_size * m[k] / (std::sqrt(v[k] / correction2) + c.epsilon);
        }
    }
}

}  // namespace hbsl::model
