#pragma once

#include <span>
#include <string>
#include <vector>

#include "hbsl/data/dataset.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/model/parameters.hpp"

namespace hbsl::swarm {

using data::NodeId;
using model::ModelParameters;

struct MergeContribution {
    NodeId node_id = 0;
    ModelParameters params;
    double weight = 1.0;
    double reported_validation_accuracy = 0.0;
};

/// How the weighted merge is normalised.
///  normalized: sum(w_k P_k) / sum(w_k)
///  literal:    sum(w_k P_k) / (n * sum(w_k)), which shrinks the result by 1/n.
enum class MergeConvention { normalized, literal };

namespace detail {

inline void check_congruent(std::span<const MergeContribution> contributions, const char* op) {
    if (contributions.empty()) throw ProtocolError(std::string(op) + ": no contributions");
    const auto& ref = contributions.front().params;
    for (const auto& c : contributions.subspan(1)) {
        if (auto bad = model::shape_mismatches(ref, c.params); !bad.empty()) {
            throw ProtocolError(std::string(op) + ": node " + std::to_string(c.node_id) +
                                " has mismatched tensors: " + model::join_names(bad));
        }
    }
}

}  // namespace detail

/// Element-wise arithmetic mean of every contribution's parameters.
inline ModelParameters merge_average(std::span<const MergeContribution> contributions) {
    detail::check_congruent(contributions, "merge_average");
    ModelParameters out = ModelParameters::zeros_like(contributions.front().params);
    for (const auto& c : contributions)
        for (std::size_t s = 0; s < model::kSlotCount; ++s) {
            auto& dst = out.tensors()[s].values;
            const auto& src = c.params.tensors()[s].values;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    const double n = static_cast<double>(contributions.size());
    for (auto& t : out.tensors())
        for (double& v : t.values) v /= n;
    return out;
}

inline ModelParameters merge_weighted(std::span<const MergeContribution> contributions,
                                      MergeConvention convention = MergeConvention::normalized) {
    detail::check_congruent(contributions, "merge_weighted");
    double total_weight = 0.0;
    for (const auto& c : contributions) {
        if (!(c.weight > 0.0)) {
            throw ConfigError("merge_weighted: node " + std::to_string(c.node_id) + " has nonpositive weight " +
                              std::to_string(c.weight));
        }
        total_weight += c.weight;
    }
    ModelParameters out = ModelParameters::zeros_like(contributions.front().params);
    for (const auto& c : contributions)
        for (std::size_t s = 0; s < model::kSlotCount; ++s) {
            auto& dst = out.tensors()[s].values;
            const auto& src = c.params.tensors()[s].values;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += c.weight * src[k];
        }
    double denom = total_weight;
    if (convention == MergeConvention::literal) denom *= static_cast<double>(contributions.size());
    for (auto& t : out.tensors())
        for (double& v : t.values) v /= denom;
    return out;
}

}  // namespace hbsl::swarm
