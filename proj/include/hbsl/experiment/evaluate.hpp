#pragma once

#include <ranges>

#include "hbsl/errors.hpp"
#include "hbsl/model/brnn.hpp"
#include "hbsl/model/trainer.hpp"

namespace hbsl::experiment {

/// Fraction of examples whose predicted label equals the ground truth.
template <std::ranges::input_range Range>
    requires model::LabelledSequence<std::ranges::range_value_t<Range>>
double evaluate(const model::ModelParameters& params, const Range& eval_set,
                model::OutputPooling pooling = model::OutputPooling::mean) {
    std::size_t total = 0, correct = 0;
    for (const auto& ex : eval_set) {
        ++total;
        correct += model::predict(params, ex.tokens, pooling).label == static_cast<int>(ex.label);
    }
    if (total == 0) throw EvaluationError("evaluate: evaluation set is empty");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace hbsl::experiment
