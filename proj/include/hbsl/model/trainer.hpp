#pragma once

#include <concepts>
#include <cstdint>
#include <numeric>
#include <ranges>
#include <span>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/model/adam.hpp"
#include "hbsl/model/brnn.hpp"
#include "hbsl/seed.hpp"

namespace hbsl::model {

/// Anything with token ids and a {0,1} label can be trained on.
template <typename T>
concept LabelledSequence = requires(const T& e) {
    { std::span<const TokenId>(e.tokens) };
    { e.label } -> std::convertible_to<int>;
};

struct TrainHyper {
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    OutputPooling pooling = OutputPooling::mean;
};

struct TrainResult {
    double final_mean_loss = 0.0;
    std::size_t steps = 0;
};

template <std::ranges::random_access_range Range>
    requires LabelledSequence<std::ranges::range_value_t<Range>>
double mean_loss(const ModelParameters& params, const Range& data, OutputPooling pooling = OutputPooling::mean) {
    double total = 0.0;
    for (const auto& ex : data) total += loss(forward(params, ex.tokens, pooling), static_cast<int>(ex.label));
    return total / static_cast<double>(std::ranges::size(data));
}

/// Mini-batch Adam over `data` for hyper.epochs passes. Each epoch visits the
/// examples in a fresh seeded permutation; gradients are averaged per batch.
/// The returned loss is the mean per-example loss seen during the last epoch.
template <std::ranges::random_access_range Range>
    requires LabelledSequence<std::ranges::range_value_t<Range>>
TrainResult train_epochs(ModelParameters& params, OptimizerState& optimizer, const Range& data,
                         const TrainHyper& hyper, std::uint64_t seed) {
    const std::size_t n = std::ranges::size(data);
    if (n == 0) throw TrainingError("train_epochs: training set is empty");
    if (hyper.batch_size == 0) throw ConfigError("train_epochs: batch size must be >= 1");
    if (!(hyper.learning_rate > 0.0)) throw ConfigError("train_epochs: learning rate must be > 0");

    TrainResult result;
    if (hyper.epochs == 0) {
        result.final_mean_loss = mean_loss(params, data, hyper.pooling);
        return result;
    }

    optimizer.config.learning_rate = hyper.learning_rate;
    Rng rng(derive_seed(seed, {stream::shuffle}));
    std::vector<std::size_t> order(n);
    Gradients grads = Gradients::zeros_like(params);

    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_in_place(order, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += hyper.batch_size) {
            const std::size_t stop = std::min(n, start + hyper.batch_size);
            const double scale = 1.0 / static_cast<double>(stop - start);
            grads.fill(0.0);
            for (std::size_t i = start; i < stop; ++i) {
                const auto& ex = data[order[i]];
                const auto tr = forward(params, ex.tokens, hyper.pooling);
                epoch_loss += loss(tr, static_cast<int>(ex.label));
                accumulate_gradients(params, tr, static_cast<int>(ex.label), grads, scale);
            }
            adam_step(params, grads, optimizer);
            ++result.steps;
        }
        result.final_mean_loss = epoch_loss / static_cast<double>(n);
    }
    if (!params.all_finite()) throw TrainingError("train_epochs: parameters became non-finite");
    return result;
}

}  // namespace hbsl::model
