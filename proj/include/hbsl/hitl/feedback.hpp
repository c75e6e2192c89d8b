#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hbsl/data/dataset.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/seed.hpp"

namespace hbsl::hitl {

using data::NodeId;
using model::TokenId;

enum class FeedbackSource { oracle, human };

inline const char* to_string(FeedbackSource s) { return s == FeedbackSource::oracle ? "oracle" : "human"; }

/// A test prediction queued for correction.
struct PendingItem {
    std::string example_id;
    std::string text;
    std::vector<TokenId> tokens;
    int predicted_label = 0;
    double probability = 0.5;
};

/// A corrected prediction, d'_i, ready to be folded into the training shard.
struct FeedbackItem {
    std::string example_id;
    std::vector<TokenId> tokens;
    int predicted_label = 0;
    int corrected_label = 0;
    FeedbackSource source = FeedbackSource::oracle;
    std::uint32_t round = 0;
};

using GroundTruth = std::unordered_map<std::string, int>;

/// Counts every feedback-module operation; SL runs must leave it untouched.
inline std::atomic<std::uint64_t>& operation_counter() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

/// floor(portion * |test|) distinct ids drawn uniformly, returned in shard order.
inline std::vector<std::string> sample_for_feedback(const data::Dataset& test, double portion, std::uint64_t seed) {
    if (!(portion >= 0.0 && portion <= 1.0))
        throw ConfigError("feedback portion must be in [0,1], got " + std::to_string(portion));
    ++operation_counter();
    const auto k = static_cast<std::size_t>(std::floor(portion * static_cast<double>(test.size()) + 1e-9));
    std::vector<std::size_t> idx(test.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, {stream::feedback_sample}));
    // Partial Fisher-Yates: the first k slots become a uniform sample.
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> ids;
    ids.reserve(k);
    for (auto i : idx) ids.push_back(test[i].id);
    return ids;
}

/// Simulated annotator: assigns the ground-truth label, flipped independently
/// with probability noise_rate.
inline std::vector<FeedbackItem> oracle_correct(const std::vector<PendingItem>& items, const GroundTruth& truth,
                                                double noise_rate, std::uint64_t seed, std::uint32_t round) {
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("oracle noise rate must be in [0,1]");
    ++operation_counter();
    Rng rng(derive_seed(seed, {stream::feedback_noise, round}));
    std::vector<FeedbackItem> out;
    out.reserve(items.size());
    for (const auto& it : items) {
        const auto t = truth.find(it.example_id);
        if (t == truth.end()) throw DataError("no ground truth for feedback item " + it.example_id);
        int label = t->second;
        if (noise_rate > 0.0 && uniform_unit(rng) < noise_rate) label = 1 - label;
        out.push_back(FeedbackItem{it.example_id, it.tokens, it.predicted_label, label, FeedbackSource::oracle, round});
    }
    return out;
}

/// Anything that can turn pending predictions into corrected labels.
class FeedbackProvider {
public:
    virtual ~FeedbackProvider() = default;
    virtual std::vector<FeedbackItem> provide(NodeId node, std::uint32_t round, const std::vector<PendingItem>& items,
                                              const GroundTruth& truth) = 0;
    /// True when provide() may wait on a person; the round loop then
    /// collects feedback for all nodes concurrently.
    virtual bool blocks() const { return false; }
};

class OracleProvider : public FeedbackProvider {
public:
    explicit OracleProvider(double noise_rate = 0.0, std::uint64_t seed = 0) : noise_(noise_rate), seed_(seed) {
        if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("oracle noise rate must be in [0,1]");
    }

    std::vector<FeedbackItem> provide(NodeId node, std::uint32_t round, const std::vector<PendingItem>& items,
                                      const GroundTruth& truth) override {
        return oracle_correct(items, truth, noise_, derive_seed(seed_, {stream::node, node}), round);
    }

    double noise_rate() const noexcept { return noise_; }

private:
    double noise_;
    std::uint64_t seed_;
};

/// Append fed-back examples to the train shard with their corrected labels.
/// Ids fed back in an earlier round are relabelled in place, not duplicated.
inline void extend_training_set(data::NodeShard& shard, const std::vector<FeedbackItem>& feedback) {
    ++operation_counter();
    if (feedback.empty()) return;
    std::unordered_map<std::string, std::size_t> test_index;
    for (std::size_t i = 0; i < shard.test.size(); ++i) test_index.emplace(shard.test[i].id, i);
    for (const auto& f : feedback) {
        if (!test_index.count(f.example_id)) {
            throw DataError("feedback item " + f.example_id + " is not in node " + std::to_string(shard.node_id) +
                            "'s test shard");
        }
        if (f.corrected_label != 0 && f.corrected_label != 1)
            throw DataError("feedback item " + f.example_id + " has corrected label outside {0,1}");
    }
    std::unordered_map<std::string, std::size_t> train_index;
    for (std::size_t i = 0; i < shard.train.size(); ++i) train_index.emplace(shard.train[i].id, i);
    for (const auto& f : feedback) {
        if (auto it = train_index.find(f.example_id); it != train_index.end()) {
            shard.train[it->second].label = f.corrected_label;
        } else {
            data::Example ex = shard.test[test_index.at(f.example_id)];
            ex.label = f.corrected_label;
            train_index.emplace(ex.id, shard.train.size());
            shard.train.push_back(std::move(ex));
        }
        shard.fed_back_ids.insert(f.example_id);
    }
}

}  // namespace hbsl::hitl
