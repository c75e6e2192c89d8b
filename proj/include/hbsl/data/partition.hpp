#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbsl/data/dataset.hpp"
#include "hbsl/data/vocabulary.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/seed.hpp"

namespace hbsl::data {

struct NodeAllocation {
    NodeId node_id = 0;
    std::size_t train_count = 0;  // includes the validation slice
    std::size_t test_count = 0;
    double class_ratio = 0.0;     // fraction of True examples
};

struct PartitionSpec {
    std::string name;
    std::uint64_t seed = 0;
    bool approximate = true;
    std::string note;
    std::vector<NodeAllocation> nodes;

    std::size_t total_requested() const {
        std::size_t n = 0;
        for (const auto& a : nodes) n += a.train_count + a.test_count;
        return n;
    }
};

inline void validate(const PartitionSpec& spec) {
    if (spec.nodes.empty()) throw ConfigError("partition spec '" + spec.name + "' lists no nodes");
    std::set<NodeId> ids;
    for (const auto& a : spec.nodes) {
        const auto who = "node " + std::to_string(a.node_id);
        if (!ids.insert(a.node_id).second) throw ConfigError("partition spec: duplicate " + who);
        if (!(a.class_ratio >= 0.0 && a.class_ratio <= 1.0))
            throw ConfigError("partition spec: " + who + " class_ratio outside [0,1]");
        if (a.train_count < 2) throw ConfigError("partition spec: " + who + " needs train_count >= 2");
        if (a.test_count < 1) throw ConfigError("partition spec: " + who + " needs test_count >= 1");
    }
}

inline PartitionSpec partition_spec_from_json(const nlohmann::json& j) {
    PartitionSpec s;
    try {
        s.name = j.value("name", std::string{});
        s.seed = j.value("seed", std::uint64_t{0});
        s.approximate = j.value("approximate", true);
        s.note = j.value("note", std::string{});
        for (const auto& n : j.at("nodes")) {
            s.nodes.push_back(NodeAllocation{n.at("node_id").get<NodeId>(), n.at("train_count").get<std::size_t>(),
                                             n.at("test_count").get<std::size_t>(),
                                             n.at("class_ratio").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("partition spec: ") + e.what());
    }
    validate(s);
    return s;
}

inline nlohmann::json to_json(const PartitionSpec& s) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& a : s.nodes)
        nodes.push_back({{"node_id", a.node_id},
                         {"train_count", a.train_count},
                         {"test_count", a.test_count},
                         {"class_ratio", a.class_ratio}});
    return {{"name", s.name}, {"seed", s.seed}, {"approximate", s.approximate}, {"note", s.note}, {"nodes", nodes}};
}

inline PartitionSpec load_partition_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read partition spec " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("partition spec " + path.string() + ": " + e.what());
    }
    return partition_spec_from_json(j);
}

/// Size of the validation slice carved out of a train allocation.
inline std::size_t validation_size(std::size_t train_count) {
    return std::max<std::size_t>(1, train_count / 10);
}

/// Seeded class-stratified sampling without replacement. Each node gets
/// round(ratio * count) True examples per split; 10% of the train draw
/// (at least one) becomes validation.
inline std::vector<NodeShard> partition(const Dataset& corpus, const PartitionSpec& spec, std::uint64_t seed) {
    validate(spec);
    std::vector<std::size_t> pools[2];
    for (std::size_t i = 0; i < corpus.size(); ++i) pools[corpus[i].label == 1 ? 1 : 0].push_back(i);
    Rng rng(derive_seed(seed, {stream::partition}));
    shuffle_in_place(pools[0], rng);
    shuffle_in_place(pools[1], rng);
    std::size_t cursor[2] = {0, 0};

    auto take = [&](const NodeAllocation& a, std::size_t count, const char* split) {
        const auto n_true = static_cast<std::size_t>(std::llround(a.class_ratio * static_cast<double>(count)));
        const std::size_t want[2] = {count - n_true, n_true};
        for (int c = 0; c < 2; ++c) {
            const auto left = pools[c].size() - cursor[c];
            if (want[c] > left) {
                throw ConfigError(std::string("insufficient ") + (c ? "True" : "Fake") + " examples for node " +
                                  std::to_string(a.node_id) + " " + split + ": need " + std::to_string(want[c]) +
                                  ", " + std::to_string(left) + " remaining");
            }
        }
        std::vector<std::size_t> picked;
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < want[c]; ++k) picked.push_back(pools[c][cursor[c]++]);
        shuffle_in_place(picked, rng);
        Dataset out;
        out.reserve(picked.size());
        for (auto i : picked) out.push_back(corpus[i]);
        return out;
    };

    std::vector<NodeShard> shards;
    for (const auto& a : spec.nodes) {
        NodeShard s;
        s.node_id = a.node_id;
        auto train = take(a, a.train_count, "train");
        s.test = take(a, a.test_count, "test");
        const auto nval = validation_size(a.train_count);
        s.validation.assign(std::make_move_iterator(train.begin()),
                            std::make_move_iterator(train.begin() + static_cast<std::ptrdiff_t>(nval)));
        s.train.assign(std::make_move_iterator(train.begin() + static_cast<std::ptrdiff_t>(nval)),
                       std::make_move_iterator(train.end()));
        shards.push_back(std::move(s));
    }
    return shards;
}

/// Vocabulary from training-side text only (train + validation of every node).
inline Vocabulary build_vocabulary(const std::vector<NodeShard>& shards, std::size_t min_count = 1) {
    Vocabulary::Counts counts;
    for (const auto& s : shards)
        for (const Dataset* d : {&s.train, &s.validation})
            for (const auto& e : *d)
                for (const auto& tok : e.stems) ++counts[tok];
    return Vocabulary::from_counts(counts, min_count);
}

inline void encode(Dataset& d, const Vocabulary& vocab) {
    for (auto& e : d) e.tokens = vocab.encode(e.stems);
}

inline void encode_shards(std::vector<NodeShard>& shards, const Vocabulary& vocab) {
    for (auto& s : shards) {
        encode(s.train, vocab);
        encode(s.validation, vocab);
        encode(s.test, vocab);
    }
}

/// Ids of every example held by the shards; throws if any id repeats.
inline void check_disjoint(const std::vector<NodeShard>& shards) {
    std::set<std::string> seen;
    for (const auto& s : shards)
        for (const Dataset* d : {&s.train, &s.validation, &s.test})
            for (const auto& e : *d)
                if (!seen.insert(e.id).second)
                    throw InternalError("example id " + e.id + " appears twice (node " + std::to_string(s.node_id) + ")");
}

inline nlohmann::json partition_manifest(const std::vector<NodeShard>& shards, const PartitionSpec& spec,
                                         std::uint64_t seed, std::size_t vocabulary_size) {
    auto ids = [](const Dataset& d) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& e : d) a.push_back(e.id);
        return a;
    };
    auto counts = [](const Dataset& d) {
        const auto t = count_true(d);
        return nlohmann::json{{"fake", d.size() - t}, {"true", t}};
    };
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& s : shards) {
        nodes.push_back({{"node_id", s.node_id},
                         {"train_ids", ids(s.train)},
                         {"validation_ids", ids(s.validation)},
                         {"test_ids", ids(s.test)},
                         {"class_counts",
                          {{"train", counts(s.train)}, {"validation", counts(s.validation)}, {"test", counts(s.test)}}}});
    }
    return {{"spec", to_json(spec)},
            {"seed", seed},
            {"approximate", spec.approximate},
            {"vocabulary_size", vocabulary_size},
            {"nodes", nodes}};
}

}  // namespace hbsl::data
