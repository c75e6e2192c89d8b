#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hbsl/data/liar.hpp"
#include "hbsl/data/text.hpp"
#include "hbsl/model/brnn.hpp"

namespace hbsl::data {

using model::TokenId;

/// One labelled statement. `stems` holds the preprocessed tokens; `tokens`
/// holds their vocabulary ids once the shard has been encoded.
struct Example {
    std::string id;
    std::vector<std::string> stems;
    std::vector<TokenId> tokens;
    std::string raw_text;
    int label = 0;
    Grade original_label = Grade::false_;
};

using Dataset = std::vector<Example>;

using NodeId = std::uint16_t;

/// One node's private data. Splits are pairwise disjoint by example id.
struct NodeShard {
    NodeId node_id = 0;
    Dataset train;
    Dataset validation;
    Dataset test;
    /// Test ids already returned as feedback (used by leakage-free evaluation).
    std::set<std::string> fed_back_ids;
};

struct PreparedCorpus {
    Dataset examples;
    std::size_t dropped_empty = 0;
};

/// Preprocess raw records into examples, dropping statements that stem to nothing.
inline PreparedCorpus prepare_examples(const std::vector<RawRecord>& records) {
    PreparedCorpus out;
    out.examples.reserve(records.size());
    for (const auto& r : records) {
        auto stems = preprocess(r.statement);
        if (stems.empty()) {
            ++out.dropped_empty;
            continue;
        }
        Example ex;
        ex.id = r.id;
        ex.stems = std::move(stems);
        ex.raw_text = r.statement;
        ex.original_label = r.grade;
        ex.label = static_cast<int>(binarize_label(r.grade));
        out.examples.push_back(std::move(ex));
    }
    return out;
}

inline std::size_t count_true(const Dataset& d) {
    std::size_t n = 0;
    for (const auto& e : d) n += e.label == 1;
    return n;
}

}  // namespace hbsl::data
