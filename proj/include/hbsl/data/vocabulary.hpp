#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/model/brnn.hpp"

namespace hbsl::data {

class Vocabulary {
public:
    static constexpr model::TokenId kUnk = 0;
    static constexpr model::TokenId kPad = 1;

    Vocabulary() : tokens_{"<unk>", "<pad>"} {}

    using Counts = std::map<std::string, std::size_t>;

    /// Index every token seen at least `min_count` times. Order is by
    /// descending count, ties broken lexicographically.
    template <typename Texts>
    static Vocabulary build(const Texts& texts, std::size_t min_count = 1) {
        Counts counts;
        for (const auto& text : texts)
            for (const auto& tok : text) ++counts[tok];
        return from_counts(counts, min_count);
    }

    static Vocabulary from_counts(const Counts& counts, std::size_t min_count = 1) {
        if (min_count == 0) throw ConfigError("build_vocabulary: min_count must be >= 1");
        std::vector<std::pair<std::string, std::size_t>> kept;
        for (const auto& [tok, c] : counts)
            if (c >= min_count) kept.emplace_back(tok, c);
        std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

        Vocabulary v;
        for (auto& [tok, c] : kept) {
            v.index_.emplace(tok, static_cast<model::TokenId>(v.tokens_.size()));
            v.tokens_.push_back(tok);
        }
        return v;
    }

    std::size_t size() const noexcept { return tokens_.size(); }

    model::TokenId index_of(const std::string& tok) const {
        auto it = index_.find(tok);
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& token_at(model::TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

    template <typename Tokens>
    std::vector<model::TokenId> encode(const Tokens& toks) const {
        std::vector<model::TokenId> ids;
        ids.reserve(std::size(toks));
        for (const auto& t : toks) ids.push_back(index_of(t));
        return ids;
    }

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, model::TokenId> index_;
};

}  // namespace hbsl::data
