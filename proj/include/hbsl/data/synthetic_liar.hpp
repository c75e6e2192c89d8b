#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hbsl/data/liar.hpp"
#include "hbsl/data/porter_stemmer.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/seed.hpp"

namespace hbsl::data {

/// Grade counts per split of the public LIAR release, in Grade order
/// (pants-fire, false, barely-true, half-true, mostly-true, true).
struct SplitGradeCounts {
    std::string file;
    std::array<std::size_t, 6> counts;
};

inline std::vector<SplitGradeCounts> liar_public_split_counts() {
    return {
        {"train.tsv", {839, 1995, 1654, 2114, 1962, 1676}},
        {"valid.tsv", {116, 263, 237, 248, 251, 169}},
        {"test.tsv", {92, 249, 212, 265, 241, 208}},
    };
}

/// Generative stand-in for the LIAR corpus. Each statement mixes label-free
/// filler words (Zipf distributed) with cue words; a cue word is drawn from
/// the "credible" pool with probability cue_base + cue_slope * truthiness,
/// where truthiness rises from 0 (pants-fire) to 1 (true).
struct SyntheticLiarOptions {
    std::uint64_t seed = 20220611;
    std::size_t filler_words = 4000;
    std::size_t cue_words_per_pool = 150;
    double cue_rate = 0.4;
    double cue_base = 0.1;
    double cue_slope = 0.8;
    std::size_t min_length = 8;
    std::size_t max_length = 28;
    std::vector<SplitGradeCounts> splits = liar_public_split_counts();
};

inline constexpr std::array<double, 6> kGradeTruthiness = {0.0, 0.15, 0.35, 0.5, 0.7, 1.0};

class SyntheticLiar {
public:
    explicit SyntheticLiar(SyntheticLiarOptions opt) : opt_(std::move(opt)), rng_(derive_seed(opt_.seed, {101})) {
        if (opt_.min_length == 0 || opt_.max_length < opt_.min_length)
            throw ConfigError("synthetic corpus: invalid statement length range");
        auto words = make_words(opt_.filler_words + 2 * opt_.cue_words_per_pool);
        filler_.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(opt_.filler_words));
        credible_.assign(words.begin() + static_cast<std::ptrdiff_t>(opt_.filler_words),
                         words.begin() + static_cast<std::ptrdiff_t>(opt_.filler_words + opt_.cue_words_per_pool));
        dubious_.assign(words.begin() + static_cast<std::ptrdiff_t>(opt_.filler_words + opt_.cue_words_per_pool),
                        words.end());
        double acc = 0.0;
        for (std::size_t r = 1; r <= filler_.size(); ++r) {
            acc += 1.0 / static_cast<double>(r);
            zipf_cdf_.push_back(acc);
        }
        for (auto& c : zipf_cdf_) c /= acc;
    }

    /// All records of one split, in shuffled grade order.
    std::vector<RawRecord> generate_split(const SplitGradeCounts& split, std::size_t& next_id) {
        std::vector<Grade> grades;
        for (std::size_t g = 0; g < 6; ++g) grades.insert(grades.end(), split.counts[g], static_cast<Grade>(g));
        shuffle_in_place(grades, rng_);
        std::vector<RawRecord> out;
        out.reserve(grades.size());
        for (auto g : grades) out.push_back(RawRecord{std::to_string(next_id++) + ".json", g, statement(g)});
        return out;
    }

    /// Write train.tsv, valid.tsv and test.tsv in the 14-column LIAR layout.
    void write(const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        std::size_t next_id = 1;
        for (const auto& split : opt_.splits) {
            std::ofstream f(dir / split.file);
            if (!f) throw IoError("cannot write " + (dir / split.file).string());
            for (const auto& r : generate_split(split, next_id)) {
                f << r.id << '\t' << to_string(r.grade) << '\t' << r.statement
                  << "\tpolitics\tspeaker\tnone\tnone\tnone\t0\t0\t0\t0\t0\tsynthetic\n";
            }
        }
    }

    std::string statement(Grade g) {
        const double p_credible = opt_.cue_base + opt_.cue_slope * kGradeTruthiness[static_cast<std::size_t>(g)];
        const std::size_t len = opt_.min_length + uniform_index(rng_, opt_.max_length - opt_.min_length + 1);
        std::string s;
        for (std::size_t i = 0; i < len; ++i) {
            const std::string* w;
            if (uniform_unit(rng_) < opt_.cue_rate) {
                const auto& pool = uniform_unit(rng_) < p_credible ? credible_ : dubious_;
                w = &pool[uniform_index(rng_, pool.size())];
            } else {
                const auto it = std::lower_bound(zipf_cdf_.begin(), zipf_cdf_.end(), uniform_unit(rng_));
                w = &filler_[std::min<std::size_t>(static_cast<std::size_t>(it - zipf_cdf_.begin()), filler_.size() - 1)];
            }
            if (!s.empty()) s += ' ';
            s += *w;
        }
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
        s += '.';
        return s;
    }

private:
    // Pronounceable pseudo-words that the stemmer leaves untouched, so every
    // generated word maps to exactly one token.
    std::vector<std::string> make_words(std::size_t n) {
        static constexpr std::string_view onsets = "bdfgkmnprtvz";
        static constexpr std::string_view vowels = "aiou";
        static constexpr std::string_view codas = "bdgkmnpt";
        const PorterStemmer stem;
        std::set<std::string> seen;
        std::vector<std::string> out;
        while (out.size() < n) {
            std::string w;
            const std::size_t syllables = 2 + uniform_index(rng_, 2);
            for (std::size_t k = 0; k < syllables; ++k) {
                w += onsets[uniform_index(rng_, onsets.size())];
                w += vowels[uniform_index(rng_, vowels.size())];
            }
            w += codas[uniform_index(rng_, codas.size())];
            if (stem(w) != w || !seen.insert(w).second) continue;
            out.push_back(std::move(w));
        }
        return out;
    }

    SyntheticLiarOptions opt_;
    Rng rng_;
    std::vector<std::string> filler_, credible_, dubious_;
    std::vector<double> zipf_cdf_;
};

inline void write_synthetic_liar(const std::filesystem::path& dir, SyntheticLiarOptions opt = {}) {
    SyntheticLiar(std::move(opt)).write(dir);
}

}  // namespace hbsl::data
