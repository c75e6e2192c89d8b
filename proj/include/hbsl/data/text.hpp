#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "hbsl/data/porter_stemmer.hpp"

namespace hbsl::data {

/// Lowercase, split on runs of non-alphanumeric ASCII, Porter-stem, drop empties.
inline std::vector<std::string> preprocess(std::string_view raw) {
    static const PorterStemmer stem;
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        auto s = stem(cur);
        if (!s.empty()) out.push_back(std::move(s));
        cur.clear();
    };
    for (unsigned char c : raw) {
        if (c < 0x80 && std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

}  // namespace hbsl::data
