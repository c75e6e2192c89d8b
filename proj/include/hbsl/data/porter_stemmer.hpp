#pragma once

#include <string>
#include <string_view>

namespace hbsl::data {

/// Porter (1980) suffix-stripping stemmer, original rule set without the
/// later "bli"/"logi" departures. Input is expected to be lowercase ASCII.
class PorterStemmer {
public:
    std::string operator()(std::string_view input) const {
        std::string w(input);
        if (w.empty()) return w;
        w = step1a(std::move(w));
        w = step1b(std::move(w));
        w = step1c(std::move(w));
        w = step2(std::move(w));
        w = step3(std::move(w));
        w = step4(std::move(w));
        w = step5a(std::move(w));
        w = step5b(std::move(w));
        return w;
    }

private:
    struct Rule {
        std::string_view suffix;
        std::string_view replacement;
    };

    static bool ends_with(const std::string& w, std::string_view s) {
        return w.size() >= s.size() && std::string_view(w).substr(w.size() - s.size()) == s;
    }

    static std::string drop(const std::string& w, std::size_t n) { return w.substr(0, w.size() - n); }

    static bool is_consonant(const std::string& w, std::size_t i) {
        switch (w[i]) {
            case 'a': case 'e': case 'i': case 'o': case 'u': return false;
            case 'y': return i == 0 ? true : !is_consonant(w, i - 1);
            default: return true;
        }
    }

    // m in [C](VC)^m[V]
    static int measure(const std::string& stem) {
        int m = 0;
        bool prev_vowel = false;
        for (std::size_t i = 0; i < stem.size(); ++i) {
            const bool cons = is_consonant(stem, i);
            if (cons && prev_vowel) ++m;
            prev_vowel = !cons;
        }
        return m;
    }

    static bool contains_vowel(const std::string& stem) {
        for (std::size_t i = 0; i < stem.size(); ++i)
            if (!is_consonant(stem, i)) return true;
        return false;
    }

    static bool ends_double_consonant(const std::string& w) {
        const auto n = w.size();
        return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
    }

    // *o: stem ends consonant-vowel-consonant, last consonant not w, x or y.
    static bool ends_cvc(const std::string& w) {
        const auto n = w.size();
        if (n < 3) return false;
        if (!is_consonant(w, n - 3) || is_consonant(w, n - 2) || !is_consonant(w, n - 1)) return false;
        const char c = w[n - 1];
        return c != 'w' && c != 'x' && c != 'y';
    }

    // First rule whose suffix matches decides; if its condition fails the word is kept.
    template <std::size_t N, typename Cond>
    static std::string apply_rules(std::string w, const Rule (&rules)[N], Cond cond) {
        for (const auto& r : rules) {
            if (!ends_with(w, r.suffix)) continue;
            std::string stem = drop(w, r.suffix.size());
            if (cond(stem, r.suffix)) return stem + std::string(r.replacement);
            return w;
        }
        return w;
    }

    static std::string step1a(std::string w) {
        if (ends_with(w, "sses")) return drop(w, 2);
        if (ends_with(w, "ies")) return drop(w, 2);
        if (ends_with(w, "ss")) return w;
        if (ends_with(w, "s")) return drop(w, 1);
        return w;
    }

    static std::string step1b(std::string w) {
        if (ends_with(w, "eed")) {
            std::string stem = drop(w, 3);
            return measure(stem) > 0 ? stem + "ee" : w;
        }
        std::string stem;
        if (ends_with(w, "ed") && contains_vowel(drop(w, 2))) {
            stem = drop(w, 2);
        } else if (ends_with(w, "ing") && contains_vowel(drop(w, 3))) {
            stem = drop(w, 3);
        } else {
            return w;
        }
        if (ends_with(stem, "at") || ends_with(stem, "bl") || ends_with(stem, "iz")) return stem + "e";
        if (ends_double_consonant(stem)) {
            const char c = stem.back();
            if (c == 'l' || c == 's' || c == 'z') return stem;
            stem.pop_back();
            return stem;
        }
        if (measure(stem) == 1 && ends_cvc(stem)) return stem + "e";
        return stem;
    }

    static std::string step1c(std::string w) {
        if (ends_with(w, "y") && contains_vowel(drop(w, 1))) {
            w.back() = 'i';
        }
        return w;
    }

    static std::string step2(std::string w) {
        static constexpr Rule rules[] = {
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},   {"izer", "ize"},
            {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},   {"eli", "e"},       {"ousli", "ous"},
            {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"},
            {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
        };
        return apply_rules(std::move(w), rules, [](const std::string& s, std::string_view) { return measure(s) > 0; });
    }

    static std::string step3(std::string w) {
        static constexpr Rule rules[] = {
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
            {"ical", "ic"},  {"ful", ""},   {"ness", ""},
        };
        return apply_rules(std::move(w), rules, [](const std::string& s, std::string_view) { return measure(s) > 0; });
    }

    static std::string step4(std::string w) {
        static constexpr Rule rules[] = {
            {"al", ""},   {"ance", ""}, {"ence", ""}, {"er", ""},  {"ic", ""},  {"able", ""}, {"ible", ""},
            {"ant", ""},  {"ement", ""}, {"ment", ""}, {"ent", ""}, {"ion", ""}, {"ou", ""},   {"ism", ""},
            {"ate", ""},  {"iti", ""},  {"ous", ""},  {"ive", ""}, {"ize", ""},
        };
        return apply_rules(std::move(w), rules, [](const std::string& s, std::string_view suffix) {
            if (measure(s) <= 1) return false;
            if (suffix == "ion") return !s.empty() && (s.back() == 's' || s.back() == 't');
            return true;
        });
    }

    static std::string step5a(std::string w) {
        if (!ends_with(w, "e")) return w;
        std::string stem = drop(w, 1);
        const int m = measure(stem);
        if (m > 1 || (m == 1 && !ends_cvc(stem))) return stem;
        return w;
    }

    static std::string step5b(std::string w) {
        if (ends_with(w, "ll") && measure(drop(w, 1)) > 1) w.pop_back();
        return w;
    }
};

}  // namespace hbsl::data
