#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbsl/errors.hpp"
#include "hbsl/model/brnn.hpp"
#include "hbsl/swarm/node.hpp"
#include "hbsl/swarm/round.hpp"

namespace hbsl::experiment {

using json = nlohmann::json;

// ---- minimal TOML reader ----
// Supports [section] and [a.b] headers, key = value lines, # comments,
// basic "strings", integers, floats, booleans and single-line arrays of those.

namespace toml {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

inline std::vector<std::string> split_dotted(const std::string& key) {
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(trim(p));
    return parts;
}

}  // namespace detail

/// Parse one scalar or array value. Throws ConfigError on anything else.
inline json parse_value(const std::string& text) {
    const auto v = detail::trim(text);
    if (v.empty()) throw ConfigError("missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw ConfigError("unterminated string " + v);
        std::string out;
        for (std::size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                const char n = v[++i];
                out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
            } else {
                out += v[i];
            }
        }
        return out;
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw ConfigError("unterminated array " + v);
        json arr = json::array();
        const auto body = v.substr(1, v.size() - 2);
        std::string cur;
        bool in_str = false;
        for (char c : body) {
            if (c == '"') in_str = !in_str;
            if (c == ',' && !in_str) {
                if (!detail::trim(cur).empty()) arr.push_back(parse_value(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!detail::trim(cur).empty()) arr.push_back(parse_value(cur));
        return arr;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    std::string digits;
    for (char c : v)
        if (c != '_') digits += c;
    const bool is_int = digits.find_first_of(".eE") == std::string::npos ||
                        (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X'));
    try {
        std::size_t used = 0;
        if (is_int) {
            if (!digits.empty() && digits[0] == '-') {
                const long long n = std::stoll(digits, &used, 0);
                if (used == digits.size()) return n;
            } else {
                const unsigned long long n = std::stoull(digits, &used, 0);
                if (used == digits.size()) return n;
            }
        } else {
            const double d = std::stod(digits, &used);
            if (used == digits.size()) return d;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("cannot parse value '" + v + "'");
}

inline void set_path(json& root, const std::vector<std::string>& path, json value, const std::string& where) {
    json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto& next = (*node)[path[i]];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError(where + ": '" + path[i] + "' is not a table");
        node = &next;
    }
    if (node->contains(path.back())) throw ConfigError(where + ": duplicate key '" + path.back() + "'");
    (*node)[path.back()] = std::move(value);
}

inline json parse(std::istream& in, const std::string& source = "<config>") {
    json root = json::object();
    std::vector<std::string> section;
    std::string raw;
    for (std::size_t lineno = 1; std::getline(in, raw); ++lineno) {
        const auto where = source + ":" + std::to_string(lineno);
        const auto line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = detail::split_dotted(line.substr(1, line.size() - 2));
            json* node = &root;
            for (const auto& p : section) {
                if (!detail::valid_key(p)) throw ConfigError(where + ": invalid section name '" + p + "'");
                auto& next = (*node)[p];
                if (next.is_null()) next = json::object();
                node = &next;
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        auto path = section;
        for (const auto& p : detail::split_dotted(detail::trim(line.substr(0, eq)))) {
            if (!detail::valid_key(p)) throw ConfigError(where + ": invalid key '" + p + "'");
            path.push_back(p);
        }
        json value;
        try {
            value = parse_value(line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
        set_path(root, path, std::move(value), where);
    }
    return root;
}

inline json parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

inline json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse(in, path.string());
}

}  // namespace toml

// ---- experiment configuration ----

enum class TransportKind { in_process, socket };
enum class ProviderKind { oracle, human };

struct ExperimentConfig {
    std::string name = "experiment";
    swarm::Mode mode = swarm::Mode::SL;
    std::size_t node_count = 4;
    std::size_t rounds = 10;
    std::size_t runs = 5;
    std::uint64_t seed = 2022;
    std::vector<std::uint64_t> run_seeds;  // empty: derived from seed

    // data
    std::string liar_dir;
    std::string partition_spec;
    std::size_t min_count = 1;

    // model
    std::size_t embed_dim = 40;
    std::size_t hidden_dim = 16;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double learning_rate = 1e-3;
    model::OutputPooling pooling = model::OutputPooling::mean;

    // feedback
    double feedback_portion = 0.2;
    ProviderKind provider = ProviderKind::oracle;
    double oracle_noise = 0.0;
    double human_timeout_s = 300.0;
    bool human_fallback = true;
    swarm::EvaluationMode evaluation = swarm::EvaluationMode::faithful;

    // swarm
    TransportKind transport = TransportKind::in_process;
    swarm::MergeRule merge = swarm::MergeRule::average;
    std::vector<double> merge_weights;  // by node position; empty means all 1
    bool parallel = false;
    double message_timeout_s = 30.0;

    // stopping
    bool early_stop = false;
    double early_stop_min_delta = 0.1;  // accuracy points
    std::size_t early_stop_window = 3;

    // output
    std::string out_dir;
    int feedback_port_base = 0;  // 0: ephemeral ports

    std::uint64_t run_seed(std::size_t run) const {
        return run < run_seeds.size() ? run_seeds[run] : derive_seed(seed, {0x72756eULL, run + 1});
    }
};

inline const char* to_string(TransportKind k) { return k == TransportKind::in_process ? "in_process" : "socket"; }
inline const char* to_string(ProviderKind k) { return k == ProviderKind::oracle ? "oracle" : "human"; }
inline const char* to_string(swarm::EvaluationMode m) {
    return m == swarm::EvaluationMode::faithful ? "faithful" : "leakage_free";
}
inline const char* to_string(swarm::MergeRule r) {
    switch (r) {
        case swarm::MergeRule::average: return "average";
        case swarm::MergeRule::weighted_normalized: return "weighted_normalized";
        case swarm::MergeRule::weighted_literal: return "weighted_literal";
    }
    return "average";
}
inline const char* to_string(model::OutputPooling p) { return p == model::OutputPooling::mean ? "mean" : "last"; }

/// Canonical nested form; also the set of keys a config file may use.
inline json to_json(const ExperimentConfig& c) {
    return {
        {"experiment",
         {{"name", c.name},
          {"mode", swarm::to_string(c.mode)},
          {"node_count", c.node_count},
          {"rounds", c.rounds},
          {"runs", c.runs},
          {"seed", c.seed},
          {"run_seeds", c.run_seeds},
          {"out_dir", c.out_dir}}},
        {"data", {{"liar_dir", c.liar_dir}, {"partition_spec", c.partition_spec}, {"min_count", c.min_count}}},
        {"model",
         {{"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"pooling", to_string(c.pooling)}}},
        {"feedback",
         {{"portion", c.feedback_portion},
          {"provider", to_string(c.provider)},
          {"oracle_noise", c.oracle_noise},
          {"human_timeout_s", c.human_timeout_s},
          {"human_fallback", c.human_fallback},
          {"evaluation", to_string(c.evaluation)},
          {"port_base", c.feedback_port_base}}},
        {"swarm",
         {{"transport", to_string(c.transport)},
          {"merge", to_string(c.merge)},
          {"merge_weights", c.merge_weights},
          {"parallel", c.parallel},
          {"message_timeout_s", c.message_timeout_s}}},
        {"stop", {{"early_stop", c.early_stop}, {"min_delta", c.early_stop_min_delta}, {"window", c.early_stop_window}}},
    };
}

namespace detail {

// Collects every problem before reporting, so a config is fixed in one pass.
class Reader {
public:
    explicit Reader(const json& j) : j_(j) {}

    template <typename T>
    void get(const char* section, const char* key, T& out) {
        const auto* v = find(section, key);
        if (!v) return;
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v->is_number()) throw std::invalid_argument("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) throw std::invalid_argument("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v->is_number_integer() || (std::is_unsigned_v<T> && v->get<long long>() < 0 && !v->is_number_unsigned()))
                    throw std::invalid_argument("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v->is_string()) throw std::invalid_argument("");
            }
            out = v->get<T>();
        } catch (const std::exception&) {
            errors.push_back(std::string(section) + "." + key + ": wrong type (" + v->dump() + ")");
        }
    }

    template <typename E>
    void choice(const char* section, const char* key, E& out, std::initializer_list<std::pair<const char*, E>> options) {
        std::string s;
        const auto before = errors.size();
        get(section, key, s);
        if (errors.size() != before || !find(section, key)) return;
        for (const auto& [name, value] : options) {
            if (s == name) {
                out = value;
                return;
            }
        }
        std::string allowed;
        for (const auto& [name, value] : options) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
        errors.push_back(std::string(section) + "." + key + ": '" + s + "' is not one of " + allowed);
    }

    void unknown_keys(const json& schema) {
        for (const auto& [sec, body] : j_.items()) {
            if (!schema.contains(sec)) {
                errors.push_back("unknown section '" + sec + "'");
                continue;
            }
            if (!body.is_object()) {
                errors.push_back("'" + sec + "' must be a table");
                continue;
            }
            for (const auto& [key, v] : body.items())
                if (!schema[sec].contains(key)) errors.push_back("unknown key '" + sec + "." + key + "'");
        }
    }

    std::vector<std::string> errors;

private:
    const json* find(const char* section, const char* key) const {
        if (!j_.contains(section) || !j_[section].is_object() || !j_[section].contains(key)) return nullptr;
        return &j_[section][key];
    }
    const json& j_;
};

}  // namespace detail

/// Every invariant violation in `c`, empty when valid.
inline std::vector<std::string> validation_errors(const ExperimentConfig& c) {
    std::vector<std::string> e;
    if (c.runs < 1) e.push_back("experiment.runs must be >= 1");
    if (c.rounds < 1) e.push_back("experiment.rounds must be >= 1");
    if (c.node_count < 1) e.push_back("experiment.node_count must be >= 1");
    if (!c.run_seeds.empty() && c.run_seeds.size() < c.runs)
        e.push_back("experiment.run_seeds lists " + std::to_string(c.run_seeds.size()) + " seeds for " +
                    std::to_string(c.runs) + " runs");
    if (c.embed_dim < 1 || c.hidden_dim < 1) e.push_back("model dimensions must be >= 1");
    if (c.batch_size < 1) e.push_back("model.batch_size must be >= 1");
    if (!(c.learning_rate > 0.0)) e.push_back("model.learning_rate must be > 0");
    if (!(c.feedback_portion >= 0.0 && c.feedback_portion <= 1.0)) e.push_back("feedback.portion must be in [0,1]");
    if (!(c.oracle_noise >= 0.0 && c.oracle_noise <= 1.0)) e.push_back("feedback.oracle_noise must be in [0,1]");
    if (!(c.human_timeout_s > 0.0)) e.push_back("feedback.human_timeout_s must be > 0");
    if (!(c.message_timeout_s > 0.0)) e.push_back("swarm.message_timeout_s must be > 0");
    for (double w : c.merge_weights)
        if (!(w > 0.0)) e.push_back("swarm.merge_weights must all be > 0");
    if (!c.merge_weights.empty() && c.merge_weights.size() != c.node_count)
        e.push_back("swarm.merge_weights has " + std::to_string(c.merge_weights.size()) + " entries for " +
                    std::to_string(c.node_count) + " nodes");
    if (c.early_stop_window < 1) e.push_back("stop.window must be >= 1");
    if (c.liar_dir.empty()) e.push_back("data.liar_dir is required");
    if (c.partition_spec.empty()) e.push_back("data.partition_spec is required");
    return e;
}

inline std::string join_errors(const std::vector<std::string>& errors) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    return msg;
}

/// Build a config from its nested form over the defaults. Throws ConfigError
/// listing every problem found.
inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    detail::Reader r(j);
    r.unknown_keys(to_json(c));
    r.get("experiment", "name", c.name);
    r.choice("experiment", "mode", c.mode, {{"SL", swarm::Mode::SL}, {"HBSL", swarm::Mode::HBSL}});
    r.get("experiment", "node_count", c.node_count);
    r.get("experiment", "rounds", c.rounds);
    r.get("experiment", "runs", c.runs);
    r.get("experiment", "seed", c.seed);
    r.get("experiment", "run_seeds", c.run_seeds);
    r.get("experiment", "out_dir", c.out_dir);
    r.get("data", "liar_dir", c.liar_dir);
    r.get("data", "partition_spec", c.partition_spec);
    r.get("data", "min_count", c.min_count);
    r.get("model", "embed_dim", c.embed_dim);
    r.get("model", "hidden_dim", c.hidden_dim);
    r.get("model", "batch_size", c.batch_size);
    r.get("model", "epochs", c.epochs);
    r.get("model", "learning_rate", c.learning_rate);
    r.choice("model", "pooling", c.pooling, {{"mean", model::OutputPooling::mean}, {"last", model::OutputPooling::last}});
    r.get("feedback", "portion", c.feedback_portion);
    r.choice("feedback", "provider", c.provider, {{"oracle", ProviderKind::oracle}, {"human", ProviderKind::human}});
    r.get("feedback", "oracle_noise", c.oracle_noise);
    r.get("feedback", "human_timeout_s", c.human_timeout_s);
    r.get("feedback", "human_fallback", c.human_fallback);
    r.choice("feedback", "evaluation", c.evaluation,
             {{"faithful", swarm::EvaluationMode::faithful}, {"leakage_free", swarm::EvaluationMode::leakage_free}});
    r.get("feedback", "port_base", c.feedback_port_base);
    r.choice("swarm", "transport", c.transport,
             {{"in_process", TransportKind::in_process}, {"socket", TransportKind::socket}});
    r.choice("swarm", "merge", c.merge,
             {{"average", swarm::MergeRule::average},
              {"weighted_normalized", swarm::MergeRule::weighted_normalized},
              {"weighted_literal", swarm::MergeRule::weighted_literal}});
    r.get("swarm", "merge_weights", c.merge_weights);
    r.get("swarm", "parallel", c.parallel);
    r.get("swarm", "message_timeout_s", c.message_timeout_s);
    r.get("stop", "early_stop", c.early_stop);
    r.get("stop", "min_delta", c.early_stop_min_delta);
    r.get("stop", "window", c.early_stop_window);
    auto errors = r.errors;
    if (errors.empty())
        for (auto& e : validation_errors(c)) errors.push_back(std::move(e));
    if (!errors.empty()) throw ConfigError(join_errors(errors));
    return c;
}

/// Apply "section.key=value" overrides to a nested config. The key must
/// already exist in the config schema.
inline void apply_overrides(json& j, const std::vector<std::string>& overrides) {
    const auto schema = to_json(ExperimentConfig{});
    std::vector<std::string> errors;
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) {
            errors.push_back("override '" + o + "' is not key=value");
            continue;
        }
        const auto path = toml::detail::split_dotted(toml::detail::trim(o.substr(0, eq)));
        if (path.size() != 2 || !schema.contains(path[0]) || !schema[path[0]].contains(path[1])) {
            errors.push_back("override '" + o.substr(0, eq) + "' does not name a config key");
            continue;
        }
        const auto raw = toml::detail::trim(o.substr(eq + 1));
        json value;
        try {
            value = toml::parse_value(raw);
        } catch (const ConfigError&) {
            value = raw;  // bare words are strings on the command line
        }
        j[path[0]][path[1]] = value;
    }
    if (!errors.empty()) throw ConfigError(join_errors(errors));
}

/// Read a config file, apply overrides and the SWARM_HITL_SEED variable, and
/// resolve relative data paths against the file's directory.
inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    auto j = toml::parse_file(path);
    apply_overrides(j, overrides);
    if (const char* env = std::getenv("SWARM_HITL_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto s = std::stoull(env, &used, 0);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            j["experiment"]["seed"] = s;
        } catch (const std::exception&) {
            throw ConfigError(std::string("SWARM_HITL_SEED is not an unsigned integer: ") + env);
        }
    }
    auto c = config_from_json(j);
    const auto base = path.parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    resolve(c.liar_dir);
    resolve(c.partition_spec);
    return c;
}

}  // namespace hbsl::experiment
