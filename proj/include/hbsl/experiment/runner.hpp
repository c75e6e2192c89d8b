#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbsl/data/dataset.hpp"
#include "hbsl/data/liar.hpp"
#include "hbsl/data/partition.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/experiment/aggregate.hpp"
#include "hbsl/experiment/config.hpp"
#include "hbsl/experiment/report.hpp"
#include "hbsl/hitl/feedback.hpp"
#include "hbsl/hitl/session.hpp"
#include "hbsl/log.hpp"
#include "hbsl/model/parameters.hpp"
#include "hbsl/model/serialize.hpp"
#include "hbsl/swarm/node.hpp"
#include "hbsl/swarm/round.hpp"
#include "hbsl/swarm/transport.hpp"
#include "hbsl/version.hpp"

namespace hbsl::experiment {

namespace fs = std::filesystem;

/// Preprocessed corpus shared by every run of an experiment.
struct Corpus {
    data::Dataset examples;
    data::LoadReport load;
    std::size_t dropped_empty = 0;
};

inline Corpus load_corpus(const fs::path& liar_dir) {
    auto loaded = data::load_liar_dir(liar_dir);
    auto prepared = data::prepare_examples(loaded.records);
    return {std::move(prepared.examples), loaded.report, prepared.dropped_empty};
}

struct RunStatus {
    std::uint32_t run_id = 0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    std::size_t rounds_completed = 0;
    bool early_stopped = false;
    std::size_t vocabulary_size = 0;
    double seconds = 0.0;
};

struct ExperimentResult {
    fs::path out_dir;
    std::vector<RoundReport> reports;
    std::vector<RunStatus> runs;
    std::optional<Summary> summary;

    bool all_ok() const {
        return std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.ok; });
    }
};

/// Optional wiring for live annotation: one session per node id, reused
/// across runs.
struct RunnerHooks {
    std::map<data::NodeId, hitl::AnnotationSession*> sessions;
    std::function<void(const RoundReport&)> on_report;
    /// Called after every completed round with the nodes' post-round state.
    std::function<void(std::uint32_t run_id, const std::vector<swarm::NodeState>&)> on_round;
};

/// Run directory used when the config names none.
inline fs::path default_out_dir(const ExperimentConfig& c) {
    return fs::path("runs") / (c.name + "_" + swarm::to_string(c.mode));
}

/// True once mean accuracy has gained less than min_delta points over the
/// last `window` rounds.
inline bool should_stop_early(const std::vector<double>& mean_accuracy, const ExperimentConfig& c) {
    if (!c.early_stop || mean_accuracy.size() <= c.early_stop_window) return false;
    const double now = mean_accuracy.back();
    const double then = mean_accuracy[mean_accuracy.size() - 1 - c.early_stop_window];
    return 100.0 * (now - then) < c.early_stop_min_delta;
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
}

inline void prepare_out_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir / "checkpoints");
}

inline std::unique_ptr<swarm::Transport> make_transport(TransportKind k) {
    if (k == TransportKind::socket) return std::make_unique<swarm::TcpTransport>();
    return std::make_unique<swarm::InProcessBus>();
}

}  // namespace detail

/// One run: partition with the run seed, build the nodes, play the rounds.
/// Reports are appended as rounds complete, so a failed run keeps its
/// finished rounds.
inline RunStatus execute_run(const ExperimentConfig& cfg, const data::PartitionSpec& spec, const Corpus& corpus,
                             std::uint32_t run_id, const fs::path& out_dir, std::vector<RoundReport>& reports,
                             nlohmann::json& partition_log, const RunnerHooks& hooks = {}) {
    RunStatus status;
    status.run_id = run_id;
    status.seed = cfg.run_seed(run_id - 1);
    const auto started = std::chrono::steady_clock::now();
    try {
        auto shards = data::partition(corpus.examples, spec, status.seed);
        const auto vocab = data::build_vocabulary(shards, cfg.min_count);
        data::encode_shards(shards, vocab);
        data::check_disjoint(shards);
        status.vocabulary_size = vocab.size();
        partition_log.push_back({{"run_id", run_id}, {"partition", data::partition_manifest(shards, spec, status.seed, vocab.size())}});

        model::AdamConfig adam;
        adam.learning_rate = cfg.learning_rate;
        std::vector<swarm::NodeState> nodes;
        for (auto& shard : shards) {
            const auto node_seed = derive_seed(status.seed, {stream::node, shard.node_id});
            auto params = model::init_parameters(vocab.size(), cfg.embed_dim, cfg.hidden_dim,
                                                 derive_seed(node_seed, {stream::init}));
            nodes.push_back(swarm::make_node(std::move(shard), std::move(params), cfg.mode, node_seed, adam));
        }

        auto transport = detail::make_transport(cfg.transport);
        hitl::OracleProvider oracle(cfg.oracle_noise, derive_seed(status.seed, {stream::feedback_noise}));
        std::optional<hitl::HumanProvider> human;
        if (cfg.provider == ProviderKind::human) {
            std::optional<hitl::OracleProvider> fallback;
            if (cfg.human_fallback) fallback = oracle;
            human.emplace(hooks.sessions, std::chrono::milliseconds(static_cast<long long>(cfg.human_timeout_s * 1000)),
                          fallback);
        }

        swarm::RoundConfig rc;
        rc.mode = cfg.mode;
        rc.hyper.batch_size = cfg.batch_size;
        rc.hyper.epochs = cfg.epochs;
        rc.hyper.learning_rate = cfg.learning_rate;
        rc.hyper.pooling = cfg.pooling;
        rc.feedback_portion = cfg.feedback_portion;
        rc.evaluation = cfg.evaluation;
        rc.merge = cfg.merge;
        for (std::size_t i = 0; i < cfg.merge_weights.size() && i < spec.nodes.size(); ++i)
            rc.merge_weights[spec.nodes[i].node_id] = cfg.merge_weights[i];
        rc.parallel = cfg.parallel;
        rc.run_id = run_id;
        rc.message_timeout = std::chrono::milliseconds(static_cast<long long>(cfg.message_timeout_s * 1000));
        rc.provider = human ? static_cast<hitl::FeedbackProvider*>(&*human) : &oracle;
        if (!hooks.sessions.empty()) {
            rc.on_stage = [&](data::NodeId n, swarm::RoundStage s, std::uint32_t round) {
                if (auto it = hooks.sessions.find(n); it != hooks.sessions.end()) {
                    it->second->set_round(round);
                    it->second->set_stage(swarm::to_string(s));
                }
            };
            rc.on_accuracy = [&](data::NodeId n, double acc) {
                if (auto it = hooks.sessions.find(n); it != hooks.sessions.end()) it->second->record_accuracy(acc);
            };
        }

        const auto ckpt_dir = out_dir / "checkpoints" / ("run_" + std::to_string(run_id));
        fs::create_directories(ckpt_dir);
        std::vector<double> mean_accuracy;
        for (std::uint32_t t = 1; t <= cfg.rounds; ++t) {
            auto result = swarm::run_round(nodes, rc, *transport);
            double sum = 0.0;
            for (const auto& r : result.reports) {
                sum += r.test_accuracy;
                reports.push_back(r);
                if (hooks.on_report) hooks.on_report(r);
            }
            mean_accuracy.push_back(sum / double(result.reports.size()));
            if (hooks.on_round) hooks.on_round(run_id, nodes);
            model::save_parameters(nodes.front().params, (ckpt_dir / ("round_" + std::to_string(t) + ".bin")).string());
            status.rounds_completed = t;
            log::info("run " + std::to_string(run_id) + " round " + std::to_string(t) + ": mean test accuracy " +
                      std::to_string(mean_accuracy.back()));
            if (should_stop_early(mean_accuracy, cfg)) {
                status.early_stopped = true;
                log::info("run " + std::to_string(run_id) + " stopped early after round " + std::to_string(t));
                break;
            }
        }
    } catch (const std::exception& e) {
        status.ok = false;
        status.error = e.what();
        log::error("run " + std::to_string(run_id) + " failed: " + e.what());
    }
    status.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return status;
}

inline nlohmann::json manifest_json(const ExperimentConfig& cfg, const data::PartitionSpec& spec, const Corpus& corpus,
                                    const std::vector<RunStatus>& runs) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : runs) {
        jr.push_back({{"run_id", r.run_id},
                      {"seed", r.seed},
                      {"status", r.ok ? "ok" : "failed"},
                      {"error", r.error},
                      {"rounds_completed", r.rounds_completed},
                      {"early_stopped", r.early_stopped},
                      {"vocabulary_size", r.vocabulary_size}});
    }
    return {{"tool", "hbsl"},
            {"version", kVersion},
            {"git_revision", kGitRevision},
            {"config", to_json(cfg)},
            {"partition_spec", data::to_json(spec)},
            {"corpus",
             {{"rows", corpus.load.rows},
              {"kept", corpus.load.kept},
              {"skipped", corpus.load.skipped()},
              {"dropped_empty", corpus.dropped_empty},
              {"examples", corpus.examples.size()},
              {"true_examples", data::count_true(corpus.examples)}}},
            {"notes",
             {{"rounds", "fixed round budget from config; the round count is an assumption"},
              {"checkpoints", "checkpoints/run_<r>/round_<t>.bin holds the merged model after round t"}}},
            {"runs", jr}};
}

/// Full experiment: every run in sequence, then reports.csv, summary.csv,
/// manifest.json and partition_manifest.json in the run directory.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, bool force = false, const RunnerHooks& hooks = {},
                                       const Corpus* preloaded = nullptr) {
    if (auto errors = validation_errors(cfg); !errors.empty()) throw ConfigError(join_errors(errors));
    const auto spec = data::load_partition_spec(cfg.partition_spec);
    if (spec.nodes.size() != cfg.node_count)
        throw ConfigError("experiment.node_count is " + std::to_string(cfg.node_count) + " but partition spec '" +
                          spec.name + "' lists " + std::to_string(spec.nodes.size()) + " nodes");
    Corpus loaded;
    if (!preloaded) loaded = load_corpus(cfg.liar_dir);
    const Corpus& corpus = preloaded ? *preloaded : loaded;

    ExperimentResult result;
    result.out_dir = cfg.out_dir.empty() ? default_out_dir(cfg) : fs::path(cfg.out_dir);
    detail::prepare_out_dir(result.out_dir, force);

    nlohmann::json partition_log = nlohmann::json::array();
    for (std::uint32_t r = 1; r <= cfg.runs; ++r)
        result.runs.push_back(execute_run(cfg, spec, corpus, r, result.out_dir, result.reports, partition_log, hooks));

    std::vector<RoundReport> good;
    for (const auto& rep : result.reports)
        for (const auto& st : result.runs)
            if (st.run_id == rep.run_id && st.ok) good.push_back(rep);
    if (!good.empty()) result.summary = aggregate(good);

    detail::write_text(result.out_dir / "reports.csv", to_csv(result.reports));
    detail::write_text(result.out_dir / "summary.csv",
                       result.summary ? to_csv(*result.summary) : std::string(kSummaryCsvHeader) + "\n");
    detail::write_text(result.out_dir / "manifest.json", manifest_json(cfg, spec, corpus, result.runs).dump(2) + "\n");
    detail::write_text(result.out_dir / "partition_manifest.json",
                       nlohmann::json{{"runs", partition_log}}.dump(2) + "\n");
    return result;
}

}  // namespace hbsl::experiment
