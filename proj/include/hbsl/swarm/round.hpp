#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/experiment/evaluate.hpp"
#include "hbsl/experiment/report.hpp"
#include "hbsl/hitl/feedback.hpp"
#include "hbsl/model/serialize.hpp"
#include "hbsl/model/trainer.hpp"
#include "hbsl/swarm/election.hpp"
#include "hbsl/swarm/merge.hpp"
#include "hbsl/swarm/node.hpp"
#include "hbsl/swarm/transport.hpp"

namespace hbsl::swarm {

enum class RoundStage { local_training, model_update, broadcast, inference, feedback };

inline const char* to_string(RoundStage s) {
    switch (s) {
        case RoundStage::local_training: return "training";
        case RoundStage::model_update: return "model_update";
        case RoundStage::broadcast: return "broadcast";
        case RoundStage::inference: return "inference";
        case RoundStage::feedback: return "feedback";
    }
    return "unknown";
}

/// Which parameter merge the master applies.
enum class MergeRule { average, weighted_normalized, weighted_literal };

/// faithful: fed-back test items stay in the accuracy denominator.
/// leakage_free: they are excluded from later evaluation.
enum class EvaluationMode { faithful, leakage_free };

struct RoundConfig {
    Mode mode = Mode::SL;
    model::TrainHyper hyper{};
    double feedback_portion = 0.2;
    EvaluationMode evaluation = EvaluationMode::faithful;
    MergeRule merge = MergeRule::average;
    std::map<data::NodeId, double> merge_weights;  // missing nodes weigh 1
    bool parallel = false;
    std::uint32_t run_id = 0;
    std::chrono::milliseconds message_timeout{5000};
    hitl::FeedbackProvider* provider = nullptr;
    /// Test hook: called before each node enters each stage; throwing aborts the round.
    std::function<void(RoundStage, data::NodeId)> fault_hook;
    /// Called once per round with the merged model.
    std::function<void(std::uint32_t round, data::NodeId master, const model::ModelParameters&)> on_merged;
    /// Progress observer (stage transitions, accuracy) for status endpoints.
    std::function<void(data::NodeId, RoundStage, std::uint32_t round)> on_stage;
    std::function<void(data::NodeId, double accuracy)> on_accuracy;
};

struct RoundResult {
    std::vector<experiment::RoundReport> reports;
    data::NodeId master = 0;
    std::vector<double> validation_accuracy;
};

namespace detail {

inline void enter(const RoundConfig& cfg, RoundStage stage, data::NodeId node, std::uint32_t round) {
    if (cfg.on_stage) cfg.on_stage(node, stage, round);
    if (cfg.fault_hook) cfg.fault_hook(stage, node);
}

template <typename Fn>
void for_each_node(std::vector<NodeState>& nodes, bool parallel, Fn&& fn) {
    if (!parallel || nodes.size() < 2) {
        for (std::size_t i = 0; i < nodes.size(); ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> jobs;
    jobs.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) jobs.push_back(std::async(std::launch::async, [&fn, i] { fn(i); }));
    std::exception_ptr first;
    for (auto& j : jobs) {
        try {
            j.get();
        } catch (...) {
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
}

inline NodeState& find_node(std::vector<NodeState>& nodes, data::NodeId id) {
    for (auto& n : nodes)
        if (n.node_id == id) return n;
    throw ProtocolError("unknown node " + std::to_string(id));
}

}  // namespace detail

/// Master sends the merged model to every other node. Every peer validates
/// the payload before any peer adopts it; peers then replace their
/// parameters, reset their optimizer moments and acknowledge. Returns the
/// acknowledging node ids.
inline std::vector<data::NodeId> broadcast_model(Transport& transport, data::NodeId master,
                                                 const model::ModelParameters& merged, std::vector<NodeState>& nodes,
                                                 std::uint32_t round,
                                                 std::chrono::milliseconds timeout = std::chrono::milliseconds(5000)) {
    const auto bytes = model::serialize(merged);
    std::vector<NodeState*> peers;
    for (auto& n : nodes)
        if (n.node_id != master) peers.push_back(&n);
    for (auto* p : peers) transport.send(p->node_id, ProtocolMessage::broadcast_model(master, round, bytes));

    std::vector<model::ModelParameters> received;
    received.reserve(peers.size());
    for (auto* p : peers) {
        auto msgs = transport.collect(p->node_id, round, MessageKind::broadcast_model, 1, timeout);
        if (msgs.empty()) throw ProtocolError("node " + std::to_string(p->node_id) + " received no model broadcast");
        auto params = msgs.front().params();
        if (auto bad = model::shape_mismatches(p->params, params); !bad.empty()) {
            throw ProtocolError("node " + std::to_string(p->node_id) + " cannot adopt broadcast model: " +
                                model::join_names(bad) + " mismatch");
        }
        received.push_back(std::move(params));
    }
    for (std::size_t i = 0; i < peers.size(); ++i) {
        peers[i]->params = std::move(received[i]);
        peers[i]->optimizer = model::OptimizerState(peers[i]->params, peers[i]->optimizer.config);
        transport.send(master, ProtocolMessage::round_done(peers[i]->node_id, round));
    }
    const auto acks = transport.collect(master, round, MessageKind::round_done, peers.size(), timeout);
    std::vector<data::NodeId> acked;
    for (const auto& a : acks) acked.push_back(a.sender());
    if (acked.size() != peers.size()) {
        throw ProtocolError("partial broadcast in round " + std::to_string(round) + ": " + std::to_string(acked.size()) +
                            " of " + std::to_string(peers.size()) + " peers acknowledged");
    }
    return acked;
}

/// One pass of local learning, model updating and (HBSL only) human
/// feedback across all nodes. On any failure every node is restored to its
/// state at round start and the error is rethrown.
inline RoundResult run_round(std::vector<NodeState>& nodes, const RoundConfig& cfg, Transport& transport) {
    if (nodes.empty()) throw ConfigError("run_round: no nodes");
    const std::uint32_t completed = nodes.front().round;
    for (const auto& n : nodes) {
        if (n.round != completed)
            throw ProtocolError("run_round: node " + std::to_string(n.node_id) + " is at round " +
                                std::to_string(n.round) + ", expected " + std::to_string(completed));
    }
    if (cfg.mode == Mode::HBSL && !cfg.provider) throw ConfigError("run_round: HBSL mode needs a feedback provider");
    const std::uint32_t round = completed + 1;
    const auto snapshot = nodes;

    try {
        for (auto& n : nodes) transport.register_node(n.node_id);
        const std::size_t count = nodes.size();
        RoundResult result;
        result.reports.resize(count);

        // (a) local learning
        detail::for_each_node(nodes, cfg.parallel, [&](std::size_t i) {
            auto& n = nodes[i];
            detail::enter(cfg, RoundStage::local_training, n.node_id, round);
            auto& rep = result.reports[i];
            rep.run_id = cfg.run_id;
            rep.round = round;
            rep.node_id = n.node_id;
            rep.train_size = n.shard.train.size();
            const auto tr = model::train_epochs(n.params, n.optimizer, n.shard.train, cfg.hyper,
                                                derive_seed(n.seed, {stream::shuffle, round}));
            rep.mean_train_loss = tr.final_mean_loss;
        });

        // (b) model updating: report, elect, merge on the master, broadcast
        result.validation_accuracy.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            detail::enter(cfg, RoundStage::model_update, nodes[i].node_id, round);
            result.validation_accuracy[i] =
                experiment::evaluate(nodes[i].params, nodes[i].shard.validation, cfg.hyper.pooling);
            for (const auto& peer : nodes)
                if (peer.node_id != nodes[i].node_id)
                    transport.send(peer.node_id,
                                   ProtocolMessage::report_accuracy(nodes[i].node_id, round, result.validation_accuracy[i]));
        }
        std::optional<data::NodeId> master;
        for (std::size_t i = 0; i < count; ++i) {
            auto msgs = transport.collect(nodes[i].node_id, round, MessageKind::report_accuracy, count - 1,
                                          cfg.message_timeout);
            if (msgs.size() != count - 1)
                throw ProtocolError("node " + std::to_string(nodes[i].node_id) + " received " +
                                    std::to_string(msgs.size()) + " of " + std::to_string(count - 1) + " accuracy reports");
            std::vector<AccuracyReport> reports{{nodes[i].node_id, result.validation_accuracy[i]}};
            for (const auto& m : msgs) reports.push_back({m.sender(), m.accuracy()});
            const auto elected = elect_master(reports);
            if (master && *master != elected) throw ProtocolError("nodes disagree on the elected master");
            master = elected;
        }
        result.master = *master;
        auto& master_node = detail::find_node(nodes, result.master);

        for (auto& n : nodes)
            if (n.node_id != result.master)
                transport.send(result.master, ProtocolMessage::submit_params(n.node_id, round, n.params));
        auto submissions =
            transport.collect(result.master, round, MessageKind::submit_params, count - 1, cfg.message_timeout);
        if (submissions.size() != count - 1)
            throw ProtocolError("master received " + std::to_string(submissions.size()) + " of " +
                                std::to_string(count - 1) + " parameter submissions");
        std::vector<MergeContribution> contributions;
        auto weight_of = [&](data::NodeId id) {
            auto it = cfg.merge_weights.find(id);
            return it == cfg.merge_weights.end() ? 1.0 : it->second;
        };
        for (std::size_t i = 0; i < count; ++i) {
            if (nodes[i].node_id == result.master) {
                contributions.push_back(
                    {master_node.node_id, master_node.params, weight_of(master_node.node_id), result.validation_accuracy[i]});
            }
        }
        for (const auto& m : submissions) {
            double acc = 0.0;
            for (std::size_t i = 0; i < count; ++i)
                if (nodes[i].node_id == m.sender()) acc = result.validation_accuracy[i];
            contributions.push_back({m.sender(), m.params(), weight_of(m.sender()), acc});
        }
        std::sort(contributions.begin(), contributions.end(),
                  [](const auto& a, const auto& b) { return a.node_id < b.node_id; });

        model::ModelParameters merged;
        switch (cfg.merge) {
            case MergeRule::average: merged = merge_average(contributions); break;
            case MergeRule::weighted_normalized: merged = merge_weighted(contributions, MergeConvention::normalized); break;
            case MergeRule::weighted_literal: merged = merge_weighted(contributions, MergeConvention::literal); break;
        }
        if (!merged.all_finite()) throw ProtocolError("merged parameters are not finite");

        detail::enter(cfg, RoundStage::broadcast, result.master, round);
        broadcast_model(transport, result.master, merged, nodes, round, cfg.message_timeout);
        master_node.params = model::deserialize(model::serialize(merged));
        master_node.optimizer = model::OptimizerState(master_node.params, master_node.optimizer.config);
        if (cfg.on_merged) cfg.on_merged(round, result.master, master_node.params);

        // (c) inference on local test data, then feedback in HBSL mode
        const bool blocking_feedback = cfg.mode == Mode::HBSL && cfg.provider->blocks();
        detail::for_each_node(nodes, cfg.parallel || blocking_feedback, [&](std::size_t i) {
            auto& n = nodes[i];
            auto& rep = result.reports[i];
            detail::enter(cfg, RoundStage::inference, n.node_id, round);

            std::vector<model::Prediction> predictions;
            predictions.reserve(n.shard.test.size());
            std::size_t correct = 0, scored = 0;
            const bool exclude = cfg.evaluation == EvaluationMode::leakage_free;
            for (const auto& ex : n.shard.test) {
                predictions.push_back(model::predict(n.params, ex.tokens, cfg.hyper.pooling));
                if (exclude && n.shard.fed_back_ids.count(ex.id)) continue;
                ++scored;
                correct += predictions.back().label == ex.label;
            }
            if (scored == 0) throw EvaluationError("node " + std::to_string(n.node_id) + " has no test items left to score");
            rep.test_accuracy = static_cast<double>(correct) / static_cast<double>(scored);
            if (cfg.on_accuracy) cfg.on_accuracy(n.node_id, rep.test_accuracy);

            if (cfg.mode != Mode::HBSL) return;
            detail::enter(cfg, RoundStage::feedback, n.node_id, round);
            const auto ids = hitl::sample_for_feedback(n.shard.test, cfg.feedback_portion,
                                                       derive_seed(n.seed, {stream::feedback_sample, round}));
            std::map<std::string, std::size_t> where;
            for (std::size_t k = 0; k < n.shard.test.size(); ++k) where.emplace(n.shard.test[k].id, k);
            std::vector<hitl::PendingItem> pending;
            hitl::GroundTruth truth;
            for (const auto& id : ids) {
                const auto k = where.at(id);
                const auto& ex = n.shard.test[k];
                pending.push_back({ex.id, ex.raw_text, ex.tokens, predictions[k].label, predictions[k].probability});
                truth.emplace(ex.id, ex.label);
            }
            const auto feedback = cfg.provider->provide(n.node_id, round, pending, truth);
            hitl::extend_training_set(n.shard, feedback);
            rep.feedback_size = feedback.size();
        });

        for (std::size_t i = 0; i < count; ++i) {
            nodes[i].history.push_back(result.reports[i]);
            nodes[i].round = round;
        }
        return result;
    } catch (...) {
        nodes = snapshot;
        transport.clear();
        throw;
    }
}

}  // namespace hbsl::swarm
