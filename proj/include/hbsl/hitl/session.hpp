#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/hitl/feedback.hpp"
#include "hbsl/log.hpp"

namespace hbsl::hitl {

/// Raised when a client names a round other than the node's current one.
class RoundConflict : public ProtocolError {
public:
    RoundConflict(std::uint32_t requested, std::uint32_t current)
        : ProtocolError("round " + std::to_string(requested) + " is not the current round " + std::to_string(current)),
          requested_round(requested),
          current_round(current) {}
    std::uint32_t requested_round;
    std::uint32_t current_round;
};

struct StatusSnapshot {
    NodeId node_id = 0;
    std::uint32_t round = 0;
    std::string stage;
    std::vector<double> accuracy_history;
};

/// Hand-off point between the round loop and a human annotator for one node.
/// The round loop opens a queue and waits; the HTTP layer reads the queue and
/// submits decisions. All members are guarded by one mutex.
class AnnotationSession {
public:
    explicit AnnotationSession(NodeId node) : node_(node) {}

    void set_round(std::uint32_t round) {
        std::lock_guard lock(mu_);
        round_ = round;
    }

    void set_stage(std::string stage) {
        std::lock_guard lock(mu_);
        stage_ = std::move(stage);
    }

    void record_accuracy(double acc) {
        std::lock_guard lock(mu_);
        history_.push_back(acc);
    }

    /// Queue items for the current round, discarding anything left from before.
    void open(std::uint32_t round, std::vector<PendingItem> items) {
        std::lock_guard lock(mu_);
        round_ = round;
        pending_ = std::move(items);
        decisions_.clear();
        submitted_ = false;
        open_ = true;
        stage_ = "feedback";
    }

    std::vector<PendingItem> pending(std::uint32_t round) const {
        std::lock_guard lock(mu_);
        if (round != round_) throw RoundConflict(round, round_);
        return open_ ? pending_ : std::vector<PendingItem>{};
    }

    /// Record the annotator's labels. Unknown ids are ignored; returns how
    /// many queued items were resolved.
    std::size_t submit(std::uint32_t round, const std::map<std::string, int>& corrections) {
        std::unique_lock lock(mu_);
        if (round != round_) throw RoundConflict(round, round_);
        if (!open_) throw ProtocolError("no feedback queue is open for round " + std::to_string(round));
        std::size_t accepted = 0;
        for (const auto& item : pending_) {
            auto it = corrections.find(item.example_id);
            if (it == corrections.end()) continue;
            if (it->second != 0 && it->second != 1)
                throw DataError("corrected_label for " + item.example_id + " must be 0 or 1");
            decisions_[item.example_id] = it->second;
            ++accepted;
        }
        submitted_ = true;
        lock.unlock();
        cv_.notify_all();
        return accepted;
    }

    /// Block until the annotator submits or the timeout passes. Returns the
    /// decisions made so far and closes the queue either way.
    std::map<std::string, int> wait(std::chrono::milliseconds timeout, bool* timed_out = nullptr) {
        std::unique_lock lock(mu_);
        const bool ok = cv_.wait_for(lock, timeout, [&] { return submitted_; });
        if (timed_out) *timed_out = !ok;
        open_ = false;
        stage_ = "training";
        return decisions_;
    }

    StatusSnapshot status() const {
        std::lock_guard lock(mu_);
        return {node_, round_, stage_, history_};
    }

    NodeId node_id() const noexcept { return node_; }

private:
    NodeId node_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::uint32_t round_ = 0;
    std::string stage_ = "idle";
    std::vector<double> history_;
    std::vector<PendingItem> pending_;
    std::map<std::string, int> decisions_;
    bool submitted_ = false;
    bool open_ = false;
};

/// Human corrections for the queued items. Items the annotator leaves
/// unresolved fall back to the oracle when one is given, otherwise they are
/// dropped from this round's feedback.
inline std::vector<FeedbackItem> collect_human_feedback(const std::vector<PendingItem>& items,
                                                        AnnotationSession* session, NodeId node, std::uint32_t round,
                                                        std::chrono::milliseconds timeout, const GroundTruth& truth,
                                                        OracleProvider* fallback) {
    ++operation_counter();
    if (!session) {
        if (!fallback) {
            log::warn("no annotation session and no oracle fallback; round proceeds without feedback");
            return {};
        }
        return fallback->provide(node, round, items, truth);
    }
    session->open(round, items);
    bool timed_out = false;
    const auto decisions = session->wait(timeout, &timed_out);
    if (timed_out) {
        log::warn("node " + std::to_string(session->node_id()) + ": feedback session timed out in round " +
                  std::to_string(round) + (fallback ? ", using oracle fallback" : ", unresolved items dropped"));
    }

    std::vector<FeedbackItem> out;
    std::vector<PendingItem> unresolved;
    for (const auto& it : items) {
        if (auto d = decisions.find(it.example_id); d != decisions.end()) {
            out.push_back(FeedbackItem{it.example_id, it.tokens, it.predicted_label, d->second, FeedbackSource::human,
                                       round});
        } else {
            unresolved.push_back(it);
        }
    }
    if (!unresolved.empty() && fallback) {
        for (auto& f : fallback->provide(node, round, unresolved, truth)) out.push_back(std::move(f));
    }
    return out;
}

/// Provider backed by a live annotator with an optional oracle fallback.
class HumanProvider : public FeedbackProvider {
public:
    HumanProvider(std::map<NodeId, AnnotationSession*> sessions, std::chrono::milliseconds timeout,
                  std::optional<OracleProvider> fallback)
        : sessions_(std::move(sessions)), timeout_(timeout), fallback_(std::move(fallback)) {}

    std::vector<FeedbackItem> provide(NodeId node, std::uint32_t round, const std::vector<PendingItem>& items,
                                      const GroundTruth& truth) override {
        auto it = sessions_.find(node);
        AnnotationSession* s = it == sessions_.end() ? nullptr : it->second;
        auto* fb = fallback_ ? &*fallback_ : nullptr;
        if (!s && fb) return fb->provide(node, round, items, truth);
        return collect_human_feedback(items, s, node, round, timeout_, truth, fb);
    }

    bool blocks() const override { return true; }

private:
    std::map<NodeId, AnnotationSession*> sessions_;
    std::chrono::milliseconds timeout_;
    std::optional<OracleProvider> fallback_;
};

}  // namespace hbsl::hitl
