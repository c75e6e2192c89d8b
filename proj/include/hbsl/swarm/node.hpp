#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbsl/data/dataset.hpp"
#include "hbsl/experiment/report.hpp"
#include "hbsl/model/adam.hpp"
#include "hbsl/model/parameters.hpp"

namespace hbsl::swarm {

enum class Mode { SL, HBSL };

inline const char* to_string(Mode m) { return m == Mode::SL ? "SL" : "HBSL"; }

/// One swarm participant. `round` counts completed rounds and always equals
/// history.size().
struct NodeState {
    data::NodeId node_id = 0;
    model::ModelParameters params;
    model::OptimizerState optimizer;
    data::NodeShard shard;
    std::uint32_t round = 0;
    std::vector<experiment::RoundReport> history;
    Mode mode = Mode::SL;
    std::uint64_t seed = 0;
};

inline NodeState make_node(data::NodeShard shard, model::ModelParameters params, Mode mode, std::uint64_t seed,
                           model::AdamConfig adam = {}) {
    NodeState n;
    n.node_id = shard.node_id;
    n.optimizer = model::OptimizerState(params, adam);
    n.params = std::move(params);
    n.shard = std::move(shard);
    n.mode = mode;
    n.seed = seed;
    return n;
}

}  // namespace hbsl::swarm
