#pragma once

#include <span>
#include <vector>

#include "hbsl/data/dataset.hpp"
#include "hbsl/errors.hpp"

namespace hbsl::swarm {

struct AccuracyReport {
    data::NodeId node_id = 0;
    double validation_accuracy = 0.0;
};

/// Node with the highest validation accuracy; ties go to the lowest node id.
inline data::NodeId elect_master(std::span<const AccuracyReport> reports) {
    if (reports.empty()) throw ProtocolError("elect_master: no accuracy reports");
    const AccuracyReport* best = &reports.front();
    for (const auto& r : reports.subspan(1)) {
        if (r.validation_accuracy > best->validation_accuracy ||
            (r.validation_accuracy == best->validation_accuracy && r.node_id < best->node_id)) {
            best = &r;
        }
    }
    return best->node_id;
}

}  // namespace hbsl::swarm
