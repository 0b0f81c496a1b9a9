#pragma once

#include "pimkit/core.hpp"
#include "pimkit/event_streams.hpp"

#include <cstddef>
#include <cstdint>

namespace pimkit {

struct SimConfig {
    Model model;
    double horizon = 0.0;  // hours; events are drawn on [0, horizon]
    std::uint64_t seed = 0;
    std::size_t max_events = 10'000'000;
};

/// Ogata thinning. Exact for any feasible model; throws SimulationError when
/// more than max_events are produced (usually a supercritical model).
///
/// Uses a single random sub-stream (stream 0) of the seed.
EventStreams simulate_thinning(const SimConfig& config);

/// Bookkeeping of a branching run.
struct BranchingStats {
    std::size_t immigrants = 0;
    std::size_t parents = 0;   // events whose offspring were drawn
    std::size_t children = 0;  // offspring drawn, including those past the horizon
};

/// Immigrant/offspring (cluster) construction. Requires a subcritical
/// branching matrix. Events landing in process i, immigrants and offspring
/// alike, are drawn from sub-stream i + 1 of the seed.
EventStreams simulate_branching(const SimConfig& config, BranchingStats* stats = nullptr);

/// horizon * sum((I - a/beta)^{-1} b): expected count of a stationary process.
double stationary_expected_count(const Model& model, double horizon);

}  // namespace pimkit
