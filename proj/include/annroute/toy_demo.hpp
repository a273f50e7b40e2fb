#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "annroute/gcn_model.hpp"
#include "annroute/graph.hpp"

namespace annroute {

/// A small 2-d instance where distance-greedy routing stalls in a local
/// minimum that the learned-representation greedy walk escapes.
struct ToyDemoResult {
    uint64_t instance_seed = 0;
    RowMatrixF base;                     // the 2-d points
    Eigen::RowVectorXf probe;            // the query exhibiting the failure
    uint32_t target = 0;                 // its true nearest neighbor
    std::vector<uint32_t> original_route;
    std::vector<uint32_t> learned_route;
    SimilarityGraph graph;
};

/// Regenerates ~33-point instances from consecutive seeds, trains a small
/// two-layer feed-forward database branch on each, and returns the first
/// instance where the original-distance greedy walk misses the target while
/// the learned walk reaches it. Tries up to max_attempts seeds.
std::optional<ToyDemoResult> run_toy_demo(uint64_t base_seed, int max_attempts);

}  // namespace annroute
