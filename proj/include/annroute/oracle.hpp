#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "annroute/dataset.hpp"
#include "annroute/graph.hpp"

namespace annroute {

/// Raised when a query's true nearest neighbor cannot be reached from the
/// entry vertex; such queries are excluded from training.
class ReachabilityError : public std::runtime_error {
public:
    explicit ReachabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// Hop distances toward one training query's true nearest neighbor, kept only
/// for vertices lying on near-optimal entry-to-target paths (slack m).
struct HopCacheEntry {
    uint32_t query_id = 0;
    uint32_t target = 0;                                      // id of the true NN
    std::vector<std::pair<uint32_t, uint32_t>> hops_to_target;  // (vertex, hops), vertex ascending

    std::optional<uint32_t> hops(uint32_t v) const;
};

struct HopCache {
    uint32_t slack = 5;  // m
    std::vector<HopCacheEntry> entries;  // sorted by query_id
    uint32_t excluded_queries = 0;       // not serialized; filled by precompute_cache

    const HopCacheEntry* find(uint32_t query_id) const;
};

/// Forward BFS from the entry plus backward BFS from the target select every
/// vertex v with d_entry(v) + d_target(v) <= d_entry(target) + m; the entry's
/// hop distance to the target is stored for each.
HopCacheEntry precompute_entry(const SimilarityGraph& graph, uint32_t query_id, uint32_t target,
                               uint32_t slack);

/// Heap members with minimal cached hop distance to the target. Members
/// absent from the cache count as infinitely far; an entirely uncached heap
/// yields the empty set.
std::vector<uint32_t> ref_set(const HopCacheEntry& entry, std::span<const uint32_t> heap_ids);

/// One entry per training query whose target is reachable, in query order.
/// Parallel over queries; content is independent of the worker count.
HopCache precompute_cache(const SimilarityGraph& graph, const GroundTruth& train_gt,
                          uint32_t slack, int workers);

void save_cache(const HopCache& cache, const std::string& path);
HopCache load_cache(const std::string& path);

}  // namespace annroute
