#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "annroute/dataset.hpp"

namespace annroute {

/// Directed bounded-degree adjacency over base points. Built as the bottom
/// layer of an HNSW-style insertion procedure; edges may lose symmetry when
/// over-full vertices are pruned.
struct SimilarityGraph {
    std::vector<std::vector<uint32_t>> adjacency;  // per vertex, sorted by (distance to owner, id)
    uint32_t max_degree = 0;
    uint32_t entry_vertex = 0;

    uint32_t num_vertices() const { return static_cast<uint32_t>(adjacency.size()); }
};

/// Inserts vertices in index order. Each insertion beam-searches the partial
/// graph (width ef_construction, true Euclidean distances), links the new
/// vertex bidirectionally to up to max_degree neighbors chosen by the
/// keep-if-closer-to-new-than-to-any-kept heuristic (nearest-first fill when
/// fewer survive), and prunes any vertex that exceeds max_degree down to its
/// max_degree nearest. Entry vertex is 0. The seed is accepted for interface
/// stability; construction is fully deterministic and does not consume it.
SimilarityGraph build_nsw(const RowMatrixF& base, uint32_t max_degree,
                          uint32_t ef_construction, uint64_t seed);

const std::vector<uint32_t>& neighbors(const SimilarityGraph& graph, uint32_t v);

/// Union of each edge with its reverse; per-vertex lists sorted ascending,
/// no degree cap.
std::vector<std::vector<uint32_t>> symmetrize(const SimilarityGraph& graph);

enum class BfsDirection { Forward, Backward };

struct HopDistances {
    static constexpr int32_t kUnreachable = -1;
    std::vector<int32_t> hops;
    uint32_t source = 0;
    BfsDirection direction = BfsDirection::Forward;

    bool reachable(uint32_t v) const { return hops[v] != kUnreachable; }
};

/// Unweighted shortest hop counts from source along edges (Forward) or along
/// reversed edges (Backward).
HopDistances bfs_hops(const SimilarityGraph& graph, uint32_t source, BfsDirection direction);

/// Same, but over a prebuilt adjacency (used to amortize graph reversal).
HopDistances bfs_hops_over(const std::vector<std::vector<uint32_t>>& adjacency, uint32_t source,
                           BfsDirection direction_tag);

std::vector<std::vector<uint32_t>> reverse_adjacency(const SimilarityGraph& graph);

void save_graph(const SimilarityGraph& graph, const std::string& path);
SimilarityGraph load_graph(const std::string& path);

}  // namespace annroute
