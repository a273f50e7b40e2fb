#include "annroute/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <queue>
#include <stdexcept>

#include "annroute/binary_io.hpp"

namespace annroute {

namespace {

using DistId = std::pair<double, uint32_t>;

// ef-bounded best-first search over the partial graph with true distances.
// Returns up to ef candidates sorted by (distance, id).
std::vector<DistId> search_partial(const RowMatrixF& base,
                                   const std::vector<std::vector<uint32_t>>& adjacency,
                                   uint32_t entry, const float* target, uint32_t ef,
                                   std::vector<uint8_t>& visited_scratch) {
    const int dim = static_cast<int>(base.cols());
    std::fill(visited_scratch.begin(), visited_scratch.end(), 0);

    // min-heap of frontier, max-heap of current best ef results
    std::priority_queue<DistId, std::vector<DistId>, std::greater<>> frontier;
    std::priority_queue<DistId> results;

    const double d0 = squared_l2(base.row(entry).data(), target, dim);
    frontier.emplace(d0, entry);
    results.emplace(d0, entry);
    visited_scratch[entry] = 1;

    while (!frontier.empty()) {
        const auto [dist, v] = frontier.top();
        if (results.size() >= ef && dist > results.top().first) break;
        frontier.pop();
        for (uint32_t u : adjacency[v]) {
            if (visited_scratch[u]) continue;
            visited_scratch[u] = 1;
            const double du = squared_l2(base.row(u).data(), target, dim);
            if (results.size() < ef || du < results.top().first) {
                frontier.emplace(du, u);
                results.emplace(du, u);
                if (results.size() > ef) results.pop();
            }
        }
    }

    std::vector<DistId> out(results.size());
    for (size_t i = out.size(); i-- > 0;) {
        out[i] = results.top();
        results.pop();
    }
    return out;
}

// Keep a candidate only if it is closer to the new point than to every
// already-kept neighbor; fill nearest-first if fewer than max_degree survive.
std::vector<uint32_t> select_neighbors(const RowMatrixF& base, const std::vector<DistId>& candidates,
                                       uint32_t max_degree) {
    const int dim = static_cast<int>(base.cols());
    std::vector<DistId> kept;
    std::vector<uint8_t> taken(candidates.size(), 0);
    for (size_t i = 0; i < candidates.size() && kept.size() < max_degree; ++i) {
        const auto& [dist_to_new, cand] = candidates[i];
        bool keep = true;
        for (const auto& [kept_dist, kept_id] : kept) {
            (void)kept_dist;
            if (squared_l2(base.row(cand).data(), base.row(kept_id).data(), dim) <= dist_to_new) {
                keep = false;
                break;
            }
        }
        if (keep) {
            kept.push_back(candidates[i]);
            taken[i] = 1;
        }
    }
    for (size_t i = 0; i < candidates.size() && kept.size() < max_degree; ++i) {
        if (!taken[i]) kept.push_back(candidates[i]);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<uint32_t> out;
    out.reserve(kept.size());
    for (const auto& [d, id] : kept) {
        (void)d;
        out.push_back(id);
    }
    return out;
}

// Re-apply the same keep-if-closer selection when a list overflows; plain
// nearest-only pruning strips the long-range edges and disconnects dense
// clusters from the rest of the graph.
void prune_overfull(const RowMatrixF& base, std::vector<uint32_t>& list, uint32_t owner,
                    uint32_t max_degree) {
    const int dim = static_cast<int>(base.cols());
    std::vector<DistId> with_dist;
    with_dist.reserve(list.size());
    for (uint32_t u : list)
        with_dist.emplace_back(squared_l2(base.row(owner).data(), base.row(u).data(), dim), u);
    std::sort(with_dist.begin(), with_dist.end());
    list = select_neighbors(base, with_dist, max_degree);
}

}  // namespace

SimilarityGraph build_nsw(const RowMatrixF& base, uint32_t max_degree, uint32_t ef_construction,
                          uint64_t seed) {
    (void)seed;
    const Eigen::Index n = base.rows();
    if (n < 1) throw std::invalid_argument("build_nsw: empty base");
    if (max_degree < 1) throw std::invalid_argument("build_nsw: max_degree must be >= 1");
    if (ef_construction < 1) throw std::invalid_argument("build_nsw: ef_construction must be >= 1");

    SimilarityGraph graph;
    graph.max_degree = max_degree;
    graph.entry_vertex = 0;
    graph.adjacency.assign(static_cast<size_t>(n), {});

    std::vector<uint8_t> visited(static_cast<size_t>(n), 0);
    for (Eigen::Index i = 1; i < n; ++i) {
        const auto candidates = search_partial(base, graph.adjacency, graph.entry_vertex,
                                               base.row(i).data(), ef_construction, visited);
        const auto selected = select_neighbors(base, candidates, max_degree);
        graph.adjacency[i] = selected;
        for (uint32_t s : selected) {
            auto& list = graph.adjacency[s];
            list.push_back(static_cast<uint32_t>(i));
            if (list.size() > max_degree) prune_overfull(base, list, s, max_degree);
        }
    }
    return graph;
}

const std::vector<uint32_t>& neighbors(const SimilarityGraph& graph, uint32_t v) {
    if (v >= graph.num_vertices()) throw std::out_of_range("neighbors: vertex id out of range");
    return graph.adjacency[v];
}

std::vector<std::vector<uint32_t>> symmetrize(const SimilarityGraph& graph) {
    const uint32_t n = graph.num_vertices();
    std::vector<std::vector<uint32_t>> undirected(n);
    for (uint32_t v = 0; v < n; ++v)
        for (uint32_t u : graph.adjacency[v]) {
            undirected[v].push_back(u);
            undirected[u].push_back(v);
        }
    for (auto& list : undirected) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return undirected;
}

std::vector<std::vector<uint32_t>> reverse_adjacency(const SimilarityGraph& graph) {
    std::vector<std::vector<uint32_t>> reversed(graph.num_vertices());
    for (uint32_t v = 0; v < graph.num_vertices(); ++v)
        for (uint32_t u : graph.adjacency[v]) reversed[u].push_back(v);
    return reversed;
}

HopDistances bfs_hops_over(const std::vector<std::vector<uint32_t>>& adjacency, uint32_t source,
                           BfsDirection direction_tag) {
    HopDistances result;
    result.source = source;
    result.direction = direction_tag;
    result.hops.assign(adjacency.size(), HopDistances::kUnreachable);
    result.hops[source] = 0;
    std::deque<uint32_t> queue{source};
    while (!queue.empty()) {
        const uint32_t v = queue.front();
        queue.pop_front();
        for (uint32_t u : adjacency[v]) {
            if (result.hops[u] != HopDistances::kUnreachable) continue;
            result.hops[u] = result.hops[v] + 1;
            queue.push_back(u);
        }
    }
    return result;
}

HopDistances bfs_hops(const SimilarityGraph& graph, uint32_t source, BfsDirection direction) {
    if (source >= graph.num_vertices()) throw std::out_of_range("bfs_hops: source out of range");
    if (direction == BfsDirection::Forward)
        return bfs_hops_over(graph.adjacency, source, direction);
    return bfs_hops_over(reverse_adjacency(graph), source, direction);
}

namespace {
constexpr char kMagic[4] = {'N', 'S', 'W', 'G'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_graph(const SimilarityGraph& graph, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("graph file not writable: " + path);
    io::write_magic(out, kMagic);
    io::write_pod(out, kVersion);
    io::write_pod(out, graph.num_vertices());
    io::write_pod(out, graph.max_degree);
    io::write_pod(out, graph.entry_vertex);
    for (const auto& list : graph.adjacency) {
        io::write_pod(out, static_cast<uint32_t>(list.size()));
        io::write_array(out, list.data(), list.size());
    }
    if (!out) throw FormatError("graph write failed: " + path);
}

SimilarityGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("graph file not readable: " + path);
    io::expect_magic(in, kMagic, path.c_str());
    if (io::read_pod<uint32_t>(in, "version") != kVersion)
        throw FormatError("graph: unsupported version in " + path);
    SimilarityGraph graph;
    const uint32_t n = io::read_pod<uint32_t>(in, "vertex count");
    graph.max_degree = io::read_pod<uint32_t>(in, "max degree");
    graph.entry_vertex = io::read_pod<uint32_t>(in, "entry vertex");
    if (n > 0 && graph.entry_vertex >= n) throw FormatError("graph: entry vertex out of range");
    graph.adjacency.resize(n);
    for (uint32_t v = 0; v < n; ++v) {
        const uint32_t len = io::read_pod<uint32_t>(in, "list length");
        if (len > graph.max_degree) throw FormatError("graph: adjacency list exceeds max degree");
        graph.adjacency[v].resize(len);
        io::read_array(in, graph.adjacency[v].data(), len, "adjacency list");
    }
    return graph;
}

}  // namespace annroute
