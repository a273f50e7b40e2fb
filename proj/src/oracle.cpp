#include "annroute/oracle.hpp"

#include <algorithm>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "annroute/binary_io.hpp"

namespace annroute {

std::optional<uint32_t> HopCacheEntry::hops(uint32_t v) const {
    auto it = std::lower_bound(hops_to_target.begin(), hops_to_target.end(), v,
                               [](const auto& p, uint32_t key) { return p.first < key; });
    if (it == hops_to_target.end() || it->first != v) return std::nullopt;
    return it->second;
}

const HopCacheEntry* HopCache::find(uint32_t query_id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), query_id,
                               [](const HopCacheEntry& e, uint32_t key) { return e.query_id < key; });
    if (it == entries.end() || it->query_id != query_id) return nullptr;
    return &*it;
}

namespace {

HopCacheEntry build_entry(const HopDistances& from_entry,
                          const std::vector<std::vector<uint32_t>>& reversed, uint32_t query_id,
                          uint32_t target, uint32_t slack) {
    if (!from_entry.reachable(target))
        throw ReachabilityError("precompute_entry: target " + std::to_string(target) +
                                " unreachable from entry");
    const HopDistances to_target = bfs_hops_over(reversed, target, BfsDirection::Backward);
    const int64_t bound = static_cast<int64_t>(from_entry.hops[target]) + slack;

    HopCacheEntry entry;
    entry.query_id = query_id;
    entry.target = target;
    for (uint32_t v = 0; v < reversed.size(); ++v) {
        if (!from_entry.reachable(v) || !to_target.reachable(v)) continue;
        if (static_cast<int64_t>(from_entry.hops[v]) + to_target.hops[v] <= bound)
            entry.hops_to_target.emplace_back(v, static_cast<uint32_t>(to_target.hops[v]));
    }
    return entry;
}

}  // namespace

HopCacheEntry precompute_entry(const SimilarityGraph& graph, uint32_t query_id, uint32_t target,
                               uint32_t slack) {
    if (target >= graph.num_vertices())
        throw std::out_of_range("precompute_entry: target out of range");
    const HopDistances from_entry = bfs_hops(graph, graph.entry_vertex, BfsDirection::Forward);
    return build_entry(from_entry, reverse_adjacency(graph), query_id, target, slack);
}

std::vector<uint32_t> ref_set(const HopCacheEntry& entry, std::span<const uint32_t> heap_ids) {
    uint32_t best = UINT32_MAX;
    for (uint32_t v : heap_ids) {
        const auto h = entry.hops(v);
        if (h && *h < best) best = *h;
    }
    std::vector<uint32_t> out;
    if (best == UINT32_MAX) return out;
    for (uint32_t v : heap_ids) {
        const auto h = entry.hops(v);
        if (h && *h == best) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

HopCache precompute_cache(const SimilarityGraph& graph, const GroundTruth& train_gt,
                          uint32_t slack, int workers) {
    const HopDistances from_entry = bfs_hops(graph, graph.entry_vertex, BfsDirection::Forward);
    const auto reversed = reverse_adjacency(graph);
    const Eigen::Index q_count = train_gt.num_queries();

    std::vector<std::optional<HopCacheEntry>> slots(static_cast<size_t>(q_count));
#ifdef _OPENMP
    const int nthreads = workers > 0 ? workers : omp_get_max_threads();
#else
    const int nthreads = 1;
    (void)workers;
#endif
#pragma omp parallel for schedule(dynamic, 4) num_threads(nthreads)
    for (Eigen::Index q = 0; q < q_count; ++q) {
        const uint32_t target = train_gt.nn(q);
        if (from_entry.reachable(target))
            slots[static_cast<size_t>(q)] =
                build_entry(from_entry, reversed, static_cast<uint32_t>(q), target, slack);
    }

    HopCache cache;
    cache.slack = slack;
    for (auto& slot : slots) {
        if (slot)
            cache.entries.push_back(std::move(*slot));
        else
            ++cache.excluded_queries;
    }
    return cache;
}

namespace {
constexpr char kMagic[4] = {'H', 'O', 'P', 'C'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_cache(const HopCache& cache, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cache file not writable: " + path);
    io::write_magic(out, kMagic);
    io::write_pod(out, kVersion);
    io::write_pod(out, static_cast<uint32_t>(cache.entries.size()));
    io::write_pod(out, cache.slack);
    for (const auto& entry : cache.entries) {
        io::write_pod(out, entry.query_id);
        io::write_pod(out, entry.target);
        io::write_pod(out, static_cast<uint32_t>(entry.hops_to_target.size()));
        for (const auto& [v, h] : entry.hops_to_target) {
            io::write_pod(out, v);
            io::write_pod(out, h);
        }
    }
    if (!out) throw FormatError("cache write failed: " + path);
}

HopCache load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cache file not readable: " + path);
    io::expect_magic(in, kMagic, path.c_str());
    if (io::read_pod<uint32_t>(in, "version") != kVersion)
        throw FormatError("cache: unsupported version in " + path);
    HopCache cache;
    const uint32_t count = io::read_pod<uint32_t>(in, "entry count");
    cache.slack = io::read_pod<uint32_t>(in, "slack");
    cache.entries.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        auto& entry = cache.entries[i];
        entry.query_id = io::read_pod<uint32_t>(in, "query id");
        entry.target = io::read_pod<uint32_t>(in, "target");
        const uint32_t pairs = io::read_pod<uint32_t>(in, "pair count");
        entry.hops_to_target.resize(pairs);
        for (uint32_t p = 0; p < pairs; ++p) {
            entry.hops_to_target[p].first = io::read_pod<uint32_t>(in, "vertex");
            entry.hops_to_target[p].second = io::read_pod<uint32_t>(in, "hops");
        }
    }
    return cache;
}

}  // namespace annroute
