#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "annroute/binary_io.hpp"
#include "annroute/oracle.hpp"
#include "support/oracles.hpp"

using namespace annroute;

namespace {

SimilarityGraph directed_path(uint32_t n) {
    SimilarityGraph g;
    g.max_degree = 1;
    g.adjacency.resize(n);
    for (uint32_t v = 0; v + 1 < n; ++v) g.adjacency[v] = {v + 1};
    return g;
}

}  // namespace

TEST_CASE("target at the entry with zero slack caches only the entry") {
    const auto g = directed_path(4);
    const auto entry = precompute_entry(g, 0, 0, 0);
    REQUIRE(entry.hops_to_target.size() == 1);
    CHECK(entry.hops_to_target[0] == std::pair<uint32_t, uint32_t>{0, 0});
}

TEST_CASE("path graph caches the whole path with descending hop counts") {
    const auto g = directed_path(4);
    const auto entry = precompute_entry(g, 7, 3, 0);
    CHECK(entry.query_id == 7);
    CHECK(entry.target == 3);
    REQUIRE(entry.hops_to_target.size() == 4);
    for (uint32_t v = 0; v < 4; ++v) {
        REQUIRE(entry.hops(v).has_value());
        CHECK(*entry.hops(v) == 3 - v);
    }
}

TEST_CASE("unreachable target raises a reachability error") {
    SimilarityGraph g;
    g.max_degree = 1;
    g.adjacency = {{1}, {}, {}};  // vertex 2 has no in-edges
    CHECK_THROWS_AS(precompute_entry(g, 0, 2, 5), ReachabilityError);
}

TEST_CASE("ref_set selects minimal-hop heap members") {
    const auto g = directed_path(4);
    const auto entry = precompute_entry(g, 0, 3, 0);
    SUBCASE("target present wins outright") {
        const std::vector<uint32_t> heap{0, 1, 3};
        CHECK(ref_set(entry, heap) == std::vector<uint32_t>{3});
    }
    SUBCASE("closest cached member wins") {
        const std::vector<uint32_t> heap{0, 1};
        CHECK(ref_set(entry, heap) == std::vector<uint32_t>{1});
    }
    SUBCASE("entirely uncached heap yields the empty set") {
        HopCacheEntry sparse;
        sparse.target = 3;
        sparse.hops_to_target = {{3, 0}};
        const std::vector<uint32_t> heap{0, 1, 2};
        CHECK(ref_set(sparse, heap).empty());
    }
    SUBCASE("ties are all returned") {
        // diamond: 0 -> 1, 0 -> 2, both -> 3
        SimilarityGraph diamond;
        diamond.max_degree = 2;
        diamond.adjacency = {{1, 2}, {3}, {3}, {}};
        const auto e = precompute_entry(diamond, 0, 3, 0);
        const std::vector<uint32_t> heap{1, 2};
        CHECK(ref_set(e, heap) == std::vector<uint32_t>{1, 2});
    }
}

TEST_CASE("hop distances equal Floyd-Warshall on random graphs") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const uint32_t n = std::uniform_int_distribution<uint32_t>(5, 200)(rng);
        const auto g = testsupport::random_graph(n, 5, rng);
        const auto all_pairs = testsupport::floyd_warshall(g.adjacency);
        const uint32_t m = std::uniform_int_distribution<uint32_t>(0, 5)(rng);

        // pick a target reachable from the entry
        uint32_t target = 0;
        for (uint32_t v = 0; v < n; ++v)
            if (all_pairs[0][v] < testsupport::kInf) target = v;

        const auto entry = precompute_entry(g, trial, target, m);
        CHECK(entry.hops(target) == 0);
        for (const auto& [v, hops] : entry.hops_to_target) {
            REQUIRE(all_pairs[v][target] < testsupport::kInf);
            CHECK(hops == static_cast<uint32_t>(all_pairs[v][target]));
        }
    }
}

TEST_CASE("slack selection covers every vertex on every near-optimal path") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 25; ++trial) {
        const uint32_t n = std::uniform_int_distribution<uint32_t>(5, 30)(rng);
        const auto g = testsupport::random_graph(n, 4, rng);
        const auto all_pairs = testsupport::floyd_warshall(g.adjacency);
        uint32_t target = 0;
        for (uint32_t v = 0; v < n; ++v)
            if (all_pairs[0][v] < testsupport::kInf) target = v;
        const uint32_t m = std::uniform_int_distribution<uint32_t>(0, 2)(rng);
        const auto entry = precompute_entry(g, trial, target, m);

        const int bound = all_pairs[0][target] + static_cast<int>(m);
        std::vector<uint32_t> stack{0};
        std::vector<uint8_t> on_path(n, 0);
        testsupport::collect_path_vertices(g, 0, target, bound, stack, on_path);
        for (uint32_t v = 0; v < n; ++v)
            if (on_path[v]) CHECK(entry.hops(v).has_value());
    }
}

TEST_CASE("cache precompute covers each reachable query and is worker-invariant") {
    const auto data = generate_synthetic(500, 8, 6, 77);
    const auto g = build_nsw(data.base, 8, 60, 0);
    const auto gt = exact_knn(data.base, data.train_queries, 1);

    const auto cache1 = precompute_cache(g, gt, 5, 1);
    const auto cache4 = precompute_cache(g, gt, 5, 4);
    CHECK(cache1.entries.size() + cache1.excluded_queries ==
          static_cast<size_t>(data.train_queries.rows()));
    CHECK(cache1.excluded_queries == 0);  // connected build
    REQUIRE(cache1.entries.size() == cache4.entries.size());
    for (size_t i = 0; i < cache1.entries.size(); ++i) {
        CHECK(cache1.entries[i].query_id == cache4.entries[i].query_id);
        CHECK(cache1.entries[i].target == cache4.entries[i].target);
        CHECK(cache1.entries[i].hops_to_target == cache4.entries[i].hops_to_target);
    }
    CHECK(cache1.slack == 5);
}

TEST_CASE("cache file round trip") {
    const auto path = (std::filesystem::temp_directory_path() / "hops.cache").string();
    SUBCASE("empty cache is just a header") {
        HopCache cache;
        cache.slack = 3;
        save_cache(cache, path);
        CHECK(std::filesystem::file_size(path) == 4 + 4 + 4 + 4);
        const auto back = load_cache(path);
        CHECK(back.entries.empty());
        CHECK(back.slack == 3);
    }
    SUBCASE("random cache content survives") {
        std::mt19937_64 rng(8);
        HopCache cache;
        cache.slack = 5;
        for (uint32_t qid = 0; qid < 20; ++qid) {
            HopCacheEntry entry;
            entry.query_id = qid;
            entry.target = std::uniform_int_distribution<uint32_t>(0, 99)(rng);
            const int pairs = std::uniform_int_distribution<int>(0, 10)(rng);
            for (int p = 0; p < pairs; ++p)
                entry.hops_to_target.emplace_back(
                    static_cast<uint32_t>(p) * 3,
                    std::uniform_int_distribution<uint32_t>(0, 9)(rng));
            cache.entries.push_back(std::move(entry));
        }
        save_cache(cache, path);
        const auto back = load_cache(path);
        REQUIRE(back.entries.size() == cache.entries.size());
        CHECK(back.slack == cache.slack);
        for (size_t i = 0; i < cache.entries.size(); ++i) {
            CHECK(back.entries[i].query_id == cache.entries[i].query_id);
            CHECK(back.entries[i].target == cache.entries[i].target);
            CHECK(back.entries[i].hops_to_target == cache.entries[i].hops_to_target);
        }
        CHECK(back.find(7) != nullptr);
        CHECK(back.find(999) == nullptr);
    }
    SUBCASE("corrupted header raises a format error") {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "NOPE";
        out.close();
        CHECK_THROWS_AS(load_cache(path), FormatError);
    }
}
