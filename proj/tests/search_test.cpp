#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>

#include "annroute/pca.hpp"
#include "annroute/search.hpp"
#include "support/oracles.hpp"

using namespace annroute;

namespace {

RowMatrixF path_points(int n) {
    RowMatrixF base(n, 1);
    for (int i = 0; i < n; ++i) base(i, 0) = static_cast<float>(i);
    return base;
}

}  // namespace

TEST_CASE("score: zero distance maxes the original scorer") {
    RowMatrixF base(2, 3);
    base << 1.f, 2.f, 3.f, -1.f, 0.f, 5.f;
    const Scorer scorer = Scorer::original(base, 1.0);
    PreparedQuery q;
    q.raw = base.row(0).data();
    CHECK(score(scorer, 0, q) == 0.0);
    CHECK(score(scorer, 1, q) < 0.0);
}

TEST_CASE("score: aligned unit representations give 1.0") {
    Eigen::MatrixXd reps = Eigen::MatrixXd::Zero(3, 4);
    reps(1, 0) = 1.0;
    const Scorer scorer = Scorer::learned(reps, 4);
    PreparedQuery q;
    q.learned_rep = Eigen::VectorXd::Zero(4);
    q.learned_rep(0) = 1.0;
    CHECK(score(scorer, 1, q) == 1.0);
    CHECK(score(scorer, 0, q) == 0.0);
}

TEST_CASE("unit cost follows the compression rate") {
    RowMatrixF trunc(5, 32);
    trunc.setZero();
    const Scorer scorer = Scorer::truncated(trunc, 1.0, 128);
    CHECK(scorer.unit_cost() == doctest::Approx(0.25));
    CHECK(scorer.projection_cost() == 32);
}

TEST_CASE("heap_softmax basics") {
    SUBCASE("singleton") {
        const std::vector<double> s{3.7};
        const auto p = heap_softmax(s);
        CHECK(p.size() == 1);
        CHECK(p[0] == doctest::Approx(1.0));
    }
    SUBCASE("two distances at unit temperature") {
        // scores are negated distances {1, 2}
        const std::vector<double> s{-1.0, -2.0};
        const auto p = heap_softmax(s);
        CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
        CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
        CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("near-zero temperature concentrates on the best vertex") {
        const double tau = 1e-9;
        const std::vector<double> s{-1.0 / tau, -2.0 / tau, -1.5 / tau};
        const auto p = heap_softmax(s);
        CHECK(p[0] > 1.0 - 1e-6);
    }
    SUBCASE("large scores do not overflow") {
        const std::vector<double> s{1e9, 1e9 - 3.0};
        const auto p = heap_softmax(s);
        CHECK(std::isfinite(p[0]));
        CHECK(p[0] + p[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("budget of exactly one scoring expands nothing") {
    const auto base = path_points(10);
    const auto graph = build_nsw(base, 2, 50, 0);
    const Scorer scorer = Scorer::original(base, 1.0);
    PreparedQuery q;
    const float probe = 7.3f;
    q.raw = &probe;
    SearchConfig config;
    config.dcs_budget = 1.0;
    config.k = 0;
    const auto traj = beam_search(graph, scorer, q, config);
    CHECK(traj.visited == std::vector<uint32_t>{0});
    CHECK(traj.steps.empty());
    CHECK(traj.scorings == 1);
    CHECK(traj.dcs_used == doctest::Approx(1.0));
    CHECK(traj.result_candidates == std::vector<uint32_t>{0});
}

TEST_CASE("ample budget finds the true neighbor on the path graph") {
    const auto base = path_points(10);
    const auto graph = build_nsw(base, 2, 50, 0);
    const Scorer scorer = Scorer::original(base, 1.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> pos(-0.5f, 9.5f);
    RowMatrixF queries(50, 1);
    for (int i = 0; i < 50; ++i) queries(i, 0) = pos(rng);
    const auto gt = exact_knn(base, queries, 1);

    SearchConfig config;
    config.dcs_budget = 64.0;
    config.k = 0;
    for (int i = 0; i < 50; ++i) {
        PreparedQuery q;
        q.raw = queries.row(i).data();
        const auto traj = beam_search(graph, scorer, q, config);
        REQUIRE(traj.result_candidates.size() == 1);
        CHECK(traj.result_candidates[0] == gt.nn(i));
    }
}

TEST_CASE("trajectory bookkeeping invariants") {
    const auto data = generate_synthetic(300, 8, 4, 9);
    const auto graph = build_nsw(data.base, 6, 60, 0);
    const Scorer scorer = Scorer::original(data.base, 1.0);
    SearchConfig config;
    config.dcs_budget = 40.0;
    config.k = 4;
    for (int i = 0; i < 10; ++i) {
        PreparedQuery q;
        q.raw = data.test_queries.row(i).data();
        const auto traj = beam_search(graph, scorer, q, config);

        // every scored vertex appears exactly once
        auto visited_sorted = traj.visited;
        std::sort(visited_sorted.begin(), visited_sorted.end());
        CHECK(std::adjacent_find(visited_sorted.begin(), visited_sorted.end()) ==
              visited_sorted.end());
        CHECK(traj.visited.size() == static_cast<size_t>(traj.scorings));

        // each expanded vertex was in the preceding heap snapshot
        for (const auto& step : traj.steps)
            CHECK(std::binary_search(step.heap_snapshot.begin(), step.heap_snapshot.end(),
                                     step.expanded));

        CHECK(traj.dcs_used <= config.dcs_budget);
    }
}

TEST_CASE("stochastic search at vanishing temperature equals beam search") {
    const auto data = generate_synthetic(500, 16, 8, 41);
    const auto graph = build_nsw(data.base, 8, 80, 0);
    const Scorer cold = Scorer::original(data.base, 1e-9);
    SearchConfig config;
    config.dcs_budget = 48.0;
    config.k = 4;
    std::mt19937_64 rng(5);
    for (Eigen::Index i = 0; i < 50; ++i) {
        PreparedQuery q;
        q.raw = data.test_queries.row(i % data.test_queries.rows()).data();
        const auto det = beam_search(graph, cold, q, config);
        auto stoch_config = config;
        stoch_config.stochastic = true;
        const auto stoch = stochastic_search(graph, cold, q, stoch_config, rng);
        CHECK(det.visited == stoch.visited);
        REQUIRE(det.steps.size() == stoch.steps.size());
        for (size_t s = 0; s < det.steps.size(); ++s) {
            CHECK(det.steps[s].expanded == stoch.steps[s].expanded);
            CHECK(det.steps[s].heap_snapshot == stoch.steps[s].heap_snapshot);
        }
    }
}

TEST_CASE("stochastic search is deterministic per seed") {
    const auto data = generate_synthetic(200, 8, 4, 2);
    const auto graph = build_nsw(data.base, 6, 50, 0);
    const Scorer scorer = Scorer::original(data.base, 1.0);
    SearchConfig config;
    config.dcs_budget = 32.0;
    config.k = 2;
    PreparedQuery q;
    q.raw = data.test_queries.row(0).data();
    std::mt19937_64 rng_a(77), rng_b(77);
    const auto a = stochastic_search(graph, scorer, q, config, rng_a);
    const auto b = stochastic_search(graph, scorer, q, config, rng_b);
    CHECK(a.visited == b.visited);
    CHECK(a.result_candidates == b.result_candidates);
}

TEST_CASE("expansion frequencies on a frozen heap match the softmax") {
    // directly exercise the sampling rule over a 3-element score set
    const std::vector<double> scores{0.3, -0.4, 1.1};
    const auto probs = heap_softmax(scores);
    std::mt19937_64 rng(123);
    const int trials = 100000;
    std::vector<int> counts(3, 0);
    for (int t = 0; t < trials; ++t) {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) {
                ++counts[i];
                break;
            }
        }
    }
    for (size_t i = 0; i < 3; ++i) {
        const double expected = probs[i] * trials;
        const double sigma = std::sqrt(trials * probs[i] * (1.0 - probs[i]));
        CHECK(std::abs(counts[i] - expected) < 3.0 * sigma);
    }
}

TEST_CASE("select_topk_visited") {
    const std::vector<uint32_t> visited{10, 20, 30, 40};
    const std::vector<double> scores{0.1, 0.9, 0.5, 0.9};
    SUBCASE("k covering everything returns all of V") {
        const auto all = select_topk_visited(visited, scores, 10, false, nullptr);
        CHECK(all.size() == 4);
    }
    SUBCASE("deterministic mode sorts by score with id ties") {
        const auto top = select_topk_visited(visited, scores, 3, false, nullptr);
        CHECK(top == std::vector<uint32_t>{20, 40, 30});
    }
    SUBCASE("stochastic inclusion frequencies match exhaustive enumeration") {
        // P(v included in a 2-draw without replacement) enumerated exactly
        const auto p = heap_softmax(scores);
        std::vector<double> inclusion(4, 0.0);
        for (size_t a = 0; a < 4; ++a)
            for (size_t b = 0; b < 4; ++b) {
                if (a == b) continue;
                const double prob = p[a] * (p[b] / (1.0 - p[a]));
                inclusion[a] += prob;
                inclusion[b] += prob;
            }
        std::mt19937_64 rng(9);
        const int trials = 100000;
        std::vector<int> counts(4, 0);
        for (int t = 0; t < trials; ++t) {
            const auto picks = select_topk_visited(visited, scores, 2, true, &rng);
            for (uint32_t id : picks)
                for (size_t i = 0; i < visited.size(); ++i)
                    if (visited[i] == id) ++counts[i];
        }
        for (size_t i = 0; i < 4; ++i) {
            const double expected = inclusion[i] * trials;
            const double sigma = std::sqrt(trials * inclusion[i] * (1.0 - inclusion[i])) + 1e-9;
            CHECK(std::abs(counts[i] - expected) < 3.0 * sigma);
        }
    }
}

TEST_CASE("rerank orders by true distance") {
    const auto data = generate_synthetic(200, 8, 4, 6);
    const float* q = data.test_queries.row(0).data();
    SUBCASE("single candidate") {
        const std::vector<uint32_t> one{5};
        CHECK(rerank(one, q, data.base, 1) == one);
    }
    SUBCASE("candidate set containing the true neighbor puts it first") {
        const auto gt = exact_knn(data.base, data.test_queries.topRows(1), 1);
        std::vector<uint32_t> candidates{3, 99, gt.nn(0), 42, 7};
        const auto ordered = rerank(candidates, q, data.base, 5);
        CHECK(ordered.front() == gt.nn(0));
    }
    SUBCASE("order equals exhaustive ranking restricted to the candidates") {
        RowMatrixF probe = data.test_queries.topRows(1);
        const auto full = testsupport::brute_force_knn(data.base, probe, 200 * 4 / 5);
        std::vector<uint32_t> candidates{17, 3, 55, 81, 120, 9};
        const auto ordered = rerank(candidates, q, data.base, 6);
        std::vector<uint32_t> expected;
        for (uint32_t id : full[0])
            if (std::find(candidates.begin(), candidates.end(), id) != candidates.end())
                expected.push_back(id);
        CHECK(ordered == expected);
    }
}

TEST_CASE("routing budget arithmetic") {
    CHECK(routing_budget(128, 8, 128, 128) == doctest::Approx(120));
    CHECK(routing_budget(128, 16, 32, 128) == doctest::Approx(320));
    CHECK(routing_budget(256, 0, 96, 96) == doctest::Approx(256));
    CHECK(routing_budget(64, 0, 64, 64) == doctest::Approx(64));
}

TEST_CASE("budget soundness over randomized configurations") {
    const auto data = generate_synthetic(400, 32, 6, 15);
    const auto graph = build_nsw(data.base, 8, 60, 0);
    std::mt19937_64 rng(31);

    std::map<int, RowMatrixF> trunc_bases;
    std::map<int, RowMatrixF> trunc_queries;
    std::map<int, PCAModel> pcas;
    for (int c : {2, 4}) {
        const int d = 32 / c;
        pcas[c] = pca_fit(data.base, d);
        trunc_bases[c] = pca_transform(pcas[c], data.base);
        trunc_queries[c] = pca_transform(pcas[c], data.test_queries);
    }
    Eigen::MatrixXd reps = Eigen::MatrixXd::Random(400, 32);

    for (int trial = 0; trial < 200; ++trial) {
        SearchConfig config;
        config.dcs_budget = std::uniform_int_distribution<int>(1, 96)(rng);
        config.k = std::uniform_int_distribution<int>(0, static_cast<int>(config.dcs_budget))(rng);
        const int mode_pick = std::uniform_int_distribution<int>(0, 3)(rng);
        const Eigen::Index qi =
            std::uniform_int_distribution<Eigen::Index>(0, data.test_queries.rows() - 1)(rng);
        PreparedQuery q;
        q.raw = data.test_queries.row(qi).data();

        Scorer scorer = Scorer::original(data.base, 1.0);
        if (mode_pick == 1) {
            scorer = Scorer::learned(reps, 32);
            q.learned_rep = Eigen::VectorXd::Random(32);
        } else if (mode_pick >= 2) {
            const int c = mode_pick == 2 ? 2 : 4;
            scorer = Scorer::truncated(trunc_bases[c], 1.0, 32);
            q.truncated = trunc_queries[c].row(qi);
        }

        const auto traj = beam_search(graph, scorer, q, config);
        const double rerank_cost =
            config.k > 0 ? static_cast<double>(traj.result_candidates.size()) : 0.0;
        const double projection = traj.scorings > 0 ? scorer.projection_cost() : 0.0;
        const double accounted =
            static_cast<double>(traj.scorings) * scorer.unit_cost() + rerank_cost + projection;
        CHECK(accounted <= config.dcs_budget + 1e-12);
        CHECK(traj.dcs_used <= config.dcs_budget + 1e-12);
    }
}

TEST_CASE("recall is monotone in the budget for deterministic search") {
    const auto data = generate_synthetic(2000, 16, 16, 19);
    const auto graph = build_nsw(data.base, 12, 120, 0);
    const auto gt = exact_knn(data.base, data.test_queries, 1);
    const Scorer scorer = Scorer::original(data.base, 1.0);

    double previous = -1.0;
    for (double budget : {64.0, 128.0, 256.0, 512.0}) {
        SearchConfig config;
        config.dcs_budget = budget;
        config.k = 0;
        size_t hits = 0;
        for (Eigen::Index i = 0; i < data.test_queries.rows(); ++i) {
            PreparedQuery q;
            q.raw = data.test_queries.row(i).data();
            const auto traj = beam_search(graph, scorer, q, config);
            if (traj.result_candidates.front() == gt.nn(i)) ++hits;
        }
        const double recall = static_cast<double>(hits) / data.test_queries.rows();
        CHECK(recall >= previous);
        previous = recall;
    }
    CHECK(previous > 0.5);
}

TEST_CASE("plugging negated true distances as learned scores reproduces beam search") {
    const auto data = generate_synthetic(300, 8, 5, 23);
    const auto graph = build_nsw(data.base, 8, 60, 0);
    const Scorer original = Scorer::original(data.base, 1.0);
    SearchConfig config;
    config.dcs_budget = 40.0;
    config.k = 5;

    for (Eigen::Index i = 0; i < 10; ++i) {
        PreparedQuery q;
        q.raw = data.test_queries.row(i).data();

        // one-dimensional "representations" holding -distance per vertex
        Eigen::MatrixXd fake_reps(data.base.rows(), 1);
        for (Eigen::Index v = 0; v < data.base.rows(); ++v)
            fake_reps(v, 0) = -std::sqrt(squared_l2(data.base.row(v).data(), q.raw, 8));
        Scorer learned = Scorer::learned(fake_reps, 1);  // data_dim 1 : same unit cost
        PreparedQuery lq;
        lq.raw = q.raw;
        lq.learned_rep = Eigen::VectorXd::Ones(1);

        const auto a = beam_search(graph, original, q, config);
        const auto b = beam_search(graph, learned, lq, config);
        CHECK(a.visited == b.visited);
        CHECK(a.result_candidates == b.result_candidates);
    }
}

TEST_CASE("greedy walk can stall in a local minimum that beam search escapes") {
    // 1-d path with a gap: greedy from vertex 0 stops at the gap edge
    const auto base = path_points(12);
    const auto graph = build_nsw(base, 2, 50, 0);
    const Scorer scorer = Scorer::original(base, 1.0);
    PreparedQuery q;
    const float probe = 11.2f;
    q.raw = &probe;
    const auto path = greedy_route(graph, scorer, q);
    CHECK(path.front() == 0);
    CHECK(path.back() == 11);  // strictly improving walk reaches the end of the path
    for (size_t i = 1; i < path.size(); ++i)
        CHECK(score(scorer, path[i], q) > score(scorer, path[i - 1], q));
}
