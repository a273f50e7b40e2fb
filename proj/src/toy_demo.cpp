#include "annroute/toy_demo.hpp"

#include <random>

#include "annroute/dataset.hpp"
#include "annroute/oracle.hpp"
#include "annroute/search.hpp"
#include "annroute/train.hpp"

namespace annroute {

std::optional<ToyDemoResult> run_toy_demo(uint64_t base_seed, int max_attempts) {
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const uint64_t seed = base_seed + static_cast<uint64_t>(attempt);
        std::mt19937_64 rng(seed);
        std::normal_distribution<float> unit(0.0f, 1.0f);

        const int n = 33;
        RowMatrixF base(n, 2);
        for (int i = 0; i < n; ++i) {
            base(i, 0) = unit(rng);
            base(i, 1) = unit(rng);
        }
        const auto graph = build_nsw(base, 3, 40, 0);
        const auto reach = bfs_hops(graph, graph.entry_vertex, BfsDirection::Forward);

        const Scorer original = Scorer::original(base, 1.0);
        RowMatrixF probes(64, 2);
        for (Eigen::Index i = 0; i < probes.size(); ++i) probes.data()[i] = unit(rng);
        const auto probe_gt = exact_knn(base, probes, 1);
        int probe = -1;
        for (int i = 0; i < 64; ++i) {
            if (!reach.reachable(probe_gt.nn(i))) continue;
            PreparedQuery pq;
            pq.raw = probes.row(i).data();
            const auto route = greedy_route(graph, original, pq);
            if (route.back() != probe_gt.nn(i)) {
                probe = i;
                break;
            }
        }
        if (probe < 0) continue;

        VectorDataset data;
        data.base = base;
        data.dim = 2;
        data.train_queries.resize(400, 2);
        data.test_queries.resize(40, 2);
        for (Eigen::Index i = 0; i < data.train_queries.size(); ++i)
            data.train_queries.data()[i] = unit(rng);
        for (Eigen::Index i = 0; i < data.test_queries.size(); ++i)
            data.test_queries.data()[i] = unit(rng);

        const auto train_gt = exact_knn(base, data.train_queries, 1);
        const auto cache = precompute_cache(graph, train_gt, 5, 0);

        TrainConfig tconfig;
        tconfig.objective = Objective::Imitation;
        tconfig.dcs_budget = 12;
        tconfig.k = 1;
        tconfig.batch_size = 16;
        tconfig.total_steps = 800;
        tconfig.max_lr = 3e-3;
        tconfig.seed = seed;
        tconfig.eval_every = 200;
        ModelConfig mconfig;
        mconfig.input_dim = 2;
        mconfig.out_dim = 2;
        mconfig.conv_blocks = 0;  // plain two-layer perceptron
        mconfig.ffn_hidden = 128;
        mconfig.query_mode = QueryMode::Identity;

        const auto result = train_loop(data, graph, cache, tconfig, mconfig);
        const auto a_hat = normalized_adjacency(symmetrize(graph));
        const Eigen::MatrixXd reps = f_forward(result.model, a_hat, base);
        const Scorer learned = Scorer::learned(reps, 2);

        PreparedQuery pq;
        pq.raw = probes.row(probe).data();
        const auto original_route = greedy_route(graph, original, pq);
        PreparedQuery lq;
        lq.raw = pq.raw;
        lq.learned_rep = g_forward(result.model, pq.raw);
        const auto learned_route = greedy_route(graph, learned, lq);
        const uint32_t target = probe_gt.nn(probe);

        if (learned_route.back() == target && original_route.back() != target) {
            ToyDemoResult out;
            out.instance_seed = seed;
            out.base = base;
            out.probe = probes.row(probe);
            out.target = target;
            out.original_route = original_route;
            out.learned_route = learned_route;
            out.graph = graph;
            return out;
        }
    }
    return std::nullopt;
}

}  // namespace annroute
