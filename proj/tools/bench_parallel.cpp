// Times the OpenMP kernels against their serial references on synthetic
// data: exact ground truth, hop-cache precomputation, the sparse propagation
// product, and batched query evaluation.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "annroute/dataset.hpp"
#include "annroute/gcn_model.hpp"
#include "annroute/graph.hpp"
#include "annroute/oracle.hpp"
#include "annroute/search.hpp"

using namespace annroute;

namespace {


template <typename F>
double timed(F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-28s serial %8.3fs   parallel %8.3fs   speedup %.2fx\n", name, serial, parallel,
                serial / parallel);
}

size_t search_batch(const VectorDataset& data, const SimilarityGraph& graph, bool parallel) {
    const Scorer scorer = Scorer::original(data.base, 1.0);
    SearchConfig config;
    config.dcs_budget = 128;
    config.k = 0;
    const Eigen::Index q_count = data.test_queries.rows();
    std::vector<uint32_t> answers(static_cast<size_t>(q_count));
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
    for (Eigen::Index q = 0; q < q_count; ++q) {
        PreparedQuery pq;
        pq.raw = data.test_queries.row(q).data();
        const auto traj = beam_search(graph, scorer, pq, config);
        answers[static_cast<size_t>(q)] = traj.result_candidates.front();
    }
    size_t sum = 0;
    for (uint32_t a : answers) sum += a;
    return sum;
}

}  // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 8000;
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#endif
    const auto data = generate_synthetic(n, 32, 32, 1);
    std::printf("dataset: %lld base, %lld train, %lld test, dim 32\n",
                static_cast<long long>(data.base.rows()),
                static_cast<long long>(data.train_queries.rows()),
                static_cast<long long>(data.test_queries.rows()));

    const auto graph = build_nsw(data.base, 16, 200, 0);

    GroundTruth gt_serial, gt_parallel;
    const double knn_serial =
        timed([&] { gt_serial = exact_knn_serial(data.base, data.train_queries, 10); });
    const double knn_parallel =
        timed([&] { gt_parallel = exact_knn(data.base, data.train_queries, 10); });
    report("exact ground truth", knn_serial, knn_parallel);
    if (gt_serial.topk != gt_parallel.topk) {
        std::fprintf(stderr, "mismatch: parallel ground truth differs\n");
        return 1;
    }

    GroundTruth gt1;
    gt1.R = 1;
    gt1.topk = gt_parallel.topk.leftCols(1);
    HopCache cache_serial, cache_parallel;
    const double cache_1 = timed([&] { cache_serial = precompute_cache(graph, gt1, 5, 1); });
    const double cache_n = timed([&] { cache_parallel = precompute_cache(graph, gt1, 5, 0); });
    report("hop-cache precompute", cache_1, cache_n);
    for (size_t i = 0; i < cache_serial.entries.size(); ++i) {
        if (cache_serial.entries[i].hops_to_target != cache_parallel.entries[i].hops_to_target) {
            std::fprintf(stderr, "mismatch: parallel hop cache differs\n");
            return 1;
        }
    }

    const auto a_hat = normalized_adjacency(symmetrize(graph));
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(data.base.rows(), 64);
    Eigen::MatrixXd y_serial, y_parallel;
    const double spmm_serial = timed([&] {
        for (int r = 0; r < 20; ++r) y_serial = a_hat.multiply_serial(x);
    });
    const double spmm_parallel = timed([&] {
        for (int r = 0; r < 20; ++r) y_parallel = a_hat.multiply(x);
    });
    report("normalized propagation x20", spmm_serial, spmm_parallel);
    if (y_serial != y_parallel) {
        std::fprintf(stderr, "mismatch: parallel propagation differs\n");
        return 1;
    }

    size_t sum_serial = 0, sum_parallel = 0;
    const double search_serial = timed([&] { sum_serial = search_batch(data, graph, false); });
    const double search_parallel = timed([&] { sum_parallel = search_batch(data, graph, true); });
    report("query batch (dcs 128)", search_serial, search_parallel);
    if (sum_serial != sum_parallel) {
        std::fprintf(stderr, "mismatch: parallel search batch differs\n");
        return 1;
    }

    std::printf("all parallel kernels matched their serial references\n");
    return 0;
}
