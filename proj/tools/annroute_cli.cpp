// Command-line surface for the routing pipeline: dataset synthesis and
// ingestion, ground truth, graph construction, hop-cache precomputation,
// training, search, evaluation grids, and the 2-d toy demonstration.

#include <CLI11.hpp>

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "annroute/binary_io.hpp"
#include "annroute/dataset.hpp"
#include "annroute/eval.hpp"
#include "annroute/gcn_model.hpp"
#include "annroute/graph.hpp"
#include "annroute/oracle.hpp"
#include "annroute/pca.hpp"
#include "annroute/search.hpp"
#include "annroute/toy_demo.hpp"
#include "annroute/train.hpp"

using namespace annroute;

namespace {

// Flat key=value config support: `--config FILE` is expanded into
// `--key=value` tokens inserted right after the subcommand, so explicit
// flags (parsed last) override file values.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    size_t pos = SIZE_MAX, span = 0;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            pos = i;
            span = 2;
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            pos = i;
            span = 1;
            break;
        }
    }
    if (pos == SIZE_MAX) return args;
    args.erase(args.begin() + static_cast<long>(pos),
               args.begin() + static_cast<long>(pos + span));

    std::ifstream in(config_path);
    if (!in) throw FormatError("config file not readable: " + config_path);
    std::vector<std::string> expanded;
    std::string line;
    while (std::getline(in, line)) {
        const auto start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const auto eq = line.find('=', start);
        if (eq == std::string::npos)
            throw FormatError("config: expected key=value, got: " + line);
        std::string key = line.substr(start, eq - start);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        const auto vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        expanded.push_back("--" + key + "=" + value);
    }

    size_t insert_at = args.size();
    for (size_t i = 0; i < args.size(); ++i) {
        if (!args[i].empty() && args[i][0] != '-') {
            insert_at = i + 1;
            break;
        }
    }
    args.insert(args.begin() + static_cast<long>(insert_at), expanded.begin(), expanded.end());
    return args;
}

void require_inputs(std::initializer_list<std::string> paths) {
    for (const auto& path : paths) {
        if (!path.empty() && !std::filesystem::exists(path))
            throw FormatError("input file missing: " + path);
    }
}

ScorerMode parse_mode(const std::string& name) {
    if (name == "original") return ScorerMode::Original;
    if (name == "learned") return ScorerMode::Learned;
    if (name == "truncated") return ScorerMode::Truncated;
    throw CLI::ValidationError("--mode", "expected original|learned|truncated");
}

std::vector<double> parse_dcs_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    if (out.empty()) throw CLI::ValidationError("--dcs", "expected a comma-separated list");
    return out;
}

struct SynthArgs {
    int n = 1000, dim = 16, clusters = 8;
    uint64_t seed = 0;
    std::string out_prefix = "synth";
};

int run_synth(const SynthArgs& args) {
    const auto data = generate_synthetic(args.n, args.dim, args.clusters, args.seed);
    write_fvecs(args.out_prefix + ".base.fvecs", data.base);
    write_fvecs(args.out_prefix + ".train.fvecs", data.train_queries);
    write_fvecs(args.out_prefix + ".test.fvecs", data.test_queries);
    std::printf("synth: wrote %lld base / %lld train / %lld test vectors (dim %d) to %s.*\n",
                static_cast<long long>(data.base.rows()),
                static_cast<long long>(data.train_queries.rows()),
                static_cast<long long>(data.test_queries.rows()), data.dim,
                args.out_prefix.c_str());
    return 0;
}

struct IngestArgs {
    std::string base, train, test, out_prefix = "dataset";
};

int run_ingest(const IngestArgs& args) {
    require_inputs({args.base, args.train, args.test});
    VectorDataset data;
    data.base = load_fvecs(args.base);
    data.train_queries = load_fvecs(args.train);
    data.test_queries = load_fvecs(args.test);
    data.dim = static_cast<int>(data.base.cols());
    data.validate();
    write_fvecs(args.out_prefix + ".base.fvecs", data.base);
    write_fvecs(args.out_prefix + ".train.fvecs", data.train_queries);
    write_fvecs(args.out_prefix + ".test.fvecs", data.test_queries);
    std::printf("ingest: validated %lld base / %lld train / %lld test vectors (dim %d)\n",
                static_cast<long long>(data.base.rows()),
                static_cast<long long>(data.train_queries.rows()),
                static_cast<long long>(data.test_queries.rows()), data.dim);
    return 0;
}

struct GroundTruthArgs {
    std::string base, queries, out = "gt.ivecs";
    int r = 10;
};

int run_ground_truth(const GroundTruthArgs& args) {
    require_inputs({args.base, args.queries});
    const auto base = load_fvecs(args.base);
    const auto queries = load_fvecs(args.queries);
    const auto gt = exact_knn(base, queries, args.r);
    write_ivecs(args.out, gt.topk);
    std::printf("ground-truth: wrote top-%d ids for %lld queries to %s\n", args.r,
                static_cast<long long>(queries.rows()), args.out.c_str());
    return 0;
}

struct BuildGraphArgs {
    std::string base, out = "graph.nsw";
    uint32_t max_m = 16, ef_construction = 200;
    uint64_t seed = 0;
};

int run_build_graph(const BuildGraphArgs& args) {
    require_inputs({args.base});
    const auto base = load_fvecs(args.base);
    const auto graph = build_nsw(base, args.max_m, args.ef_construction, args.seed);
    save_graph(graph, args.out);
    size_t edges = 0;
    for (const auto& list : graph.adjacency) edges += list.size();
    std::printf("build-graph: %u vertices, %zu edges, max out-degree %u, entry %u -> %s\n",
                graph.num_vertices(), edges, args.max_m, graph.entry_vertex, args.out.c_str());
    return 0;
}

struct CacheArgs {
    std::string graph, train_gt, out = "hops.cache";
    uint32_t m = 5;
    int workers = 0;
};

int run_precompute_cache(const CacheArgs& args) {
    require_inputs({args.graph, args.train_gt});
    const auto graph = load_graph(args.graph);
    const auto gt_ids = load_ivecs(args.train_gt);
    GroundTruth gt;
    gt.topk = gt_ids;
    gt.R = static_cast<int>(gt_ids.cols());
    const auto cache = precompute_cache(graph, gt, args.m, args.workers);
    save_cache(cache, args.out);
    size_t cached_vertices = 0;
    for (const auto& entry : cache.entries) cached_vertices += entry.hops_to_target.size();
    std::printf("precompute-cache: %zu entries (%u excluded), %zu cached vertices, m=%u -> %s\n",
                cache.entries.size(), cache.excluded_queries, cached_vertices, args.m,
                args.out.c_str());
    return 0;
}

struct TrainArgs {
    std::string base, train, test, graph, cache;
    std::string model_out = "routing.model", metrics_out = "metrics.csv", reps_out;
    std::string objective = "imitation", query_mode = "identity";
    double dcs = 64.0, max_lr = 1e-3;
    int k = 4, batch = 32, conv_blocks = 3, conv_filters = 64, ffn_hidden = 256, dim = 0;
    long steps = 2000, eval_every = 200;
    uint64_t seed = 0;
};

int run_train(const TrainArgs& args) {
    require_inputs({args.base, args.train, args.test, args.graph, args.cache});
    VectorDataset data;
    data.base = load_fvecs(args.base);
    data.train_queries = load_fvecs(args.train);
    data.test_queries = load_fvecs(args.test);
    data.dim = static_cast<int>(data.base.cols());
    data.validate();
    const auto graph = load_graph(args.graph);
    const auto cache = load_cache(args.cache);

    TrainConfig tconfig;
    tconfig.objective = parse_objective(args.objective);
    tconfig.dcs_budget = args.dcs;
    tconfig.k = args.k;
    tconfig.batch_size = args.batch;
    tconfig.total_steps = args.steps;
    tconfig.max_lr = args.max_lr;
    tconfig.seed = args.seed;
    tconfig.eval_every = args.eval_every;

    ModelConfig mconfig;
    mconfig.input_dim = data.dim;
    mconfig.out_dim = args.dim > 0 ? args.dim : data.dim;
    mconfig.conv_blocks = args.conv_blocks;
    mconfig.conv_filters = args.conv_filters;
    mconfig.ffn_hidden = args.ffn_hidden;
    mconfig.query_mode =
        args.query_mode == "linear" ? QueryMode::Linear : QueryMode::Identity;

    const auto result = train_loop(data, graph, cache, tconfig, mconfig);
    save_model(result.model, args.model_out);
    write_metrics_csv(args.metrics_out, result.metrics);
    if (!args.reps_out.empty()) {
        VertexRepresentations reps;
        reps.reps = f_forward(result.model, normalized_adjacency(symmetrize(graph)), data.base);
        reps.model_fingerprint = model_fingerprint(result.model);
        save_representations(reps, args.reps_out);
    }
    std::printf("train: %s objective, %ld steps, best recall@1 %.4f at step %ld -> %s\n",
                objective_name(tconfig.objective), args.steps, result.best_recall,
                result.best_step, args.model_out.c_str());
    return 0;
}

struct SearchArgs {
    std::string base, queries, graph, model;
    std::string mode = "original";
    double dcs = 128.0, tau = 1.0;
    int k = 0, pca_dim = 0;
    uint64_t seed = 0;
    bool stochastic = false;
};

int run_search_cmd(const SearchArgs& args) {
    require_inputs({args.base, args.queries, args.graph, args.model});
    const auto base = load_fvecs(args.base);
    const auto queries = load_fvecs(args.queries);
    const auto graph = load_graph(args.graph);
    const ScorerMode mode = parse_mode(args.mode);
    const int dim = static_cast<int>(base.cols());

    SearchConfig config;
    config.dcs_budget = args.dcs;
    config.k = args.k;
    config.tau = args.tau;
    config.mode = mode;
    config.stochastic = args.stochastic;
    config.rng_seed = args.seed;

    RoutingModel model;
    Eigen::MatrixXd reps;
    PCAModel pca;
    RowMatrixF trunc_base, trunc_queries;
    SimilarityGraph trunc_graph;
    const SimilarityGraph* route_graph = &graph;
    Scorer scorer = Scorer::original(base, args.tau);
    if (mode == ScorerMode::Learned) {
        if (args.model.empty()) throw std::invalid_argument("learned mode requires --model");
        model = load_model(args.model);
        reps = f_forward(model, normalized_adjacency(symmetrize(graph)), base);
        scorer = Scorer::learned(reps, dim);
    } else if (mode == ScorerMode::Truncated) {
        if (args.pca_dim < 1) throw std::invalid_argument("truncated mode requires --pca-dim");
        pca = pca_fit(base, args.pca_dim);
        trunc_base = pca_transform(pca, base);
        trunc_queries = pca_transform(pca, queries);
        trunc_graph = build_nsw(trunc_base, graph.max_degree, 200, 0);
        route_graph = &trunc_graph;
        scorer = Scorer::truncated(trunc_base, args.tau, dim);
    }

    std::mt19937_64 rng(args.seed);
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        PreparedQuery pq;
        pq.raw = queries.row(q).data();
        if (mode == ScorerMode::Learned) pq.learned_rep = g_forward(model, pq.raw);
        if (mode == ScorerMode::Truncated) pq.truncated = trunc_queries.row(q);
        const auto traj = args.stochastic
                              ? stochastic_search(*route_graph, scorer, pq, config, rng)
                              : beam_search(*route_graph, scorer, pq, config);
        std::vector<uint32_t> answer;
        if (args.k > 0)
            answer = rerank(traj.result_candidates, pq.raw, base, args.k);
        else
            answer = traj.result_candidates;
        std::printf("%lld:", static_cast<long long>(q));
        for (uint32_t id : answer)
            std::printf(" %u=%.6f", id,
                        std::sqrt(squared_l2(base.row(id).data(), pq.raw, dim)));
        std::printf("\n");
    }
    return 0;
}

struct EvalArgs {
    std::string base, test, gt, graph, model;
    std::string report = "report.csv", format = "csv", curve_dir;
    std::string dcs_list = "128";
    std::string dataset_name = "dataset";
    int k = 8, pca_dim = 0;
    uint32_t max_m = 16, ef_construction = 200;
    double tau = 1.0;
};

int run_eval(const EvalArgs& args) {
    require_inputs({args.base, args.test, args.gt, args.graph, args.model});
    VectorDataset data;
    data.base = load_fvecs(args.base);
    data.test_queries = load_fvecs(args.test);
    data.train_queries.resize(0, data.base.cols());
    data.dim = static_cast<int>(data.base.cols());
    const auto graph = load_graph(args.graph);
    const auto gt_ids = load_ivecs(args.gt);
    GroundTruth gt;
    gt.topk = gt_ids;
    gt.R = static_cast<int>(gt_ids.cols());

    RoutingModel model;
    const bool has_model = !args.model.empty();
    if (has_model) model = load_model(args.model);

    ComparisonContext ctx;
    ctx.data = &data;
    ctx.graph = &graph;
    ctx.gt = &gt;
    ctx.max_degree = args.max_m;
    ctx.ef_construction = args.ef_construction;
    ctx.tau = args.tau;
    ctx.recall_rs = gt.R >= 10 ? std::vector<int>{1, 10} : std::vector<int>{1};
    ctx.dataset_name = args.dataset_name;
    {
        std::ostringstream echo;
        echo << "dcs=" << args.dcs_list << " k=" << args.k << " pca_dim=" << args.pca_dim
             << " max_m=" << args.max_m << " ef=" << args.ef_construction << " tau=" << args.tau
             << " model=" << (has_model ? args.model : "none");
        ctx.config_echo = echo.str();
    }

    std::vector<ComparisonRowSpec> rows;
    for (double dcs : parse_dcs_list(args.dcs_list)) {
        rows.push_back({"original", ScorerMode::Original, dcs, 0, 0, nullptr});
        if (has_model)
            rows.push_back({"learned", ScorerMode::Learned, dcs, args.k, 0, &model});
        if (args.pca_dim > 0)
            rows.push_back({"pca", ScorerMode::Truncated, dcs, args.k, args.pca_dim, nullptr});
    }

    const auto report = run_comparison(ctx, rows);
    const ReportFormat format = args.format == "json" ? ReportFormat::Json : ReportFormat::Csv;
    write_report(report, args.report, format);

    for (const auto& row : report.rows)
        std::printf("%-10s dcs=%-6g k=%-3d d=%-4d rdcs=%-6g recall@1=%.4f mean_dcs=%.2f\n",
                    row.scorer.c_str(), row.dcs, row.k, row.d, row.rdcs, row.recall_at(1),
                    row.mean_dcs_used);

    if (!args.curve_dir.empty()) {
        std::filesystem::create_directories(args.curve_dir);
        const Scorer scorer = Scorer::original(data.base, args.tau);
        for (double dcs : parse_dcs_list(args.dcs_list)) {
            SearchConfig config;
            config.dcs_budget = dcs;
            config.k = 0;
            std::vector<SearchTrajectory> trajectories;
            std::vector<uint32_t> targets;
            int max_len = 0;
            for (Eigen::Index q = 0; q < data.test_queries.rows(); ++q) {
                PreparedQuery pq;
                pq.raw = data.test_queries.row(q).data();
                trajectories.push_back(beam_search(graph, scorer, pq, config));
                targets.push_back(gt.nn(q));
                max_len = std::max(max_len, static_cast<int>(trajectories.back().steps.size()));
            }
            const auto curve = routing_success_vs_hops(trajectories, targets, max_len);
            std::ofstream out(args.curve_dir + "/curve_original_dcs" +
                              std::to_string(static_cast<long>(dcs)) + ".csv");
            out << "hops,success_expanded,success_visited\n";
            char buf[96];
            for (const auto& point : curve) {
                std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", point.hops,
                              point.success_expanded, point.success_visited);
                out << buf;
            }
        }
    }
    return 0;
}

struct DemoArgs {
    uint64_t seed = 1;
    int max_attempts = 20;
};

void print_route(const char* label, const std::vector<uint32_t>& route, uint32_t target) {
    std::printf("%s route:", label);
    for (uint32_t v : route) std::printf(" %u", v);
    std::printf("  -> %s\n", route.back() == target ? "reached the true neighbor"
                                                    : "stuck in a local minimum");
}

int run_demo_toy(const DemoArgs& args) {
    const auto result = run_toy_demo(args.seed, args.max_attempts);
    if (!result) {
        std::fprintf(stderr,
                     "demo-toy: no attempt produced a local minimum the learned routing escapes\n");
        throw std::runtime_error("demo-toy failed to find a demonstrable instance");
    }
    std::printf("demo-toy: instance seed %llu, probe query (%.3f, %.3f), true neighbor %u\n",
                static_cast<unsigned long long>(result->instance_seed), result->probe(0),
                result->probe(1), result->target);
    print_route("original ", result->original_route, result->target);
    print_route("learned  ", result->learned_route, result->target);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"budgeted nearest-neighbor search over NSW graphs with learned routing"};
    app.require_subcommand(1);

    const char* config_help = "flat key=value config file; explicit flags override";
    std::string config_dummy;

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a clustered synthetic dataset");
    synth->option_defaults()->take_last();
    synth->add_option("--config", config_dummy, config_help);
    synth->add_option("--n", synth_args.n, "total points (split 8:1:1)")->capture_default_str();
    synth->add_option("--dim", synth_args.dim, "dimensionality")->capture_default_str();
    synth->add_option("--clusters", synth_args.clusters, "cluster count")->capture_default_str();
    synth->add_option("--seed", synth_args.seed, "generator seed")->capture_default_str();
    synth->add_option("--out-prefix", synth_args.out_prefix, "output file prefix")
        ->capture_default_str();

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "validate and normalize fvecs inputs");
    ingest->option_defaults()->take_last();
    ingest->add_option("--config", config_dummy, config_help);
    ingest->add_option("--base", ingest_args.base, "base vectors (fvecs)")->required();
    ingest->add_option("--train", ingest_args.train, "train queries (fvecs)")->required();
    ingest->add_option("--test", ingest_args.test, "test queries (fvecs)")->required();
    ingest->add_option("--out-prefix", ingest_args.out_prefix, "output file prefix")
        ->capture_default_str();

    GroundTruthArgs gt_args;
    auto* gt_cmd = app.add_subcommand("ground-truth", "exhaustive nearest neighbors");
    gt_cmd->option_defaults()->take_last();
    gt_cmd->add_option("--config", config_dummy, config_help);
    gt_cmd->add_option("--base", gt_args.base, "base vectors (fvecs)")->required();
    gt_cmd->add_option("--queries", gt_args.queries, "query vectors (fvecs)")->required();
    gt_cmd->add_option("--r", gt_args.r, "neighbors per query")->capture_default_str();
    gt_cmd->add_option("--out", gt_args.out, "output ivecs path")->capture_default_str();

    BuildGraphArgs graph_args;
    auto* graph_cmd = app.add_subcommand("build-graph", "construct the NSW graph");
    graph_cmd->option_defaults()->take_last();
    graph_cmd->add_option("--config", config_dummy, config_help);
    graph_cmd->add_option("--base", graph_args.base, "base vectors (fvecs)")->required();
    graph_cmd->add_option("--max-m", graph_args.max_m, "maximal out-degree")->capture_default_str();
    graph_cmd->add_option("--ef-construction", graph_args.ef_construction, "construction beam")
        ->capture_default_str();
    graph_cmd->add_option("--seed", graph_args.seed, "construction seed")->capture_default_str();
    graph_cmd->add_option("--out", graph_args.out, "output graph path")->capture_default_str();

    CacheArgs cache_args;
    auto* cache_cmd = app.add_subcommand("precompute-cache", "hop distances for training queries");
    cache_cmd->option_defaults()->take_last();
    cache_cmd->add_option("--config", config_dummy, config_help);
    cache_cmd->add_option("--graph", cache_args.graph, "graph file")->required();
    cache_cmd->add_option("--train-gt", cache_args.train_gt, "train-query ground truth (ivecs)")
        ->required();
    cache_cmd->add_option("--m-slack", cache_args.m, "near-optimal hop slack")
        ->capture_default_str();
    cache_cmd->add_option("--workers", cache_args.workers, "worker threads (0 = all)")
        ->capture_default_str();
    cache_cmd->add_option("--out", cache_args.out, "output cache path")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "learn routing representations");
    train_cmd->option_defaults()->take_last();
    train_cmd->add_option("--config", config_dummy, config_help);
    train_cmd->add_option("--base", train_args.base, "base vectors (fvecs)")->required();
    train_cmd->add_option("--train", train_args.train, "train queries (fvecs)")->required();
    train_cmd->add_option("--test", train_args.test, "validation queries (fvecs)")->required();
    train_cmd->add_option("--graph", train_args.graph, "graph file")->required();
    train_cmd->add_option("--cache", train_args.cache, "hop cache file")->required();
    train_cmd->add_option("--objective", train_args.objective,
                          "imitation|teacher-forcing|topk-only")
        ->capture_default_str();
    train_cmd->add_option("--dcs", train_args.dcs, "distance-computation budget")
        ->capture_default_str();
    train_cmd->add_option("--k", train_args.k, "rerank candidates")->capture_default_str();
    train_cmd->add_option("--batch", train_args.batch, "batch size")->capture_default_str();
    train_cmd->add_option("--steps", train_args.steps, "training steps")->capture_default_str();
    train_cmd->add_option("--max-lr", train_args.max_lr, "one-cycle peak learning rate")
        ->capture_default_str();
    train_cmd->add_option("--seed", train_args.seed, "training seed")->capture_default_str();
    train_cmd->add_option("--eval-every", train_args.eval_every, "validation cadence")
        ->capture_default_str();
    train_cmd->add_option("--dim", train_args.dim, "representation width d (0 = data dim)")
        ->capture_default_str();
    train_cmd->add_option("--query-mode", train_args.query_mode, "identity|linear")
        ->capture_default_str();
    train_cmd->add_option("--conv-blocks", train_args.conv_blocks, "conv block count")
        ->capture_default_str();
    train_cmd->add_option("--conv-filters", train_args.conv_filters, "conv width")
        ->capture_default_str();
    train_cmd->add_option("--ffn-hidden", train_args.ffn_hidden, "FFN hidden width")
        ->capture_default_str();
    train_cmd->add_option("--model-out", train_args.model_out, "output model path")
        ->capture_default_str();
    train_cmd->add_option("--metrics-out", train_args.metrics_out, "metrics csv path")
        ->capture_default_str();
    train_cmd->add_option("--reps-out", train_args.reps_out,
                          "optional precomputed vertex representations");

    SearchArgs search_args;
    auto* search_cmd = app.add_subcommand("search", "answer queries from a file");
    search_cmd->option_defaults()->take_last();
    search_cmd->add_option("--config", config_dummy, config_help);
    search_cmd->add_option("--base", search_args.base, "base vectors (fvecs)")->required();
    search_cmd->add_option("--queries", search_args.queries, "query vectors (fvecs)")->required();
    search_cmd->add_option("--graph", search_args.graph, "graph file")->required();
    search_cmd->add_option("--mode", search_args.mode, "original|learned|truncated")
        ->capture_default_str();
    search_cmd->add_option("--model", search_args.model, "routing model (learned mode)");
    search_cmd->add_option("--pca-dim", search_args.pca_dim, "truncated routing width")
        ->capture_default_str();
    search_cmd->add_option("--dcs", search_args.dcs, "distance-computation budget")
        ->capture_default_str();
    search_cmd->add_option("--k", search_args.k, "rerank candidates (0 = none)")
        ->capture_default_str();
    search_cmd->add_option("--tau", search_args.tau, "softmax temperature")->capture_default_str();
    search_cmd->add_option("--seed", search_args.seed, "sampling seed")->capture_default_str();
    search_cmd->add_flag("--stochastic", search_args.stochastic, "sample expansions");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "run the comparison grid");
    eval_cmd->option_defaults()->take_last();
    eval_cmd->add_option("--config", config_dummy, config_help);
    eval_cmd->add_option("--base", eval_args.base, "base vectors (fvecs)")->required();
    eval_cmd->add_option("--test", eval_args.test, "test queries (fvecs)")->required();
    eval_cmd->add_option("--gt", eval_args.gt, "test ground truth (ivecs)")->required();
    eval_cmd->add_option("--graph", eval_args.graph, "graph file")->required();
    eval_cmd->add_option("--model", eval_args.model, "routing model for learned rows");
    eval_cmd->add_option("--dcs", eval_args.dcs_list, "comma-separated budgets")
        ->capture_default_str();
    eval_cmd->add_option("--k", eval_args.k, "rerank candidates for learned/pca rows")
        ->capture_default_str();
    eval_cmd->add_option("--pca-dim", eval_args.pca_dim, "add PCA rows at this width")
        ->capture_default_str();
    eval_cmd->add_option("--max-m", eval_args.max_m, "degree bound for PCA graphs")
        ->capture_default_str();
    eval_cmd->add_option("--ef-construction", eval_args.ef_construction,
                         "construction beam for PCA graphs")
        ->capture_default_str();
    eval_cmd->add_option("--tau", eval_args.tau, "softmax temperature")->capture_default_str();
    eval_cmd->add_option("--dataset-name", eval_args.dataset_name, "label in the report")
        ->capture_default_str();
    eval_cmd->add_option("--report", eval_args.report, "report output path")
        ->capture_default_str();
    eval_cmd->add_option("--format", eval_args.format, "csv|json")->capture_default_str();
    eval_cmd->add_option("--curve-dir", eval_args.curve_dir,
                         "emit routing success curves into this directory");

    DemoArgs demo_args;
    auto* demo = app.add_subcommand("demo-toy", "2-d local-minimum escape demonstration");
    demo->option_defaults()->take_last();
    demo->add_option("--config", config_dummy, config_help);
    demo->add_option("--seed", demo_args.seed, "base instance seed")->capture_default_str();
    demo->add_option("--max-attempts", demo_args.max_attempts, "instance seeds to try")
        ->capture_default_str();

    std::vector<std::string> args;
    try {
        args = expand_config_args(argc, argv);
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args);
        if (ingest->parsed()) return run_ingest(ingest_args);
        if (gt_cmd->parsed()) return run_ground_truth(gt_args);
        if (graph_cmd->parsed()) return run_build_graph(graph_args);
        if (cache_cmd->parsed()) return run_precompute_cache(cache_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (search_cmd->parsed()) return run_search_cmd(search_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (demo->parsed()) return run_demo_toy(demo_args);
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 3;
    }
    return 0;
}
