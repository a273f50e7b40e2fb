#include "annroute/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "annroute/binary_io.hpp"

namespace annroute {

double recall_at_R(const std::vector<std::vector<uint32_t>>& results, const GroundTruth& gt,
                   int R) {
    if (results.size() != static_cast<size_t>(gt.num_queries()))
        throw std::invalid_argument("recall_at_R: result count disagrees with ground truth");
    if (results.empty()) return 0.0;
    size_t hits = 0;
    for (size_t q = 0; q < results.size(); ++q) {
        const uint32_t target = gt.nn(static_cast<Eigen::Index>(q));
        const auto& list = results[q];
        const size_t limit = std::min<size_t>(list.size(), static_cast<size_t>(R));
        for (size_t i = 0; i < limit; ++i) {
            if (list[i] == target) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<RoutingCurvePoint> routing_success_vs_hops(
    const std::vector<SearchTrajectory>& trajectories, const std::vector<uint32_t>& targets,
    int max_hops) {
    if (trajectories.size() != targets.size())
        throw std::invalid_argument("routing curve: trajectory/target count mismatch");
    const int unseen = max_hops + 1;
    std::vector<int> first_expanded(trajectories.size(), unseen);
    std::vector<int> first_visited(trajectories.size(), unseen);
    for (size_t t = 0; t < trajectories.size(); ++t) {
        const auto& traj = trajectories[t];
        for (size_t s = 0; s < traj.steps.size(); ++s) {
            if (traj.steps[s].expanded == targets[t]) {
                first_expanded[t] = static_cast<int>(s) + 1;
                break;
            }
        }
        if (const auto idx = traj.visited_index(targets[t]))
            first_visited[t] = traj.visited_step[*idx];
    }

    std::vector<RoutingCurvePoint> curve(static_cast<size_t>(max_hops) + 1);
    const double total = trajectories.empty() ? 1.0 : static_cast<double>(trajectories.size());
    for (int h = 0; h <= max_hops; ++h) {
        size_t expanded = 0, visited = 0;
        for (size_t t = 0; t < trajectories.size(); ++t) {
            if (first_expanded[t] <= h) ++expanded;
            if (first_visited[t] <= h) ++visited;
        }
        curve[static_cast<size_t>(h)] = {h, expanded / total, visited / total};
    }
    return curve;
}

double EvalRow::recall_at(int R) const {
    for (const auto& [r, value] : recall)
        if (r == R) return value;
    throw std::out_of_range("recall_at: R not recorded");
}

namespace {

struct TruncatedRoute {
    PCAModel pca;
    RowMatrixF base;
    SimilarityGraph graph;
};

struct RowOutcome {
    std::vector<std::vector<uint32_t>> results;
    double mean_hops = 0.0;
    double mean_dcs_used = 0.0;
};

RowOutcome evaluate_row(const ComparisonContext& ctx, const SimilarityGraph& route_graph,
                        const Scorer& scorer, const ComparisonRowSpec& spec,
                        const RoutingModel* model, const PCAModel* pca) {
    const auto& queries = ctx.data->test_queries;
    const Eigen::Index q_count = queries.rows();
    const int max_r = ctx.recall_rs.empty() ? 1 : *std::max_element(ctx.recall_rs.begin(),
                                                                    ctx.recall_rs.end());
    SearchConfig config;
    config.dcs_budget = spec.dcs;
    config.k = spec.k;
    config.tau = ctx.tau;
    config.mode = spec.mode;

    RowOutcome out;
    out.results.resize(static_cast<size_t>(q_count));
    std::vector<double> hops(static_cast<size_t>(q_count), 0.0);
    std::vector<double> used(static_cast<size_t>(q_count), 0.0);

    RowMatrixF truncated_queries;
    if (spec.mode == ScorerMode::Truncated) truncated_queries = pca_transform(*pca, queries);

#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index q = 0; q < q_count; ++q) {
        PreparedQuery pq;
        pq.raw = queries.row(q).data();
        if (spec.mode == ScorerMode::Learned) pq.learned_rep = g_forward(*model, pq.raw);
        if (spec.mode == ScorerMode::Truncated) pq.truncated = truncated_queries.row(q);

        const SearchTrajectory traj = beam_search(route_graph, scorer, pq, config);
        std::vector<uint32_t> ordered;
        double rerank_cost = 0.0;
        if (spec.k > 0) {
            ordered = rerank(traj.result_candidates, pq.raw, ctx.data->base, spec.k);
            rerank_cost = static_cast<double>(traj.result_candidates.size());
        } else {
            ordered = select_topk_visited(traj.visited, traj.visited_score, max_r, false, nullptr);
        }
        out.results[static_cast<size_t>(q)] = std::move(ordered);
        hops[static_cast<size_t>(q)] = static_cast<double>(traj.steps.size());
        used[static_cast<size_t>(q)] = traj.dcs_used + rerank_cost;
    }

    for (Eigen::Index q = 0; q < q_count; ++q) {
        out.mean_hops += hops[static_cast<size_t>(q)];
        out.mean_dcs_used += used[static_cast<size_t>(q)];
    }
    if (q_count > 0) {
        out.mean_hops /= static_cast<double>(q_count);
        out.mean_dcs_used /= static_cast<double>(q_count);
    }
    return out;
}

}  // namespace

EvalReport run_comparison(const ComparisonContext& ctx, const std::vector<ComparisonRowSpec>& rows) {
    if (!ctx.data || !ctx.graph || !ctx.gt)
        throw std::invalid_argument("run_comparison: incomplete context");
    EvalReport report;
    report.recall_rs = ctx.recall_rs;
    report.config_echo = ctx.config_echo;

    const int full_dim = ctx.data->dim;
    std::map<int, TruncatedRoute> truncated_cache;
    Eigen::MatrixXd learned_reps;
    const RoutingModel* reps_model = nullptr;

    for (const auto& spec : rows) {
        const int d = spec.d > 0 ? spec.d : full_dim;
        EvalRow row;
        row.dataset = ctx.dataset_name;
        row.dcs = spec.dcs;
        row.scorer = spec.label.empty() ? scorer_mode_name(spec.mode) : spec.label;
        row.k = spec.k;
        row.d = d;
        row.rdcs = routing_budget(spec.dcs, spec.k, d, full_dim);

        RowOutcome outcome;
        switch (spec.mode) {
            case ScorerMode::Original: {
                const Scorer scorer = Scorer::original(ctx.data->base, ctx.tau);
                outcome = evaluate_row(ctx, *ctx.graph, scorer, spec, nullptr, nullptr);
                break;
            }
            case ScorerMode::Learned: {
                if (!spec.model)
                    throw std::invalid_argument("run_comparison: learned row without model");
                if (reps_model != spec.model) {
                    const CsrMatrix a_hat = normalized_adjacency(symmetrize(*ctx.graph));
                    learned_reps = f_forward(*spec.model, a_hat, ctx.data->base);
                    reps_model = spec.model;
                }
                const Scorer scorer = Scorer::learned(learned_reps, full_dim);
                outcome = evaluate_row(ctx, *ctx.graph, scorer, spec, spec.model, nullptr);
                break;
            }
            case ScorerMode::Truncated: {
                auto it = truncated_cache.find(d);
                if (it == truncated_cache.end()) {
                    TruncatedRoute route;
                    route.pca = pca_fit(ctx.data->base, d);
                    route.base = pca_transform(route.pca, ctx.data->base);
                    route.graph = build_nsw(route.base, ctx.max_degree, ctx.ef_construction, 0);
                    it = truncated_cache.emplace(d, std::move(route)).first;
                }
                const Scorer scorer = Scorer::truncated(it->second.base, ctx.tau, full_dim);
                outcome = evaluate_row(ctx, it->second.graph, scorer, spec, nullptr,
                                       &it->second.pca);
                break;
            }
        }

        for (int r : ctx.recall_rs)
            row.recall.emplace_back(r, recall_at_R(outcome.results, *ctx.gt, r));
        row.mean_hops = outcome.mean_hops;
        row.mean_dcs_used = outcome.mean_dcs_used;
        report.rows.push_back(std::move(row));
    }
    return report;
}

void write_report(const EvalReport& report, const std::string& path, ReportFormat format) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("report file not writable: " + path);
    if (format == ReportFormat::Csv) {
        out << "# eval-report v" << report.format_version << "\n";
        if (!report.config_echo.empty()) out << "# config: " << report.config_echo << "\n";
        out << "dataset,dcs,scorer,k,d,rdcs";
        for (int r : report.recall_rs) out << ",recall_at_" << r;
        out << ",mean_hops,mean_dcs_used\n";
        char buf[128];
        for (const auto& row : report.rows) {
            out << row.dataset << ',';
            std::snprintf(buf, sizeof(buf), "%.6g,", row.dcs);
            out << buf << row.scorer << ',' << row.k << ',' << row.d << ',';
            std::snprintf(buf, sizeof(buf), "%.6g", row.rdcs);
            out << buf;
            for (const auto& [r, value] : row.recall) {
                (void)r;
                std::snprintf(buf, sizeof(buf), ",%.6f", value);
                out << buf;
            }
            std::snprintf(buf, sizeof(buf), ",%.4f,%.6f\n", row.mean_hops, row.mean_dcs_used);
            out << buf;
        }
        return;
    }

    nlohmann::json j;
    j["format_version"] = report.format_version;
    j["config"] = report.config_echo;
    j["recall_rs"] = report.recall_rs;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json jr;
        jr["dataset"] = row.dataset;
        jr["dcs"] = row.dcs;
        jr["scorer"] = row.scorer;
        jr["k"] = row.k;
        jr["d"] = row.d;
        jr["rdcs"] = row.rdcs;
        nlohmann::json recalls = nlohmann::json::object();
        for (const auto& [r, value] : row.recall) recalls[std::to_string(r)] = value;
        jr["recall"] = recalls;
        jr["mean_hops"] = row.mean_hops;
        jr["mean_dcs_used"] = row.mean_dcs_used;
        j["rows"].push_back(std::move(jr));
    }
    out << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("report file not readable: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report: invalid json: ") + e.what());
    }
    EvalReport report;
    report.format_version = j.at("format_version").get<int>();
    report.config_echo = j.at("config").get<std::string>();
    report.recall_rs = j.at("recall_rs").get<std::vector<int>>();
    for (const auto& jr : j.at("rows")) {
        EvalRow row;
        row.dataset = jr.at("dataset").get<std::string>();
        row.dcs = jr.at("dcs").get<double>();
        row.scorer = jr.at("scorer").get<std::string>();
        row.k = jr.at("k").get<int>();
        row.d = jr.at("d").get<int>();
        row.rdcs = jr.at("rdcs").get<double>();
        for (int r : report.recall_rs)
            row.recall.emplace_back(r, jr.at("recall").at(std::to_string(r)).get<double>());
        row.mean_hops = jr.at("mean_hops").get<double>();
        row.mean_dcs_used = jr.at("mean_dcs_used").get<double>();
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace annroute
