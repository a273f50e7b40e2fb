#pragma once

#include <string>
#include <vector>

#include "annroute/dataset.hpp"
#include "annroute/gcn_model.hpp"
#include "annroute/graph.hpp"
#include "annroute/pca.hpp"
#include "annroute/search.hpp"

namespace annroute {

/// Fraction of queries whose true nearest neighbor appears within the first
/// R entries of its ordered result list.
double recall_at_R(const std::vector<std::vector<uint32_t>>& results, const GroundTruth& gt,
                   int R);

struct RoutingCurvePoint {
    int hops = 0;
    double success_expanded = 0.0;  // target was one of the first h expansions
    double success_visited = 0.0;   // target was scored within the first h expansions
};

/// Cumulative success rate as a function of expansion count. Both readings of
/// "found" are reported: expanded and merely visited.
std::vector<RoutingCurvePoint> routing_success_vs_hops(
    const std::vector<SearchTrajectory>& trajectories, const std::vector<uint32_t>& targets,
    int max_hops);

struct EvalRow {
    std::string dataset;
    double dcs = 0.0;
    std::string scorer;
    int k = 0;
    int d = 0;
    double rdcs = 0.0;
    std::vector<std::pair<int, double>> recall;  // (R, Recall@R), R ascending
    double mean_hops = 0.0;
    double mean_dcs_used = 0.0;

    double recall_at(int R) const;
};

struct EvalReport {
    int format_version = 1;
    std::string config_echo;
    std::vector<int> recall_rs;
    std::vector<EvalRow> rows;
};

struct ComparisonRowSpec {
    std::string label;
    ScorerMode mode = ScorerMode::Original;
    double dcs = 128.0;
    int k = 0;
    int d = 0;                            // routing dim; 0 means full D
    const RoutingModel* model = nullptr;  // required for Learned rows
};

struct ComparisonContext {
    const VectorDataset* data = nullptr;
    const SimilarityGraph* graph = nullptr;  // graph over the original vectors
    const GroundTruth* gt = nullptr;         // test-query ground truth
    uint32_t max_degree = 16;
    uint32_t ef_construction = 200;
    double tau = 1.0;
    std::vector<int> recall_rs = {1, 10};
    std::string dataset_name = "dataset";
    std::string config_echo;
};

/// Runs deterministic search plus rerank over all test queries for every row.
/// Truncated rows fit PCA on the base set and route on a graph rebuilt over
/// the truncated vectors (memoized per dimension); reranking always uses the
/// original vectors. Row order and content are deterministic.
EvalReport run_comparison(const ComparisonContext& ctx, const std::vector<ComparisonRowSpec>& rows);

enum class ReportFormat { Csv, Json };
void write_report(const EvalReport& report, const std::string& path, ReportFormat format);
EvalReport read_report_json(const std::string& path);

}  // namespace annroute
