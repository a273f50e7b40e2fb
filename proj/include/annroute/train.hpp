#pragma once

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "annroute/gcn_model.hpp"
#include "annroute/graph.hpp"
#include "annroute/oracle.hpp"
#include "annroute/search.hpp"

namespace annroute {

enum class Objective { Imitation, TeacherForcing, TopkOnly };

const char* objective_name(Objective objective);
Objective parse_objective(const std::string& name);

struct TrainConfig {
    Objective objective = Objective::Imitation;
    double dcs_budget = 64.0;
    int k = 4;
    int batch_size = 32;
    long total_steps = 2000;
    double max_lr = 1e-3;
    uint64_t seed = 0;
    long eval_every = 200;

    void validate() const;
};

struct LossBreakdown {
    double routing_term = 0.0;  // mean -log P(next expansion lands in the reference set)
    double topk_term = 0.0;     // mean -log P(target survives the top-k draw)
    int skipped_steps = 0;      // heap states whose reference set was empty
    int excluded_queries = 0;   // trajectories that never visited the target
    int routing_steps = 0;
    int topk_trajectories = 0;

    double total() const { return routing_term + topk_term; }
};

using ScoreFn = std::function<double(uint32_t)>;
using ScoreGradFn = std::function<void(uint32_t, double)>;

struct RoutingLossResult {
    double total = 0.0;
    int counted = 0;
    int skipped = 0;
};

/// Sum over trajectory steps of -log of the softmax mass the heap assigns to
/// the reference set. Steps with an empty reference set are skipped and
/// counted. Gradients w.r.t. every heap-member score go through `grad`.
RoutingLossResult routing_loss(const SearchTrajectory& trajectory, const HopCacheEntry& entry,
                               const ScoreFn& score, const ScoreGradFn& grad);

/// Draws the k-1 competitor vertices for the top-k term: samples without
/// replacement from the softmax over visited \ {target}.
std::vector<uint32_t> sample_topk_exclusions(std::span<const uint32_t> visited, uint32_t target,
                                             int k, const ScoreFn& score, std::mt19937_64& rng);

/// -log P(target | visited minus the excluded competitors). Exposed with the
/// exclusion set frozen so gradient checks can hold the sampling fixed.
double topk_loss_given(std::span<const uint32_t> visited, uint32_t target,
                       std::span<const uint32_t> excluded, const ScoreFn& score,
                       const ScoreGradFn& grad);

/// One-sample estimate of the top-k inclusion term; nullopt when the target
/// was never visited (the trajectory is skipped and counted upstream).
std::optional<double> topk_loss(std::span<const uint32_t> visited, uint32_t target, int k,
                                const ScoreFn& score, const ScoreGradFn& grad,
                                std::mt19937_64& rng);

struct CollectedTrajectory {
    uint32_t query_index = 0;  // row in train_queries
    SearchTrajectory trajectory;
};

/// Stochastic search under the current representations; one trajectory per
/// requested query. Parallel over the batch, deterministic per seed.
std::vector<CollectedTrajectory> collect_imitation_batch(
    const SimilarityGraph& graph, const Eigen::MatrixXd& reps, const RoutingModel& model,
    const RowMatrixF& train_queries, std::span<const uint32_t> query_ids,
    const TrainConfig& config, uint64_t batch_seed);

/// Oracle-driven walks: each expansion is drawn uniformly from the reference
/// set of the current heap, independent of model parameters. Terminates when
/// the target is expanded or the budget runs out.
std::vector<CollectedTrajectory> collect_teacher_batch(const SimilarityGraph& graph,
                                                       const HopCache& cache,
                                                       std::span<const uint32_t> query_ids,
                                                       const TrainConfig& config, int routing_dim,
                                                       int data_dim, uint64_t batch_seed);

struct MetricsRow {
    long step = 0;
    double lr = 0.0;
    double routing_term = 0.0;
    double topk_term = 0.0;
    double recall_at_1 = 0.0;
    double dcs_budget = 0.0;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

/// Full minibatch training driver: fresh whole-graph representations every
/// step, loss assembly over the batch, Adam with the one-cycle schedule, and
/// periodic validation that retains the best checkpoint.
class Trainer {
public:
    Trainer(const VectorDataset& data, const SimilarityGraph& graph, const HopCache& cache,
            TrainConfig train_config, ModelConfig model_config);

    LossBreakdown step();
    /// Recall@1 of deterministic search with rerank on the validation split.
    double evaluate() const;

    const RoutingModel& model() const { return model_; }
    RoutingModel& mutable_model() { return model_; }
    long steps_taken() const { return step_; }
    const std::vector<uint32_t>& eligible_queries() const { return eligible_; }

private:
    const VectorDataset& data_;
    const SimilarityGraph& graph_;
    const HopCache& cache_;
    TrainConfig config_;
    CsrMatrix a_hat_;
    RoutingModel model_;
    AdamState adam_;
    std::vector<uint32_t> eligible_;      // train query ids with a cache entry
    std::vector<uint32_t> validation_nn_; // true NN per validation query
    std::mt19937_64 rng_;
    long step_ = 0;
};

struct TrainResult {
    RoutingModel model;      // best-by-validation checkpoint
    double best_recall = 0.0;
    long best_step = 0;
    std::vector<MetricsRow> metrics;
    std::vector<LossBreakdown> per_step_loss;
};

TrainResult train_loop(const VectorDataset& data, const SimilarityGraph& graph,
                       const HopCache& cache, const TrainConfig& train_config,
                       const ModelConfig& model_config);

}  // namespace annroute
