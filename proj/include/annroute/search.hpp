#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "annroute/dataset.hpp"
#include "annroute/graph.hpp"

namespace annroute {

enum class ScorerMode { Original, Learned, Truncated };

const char* scorer_mode_name(ScorerMode mode);

/// Search-time knobs. The budget is real-valued in full-dimensional distance
/// equivalents; a reduced-dimension scoring costs d/D of one unit.
struct SearchConfig {
    double dcs_budget = 128.0;
    int k = 0;               // rerank list size; 0 = no rerank (answer by score)
    double tau = 1.0;        // softmax temperature for Original/Truncated scores
    ScorerMode mode = ScorerMode::Original;
    bool stochastic = false;
    uint64_t rng_seed = 0;
    int beam_width = 0;      // optional classical width-L cap; 0 = unbounded heap
};

/// Read-only scoring backend shared across concurrent searches. Query-side
/// state lives in PreparedQuery so one Scorer serves many threads.
struct Scorer {
    ScorerMode mode = ScorerMode::Original;
    const RowMatrixF* base = nullptr;          // Original
    const Eigen::MatrixXd* reps = nullptr;     // Learned: N x d vertex representations
    const RowMatrixF* trunc_base = nullptr;    // Truncated: N x d projected base
    double tau = 1.0;
    int data_dim = 0;     // D
    int routing_dim = 0;  // d; equals D for Original

    static Scorer original(const RowMatrixF& base, double tau);
    static Scorer learned(const Eigen::MatrixXd& reps, int data_dim);
    static Scorer truncated(const RowMatrixF& trunc_base, double tau, int data_dim);

    double unit_cost() const { return static_cast<double>(routing_dim) / data_dim; }
    /// Query projection cost in full units: d when routing below the data
    /// dimensionality, 0 otherwise (identity queries are free).
    int projection_cost() const {
        return (mode != ScorerMode::Original && routing_dim < data_dim) ? routing_dim : 0;
    }
};

/// Per-query view consumed by a Scorer. `raw` always points at the original
/// D-dimensional vector (used for reranking); the other members are filled
/// according to the scorer mode.
struct PreparedQuery {
    const float* raw = nullptr;
    Eigen::VectorXd learned_rep;       // Learned
    Eigen::RowVectorXf truncated;      // Truncated
};

double score(const Scorer& scorer, uint32_t v, const PreparedQuery& q);

struct TrajectoryStep {
    uint32_t expanded = 0;
    std::vector<uint32_t> heap_snapshot;  // heap content at selection time, ids ascending
};

/// Full record of one budgeted search: expansion order, heap snapshots, the
/// visited set with per-vertex scores and the expansion index at which each
/// vertex was scored (0 = the entry, before any expansion).
struct SearchTrajectory {
    std::vector<TrajectoryStep> steps;
    std::vector<uint32_t> visited;
    std::vector<double> visited_score;
    std::vector<int32_t> visited_step;
    long scorings = 0;
    double dcs_used = 0.0;  // scorings * unit_cost + projection; rerank accounted by caller
    std::vector<uint32_t> result_candidates;

    std::optional<size_t> visited_index(uint32_t v) const;
};

/// Number of whole scorings a search may perform after reserving k full units
/// for reranking and the query projection cost.
long allowed_scorings(const SearchConfig& config, const Scorer& scorer);

/// Budget solely available for routing, in routing-scoring units.
double routing_budget(double dcs_budget, int k, int routing_dim, int data_dim);

/// Numerically stable softmax with max-subtraction.
std::vector<double> heap_softmax(std::span<const double> scores);

SearchTrajectory beam_search(const SimilarityGraph& graph, const Scorer& scorer,
                             const PreparedQuery& q, const SearchConfig& config);

SearchTrajectory stochastic_search(const SimilarityGraph& graph, const Scorer& scorer,
                                   const PreparedQuery& q, const SearchConfig& config,
                                   std::mt19937_64& rng);

/// Deterministic mode: top-k by score, ties by smaller id. Stochastic mode:
/// k samples without replacement via iterated renormalized softmax.
std::vector<uint32_t> select_topk_visited(std::span<const uint32_t> visited,
                                          std::span<const double> scores, int k, bool stochastic,
                                          std::mt19937_64* rng);

/// Ascending true Euclidean distance to q, ties by id; returns the first
/// min(k, |candidates|) ids. Costs |candidates| full DCS units, accounted by
/// the caller.
std::vector<uint32_t> rerank(std::span<const uint32_t> candidates, const float* q,
                             const RowMatrixF& base, int k);

/// Pure greedy walk: step to the best-scoring out-neighbor while it improves
/// on the current vertex; stop in a local minimum. Returns the path.
std::vector<uint32_t> greedy_route(const SimilarityGraph& graph, const Scorer& scorer,
                                   const PreparedQuery& q, int max_steps = 1000);

}  // namespace annroute
