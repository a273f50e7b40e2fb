#include "annroute/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace annroute {

const char* scorer_mode_name(ScorerMode mode) {
    switch (mode) {
        case ScorerMode::Original: return "original";
        case ScorerMode::Learned: return "learned";
        case ScorerMode::Truncated: return "truncated";
    }
    return "?";
}

Scorer Scorer::original(const RowMatrixF& base, double tau) {
    Scorer s;
    s.mode = ScorerMode::Original;
    s.base = &base;
    s.tau = tau;
    s.data_dim = static_cast<int>(base.cols());
    s.routing_dim = s.data_dim;
    return s;
}

Scorer Scorer::learned(const Eigen::MatrixXd& reps, int data_dim) {
    Scorer s;
    s.mode = ScorerMode::Learned;
    s.reps = &reps;
    s.data_dim = data_dim;
    s.routing_dim = static_cast<int>(reps.cols());
    return s;
}

Scorer Scorer::truncated(const RowMatrixF& trunc_base, double tau, int data_dim) {
    Scorer s;
    s.mode = ScorerMode::Truncated;
    s.trunc_base = &trunc_base;
    s.tau = tau;
    s.data_dim = data_dim;
    s.routing_dim = static_cast<int>(trunc_base.cols());
    return s;
}

double score(const Scorer& scorer, uint32_t v, const PreparedQuery& q) {
    switch (scorer.mode) {
        case ScorerMode::Original:
            return -std::sqrt(squared_l2(scorer.base->row(v).data(), q.raw, scorer.data_dim)) /
                   scorer.tau;
        case ScorerMode::Learned:
            return scorer.reps->row(v).dot(q.learned_rep);
        case ScorerMode::Truncated:
            return -std::sqrt(squared_l2(scorer.trunc_base->row(v).data(), q.truncated.data(),
                                         scorer.routing_dim)) /
                   scorer.tau;
    }
    return 0.0;
}

std::optional<size_t> SearchTrajectory::visited_index(uint32_t v) const {
    for (size_t i = 0; i < visited.size(); ++i)
        if (visited[i] == v) return i;
    return std::nullopt;
}

double routing_budget(double dcs_budget, int k, int routing_dim, int data_dim) {
    if (routing_dim >= data_dim) return dcs_budget - k;
    const double compression = static_cast<double>(data_dim) / routing_dim;
    return compression * (dcs_budget - k - routing_dim);
}

long allowed_scorings(const SearchConfig& config, const Scorer& scorer) {
    const double available = config.dcs_budget - config.k - scorer.projection_cost();
    if (available <= 0.0) return 0;
    // Conservative floor keeps the accounting sound for any real budget.
    return static_cast<long>(std::floor(available * scorer.data_dim / scorer.routing_dim));
}

std::vector<double> heap_softmax(std::span<const double> scores) {
    if (scores.empty()) throw std::invalid_argument("heap_softmax: empty score set");
    const double max_score = *std::max_element(scores.begin(), scores.end());
    std::vector<double> probs(scores.size());
    double sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        probs[i] = std::exp(scores[i] - max_score);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

namespace {

struct HeapItem {
    uint32_t id;
    double score;
};

// Higher score first, smaller id on ties.
size_t argmax_item(const std::vector<HeapItem>& heap) {
    size_t best = 0;
    for (size_t i = 1; i < heap.size(); ++i) {
        if (heap[i].score > heap[best].score ||
            (heap[i].score == heap[best].score && heap[i].id < heap[best].id))
            best = i;
    }
    return best;
}

size_t sample_item(const std::vector<HeapItem>& heap, std::mt19937_64& rng) {
    std::vector<double> scores(heap.size());
    for (size_t i = 0; i < heap.size(); ++i) scores[i] = heap[i].score;
    const auto probs = heap_softmax(scores);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

SearchTrajectory run_search(const SimilarityGraph& graph, const Scorer& scorer,
                            const PreparedQuery& q, const SearchConfig& config, bool stochastic,
                            std::mt19937_64* rng) {
    SearchTrajectory traj;
    const uint32_t entry = graph.entry_vertex;
    const long allowed = allowed_scorings(config, scorer);

    std::vector<uint8_t> visited_mask(graph.num_vertices(), 0);
    std::vector<HeapItem> heap;

    visited_mask[entry] = 1;
    traj.visited.push_back(entry);
    traj.visited_step.push_back(0);
    if (allowed >= 1) {
        const double entry_score = score(scorer, entry, q);
        traj.visited_score.push_back(entry_score);
        traj.scorings = 1;
        heap.push_back({entry, entry_score});
    } else {
        traj.visited_score.push_back(-std::numeric_limits<double>::infinity());
    }

    int32_t expansion = 0;
    bool budget_exhausted = traj.scorings >= allowed;
    while (!heap.empty() && !budget_exhausted) {
        const size_t idx = stochastic ? sample_item(heap, *rng) : argmax_item(heap);
        TrajectoryStep step;
        step.expanded = heap[idx].id;
        step.heap_snapshot.reserve(heap.size());
        for (const auto& item : heap) step.heap_snapshot.push_back(item.id);
        std::sort(step.heap_snapshot.begin(), step.heap_snapshot.end());
        const uint32_t v = heap[idx].id;
        heap.erase(heap.begin() + static_cast<long>(idx));
        traj.steps.push_back(std::move(step));
        ++expansion;

        for (uint32_t u : graph.adjacency[v]) {
            if (visited_mask[u]) continue;
            if (traj.scorings >= allowed) {  // mid-expansion stop
                budget_exhausted = true;
                break;
            }
            const double s = score(scorer, u, q);
            ++traj.scorings;
            visited_mask[u] = 1;
            traj.visited.push_back(u);
            traj.visited_score.push_back(s);
            traj.visited_step.push_back(expansion);
            heap.push_back({u, s});
        }
        if (config.beam_width > 0 && heap.size() > static_cast<size_t>(config.beam_width)) {
            std::sort(heap.begin(), heap.end(), [](const HeapItem& a, const HeapItem& b) {
                return a.score > b.score || (a.score == b.score && a.id < b.id);
            });
            heap.resize(static_cast<size_t>(config.beam_width));
        }
        if (traj.scorings >= allowed) budget_exhausted = true;
    }

    // The projection is only performed (and charged) when at least one
    // scoring fits in the budget; otherwise the search never starts.
    traj.dcs_used = static_cast<double>(traj.scorings) * scorer.routing_dim / scorer.data_dim +
                    (allowed >= 1 ? scorer.projection_cost() : 0);
    if (config.k > 0) {
        traj.result_candidates = select_topk_visited(traj.visited, traj.visited_score, config.k,
                                                     stochastic, rng);
    } else {
        // No rerank stage: the answer is the best-scored visited vertex.
        traj.result_candidates = select_topk_visited(traj.visited, traj.visited_score, 1, false,
                                                     nullptr);
    }
    return traj;
}

}  // namespace

SearchTrajectory beam_search(const SimilarityGraph& graph, const Scorer& scorer,
                             const PreparedQuery& q, const SearchConfig& config) {
    return run_search(graph, scorer, q, config, false, nullptr);
}

SearchTrajectory stochastic_search(const SimilarityGraph& graph, const Scorer& scorer,
                                   const PreparedQuery& q, const SearchConfig& config,
                                   std::mt19937_64& rng) {
    return run_search(graph, scorer, q, config, true, &rng);
}

std::vector<uint32_t> select_topk_visited(std::span<const uint32_t> visited,
                                          std::span<const double> scores, int k, bool stochastic,
                                          std::mt19937_64* rng) {
    const size_t n = visited.size();
    const size_t take = std::min<size_t>(static_cast<size_t>(std::max(k, 0)), n);
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<uint32_t> out;
    out.reserve(take);
    if (!stochastic) {
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return visited[a] < visited[b];
        });
        for (size_t i = 0; i < take; ++i) out.push_back(visited[order[i]]);
        return out;
    }

    std::vector<double> remaining_scores(scores.begin(), scores.end());
    std::vector<uint32_t> remaining_ids(visited.begin(), visited.end());
    for (size_t pick = 0; pick < take; ++pick) {
        const auto probs = heap_softmax(remaining_scores);
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(*rng);
        double acc = 0.0;
        size_t chosen = probs.size() - 1;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) {
                chosen = i;
                break;
            }
        }
        out.push_back(remaining_ids[chosen]);
        remaining_ids.erase(remaining_ids.begin() + static_cast<long>(chosen));
        remaining_scores.erase(remaining_scores.begin() + static_cast<long>(chosen));
    }
    return out;
}

std::vector<uint32_t> rerank(std::span<const uint32_t> candidates, const float* q,
                             const RowMatrixF& base, int k) {
    const int dim = static_cast<int>(base.cols());
    std::vector<std::pair<double, uint32_t>> dist;
    dist.reserve(candidates.size());
    for (uint32_t c : candidates) dist.emplace_back(squared_l2(base.row(c).data(), q, dim), c);
    std::sort(dist.begin(), dist.end());
    const size_t take = std::min<size_t>(static_cast<size_t>(std::max(k, 0)), dist.size());
    std::vector<uint32_t> out(take);
    for (size_t i = 0; i < take; ++i) out[i] = dist[i].second;
    return out;
}

std::vector<uint32_t> greedy_route(const SimilarityGraph& graph, const Scorer& scorer,
                                   const PreparedQuery& q, int max_steps) {
    uint32_t current = graph.entry_vertex;
    double current_score = score(scorer, current, q);
    std::vector<uint32_t> path{current};
    for (int step = 0; step < max_steps; ++step) {
        uint32_t best = current;
        double best_score = current_score;
        for (uint32_t u : graph.adjacency[current]) {
            const double s = score(scorer, u, q);
            if (s > best_score || (s == best_score && best != current && u < best)) {
                best = u;
                best_score = s;
            }
        }
        if (best == current) break;
        current = best;
        current_score = best_score;
        path.push_back(current);
    }
    return path;
}

}  // namespace annroute
