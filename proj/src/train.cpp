#include "annroute/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "annroute/binary_io.hpp"

namespace annroute {

const char* objective_name(Objective objective) {
    switch (objective) {
        case Objective::Imitation: return "imitation";
        case Objective::TeacherForcing: return "teacher-forcing";
        case Objective::TopkOnly: return "topk-only";
    }
    return "?";
}

Objective parse_objective(const std::string& name) {
    if (name == "imitation") return Objective::Imitation;
    if (name == "teacher-forcing") return Objective::TeacherForcing;
    if (name == "topk-only") return Objective::TopkOnly;
    throw std::invalid_argument("unknown objective: " + name);
}

void TrainConfig::validate() const {
    if (dcs_budget <= 0.0) throw std::invalid_argument("train: dcs_budget must be positive");
    if (k < 1 || k > dcs_budget) throw std::invalid_argument("train: need 1 <= k <= dcs_budget");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
    if (total_steps < 1) throw std::invalid_argument("train: total_steps must be positive");
    if (max_lr <= 0.0) throw std::invalid_argument("train: max_lr must be positive");
    if (eval_every < 1) throw std::invalid_argument("train: eval_every must be positive");
}

RoutingLossResult routing_loss(const SearchTrajectory& trajectory, const HopCacheEntry& entry,
                               const ScoreFn& score, const ScoreGradFn& grad) {
    RoutingLossResult result;
    std::vector<double> scores;
    for (const auto& step : trajectory.steps) {
        const auto& heap = step.heap_snapshot;
        const auto ref = ref_set(entry, heap);
        if (ref.empty()) {
            ++result.skipped;
            continue;
        }
        scores.resize(heap.size());
        for (size_t i = 0; i < heap.size(); ++i) scores[i] = score(heap[i]);
        const double max_score = *std::max_element(scores.begin(), scores.end());
        double sum_all = 0.0, sum_ref = 0.0;
        size_t ref_pos = 0;
        std::vector<double> expd(heap.size());
        for (size_t i = 0; i < heap.size(); ++i) {
            expd[i] = std::exp(scores[i] - max_score);
            sum_all += expd[i];
            // heap snapshot and ref are both ascending, so walk them in step
            if (ref_pos < ref.size() && heap[i] == ref[ref_pos]) {
                sum_ref += expd[i];
                ++ref_pos;
            }
        }
        result.total += std::log(sum_all) - std::log(sum_ref);
        ++result.counted;

        ref_pos = 0;
        for (size_t i = 0; i < heap.size(); ++i) {
            const double p = expd[i] / sum_all;
            double g = p;
            if (ref_pos < ref.size() && heap[i] == ref[ref_pos]) {
                g -= expd[i] / sum_ref;
                ++ref_pos;
            }
            grad(heap[i], g);
        }
    }
    return result;
}

namespace {

size_t softmax_draw(const std::vector<double>& scores, std::mt19937_64& rng) {
    const auto probs = heap_softmax(scores);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

}  // namespace

std::vector<uint32_t> sample_topk_exclusions(std::span<const uint32_t> visited, uint32_t target,
                                             int k, const ScoreFn& score, std::mt19937_64& rng) {
    std::vector<uint32_t> pool;
    pool.reserve(visited.size());
    for (uint32_t v : visited)
        if (v != target) pool.push_back(v);
    std::vector<double> scores(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) scores[i] = score(pool[i]);

    const size_t draws = std::min<size_t>(pool.size(), static_cast<size_t>(std::max(k - 1, 0)));
    std::vector<uint32_t> excluded;
    excluded.reserve(draws);
    for (size_t d = 0; d < draws; ++d) {
        const size_t pick = softmax_draw(scores, rng);
        excluded.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<long>(pick));
        scores.erase(scores.begin() + static_cast<long>(pick));
    }
    return excluded;
}

double topk_loss_given(std::span<const uint32_t> visited, uint32_t target,
                       std::span<const uint32_t> excluded, const ScoreFn& score,
                       const ScoreGradFn& grad) {
    std::vector<uint32_t> remaining;
    remaining.reserve(visited.size());
    for (uint32_t v : visited) {
        if (v == target || std::find(excluded.begin(), excluded.end(), v) == excluded.end())
            remaining.push_back(v);
    }
    std::vector<double> scores(remaining.size());
    double target_score = 0.0;
    for (size_t i = 0; i < remaining.size(); ++i) {
        scores[i] = score(remaining[i]);
        if (remaining[i] == target) target_score = scores[i];
    }
    const double max_score = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) sum += std::exp(s - max_score);
    const double loss = std::log(sum) - (target_score - max_score);
    for (size_t i = 0; i < remaining.size(); ++i) {
        const double p = std::exp(scores[i] - max_score) / sum;
        grad(remaining[i], remaining[i] == target ? p - 1.0 : p);
    }
    return loss;
}

std::optional<double> topk_loss(std::span<const uint32_t> visited, uint32_t target, int k,
                                const ScoreFn& score, const ScoreGradFn& grad,
                                std::mt19937_64& rng) {
    if (k < 1) return std::nullopt;
    if (std::find(visited.begin(), visited.end(), target) == visited.end()) return std::nullopt;
    const auto excluded = sample_topk_exclusions(visited, target, k, score, rng);
    return topk_loss_given(visited, target, excluded, score, grad);
}

std::vector<CollectedTrajectory> collect_imitation_batch(
    const SimilarityGraph& graph, const Eigen::MatrixXd& reps, const RoutingModel& model,
    const RowMatrixF& train_queries, std::span<const uint32_t> query_ids,
    const TrainConfig& config, uint64_t batch_seed) {
    const Scorer scorer = Scorer::learned(reps, model.config.input_dim);
    SearchConfig search_config;
    search_config.dcs_budget = config.dcs_budget;
    search_config.k = config.k;
    search_config.mode = ScorerMode::Learned;
    search_config.stochastic = true;

    std::vector<CollectedTrajectory> batch(query_ids.size());
    const Eigen::Index count = static_cast<Eigen::Index>(query_ids.size());
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index i = 0; i < count; ++i) {
        const uint32_t qid = query_ids[static_cast<size_t>(i)];
        PreparedQuery pq;
        pq.raw = train_queries.row(qid).data();
        pq.learned_rep = g_forward(model, pq.raw);
        std::mt19937_64 rng(batch_seed + 0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(i) + 1));
        auto& slot = batch[static_cast<size_t>(i)];
        slot.query_index = qid;
        slot.trajectory = stochastic_search(graph, scorer, pq, search_config, rng);
    }
    return batch;
}

std::vector<CollectedTrajectory> collect_teacher_batch(const SimilarityGraph& graph,
                                                       const HopCache& cache,
                                                       std::span<const uint32_t> query_ids,
                                                       const TrainConfig& config, int routing_dim,
                                                       int data_dim, uint64_t batch_seed) {
    const double projection =
        routing_dim < data_dim ? static_cast<double>(routing_dim) : 0.0;
    const double available = config.dcs_budget - config.k - projection;
    const long allowed =
        available <= 0.0
            ? 0
            : static_cast<long>(std::floor(available * data_dim / routing_dim));

    std::vector<CollectedTrajectory> batch(query_ids.size());
    const Eigen::Index count = static_cast<Eigen::Index>(query_ids.size());
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index i = 0; i < count; ++i) {
        const uint32_t qid = query_ids[static_cast<size_t>(i)];
        const HopCacheEntry* entry = cache.find(qid);
        auto& slot = batch[static_cast<size_t>(i)];
        slot.query_index = qid;
        if (!entry) continue;
        std::mt19937_64 rng(batch_seed + 0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(i) + 1));

        SearchTrajectory traj;
        std::vector<uint8_t> visited_mask(graph.num_vertices(), 0);
        std::vector<uint32_t> heap;
        visited_mask[graph.entry_vertex] = 1;
        traj.visited.push_back(graph.entry_vertex);
        traj.visited_score.push_back(0.0);
        traj.visited_step.push_back(0);
        if (allowed >= 1) {
            traj.scorings = 1;
            heap.push_back(graph.entry_vertex);
        }

        int32_t expansion = 0;
        bool exhausted = traj.scorings >= allowed;
        while (!heap.empty() && !exhausted) {
            const auto ref = ref_set(*entry, heap);
            if (ref.empty()) break;
            const uint32_t v =
                ref[std::uniform_int_distribution<size_t>(0, ref.size() - 1)(rng)];
            TrajectoryStep step;
            step.expanded = v;
            step.heap_snapshot = heap;
            std::sort(step.heap_snapshot.begin(), step.heap_snapshot.end());
            traj.steps.push_back(std::move(step));
            heap.erase(std::find(heap.begin(), heap.end(), v));
            ++expansion;
            if (v == entry->target) break;

            for (uint32_t u : graph.adjacency[v]) {
                if (visited_mask[u]) continue;
                if (traj.scorings >= allowed) {
                    exhausted = true;
                    break;
                }
                ++traj.scorings;
                visited_mask[u] = 1;
                traj.visited.push_back(u);
                traj.visited_score.push_back(0.0);
                traj.visited_step.push_back(expansion);
                heap.push_back(u);
            }
            if (traj.scorings >= allowed) exhausted = true;
        }
        traj.dcs_used =
            static_cast<double>(traj.scorings) * routing_dim / data_dim + projection;
        slot.trajectory = std::move(traj);
    }
    return batch;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("metrics file not writable: " + path);
    out << "step,lr,routing_term,topk_term,recall_at_1,dcs_budget\n";
    char line[256];
    for (const auto& row : rows) {
        std::snprintf(line, sizeof(line), "%ld,%.8g,%.8g,%.8g,%.6f,%.8g\n", row.step, row.lr,
                      row.routing_term, row.topk_term, row.recall_at_1, row.dcs_budget);
        out << line;
    }
}

Trainer::Trainer(const VectorDataset& data, const SimilarityGraph& graph, const HopCache& cache,
                 TrainConfig train_config, ModelConfig model_config)
    : data_(data), graph_(graph), cache_(cache), config_(train_config), rng_(train_config.seed) {
    config_.validate();
    model_config.validate();
    if (model_config.input_dim != data.dim)
        throw std::invalid_argument("train: model input_dim disagrees with dataset");

    a_hat_ = normalized_adjacency(symmetrize(graph));
    model_ = init_model(model_config, config_.seed);
    adam_ = make_adam_state(model_);

    for (const auto& entry : cache_.entries) {
        if (entry.query_id < data.train_queries.rows()) eligible_.push_back(entry.query_id);
    }
    if (eligible_.empty()) throw std::invalid_argument("train: no usable training queries");

    if (data.test_queries.rows() > 0) {
        const GroundTruth gt = exact_knn(data.base, data.test_queries, 1);
        validation_nn_.resize(static_cast<size_t>(gt.num_queries()));
        for (Eigen::Index q = 0; q < gt.num_queries(); ++q)
            validation_nn_[static_cast<size_t>(q)] = gt.nn(q);
    }
}

LossBreakdown Trainer::step() {
    // Fresh whole-graph representations for this batch.
    ForwardCache forward_cache;
    const Eigen::MatrixXd reps = f_forward(model_, a_hat_, data_.base, &forward_cache);
    const Eigen::Index n = reps.rows();
    const int out_dim = model_.config.out_dim;

    std::vector<uint32_t> query_ids(static_cast<size_t>(config_.batch_size));
    std::uniform_int_distribution<size_t> pick(0, eligible_.size() - 1);
    for (auto& qid : query_ids) qid = eligible_[pick(rng_)];
    const uint64_t batch_seed = rng_();

    std::vector<CollectedTrajectory> batch;
    if (config_.objective == Objective::TeacherForcing) {
        batch = collect_teacher_batch(graph_, cache_, query_ids, config_, out_dim,
                                      model_.config.input_dim, batch_seed);
    } else {
        batch = collect_imitation_batch(graph_, reps, model_, data_.train_queries, query_ids,
                                        config_, batch_seed);
    }

    Eigen::MatrixXd d_reps_routing = Eigen::MatrixXd::Zero(n, out_dim);
    Eigen::MatrixXd d_reps_topk = Eigen::MatrixXd::Zero(n, out_dim);
    Eigen::MatrixXd d_wq_routing, d_wq_topk;
    const bool linear_query = model_.config.query_mode == QueryMode::Linear;
    if (linear_query) {
        d_wq_routing = Eigen::MatrixXd::Zero(model_.w_query.rows(), model_.w_query.cols());
        d_wq_topk = Eigen::MatrixXd::Zero(model_.w_query.rows(), model_.w_query.cols());
    }

    LossBreakdown breakdown;
    double routing_sum = 0.0, topk_sum = 0.0;
    std::mt19937_64 loss_rng(batch_seed ^ 0xd1b54a32d192ed03ULL);

    for (const auto& item : batch) {
        const HopCacheEntry* entry = cache_.find(item.query_index);
        if (!entry) continue;
        const float* q_raw = data_.train_queries.row(item.query_index).data();
        const Eigen::VectorXd q_rep = g_forward(model_, q_raw);
        Eigen::VectorXd qd;
        if (linear_query) {
            qd.resize(model_.config.input_dim);
            for (int i = 0; i < model_.config.input_dim; ++i) qd(i) = q_raw[i];
        }

        const ScoreFn score = [&](uint32_t v) { return reps.row(v).dot(q_rep); };
        const auto routing_grad = [&](uint32_t v, double g) {
            d_reps_routing.row(v) += g * q_rep.transpose();
            if (linear_query) d_wq_routing += g * reps.row(v).transpose() * qd.transpose();
        };
        const auto topk_grad = [&](uint32_t v, double g) {
            d_reps_topk.row(v) += g * q_rep.transpose();
            if (linear_query) d_wq_topk += g * reps.row(v).transpose() * qd.transpose();
        };

        if (config_.objective != Objective::TopkOnly) {
            const auto r = routing_loss(item.trajectory, *entry, score, routing_grad);
            routing_sum += r.total;
            breakdown.routing_steps += r.counted;
            breakdown.skipped_steps += r.skipped;
        }
        const auto t = topk_loss(item.trajectory.visited, entry->target, config_.k, score,
                                 topk_grad, loss_rng);
        if (t) {
            topk_sum += *t;
            ++breakdown.topk_trajectories;
        } else {
            ++breakdown.excluded_queries;
        }
    }

    breakdown.routing_term = breakdown.routing_steps > 0 ? routing_sum / breakdown.routing_steps : 0.0;
    breakdown.topk_term = breakdown.topk_trajectories > 0 ? topk_sum / breakdown.topk_trajectories : 0.0;
    if (!std::isfinite(breakdown.routing_term) || !std::isfinite(breakdown.topk_term))
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step_));

    // The optimized objective is the batch mean of per-query sums: every
    // routing step of a trajectory contributes alongside its one top-k term.
    const double scale = 1.0 / static_cast<double>(batch.size());
    Eigen::MatrixXd d_reps = (d_reps_routing + d_reps_topk) * scale;

    Gradients grads = make_gradients(model_);
    f_backward(model_, a_hat_, forward_cache, d_reps, grads);
    if (linear_query) grads.w_query += (d_wq_routing + d_wq_topk) * scale;
    if (!grads.all_finite())
        throw std::runtime_error("train: non-finite gradients at step " + std::to_string(step_));

    const double lr = one_cycle_lr(step_, config_.total_steps, config_.max_lr);
    adam_step(model_, grads, adam_, lr);
    ++step_;
    return breakdown;
}

double Trainer::evaluate() const {
    if (validation_nn_.empty()) return 0.0;
    const Eigen::MatrixXd reps = f_forward(model_, a_hat_, data_.base);
    const Scorer scorer = Scorer::learned(reps, model_.config.input_dim);
    SearchConfig search_config;
    search_config.dcs_budget = config_.dcs_budget;
    search_config.k = config_.k;
    search_config.mode = ScorerMode::Learned;

    const Eigen::Index q_count = data_.test_queries.rows();
    std::vector<uint8_t> hit(static_cast<size_t>(q_count), 0);
#pragma omp parallel for schedule(dynamic)
    for (Eigen::Index q = 0; q < q_count; ++q) {
        PreparedQuery pq;
        pq.raw = data_.test_queries.row(q).data();
        pq.learned_rep = g_forward(model_, pq.raw);
        const auto traj = beam_search(graph_, scorer, pq, search_config);
        const auto ordered = rerank(traj.result_candidates, pq.raw, data_.base, config_.k);
        if (!ordered.empty() && ordered.front() == validation_nn_[static_cast<size_t>(q)])
            hit[static_cast<size_t>(q)] = 1;
    }
    double correct = 0.0;
    for (uint8_t h : hit) correct += h;
    return correct / static_cast<double>(q_count);
}

TrainResult train_loop(const VectorDataset& data, const SimilarityGraph& graph,
                       const HopCache& cache, const TrainConfig& train_config,
                       const ModelConfig& model_config) {
    Trainer trainer(data, graph, cache, train_config, model_config);
    TrainResult result;
    result.model = trainer.model();
    result.best_recall = -1.0;

    for (long step = 0; step < train_config.total_steps; ++step) {
        const LossBreakdown loss = trainer.step();
        result.per_step_loss.push_back(loss);
        const bool last = step + 1 == train_config.total_steps;
        if ((step + 1) % train_config.eval_every == 0 || last) {
            const double recall = trainer.evaluate();
            result.metrics.push_back({step + 1,
                                      one_cycle_lr(step, train_config.total_steps,
                                                   train_config.max_lr),
                                      loss.routing_term, loss.topk_term, recall,
                                      train_config.dcs_budget});
            if (recall > result.best_recall) {
                result.best_recall = recall;
                result.best_step = step + 1;
                result.model = trainer.model();
            }
        }
    }
    return result;
}

}  // namespace annroute
