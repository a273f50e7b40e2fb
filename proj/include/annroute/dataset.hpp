#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace annroute {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixI = Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base vectors plus the two query sets drawn from the same distribution.
struct VectorDataset {
    RowMatrixF base;
    RowMatrixF train_queries;
    RowMatrixF test_queries;
    int dim = 0;

    /// Throws std::invalid_argument if the column counts disagree, the base
    /// is empty, or any coordinate is non-finite.
    void validate() const;
};

/// Exhaustive-scan nearest neighbors: row q holds the ids of the R closest
/// base vectors to query q, nearest first. Column 0 is the true NN.
struct GroundTruth {
    RowMatrixI topk;  // Q x R
    int R = 0;

    uint32_t nn(Eigen::Index query) const { return static_cast<uint32_t>(topk(query, 0)); }
    Eigen::Index num_queries() const { return topk.rows(); }
};

// fvecs/ivecs: repeated records of [int32 dim][dim * 4-byte payload],
// little-endian. All records in a file must share dim.
RowMatrixF load_fvecs(const std::string& path);
void write_fvecs(const std::string& path, const RowMatrixF& m);
RowMatrixI load_ivecs(const std::string& path);
void write_ivecs(const std::string& path, const RowMatrixI& m);

/// Synthetic clustered data plus the generator's own centers and per-base-row
/// cluster labels, kept so tests can check label recoverability.
struct SyntheticData {
    VectorDataset dataset;
    RowMatrixF centers;            // clusters x d
    std::vector<int> base_labels;  // cluster id per base row
};

/// Draws n points around `clusters` Gaussian centers and splits them
/// base/train/test at the fixed 8:1:1 ratio. Deterministic per seed.
SyntheticData generate_synthetic_clustered(int n, int d, int clusters, uint64_t seed);
VectorDataset generate_synthetic(int n, int d, int clusters, uint64_t seed);

/// Squared Euclidean distance with a float accumulator widened to double.
/// Single definition shared by ground truth, graph build and search so that
/// distance comparisons agree bit-for-bit everywhere.
double squared_l2(const float* a, const float* b, int d);

/// Exhaustive scan, ties broken by smaller id. Parallel over queries; each
/// query's result is independent of the schedule.
GroundTruth exact_knn(const RowMatrixF& base, const RowMatrixF& queries, int R);
/// Serial twin of exact_knn, kept as the reference for the parallel kernel.
GroundTruth exact_knn_serial(const RowMatrixF& base, const RowMatrixF& queries, int R);

}  // namespace annroute
