#include "annroute/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "annroute/binary_io.hpp"

namespace annroute {

void VectorDataset::validate() const {
    if (base.rows() < 1) throw std::invalid_argument("dataset: base must have at least one row");
    if (base.cols() != dim || train_queries.cols() != dim || test_queries.cols() != dim)
        throw std::invalid_argument("dataset: matrices disagree on dimensionality");
    if (!base.allFinite() || !train_queries.allFinite() || !test_queries.allFinite())
        throw std::invalid_argument("dataset: non-finite coordinate");
}

namespace {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
load_xvecs(const std::string& path, const char* kind) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(kind + std::string(" file not readable: ") + path);
    in.seekg(0, std::ios::end);
    const std::streamoff file_size = in.tellg();
    in.seekg(0);
    if (file_size == 0) return Mat(0, 0);

    int32_t dim = io::read_pod<int32_t>(in, "record header");
    if (dim <= 0) throw FormatError(kind + std::string(": non-positive record dim in ") + path);
    const std::streamoff record_size = 4 + 4 * static_cast<std::streamoff>(dim);
    if (file_size % record_size != 0)
        throw FormatError(kind + std::string(": truncated or mixed-dim records in ") + path);
    const Eigen::Index rows = file_size / record_size;

    Mat m(rows, dim);
    in.seekg(0);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const int32_t row_dim = io::read_pod<int32_t>(in, "record header");
        if (row_dim != dim)
            throw FormatError(kind + std::string(": inconsistent record dim in ") + path);
        io::read_array(in, m.row(r).data(), static_cast<size_t>(dim), "record payload");
    }
    return m;
}

template <typename Scalar>
void write_xvecs(const std::string& path,
                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m,
                 const char* kind) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(kind + std::string(" file not writable: ") + path);
    const int32_t dim = static_cast<int32_t>(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        io::write_pod(out, dim);
        io::write_array(out, m.row(r).data(), static_cast<size_t>(dim));
    }
    if (!out) throw FormatError(kind + std::string(" write failed: ") + path);
}

}  // namespace

RowMatrixF load_fvecs(const std::string& path) { return load_xvecs<float>(path, "fvecs"); }
void write_fvecs(const std::string& path, const RowMatrixF& m) { write_xvecs(path, m, "fvecs"); }
RowMatrixI load_ivecs(const std::string& path) { return load_xvecs<int32_t>(path, "ivecs"); }
void write_ivecs(const std::string& path, const RowMatrixI& m) { write_xvecs(path, m, "ivecs"); }

SyntheticData generate_synthetic_clustered(int n, int d, int clusters, uint64_t seed) {
    if (n < 10) throw std::invalid_argument("generate_synthetic: n must be >= 10");
    if (clusters < 1 || n < clusters)
        throw std::invalid_argument("generate_synthetic: need n >= clusters >= 1");
    if (d < 1) throw std::invalid_argument("generate_synthetic: d must be >= 1");

    std::mt19937_64 rng(seed);
    std::normal_distribution<float> unit(0.0f, 1.0f);

    SyntheticData out;
    out.centers.resize(clusters, d);
    for (int c = 0; c < clusters; ++c) {
        for (int j = 0; j < d; ++j) out.centers(c, j) = unit(rng);
        out.centers.row(c).normalize();
    }

    // Within-cluster spread; small enough that nearest-center assignment
    // recovers the generating cluster, large enough that neighborhoods of
    // nearby clusters overlap.
    const float sigma = 0.15f;

    // Points live on the unit sphere, matching the norm-concentrated
    // benchmark datasets this generator substitutes for.
    RowMatrixF points(n, d);
    std::vector<int> labels(n);
    std::uniform_int_distribution<int> pick(0, clusters - 1);
    for (int i = 0; i < n; ++i) {
        const int c = pick(rng);
        labels[i] = c;
        for (int j = 0; j < d; ++j) points(i, j) = out.centers(c, j) + sigma * unit(rng);
        points.row(i).normalize();
    }

    const int n_base = n * 8 / 10;
    const int n_train = n / 10;
    const int n_test = n - n_base - n_train;

    out.dataset.dim = d;
    out.dataset.base = points.topRows(n_base);
    out.dataset.train_queries = points.middleRows(n_base, n_train);
    out.dataset.test_queries = points.bottomRows(n_test);
    out.base_labels.assign(labels.begin(), labels.begin() + n_base);
    out.dataset.validate();
    return out;
}

VectorDataset generate_synthetic(int n, int d, int clusters, uint64_t seed) {
    return generate_synthetic_clustered(n, d, clusters, seed).dataset;
}

double squared_l2(const float* a, const float* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

namespace {

void knn_one_query(const RowMatrixF& base, const float* q, int R, int32_t* out_row) {
    const Eigen::Index n = base.rows();
    const int d = static_cast<int>(base.cols());
    std::vector<std::pair<double, uint32_t>> dist(n);
    for (Eigen::Index i = 0; i < n; ++i)
        dist[i] = {squared_l2(base.row(i).data(), q, d), static_cast<uint32_t>(i)};
    std::partial_sort(dist.begin(), dist.begin() + R, dist.end());
    for (int r = 0; r < R; ++r) out_row[r] = static_cast<int32_t>(dist[r].second);
}

GroundTruth knn_impl(const RowMatrixF& base, const RowMatrixF& queries, int R, bool parallel) {
    if (base.cols() != queries.cols())
        throw std::invalid_argument("exact_knn: dimensionality mismatch");
    if (R < 1 || R > base.rows()) throw std::invalid_argument("exact_knn: need 1 <= R <= N");

    GroundTruth gt;
    gt.R = R;
    gt.topk.resize(queries.rows(), R);
    const Eigen::Index q_count = queries.rows();
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (Eigen::Index q = 0; q < q_count; ++q)
            knn_one_query(base, queries.row(q).data(), R, gt.topk.row(q).data());
    } else {
        for (Eigen::Index q = 0; q < q_count; ++q)
            knn_one_query(base, queries.row(q).data(), R, gt.topk.row(q).data());
    }
    return gt;
}

}  // namespace

GroundTruth exact_knn(const RowMatrixF& base, const RowMatrixF& queries, int R) {
    return knn_impl(base, queries, R, true);
}

GroundTruth exact_knn_serial(const RowMatrixF& base, const RowMatrixF& queries, int R) {
    return knn_impl(base, queries, R, false);
}

}  // namespace annroute
