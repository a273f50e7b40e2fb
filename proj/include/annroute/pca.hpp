#pragma once

#include "annroute/dataset.hpp"

namespace annroute {

/// Principal directions of the base set, rows orthonormal, descending
/// eigenvalue order. Sign fixed so each row's largest-magnitude entry is
/// positive.
struct PCAModel {
    Eigen::VectorXf mean;            // D
    RowMatrixF components;           // d x D
    Eigen::VectorXd explained;       // d eigenvalues, descending
    int out_dim = 0;
    bool rank_deficient = false;     // trailing rows are an arbitrary orthonormal completion

    int in_dim() const { return static_cast<int>(components.cols()); }
    double compression_rate() const { return static_cast<double>(in_dim()) / out_dim; }
};

PCAModel pca_fit(const RowMatrixF& base, int d);

/// (X - mean) * components^T, computed in double and returned as float.
RowMatrixF pca_transform(const PCAModel& model, const RowMatrixF& x);

void save_pca(const PCAModel& model, const std::string& path);
PCAModel load_pca(const std::string& path);

}  // namespace annroute
