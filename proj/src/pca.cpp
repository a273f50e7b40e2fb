#include "annroute/pca.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "annroute/binary_io.hpp"

namespace annroute {

PCAModel pca_fit(const RowMatrixF& base, int d) {
    const Eigen::Index n = base.rows();
    const Eigen::Index dim = base.cols();
    if (d < 1 || d > dim) throw std::invalid_argument("pca_fit: need 1 <= d <= D");
    if (n < d) throw std::invalid_argument("pca_fit: need at least d samples");

    Eigen::MatrixXd x = base.cast<double>();
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    Eigen::MatrixXd cov = (x.transpose() * x) / denom;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigensolver failed");

    // Eigen returns ascending eigenvalues; take the top d in descending order.
    PCAModel model;
    model.out_dim = d;
    model.mean = mean.transpose().cast<float>();
    model.components.resize(d, dim);
    model.explained.resize(d);
    const double tol = 1e-12 * std::max(1.0, solver.eigenvalues().cwiseAbs().maxCoeff());
    for (int r = 0; r < d; ++r) {
        const Eigen::Index src = dim - 1 - r;
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index max_idx = 0;
        v.cwiseAbs().maxCoeff(&max_idx);
        if (v(max_idx) < 0.0) v = -v;
        model.components.row(r) = v.transpose().cast<float>();
        model.explained(r) = solver.eigenvalues()(src);
        if (solver.eigenvalues()(src) <= tol) model.rank_deficient = true;
    }
    return model;
}

RowMatrixF pca_transform(const PCAModel& model, const RowMatrixF& x) {
    if (x.cols() != model.components.cols())
        throw std::invalid_argument("pca_transform: input dimensionality mismatch");
    Eigen::MatrixXd centered = x.cast<double>();
    centered.rowwise() -= model.mean.cast<double>().transpose();
    Eigen::MatrixXd projected = centered * model.components.cast<double>().transpose();
    return projected.cast<float>();
}

namespace {
constexpr char kMagic[4] = {'A', 'P', 'C', 'A'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_pca(const PCAModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("pca file not writable: " + path);
    io::write_magic(out, kMagic);
    io::write_pod(out, kVersion);
    io::write_pod(out, static_cast<uint32_t>(model.components.cols()));
    io::write_pod(out, static_cast<uint32_t>(model.out_dim));
    io::write_pod(out, static_cast<uint32_t>(model.rank_deficient ? 1 : 0));
    io::write_array(out, model.mean.data(), model.mean.size());
    io::write_array(out, model.components.data(), static_cast<size_t>(model.components.size()));
    io::write_array(out, model.explained.data(), static_cast<size_t>(model.explained.size()));
    if (!out) throw FormatError("pca write failed: " + path);
}

PCAModel load_pca(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("pca file not readable: " + path);
    io::expect_magic(in, kMagic, path.c_str());
    if (io::read_pod<uint32_t>(in, "version") != kVersion)
        throw FormatError("pca: unsupported version in " + path);
    const uint32_t dim = io::read_pod<uint32_t>(in, "dim");
    const uint32_t d = io::read_pod<uint32_t>(in, "out_dim");
    const uint32_t deficient = io::read_pod<uint32_t>(in, "flags");
    PCAModel model;
    model.out_dim = static_cast<int>(d);
    model.rank_deficient = deficient != 0;
    model.mean.resize(dim);
    model.components.resize(d, dim);
    model.explained.resize(d);
    io::read_array(in, model.mean.data(), dim, "mean");
    io::read_array(in, model.components.data(), static_cast<size_t>(d) * dim, "components");
    io::read_array(in, model.explained.data(), d, "explained");
    return model;
}

}  // namespace annroute
