#include "annroute/gcn_model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "annroute/binary_io.hpp"

namespace annroute {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

void ModelConfig::validate() const {
    if (input_dim < 1 || out_dim < 1) throw std::invalid_argument("model: dims must be positive");
    if (conv_blocks < 0) throw std::invalid_argument("model: conv_blocks must be >= 0");
    if (conv_blocks > 0 && conv_filters < 1)
        throw std::invalid_argument("model: conv_filters must be positive");
    if (ffn_hidden < 1) throw std::invalid_argument("model: ffn_hidden must be positive");
    if (query_mode == QueryMode::Identity && out_dim != input_dim)
        throw std::invalid_argument("model: identity query branch requires out_dim == input_dim");
}

Eigen::MatrixXd CsrMatrix::multiply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(n, x.cols());
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n; ++r) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
        for (int idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx)
            acc += val[idx] * x.row(col[idx]);
        out.row(r) = acc;
    }
    return out;
}

Eigen::MatrixXd CsrMatrix::multiply_serial(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(n, x.cols());
    for (int r = 0; r < n; ++r) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
        for (int idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx)
            acc += val[idx] * x.row(col[idx]);
        out.row(r) = acc;
    }
    return out;
}

Eigen::MatrixXd CsrMatrix::dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < n; ++r)
        for (int idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx) out(r, col[idx]) += val[idx];
    return out;
}

CsrMatrix normalized_adjacency(const std::vector<std::vector<uint32_t>>& undirected) {
    const int n = static_cast<int>(undirected.size());
    std::vector<double> inv_sqrt_deg(n);
    for (int v = 0; v < n; ++v)
        inv_sqrt_deg[v] = 1.0 / std::sqrt(static_cast<double>(undirected[v].size() + 1));

    CsrMatrix csr;
    csr.n = n;
    csr.row_ptr.assign(n + 1, 0);
    for (int v = 0; v < n; ++v)
        csr.row_ptr[v + 1] = csr.row_ptr[v] + static_cast<int>(undirected[v].size()) + 1;
    csr.col.resize(csr.row_ptr[n]);
    csr.val.resize(csr.row_ptr[n]);
    for (int v = 0; v < n; ++v) {
        int idx = csr.row_ptr[v];
        bool diag_written = false;
        for (uint32_t u : undirected[v]) {
            if (!diag_written && static_cast<int>(u) > v) {
                csr.col[idx] = v;
                csr.val[idx] = inv_sqrt_deg[v] * inv_sqrt_deg[v];
                diag_written = true;
                ++idx;
            }
            csr.col[idx] = static_cast<int>(u);
            csr.val[idx] = inv_sqrt_deg[v] * inv_sqrt_deg[u];
            ++idx;
        }
        if (!diag_written) {
            csr.col[idx] = v;
            csr.val[idx] = inv_sqrt_deg[v] * inv_sqrt_deg[v];
            ++idx;
        }
    }
    return csr;
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

Eigen::MatrixXd f_forward(const RoutingModel& model, const CsrMatrix& a_hat,
                          const RowMatrixF& base, ForwardCache* cache) {
    if (a_hat.n != base.rows())
        throw std::invalid_argument("f_forward: operator size disagrees with base");
    if (base.cols() != model.config.input_dim)
        throw std::invalid_argument("f_forward: base dimensionality disagrees with model");

    Eigen::MatrixXd x = base.cast<double>();
    if (cache) cache->blocks.resize(model.blocks.size());

    for (size_t b = 0; b < model.blocks.size(); ++b) {
        const auto& p = model.blocks[b];
        Eigen::MatrixXd z = a_hat.multiply(x);
        Eigen::MatrixXd u = z * p.w_conv;
        Eigen::MatrixXd a = u.unaryExpr([](double v) { return elu(v); });
        Eigen::MatrixXd h = (a * p.w_fc).rowwise() + p.b_fc.transpose();
        Eigen::MatrixXd r = p.has_res_proj ? Eigen::MatrixXd(x * p.w_res) : x;
        r += h;

        Eigen::VectorXd mean = r.rowwise().mean();
        Eigen::MatrixXd centered = r.colwise() - mean;
        Eigen::VectorXd var = centered.cwiseProduct(centered).rowwise().mean();
        Eigen::VectorXd inv_std = (var.array() + kLayerNormEps).rsqrt().matrix();
        Eigen::MatrixXd xhat = (centered.array().colwise() * inv_std.array()).matrix();
        Eigen::MatrixXd out =
            (xhat.array().rowwise() * p.ln_gain.transpose().array()).matrix().rowwise() +
            p.ln_bias.transpose();

        if (cache) {
            auto& cb = cache->blocks[b];
            cb.x_in = std::move(x);
            cb.z = std::move(z);
            cb.u = std::move(u);
            cb.a = std::move(a);
            cb.xhat = xhat;
            cb.inv_std = std::move(inv_std);
        }
        x = std::move(out);
    }

    if (cache) cache->ffn_in = x;
    Eigen::MatrixXd y1 = (x * model.ffn_w1).rowwise() + model.ffn_b1.transpose();
    Eigen::MatrixXd a1 = y1.unaryExpr([](double v) { return elu(v); });
    if (cache) {
        cache->y1 = y1;
        cache->a1 = a1;
    }
    return (a1 * model.ffn_w2).rowwise() + model.ffn_b2.transpose();
}

Eigen::VectorXd g_forward(const RoutingModel& model, const float* q) {
    const int d_in = model.config.input_dim;
    Eigen::VectorXd qd(d_in);
    for (int i = 0; i < d_in; ++i) qd(i) = static_cast<double>(q[i]);
    if (model.config.query_mode == QueryMode::Identity) return qd;
    return model.w_query * qd;
}

Eigen::MatrixXd f_backward(const RoutingModel& model, const CsrMatrix& a_hat,
                           const ForwardCache& cache, const Eigen::MatrixXd& d_reps,
                           Gradients& grads) {
    // FFN head
    grads.ffn_w2 += cache.a1.transpose() * d_reps;
    grads.ffn_b2 += d_reps.colwise().sum().transpose();
    Eigen::MatrixXd d_a1 = d_reps * model.ffn_w2.transpose();
    Eigen::MatrixXd d_y1 =
        d_a1.cwiseProduct(cache.y1.unaryExpr([](double v) { return elu_derivative(v); }));
    grads.ffn_w1 += cache.ffn_in.transpose() * d_y1;
    grads.ffn_b1 += d_y1.colwise().sum().transpose();
    Eigen::MatrixXd d_x = d_y1 * model.ffn_w1.transpose();

    for (size_t bi = model.blocks.size(); bi-- > 0;) {
        const auto& p = model.blocks[bi];
        const auto& cb = cache.blocks[bi];
        auto& gb = grads.blocks[bi];

        // layer norm
        gb.ln_gain += cb.xhat.cwiseProduct(d_x).colwise().sum().transpose();
        gb.ln_bias += d_x.colwise().sum().transpose();
        Eigen::MatrixXd d_xhat =
            (d_x.array().rowwise() * p.ln_gain.transpose().array()).matrix();
        Eigen::VectorXd mean_dxhat = d_xhat.rowwise().mean();
        Eigen::VectorXd mean_dxhat_xhat = d_xhat.cwiseProduct(cb.xhat).rowwise().mean();
        Eigen::MatrixXd d_r = d_xhat.colwise() - mean_dxhat;
        d_r -= (cb.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
        d_r = (d_r.array().colwise() * cb.inv_std.array()).matrix();

        // residual + fully-connected tail
        Eigen::MatrixXd d_a = d_r * p.w_fc.transpose();
        gb.w_fc += cb.a.transpose() * d_r;
        gb.b_fc += d_r.colwise().sum().transpose();
        Eigen::MatrixXd d_u =
            d_a.cwiseProduct(cb.u.unaryExpr([](double v) { return elu_derivative(v); }));
        gb.w_conv += cb.z.transpose() * d_u;
        Eigen::MatrixXd d_z = d_u * p.w_conv.transpose();
        // A-hat is symmetric, so the adjoint of its product is itself.
        Eigen::MatrixXd d_x_in = a_hat.multiply(d_z);
        if (p.has_res_proj) {
            gb.w_res += cb.x_in.transpose() * d_r;
            d_x_in += d_r * p.w_res.transpose();
        } else {
            d_x_in += d_r;
        }
        d_x = std::move(d_x_in);
    }
    return d_x;
}

void Gradients::set_zero() {
    for (auto& b : blocks) {
        b.w_conv.setZero();
        b.w_fc.setZero();
        b.b_fc.setZero();
        b.ln_gain.setZero();
        b.ln_bias.setZero();
        if (b.has_res_proj) b.w_res.setZero();
    }
    ffn_w1.setZero();
    ffn_b1.setZero();
    ffn_w2.setZero();
    ffn_b2.setZero();
    if (w_query.size() > 0) w_query.setZero();
}

bool Gradients::all_finite() const {
    for (const auto& b : blocks) {
        if (!b.w_conv.allFinite() || !b.w_fc.allFinite() || !b.b_fc.allFinite() ||
            !b.ln_gain.allFinite() || !b.ln_bias.allFinite())
            return false;
        if (b.has_res_proj && !b.w_res.allFinite()) return false;
    }
    if (!ffn_w1.allFinite() || !ffn_b1.allFinite() || !ffn_w2.allFinite() || !ffn_b2.allFinite())
        return false;
    if (w_query.size() > 0 && !w_query.allFinite()) return false;
    return true;
}

Gradients make_gradients(const RoutingModel& model) {
    Gradients g;
    g.blocks.resize(model.blocks.size());
    for (size_t b = 0; b < model.blocks.size(); ++b) {
        const auto& p = model.blocks[b];
        auto& gb = g.blocks[b];
        gb.w_conv.setZero(p.w_conv.rows(), p.w_conv.cols());
        gb.w_fc.setZero(p.w_fc.rows(), p.w_fc.cols());
        gb.b_fc.setZero(p.b_fc.size());
        gb.ln_gain.setZero(p.ln_gain.size());
        gb.ln_bias.setZero(p.ln_bias.size());
        gb.has_res_proj = p.has_res_proj;
        if (p.has_res_proj) gb.w_res.setZero(p.w_res.rows(), p.w_res.cols());
    }
    g.ffn_w1.setZero(model.ffn_w1.rows(), model.ffn_w1.cols());
    g.ffn_b1.setZero(model.ffn_b1.size());
    g.ffn_w2.setZero(model.ffn_w2.rows(), model.ffn_w2.cols());
    g.ffn_b2.setZero(model.ffn_b2.size());
    if (model.config.query_mode == QueryMode::Linear)
        g.w_query.setZero(model.w_query.rows(), model.w_query.cols());
    return g;
}

namespace {

template <typename Blocks, typename Mat>
std::vector<ParamView> views_impl(Blocks& blocks, Mat& w1, Eigen::VectorXd& b1, Mat& w2,
                                  Eigen::VectorXd& b2, Mat& wq, bool linear) {
    std::vector<ParamView> views;
    for (size_t b = 0; b < blocks.size(); ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        views.push_back({prefix + "w_conv", blocks[b].w_conv.data(), blocks[b].w_conv.size()});
        views.push_back({prefix + "w_fc", blocks[b].w_fc.data(), blocks[b].w_fc.size()});
        views.push_back({prefix + "b_fc", blocks[b].b_fc.data(), blocks[b].b_fc.size()});
        views.push_back({prefix + "ln_gain", blocks[b].ln_gain.data(), blocks[b].ln_gain.size()});
        views.push_back({prefix + "ln_bias", blocks[b].ln_bias.data(), blocks[b].ln_bias.size()});
        if (blocks[b].has_res_proj)
            views.push_back({prefix + "w_res", blocks[b].w_res.data(), blocks[b].w_res.size()});
    }
    views.push_back({"ffn.w1", w1.data(), w1.size()});
    views.push_back({"ffn.b1", b1.data(), b1.size()});
    views.push_back({"ffn.w2", w2.data(), w2.size()});
    views.push_back({"ffn.b2", b2.data(), b2.size()});
    if (linear) views.push_back({"w_query", wq.data(), wq.size()});
    return views;
}

}  // namespace

std::vector<ParamView> param_views(RoutingModel& model) {
    return views_impl(model.blocks, model.ffn_w1, model.ffn_b1, model.ffn_w2, model.ffn_b2,
                      model.w_query, model.config.query_mode == QueryMode::Linear);
}

std::vector<ParamView> param_views(Gradients& grads, const RoutingModel& model) {
    return views_impl(grads.blocks, grads.ffn_w1, grads.ffn_b1, grads.ffn_w2, grads.ffn_b2,
                      grads.w_query, model.config.query_mode == QueryMode::Linear);
}

AdamState make_adam_state(RoutingModel& model) {
    AdamState state;
    for (const auto& view : param_views(model)) {
        state.m.push_back(Eigen::VectorXd::Zero(view.size));
        state.v.push_back(Eigen::VectorXd::Zero(view.size));
    }
    return state;
}

void adam_step(RoutingModel& model, Gradients& grads, AdamState& state, double lr) {
    auto params = param_views(model);
    auto gradients = param_views(grads, model);
    if (params.size() != gradients.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: mismatched parameter enumeration");
    ++state.t;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Eigen::Map<Eigen::VectorXd> p(params[i].data, params[i].size);
        Eigen::Map<const Eigen::VectorXd> g(gradients[i].data, gradients[i].size);
        auto& m = state.m[i];
        auto& v = state.v[i];
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
        p.array() -=
            lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + kAdamEps);
    }
}

double one_cycle_lr(long step, long total_steps, double max_lr) {
    if (total_steps <= 0) throw std::invalid_argument("one_cycle_lr: total_steps must be positive");
    const double low = 0.04 * max_lr;
    const double warm = 0.3 * static_cast<double>(total_steps);
    const double s = static_cast<double>(std::clamp(step, 0L, total_steps));
    if (s <= warm) return low + (max_lr - low) * (warm > 0.0 ? s / warm : 1.0);
    return max_lr - (max_lr - low) * (s - warm) / (static_cast<double>(total_steps) - warm);
}

namespace {

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

}  // namespace

RoutingModel init_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    RoutingModel model;
    model.config = config;
    int width = config.input_dim;
    for (int b = 0; b < config.conv_blocks; ++b) {
        ConvBlockParams p;
        p.w_conv = glorot(width, config.conv_filters, rng);
        p.w_fc = glorot(config.conv_filters, config.conv_filters, rng);
        p.b_fc = Eigen::VectorXd::Zero(config.conv_filters);
        p.ln_gain = Eigen::VectorXd::Ones(config.conv_filters);
        p.ln_bias = Eigen::VectorXd::Zero(config.conv_filters);
        p.has_res_proj = width != config.conv_filters;
        if (p.has_res_proj) p.w_res = glorot(width, config.conv_filters, rng);
        model.blocks.push_back(std::move(p));
        width = config.conv_filters;
    }
    model.ffn_w1 = glorot(config.ffn_in_width(), config.ffn_hidden, rng);
    model.ffn_b1 = Eigen::VectorXd::Zero(config.ffn_hidden);
    model.ffn_w2 = glorot(config.ffn_hidden, config.out_dim, rng);
    model.ffn_b2 = Eigen::VectorXd::Zero(config.out_dim);
    if (config.query_mode == QueryMode::Linear)
        model.w_query = glorot(config.out_dim, config.input_dim, rng);
    return model;
}

namespace {
constexpr char kModelMagic[4] = {'R', 'M', 'D', 'L'};
constexpr char kRepsMagic[4] = {'V', 'R', 'E', 'P'};
constexpr uint32_t kVersion = 1;

void serialize_model(const RoutingModel& model, std::ostream& out) {
    io::write_magic(out, kModelMagic);
    io::write_pod(out, kVersion);
    io::write_pod(out, static_cast<uint32_t>(model.config.input_dim));
    io::write_pod(out, static_cast<uint32_t>(model.config.out_dim));
    io::write_pod(out, static_cast<uint32_t>(model.config.conv_blocks));
    io::write_pod(out, static_cast<uint32_t>(model.config.conv_filters));
    io::write_pod(out, static_cast<uint32_t>(model.config.ffn_hidden));
    io::write_pod(out, static_cast<uint32_t>(model.config.query_mode == QueryMode::Linear ? 1 : 0));
    auto views = param_views(const_cast<RoutingModel&>(model));
    for (const auto& view : views)
        io::write_array(out, view.data, static_cast<size_t>(view.size));
}

uint64_t fnv1a(const std::string& bytes) {
    uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

}  // namespace

void save_model(const RoutingModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("model file not writable: " + path);
    serialize_model(model, out);
    if (!out) throw FormatError("model write failed: " + path);
}

RoutingModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("model file not readable: " + path);
    io::expect_magic(in, kModelMagic, path.c_str());
    if (io::read_pod<uint32_t>(in, "version") != kVersion)
        throw FormatError("model: unsupported version in " + path);
    ModelConfig config;
    config.input_dim = static_cast<int>(io::read_pod<uint32_t>(in, "input_dim"));
    config.out_dim = static_cast<int>(io::read_pod<uint32_t>(in, "out_dim"));
    config.conv_blocks = static_cast<int>(io::read_pod<uint32_t>(in, "conv_blocks"));
    config.conv_filters = static_cast<int>(io::read_pod<uint32_t>(in, "conv_filters"));
    config.ffn_hidden = static_cast<int>(io::read_pod<uint32_t>(in, "ffn_hidden"));
    config.query_mode =
        io::read_pod<uint32_t>(in, "query_mode") != 0 ? QueryMode::Linear : QueryMode::Identity;

    RoutingModel model = init_model(config, 0);
    for (const auto& view : param_views(model))
        io::read_array(in, view.data, static_cast<size_t>(view.size), view.name.c_str());
    return model;
}

uint64_t model_fingerprint(const RoutingModel& model) {
    std::ostringstream buffer(std::ios::binary);
    serialize_model(model, buffer);
    return fnv1a(buffer.str());
}

void save_representations(const VertexRepresentations& reps, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("representations file not writable: " + path);
    io::write_magic(out, kRepsMagic);
    io::write_pod(out, kVersion);
    io::write_pod(out, static_cast<uint64_t>(reps.reps.rows()));
    io::write_pod(out, static_cast<uint64_t>(reps.reps.cols()));
    io::write_pod(out, reps.model_fingerprint);
    io::write_array(out, reps.reps.data(), static_cast<size_t>(reps.reps.size()));
    if (!out) throw FormatError("representations write failed: " + path);
}

VertexRepresentations load_representations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("representations file not readable: " + path);
    io::expect_magic(in, kRepsMagic, path.c_str());
    if (io::read_pod<uint32_t>(in, "version") != kVersion)
        throw FormatError("representations: unsupported version in " + path);
    VertexRepresentations reps;
    const uint64_t rows = io::read_pod<uint64_t>(in, "rows");
    const uint64_t cols = io::read_pod<uint64_t>(in, "cols");
    reps.model_fingerprint = io::read_pod<uint64_t>(in, "fingerprint");
    reps.reps.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    io::read_array(in, reps.reps.data(), static_cast<size_t>(rows * cols), "representations");
    return reps;
}

}  // namespace annroute
