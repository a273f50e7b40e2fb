#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "annroute/gcn_model.hpp"
#include "annroute/pca.hpp"
#include "annroute/binary_io.hpp"
#include "support/oracles.hpp"

using namespace annroute;

namespace {

RowMatrixF random_features(Eigen::Index n, Eigen::Index d, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist;
    RowMatrixF m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

// Naive-loop reference for one conv block, sharing no code with f_forward.
std::vector<std::vector<double>> block_reference(const std::vector<std::vector<double>>& ahat,
                                                 const std::vector<std::vector<double>>& x,
                                                 const ConvBlockParams& p) {
    const size_t n = x.size();
    const size_t in = x[0].size();
    const size_t filters = static_cast<size_t>(p.w_conv.cols());

    auto matmul = [](const std::vector<std::vector<double>>& a, const Eigen::MatrixXd& w) {
        std::vector<std::vector<double>> out(a.size(),
                                             std::vector<double>(static_cast<size_t>(w.cols()), 0));
        for (size_t i = 0; i < a.size(); ++i)
            for (size_t k = 0; k < a[0].size(); ++k)
                for (Eigen::Index j = 0; j < w.cols(); ++j)
                    out[i][static_cast<size_t>(j)] += a[i][k] * w(static_cast<Eigen::Index>(k), j);
        return out;
    };

    std::vector<std::vector<double>> z(n, std::vector<double>(in, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            for (size_t f = 0; f < in; ++f) z[i][f] += ahat[i][j] * x[j][f];
    auto u = matmul(z, p.w_conv);
    for (auto& row : u)
        for (auto& v : row) v = v > 0 ? v : std::expm1(v);
    auto h = matmul(u, p.w_fc);
    for (size_t i = 0; i < n; ++i)
        for (size_t f = 0; f < filters; ++f) h[i][f] += p.b_fc(static_cast<Eigen::Index>(f));

    std::vector<std::vector<double>> res;
    if (p.has_res_proj)
        res = matmul(x, p.w_res);
    else
        res = x;
    for (size_t i = 0; i < n; ++i)
        for (size_t f = 0; f < filters; ++f) h[i][f] += res[i][f];

    for (size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (double v : h[i]) mean += v;
        mean /= static_cast<double>(filters);
        double var = 0.0;
        for (double v : h[i]) var += (v - mean) * (v - mean);
        var /= static_cast<double>(filters);
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (size_t f = 0; f < filters; ++f)
            h[i][f] = (h[i][f] - mean) * inv * p.ln_gain(static_cast<Eigen::Index>(f)) +
                      p.ln_bias(static_cast<Eigen::Index>(f));
    }
    return h;
}

struct FdInstance {
    ModelConfig config;
    RoutingModel model;
    CsrMatrix a_hat;
    RowMatrixF base;
    Eigen::MatrixXd coeffs;   // random linear functional over the representations
    Eigen::VectorXd q_coeff;  // functional over the query representation (Linear mode)
    RowMatrixF query;
};

FdInstance make_fd_instance(uint64_t seed, int conv_blocks, int filters, int hidden,
                            QueryMode mode) {
    FdInstance inst;
    std::mt19937_64 rng(seed ^ 0xabcdef);
    inst.config.input_dim = 8;
    inst.config.out_dim = mode == QueryMode::Identity ? 8 : 4;
    inst.config.conv_blocks = conv_blocks;
    inst.config.conv_filters = filters;
    inst.config.ffn_hidden = hidden;
    inst.config.query_mode = mode;
    inst.model = init_model(inst.config, seed);
    inst.base = random_features(12, 8, seed + 1);
    const auto g = testsupport::random_graph(12, 4, rng);
    inst.a_hat = normalized_adjacency(symmetrize(g));
    inst.coeffs = Eigen::MatrixXd::Zero(12, inst.config.out_dim);
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < inst.coeffs.size(); ++i) inst.coeffs.data()[i] = nd(rng);
    inst.q_coeff = Eigen::VectorXd::Zero(inst.config.out_dim);
    for (Eigen::Index i = 0; i < inst.q_coeff.size(); ++i) inst.q_coeff(i) = nd(rng);
    inst.query = random_features(1, 8, seed + 2);
    return inst;
}

double fd_loss(const FdInstance& inst, const RoutingModel& model) {
    const Eigen::MatrixXd reps = f_forward(model, inst.a_hat, inst.base);
    double loss = reps.cwiseProduct(inst.coeffs).sum();
    if (inst.config.query_mode == QueryMode::Linear)
        loss += inst.q_coeff.dot(g_forward(model, inst.query.row(0).data()));
    return loss;
}

// Central finite differences over every parameter against the analytic pass.
void check_gradients(FdInstance& inst, double step, double tol) {
    ForwardCache cache;
    f_forward(inst.model, inst.a_hat, inst.base, &cache);
    Gradients grads = make_gradients(inst.model);
    f_backward(inst.model, inst.a_hat, cache, inst.coeffs, grads);
    if (inst.config.query_mode == QueryMode::Linear) {
        Eigen::VectorXd qd(inst.config.input_dim);
        for (int i = 0; i < inst.config.input_dim; ++i) qd(i) = inst.query(0, i);
        grads.w_query += inst.q_coeff * qd.transpose();
    }

    auto params = param_views(inst.model);
    auto analytic = param_views(grads, inst.model);
    for (size_t p = 0; p < params.size(); ++p) {
        for (Eigen::Index i = 0; i < params[p].size; ++i) {
            const double saved = params[p].data[i];
            params[p].data[i] = saved + step;
            const double up = fd_loss(inst, inst.model);
            params[p].data[i] = saved - step;
            const double down = fd_loss(inst, inst.model);
            params[p].data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double exact = analytic[p].data[i];
            const double err = std::abs(numeric - exact);
            const bool ok = err <= tol * std::max({std::abs(numeric), std::abs(exact)}) ||
                            err < 1e-9;
            if (!ok) {
                CAPTURE(params[p].name);
                CAPTURE(i);
                CAPTURE(numeric);
                CAPTURE(exact);
            }
            CHECK(ok);
        }
    }
}

}  // namespace

TEST_CASE("normalized adjacency basics") {
    SUBCASE("single vertex") {
        const auto a_hat = normalized_adjacency({{}});
        CHECK(a_hat.dense() == Eigen::MatrixXd::Ones(1, 1));
    }
    SUBCASE("two connected vertices give all entries 1/2") {
        const auto a_hat = normalized_adjacency({{1}, {0}});
        const auto dense = a_hat.dense();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) CHECK(dense(i, j) == doctest::Approx(0.5));
    }
}

TEST_CASE("normalized adjacency is symmetric with spectral radius at most one") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 8; ++trial) {
        const uint32_t n = std::uniform_int_distribution<uint32_t>(2, 50)(rng);
        const auto g = testsupport::random_graph(n, 5, rng);
        SimilarityGraph wrapper;
        wrapper.adjacency = g.adjacency;
        wrapper.max_degree = g.max_degree;
        const auto a_hat = normalized_adjacency(symmetrize(wrapper));
        const auto dense = a_hat.dense();
        CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() < 1e-12);

        std::vector<std::vector<double>> a(n, std::vector<double>(n));
        for (uint32_t i = 0; i < n; ++i)
            for (uint32_t j = 0; j < n; ++j) a[i][j] = dense(i, j);
        std::vector<double> eigenvalues;
        std::vector<std::vector<double>> eigenvectors;
        testsupport::jacobi_eigen(a, eigenvalues, eigenvectors);
        for (double ev : eigenvalues) CHECK(std::abs(ev) <= 1.0 + 1e-6);
    }
}

TEST_CASE("csr product matches its serial reference and a dense product") {
    std::mt19937_64 rng(5);
    const auto g = testsupport::random_graph(40, 5, rng);
    SimilarityGraph wrapper;
    wrapper.adjacency = g.adjacency;
    const auto a_hat = normalized_adjacency(symmetrize(wrapper));
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(40, 7);
    const Eigen::MatrixXd parallel = a_hat.multiply(x);
    const Eigen::MatrixXd serial = a_hat.multiply_serial(x);
    CHECK(parallel == serial);
    CHECK((parallel - a_hat.dense() * x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("elu fixed points") {
    CHECK(elu(0.0) == 0.0);
    CHECK(elu(1.0) == 1.0);
    CHECK(elu(-745.0) == doctest::Approx(-1.0));
    CHECK(elu_derivative(2.0) == 1.0);
    CHECK(elu_derivative(-1.0) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("conv block matches the naive dense reference") {
    std::mt19937_64 rng(11);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        ModelConfig config;
        config.input_dim = 5;
        config.out_dim = 5;
        config.conv_blocks = 1;
        config.conv_filters = 6;
        config.ffn_hidden = 4;
        const auto model = init_model(config, seed);
        const auto base = random_features(8, 5, seed + 10);
        const auto g = testsupport::random_graph(8, 3, rng);
        SimilarityGraph wrapper;
        wrapper.adjacency = g.adjacency;
        const auto a_hat = normalized_adjacency(symmetrize(wrapper));

        ForwardCache cache;
        f_forward(model, a_hat, base, &cache);
        // reconstruct the block output from the cache: gain * xhat + bias
        Eigen::MatrixXd block_out =
            (cache.blocks[0].xhat.array().rowwise() *
             model.blocks[0].ln_gain.transpose().array())
                .matrix()
                .rowwise() +
            model.blocks[0].ln_bias.transpose();

        const auto dense = a_hat.dense();
        std::vector<std::vector<double>> ahat(8, std::vector<double>(8));
        std::vector<std::vector<double>> x(8, std::vector<double>(5));
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) ahat[i][j] = dense(i, j);
            for (int j = 0; j < 5; ++j) x[i][j] = static_cast<double>(base(i, j));
        }
        const auto expected = block_reference(ahat, x, model.blocks[0]);
        for (int i = 0; i < 8; ++i)
            for (int f = 0; f < 6; ++f)
                CHECK(block_out(i, f) == doctest::Approx(expected[i][f]).epsilon(1e-6));
    }
}

TEST_CASE("layer norm rows are standardized before gain and bias") {
    ModelConfig config;
    config.input_dim = 6;
    config.out_dim = 6;
    config.conv_blocks = 2;
    config.conv_filters = 8;
    config.ffn_hidden = 4;
    const auto model = init_model(config, 4);
    const auto base = random_features(10, 6, 42);
    std::mt19937_64 rng(13);
    const auto g = testsupport::random_graph(10, 3, rng);
    SimilarityGraph wrapper;
    wrapper.adjacency = g.adjacency;
    const auto a_hat = normalized_adjacency(symmetrize(wrapper));
    ForwardCache cache;
    f_forward(model, a_hat, base, &cache);
    for (const auto& block : cache.blocks) {
        const Eigen::VectorXd mean = block.xhat.rowwise().mean();
        CHECK(mean.cwiseAbs().maxCoeff() < 1e-6);
        const Eigen::VectorXd var = block.xhat.cwiseProduct(block.xhat).rowwise().mean();
        CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("layer norm is invariant to constant row shifts") {
    // shifting all inputs of a row leaves the normalized output unchanged
    Eigen::MatrixXd row = Eigen::MatrixXd::Random(1, 16);
    auto normalize = [](const Eigen::MatrixXd& r) {
        const double mean = r.mean();
        const double var = (r.array() - mean).square().mean();
        return ((r.array() - mean) / std::sqrt(var + 1e-5)).matrix().eval();
    };
    const Eigen::MatrixXd shifted = row.array() + 3.25;
    CHECK((normalize(row) - normalize(shifted)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("f_forward output shape, determinism, and zero final layer") {
    ModelConfig config;
    config.input_dim = 8;
    config.out_dim = 8;
    config.conv_blocks = 3;
    config.conv_filters = 16;
    config.ffn_hidden = 32;
    auto model = init_model(config, 7);
    const auto base = random_features(20, 8, 3);
    std::mt19937_64 rng(17);
    const auto g = testsupport::random_graph(20, 4, rng);
    SimilarityGraph wrapper;
    wrapper.adjacency = g.adjacency;
    const auto a_hat = normalized_adjacency(symmetrize(wrapper));

    const auto reps1 = f_forward(model, a_hat, base);
    const auto reps2 = f_forward(model, a_hat, base);
    CHECK(reps1.rows() == 20);
    CHECK(reps1.cols() == 8);
    CHECK(reps1 == reps2);
    CHECK(reps1.allFinite());

    model.ffn_w2.setZero();
    model.ffn_b2.setZero();
    const auto zeros = f_forward(model, a_hat, base);
    CHECK(zeros.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("query branch modes") {
    ModelConfig config;
    config.input_dim = 6;
    config.out_dim = 6;
    config.conv_blocks = 0;
    config.ffn_hidden = 4;
    const auto identity_model = init_model(config, 1);
    const auto q = random_features(1, 6, 9);
    const auto out = g_forward(identity_model, q.row(0).data());
    for (int i = 0; i < 6; ++i) CHECK(out(i) == static_cast<double>(q(0, i)));

    config.query_mode = QueryMode::Linear;
    config.out_dim = 3;
    auto linear_model = init_model(config, 2);
    CHECK(g_forward(linear_model, q.row(0).data()).size() == 3);

    // with the projection set to PCA rows, g matches the uncentered transform
    const auto base = random_features(50, 6, 10);
    const auto pca = pca_fit(base, 3);
    linear_model.w_query = pca.components.cast<double>();
    PCAModel uncentered = pca;
    uncentered.mean.setZero();
    RowMatrixF qf = q;
    const auto via_pca = pca_transform(uncentered, qf);
    const auto via_g = g_forward(linear_model, q.row(0).data());
    for (int i = 0; i < 3; ++i)
        CHECK(via_g(i) == doctest::Approx(static_cast<double>(via_pca(0, i))).epsilon(1e-6));
}

TEST_CASE("zero output gradient produces zero parameter gradients") {
    auto inst = make_fd_instance(5, 2, 6, 5, QueryMode::Linear);
    ForwardCache cache;
    f_forward(inst.model, inst.a_hat, inst.base, &cache);
    Gradients grads = make_gradients(inst.model);
    f_backward(inst.model, inst.a_hat, cache, Eigen::MatrixXd::Zero(12, inst.config.out_dim),
               grads);
    for (const auto& view : param_views(grads, inst.model))
        for (Eigen::Index i = 0; i < view.size; ++i) CHECK(view.data[i] == 0.0);
}

TEST_CASE("parameter gradients match central finite differences") {
    for (uint64_t seed : {11ull, 12ull, 13ull, 14ull, 15ull}) {
        auto inst = make_fd_instance(seed, 3, 6, 5, QueryMode::Linear);
        check_gradients(inst, 1e-4, 1e-4);
    }
}

TEST_CASE("gradients also hold without conv blocks and with identity queries") {
    auto inst = make_fd_instance(21, 0, 6, 7, QueryMode::Identity);
    check_gradients(inst, 1e-4, 1e-4);
}

TEST_CASE("adam first step moves a constant-gradient parameter by about -lr") {
    ModelConfig config;
    config.input_dim = 1;
    config.out_dim = 1;
    config.conv_blocks = 0;
    config.ffn_hidden = 1;
    auto model = init_model(config, 3);
    auto state = make_adam_state(model);
    auto grads = make_gradients(model);
    for (const auto& view : param_views(grads, model))
        for (Eigen::Index i = 0; i < view.size; ++i) view.data[i] = 1.0;

    std::vector<double> before;
    for (const auto& view : param_views(model))
        for (Eigen::Index i = 0; i < view.size; ++i) before.push_back(view.data[i]);

    adam_step(model, grads, state, 0.01);

    size_t idx = 0;
    for (const auto& view : param_views(model))
        for (Eigen::Index i = 0; i < view.size; ++i)
            CHECK(view.data[i] == doctest::Approx(before[idx++] - 0.01).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    ModelConfig config;
    config.input_dim = 2;
    config.out_dim = 2;
    config.conv_blocks = 1;
    config.conv_filters = 3;
    config.ffn_hidden = 2;
    auto model = init_model(config, 5);
    auto state = make_adam_state(model);
    auto grads = make_gradients(model);
    const auto before = model;
    adam_step(model, grads, state, 0.5);
    for (size_t v = 0; v < param_views(model).size(); ++v) {
        auto now = param_views(model)[v];
        auto orig = param_views(const_cast<RoutingModel&>(before))[v];
        for (Eigen::Index i = 0; i < now.size; ++i) CHECK(now.data[i] == orig.data[i]);
    }
}

TEST_CASE("one-cycle schedule shape") {
    const double max_lr = 1e-3;
    CHECK(one_cycle_lr(0, 1000, max_lr) == doctest::Approx(0.04 * max_lr));
    CHECK(one_cycle_lr(300, 1000, max_lr) == doctest::Approx(max_lr));
    CHECK(one_cycle_lr(1000, 1000, max_lr) == doctest::Approx(0.04 * max_lr));
    CHECK(one_cycle_lr(150, 1000, max_lr) > 0.04 * max_lr);
    CHECK(one_cycle_lr(150, 1000, max_lr) < max_lr);
    CHECK(one_cycle_lr(650, 1000, max_lr) > 0.04 * max_lr);
    CHECK(one_cycle_lr(650, 1000, max_lr) < max_lr);
}

TEST_CASE("init is deterministic per seed and distinct across seeds") {
    ModelConfig config;
    config.input_dim = 4;
    config.out_dim = 4;
    config.conv_blocks = 1;
    config.conv_filters = 5;
    config.ffn_hidden = 6;
    auto a = init_model(config, 1);
    auto b = init_model(config, 1);
    auto c = init_model(config, 2);
    CHECK(a.ffn_w1 == b.ffn_w1);
    CHECK(a.blocks[0].w_conv == b.blocks[0].w_conv);
    CHECK(a.ffn_w1 != c.ffn_w1);
    CHECK(model_fingerprint(a) == model_fingerprint(b));
    CHECK(model_fingerprint(a) != model_fingerprint(c));

    CHECK_THROWS_AS(
        [] {
            ModelConfig bad;
            bad.input_dim = 4;
            bad.out_dim = 3;  // identity queries need matching dims
            bad.query_mode = QueryMode::Identity;
            return init_model(bad, 0);
        }(),
        std::invalid_argument);
}

TEST_CASE("model file round trip preserves every byte and the fingerprint") {
    ModelConfig config;
    config.input_dim = 6;
    config.out_dim = 3;
    config.conv_blocks = 2;
    config.conv_filters = 5;
    config.ffn_hidden = 7;
    config.query_mode = QueryMode::Linear;
    auto model = init_model(config, 17);
    const auto path = (std::filesystem::temp_directory_path() / "model.rmdl").string();
    save_model(model, path);
    auto back = load_model(path);
    CHECK(model_fingerprint(back) == model_fingerprint(model));
    CHECK(back.ffn_w1 == model.ffn_w1);
    CHECK(back.w_query == model.w_query);
    CHECK(back.blocks[1].ln_gain == model.blocks[1].ln_gain);

    // scores identical before and after persistence
    const auto base = random_features(9, 6, 4);
    std::mt19937_64 rng(19);
    const auto g = testsupport::random_graph(9, 3, rng);
    SimilarityGraph wrapper;
    wrapper.adjacency = g.adjacency;
    const auto a_hat = normalized_adjacency(symmetrize(wrapper));
    CHECK(f_forward(model, a_hat, base) == f_forward(back, a_hat, base));

    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "JUNKJUNKJUNK";
    bad.close();
    CHECK_THROWS_AS(load_model(path), FormatError);
}

TEST_CASE("representations round trip with their fingerprint") {
    VertexRepresentations reps;
    reps.reps = Eigen::MatrixXd::Random(14, 3);
    reps.model_fingerprint = 0xdeadbeefcafe1234ULL;
    const auto path = (std::filesystem::temp_directory_path() / "verts.vrep").string();
    save_representations(reps, path);
    const auto back = load_representations(path);
    CHECK(back.model_fingerprint == reps.model_fingerprint);
    CHECK(back.reps == reps.reps);
}
