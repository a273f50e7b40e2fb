#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "annroute/dataset.hpp"

namespace annroute {

enum class QueryMode { Identity, Linear };

struct ModelConfig {
    int input_dim = 0;    // D
    int out_dim = 0;      // d
    int conv_blocks = 3;
    int conv_filters = 256;
    int ffn_hidden = 4096;
    QueryMode query_mode = QueryMode::Identity;

    int ffn_in_width() const { return conv_blocks > 0 ? conv_filters : input_dim; }
    void validate() const;
};

/// Sparse symmetric propagation operator Deg^{-1/2} (A + I) Deg^{-1/2} in CSR
/// form. Rows are parallelizable independently, so the OpenMP product matches
/// the serial one bit-for-bit.
struct CsrMatrix {
    int n = 0;
    std::vector<int> row_ptr;
    std::vector<int> col;
    std::vector<double> val;

    Eigen::MatrixXd multiply(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd multiply_serial(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd dense() const;
};

CsrMatrix normalized_adjacency(const std::vector<std::vector<uint32_t>>& undirected);

struct ConvBlockParams {
    Eigen::MatrixXd w_conv;   // in x filters
    Eigen::MatrixXd w_fc;     // filters x filters
    Eigen::VectorXd b_fc;     // filters
    Eigen::VectorXd ln_gain;  // filters
    Eigen::VectorXd ln_bias;  // filters
    Eigen::MatrixXd w_res;    // in x filters; only when the block changes width
    bool has_res_proj = false;
};

/// All learnable parameters of the database branch and the query branch.
struct RoutingModel {
    ModelConfig config;
    std::vector<ConvBlockParams> blocks;
    Eigen::MatrixXd ffn_w1;  // ffn_in x hidden
    Eigen::VectorXd ffn_b1;
    Eigen::MatrixXd ffn_w2;  // hidden x out
    Eigen::VectorXd ffn_b2;
    Eigen::MatrixXd w_query;  // out x D; Linear mode only
};

/// Gradient accumulator with the same shapes as the model parameters.
struct Gradients {
    std::vector<ConvBlockParams> blocks;
    Eigen::MatrixXd ffn_w1;
    Eigen::VectorXd ffn_b1;
    Eigen::MatrixXd ffn_w2;
    Eigen::VectorXd ffn_b2;
    Eigen::MatrixXd w_query;

    void set_zero();
    bool all_finite() const;
};

Gradients make_gradients(const RoutingModel& model);

/// Flat view over every parameter (or gradient) tensor in a fixed
/// enumeration order shared by the optimizer, serialization and tests.
struct ParamView {
    std::string name;
    double* data;
    Eigen::Index size;
};
std::vector<ParamView> param_views(RoutingModel& model);
std::vector<ParamView> param_views(Gradients& grads, const RoutingModel& model);

/// Intermediate activations retained for the backward pass.
struct ForwardCache {
    struct Block {
        Eigen::MatrixXd x_in, z, u, a, xhat;
        Eigen::VectorXd inv_std;
    };
    std::vector<Block> blocks;
    Eigen::MatrixXd ffn_in, y1, a1;
};

double elu(double x);
double elu_derivative(double x);

/// Whole-graph database branch: conv blocks then the two-layer FFN head.
/// Returns the N x d vertex representations.
Eigen::MatrixXd f_forward(const RoutingModel& model, const CsrMatrix& a_hat,
                          const RowMatrixF& base, ForwardCache* cache = nullptr);

/// Query branch: identity (d == D) or a learned linear map.
Eigen::VectorXd g_forward(const RoutingModel& model, const float* q);

/// Exact reverse-mode gradients of every database-branch parameter given the
/// loss gradient at the representations. Accumulates into `grads` and returns
/// the gradient w.r.t. the input features (rarely needed, kept for checks).
Eigen::MatrixXd f_backward(const RoutingModel& model, const CsrMatrix& a_hat,
                           const ForwardCache& cache, const Eigen::MatrixXd& d_reps,
                           Gradients& grads);

struct AdamState {
    std::vector<Eigen::VectorXd> m;
    std::vector<Eigen::VectorXd> v;
    long t = 0;
};
AdamState make_adam_state(RoutingModel& model);
void adam_step(RoutingModel& model, Gradients& grads, AdamState& state, double lr);

/// Linear warmup from 0.04*max_lr to max_lr over the first 30% of steps,
/// then linear decay back to 0.04*max_lr.
double one_cycle_lr(long step, long total_steps, double max_lr);

RoutingModel init_model(const ModelConfig& config, uint64_t seed);

void save_model(const RoutingModel& model, const std::string& path);
RoutingModel load_model(const std::string& path);
uint64_t model_fingerprint(const RoutingModel& model);

struct VertexRepresentations {
    Eigen::MatrixXd reps;  // N x d
    uint64_t model_fingerprint = 0;
};

void save_representations(const VertexRepresentations& reps, const std::string& path);
VertexRepresentations load_representations(const std::string& path);

}  // namespace annroute
