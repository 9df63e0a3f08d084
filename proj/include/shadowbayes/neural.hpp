#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shadowbayes/encoding.hpp"

namespace shadowbayes {

enum class HeadMode : std::uint8_t { Residual = 0, Direct = 1 };

struct NetworkConfig {
  int d_in = 0;
  int d_h = 128;
  int heads = 4;
  int inducing = 32;
  bool mask_padding = false;  // padded rows are fed through attention unmasked by default
  HeadMode mode = HeadMode::Residual;
  double f_l = 0.0;
  double f_u = 1.0;
  FeatureAffine affine;
};

struct LinearLayer {
  Eigen::MatrixXd w;  // in x out, applied as x·w + b
  Eigen::VectorXd b;
};

struct LayerNormLayer {
  Eigen::VectorXd gamma, beta;
};

struct MabParams {
  LinearLayer q, k, v;  // projections into d_h
  LinearLayer ff;       // single relu layer with residual
  LayerNormLayer ln0, ln1;
};

// ISAB x2 -> PMA -> SAB x2 -> linear head.
struct SetTransformerParams {
  NetworkConfig cfg;
  MabParams isab1_ab, isab1_ba;
  Eigen::MatrixXd isab1_inducing;  // m x d_h
  MabParams isab2_ab, isab2_ba;
  Eigen::MatrixXd isab2_inducing;
  MabParams pma;
  Eigen::MatrixXd pma_seed;  // 1 x d_h
  MabParams sab1, sab2;
  LinearLayer head;  // d_h -> 1
};

template <typename Params, typename F>
void visit_tensors(Params&& p, F&& f) {
  auto lin = [&](const std::string& prefix, auto&& l) {
    f(prefix + ".w", l.w);
    f(prefix + ".b", l.b);
  };
  auto ln = [&](const std::string& prefix, auto&& l) {
    f(prefix + ".gamma", l.gamma);
    f(prefix + ".beta", l.beta);
  };
  auto mab = [&](const std::string& prefix, auto&& m) {
    lin(prefix + ".q", m.q);
    lin(prefix + ".k", m.k);
    lin(prefix + ".v", m.v);
    lin(prefix + ".ff", m.ff);
    ln(prefix + ".ln0", m.ln0);
    ln(prefix + ".ln1", m.ln1);
  };
  mab("isab1.ab", p.isab1_ab);
  mab("isab1.ba", p.isab1_ba);
  f("isab1.inducing", p.isab1_inducing);
  mab("isab2.ab", p.isab2_ab);
  mab("isab2.ba", p.isab2_ba);
  f("isab2.inducing", p.isab2_inducing);
  mab("pma", p.pma);
  f("pma.seed", p.pma_seed);
  mab("sab1", p.sab1);
  mab("sab2", p.sab2);
  lin("head", p.head);
}

// Flat ordered views over every trainable tensor; the order is fixed by
// visit_tensors, so structurally equal params zip element for element.
std::vector<std::pair<double*, std::size_t>> tensor_views(SetTransformerParams& p);

SetTransformerParams init_params(const NetworkConfig& cfg, Rng& rng);
SetTransformerParams zeros_like(const SetTransformerParams& p);

struct LayerNormCache {
  Eigen::MatrixXd xhat;
  Eigen::VectorXd inv_std;
};

struct MabCache {
  Eigen::MatrixXd q_in, kv_in;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> attn;
  Eigen::MatrixXd att_out, h;
  LayerNormCache ln0;
  Eigen::MatrixXd h_norm, ff_pre, g;
  LayerNormCache ln1;
  Eigen::MatrixXd out;
};

struct ForwardCache {
  Eigen::MatrixXd x0;
  std::vector<char> key_mask;  // nonempty only when masking is enabled
  MabCache isab1_ab, isab1_ba, isab2_ab, isab2_ba, pma, sab1, sab2;
  double x = 0.0;
};

double forward(const SetTransformerParams& p, const FeatureMatrix& v);
double forward(const SetTransformerParams& p, const FeatureMatrix& v, ForwardCache& cache);

// d(loss)/dx propagated back through the whole stack; accumulates into grads.
void backward(const SetTransformerParams& p, const ForwardCache& cache, double dx,
              SetTransformerParams& grads);

// sigma(x, F) = F_c (1 - tanh|x|) + 1_{x>0} tanh x with F_c = clamp(F, f_l, f_u).
double calibrate(double x, double baseline_f, double f_l, double f_u);
// Subgradient convention at x = 0: d|x|/dx = +1.
double calibrate_dx(double x, double baseline_f, double f_l, double f_u);
double logistic(double x);

double predict(const SetTransformerParams& p, const ExperimentInstance& instance);

// Squared-error loss for one instance; gradient accumulated into grads.
double instance_loss_and_grad(const SetTransformerParams& p, const ExperimentInstance& inst,
                              double target, SetTransformerParams& grads, ForwardCache& cache);

struct AdamState {
  SetTransformerParams m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step(SetTransformerParams& theta, SetTransformerParams& grad, AdamState& state,
               double learning_rate);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 50;
  int epochs = 10;
  std::uint64_t seed = 0;
  int n_max = 100;
  double f_l = 0.0;
  double f_u = 1.0;
  int d_h = 128;
  int heads = 4;
  int inducing = 32;
  HeadMode mode = HeadMode::Residual;
  bool mask_padding = false;
  int threads = 1;
};

struct TrainResult {
  SetTransformerParams params;
  std::vector<double> epoch_loss;
  AdamState adam;
};

// Deterministic given (config.seed, dataset order); batch members may be
// processed concurrently, gradients reduce in slot order.
TrainResult train(const TrainConfig& config, const std::vector<ExperimentInstance>& dataset);

void save_checkpoint(const std::string& path, const SetTransformerParams& p,
                     const AdamState* adam = nullptr);
struct Checkpoint {
  SetTransformerParams params;
  std::optional<AdamState> adam;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace shadowbayes
