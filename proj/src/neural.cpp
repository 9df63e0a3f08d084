#include "shadowbayes/neural.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "shadowbayes/container.hpp"

namespace shadowbayes {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskedScore = -1e30;

Eigen::MatrixXd xavier_uniform(long rows, long cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (long c = 0; c < cols; ++c) {
    for (long r = 0; r < rows; ++r) m(r, c) = u(rng);
  }
  return m;
}

LinearLayer init_linear(long d_in, long d_out, Rng& rng) {
  return LinearLayer{xavier_uniform(d_in, d_out, rng), Eigen::VectorXd::Zero(d_out)};
}

MabParams init_mab(long d_q, long d_kv, long d_h, Rng& rng) {
  MabParams m;
  m.q = init_linear(d_q, d_h, rng);
  m.k = init_linear(d_kv, d_h, rng);
  m.v = init_linear(d_kv, d_h, rng);
  m.ff = init_linear(d_h, d_h, rng);
  m.ln0 = LayerNormLayer{Eigen::VectorXd::Ones(d_h), Eigen::VectorXd::Zero(d_h)};
  m.ln1 = LayerNormLayer{Eigen::VectorXd::Ones(d_h), Eigen::VectorXd::Zero(d_h)};
  return m;
}

Eigen::MatrixXd layernorm_forward(const Eigen::MatrixXd& x, const LayerNormLayer& p,
                                  LayerNormCache& c) {
  const long rows = x.rows(), cols = x.cols();
  c.xhat.resize(rows, cols);
  c.inv_std.resize(rows);
  Eigen::MatrixXd out(rows, cols);
  for (long r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    c.inv_std(r) = inv;
    c.xhat.row(r) = (x.row(r).array() - mu) * inv;
    out.row(r) = c.xhat.row(r).cwiseProduct(p.gamma.transpose()) + p.beta.transpose();
  }
  return out;
}

Eigen::MatrixXd layernorm_backward(const Eigen::MatrixXd& dout, const LayerNormCache& c,
                                   const LayerNormLayer& p, LayerNormLayer& grad) {
  const long rows = dout.rows(), cols = dout.cols();
  Eigen::MatrixXd dx(rows, cols);
  for (long r = 0; r < rows; ++r) {
    grad.gamma += dout.row(r).cwiseProduct(c.xhat.row(r)).transpose();
    grad.beta += dout.row(r).transpose();
    const Eigen::RowVectorXd g = dout.row(r).cwiseProduct(p.gamma.transpose());
    const double mean_g = g.mean();
    const double mean_gx = g.cwiseProduct(c.xhat.row(r)).mean();
    dx.row(r) = (g.array() - mean_g - c.xhat.row(r).array() * mean_gx) * c.inv_std(r);
  }
  return dx;
}

void softmax_rows_in_place(Eigen::MatrixXd& s) {
  for (long r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

const Eigen::MatrixXd& mab_forward(const MabParams& p, int heads, const Eigen::MatrixXd& q_in,
                                   const Eigen::MatrixXd& kv_in, const std::vector<char>* key_mask,
                                   MabCache& c) {
  c.q_in = q_in;
  c.kv_in = kv_in;
  c.q = (q_in * p.q.w).rowwise() + p.q.b.transpose();
  c.k = (kv_in * p.k.w).rowwise() + p.k.b.transpose();
  c.v = (kv_in * p.v.w).rowwise() + p.v.b.transpose();
  const long d_h = p.q.w.cols();
  const long dh = d_h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  const long n_q = q_in.rows();
  c.attn.assign(heads, Eigen::MatrixXd());
  c.att_out.resize(n_q, d_h);
  for (int h = 0; h < heads; ++h) {
    Eigen::MatrixXd scores =
        (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
    if (key_mask) {
      for (long j = 0; j < scores.cols(); ++j) {
        if ((*key_mask)[static_cast<std::size_t>(j)]) scores.col(j).setConstant(kMaskedScore);
      }
    }
    softmax_rows_in_place(scores);
    c.attn[h] = std::move(scores);
    c.att_out.middleCols(h * dh, dh).noalias() = c.attn[h] * c.v.middleCols(h * dh, dh);
  }
  c.h = c.q + c.att_out;
  c.h_norm = layernorm_forward(c.h, p.ln0, c.ln0);
  c.ff_pre = (c.h_norm * p.ff.w).rowwise() + p.ff.b.transpose();
  c.g = c.h_norm + c.ff_pre.cwiseMax(0.0);
  c.out = layernorm_forward(c.g, p.ln1, c.ln1);
  return c.out;
}

// Returns (d q_in, d kv_in) and accumulates parameter gradients.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> mab_backward(const MabParams& p, int heads,
                                                         const MabCache& c,
                                                         const Eigen::MatrixXd& dout,
                                                         MabParams& grad) {
  const long d_h = p.q.w.cols();
  const long dh = d_h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_h));

  Eigen::MatrixXd dg = layernorm_backward(dout, c.ln1, p.ln1, grad.ln1);
  Eigen::MatrixXd dh_norm = dg;
  Eigen::MatrixXd dff = dg.cwiseProduct((c.ff_pre.array() > 0.0).cast<double>().matrix());
  grad.ff.w.noalias() += c.h_norm.transpose() * dff;
  grad.ff.b += dff.colwise().sum().transpose();
  dh_norm.noalias() += dff * p.ff.w.transpose();
  Eigen::MatrixXd dhm = layernorm_backward(dh_norm, c.ln0, p.ln0, grad.ln0);

  Eigen::MatrixXd dq_full = dhm;  // residual path through the projected query
  Eigen::MatrixXd dk_full = Eigen::MatrixXd::Zero(c.k.rows(), d_h);
  Eigen::MatrixXd dv_full = Eigen::MatrixXd::Zero(c.v.rows(), d_h);
  for (int h = 0; h < heads; ++h) {
    const auto datt = dhm.middleCols(h * dh, dh);
    const auto a = c.attn[h];
    Eigen::MatrixXd da = datt * c.v.middleCols(h * dh, dh).transpose();
    dv_full.middleCols(h * dh, dh).noalias() = a.transpose() * datt;
    // softmax backward, row-wise
    Eigen::MatrixXd ds(a.rows(), a.cols());
    for (long r = 0; r < a.rows(); ++r) {
      const double dot = da.row(r).cwiseProduct(a.row(r)).sum();
      ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
    }
    ds *= scale;
    dq_full.middleCols(h * dh, dh).noalias() += ds * c.k.middleCols(h * dh, dh);
    dk_full.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }

  grad.q.w.noalias() += c.q_in.transpose() * dq_full;
  grad.q.b += dq_full.colwise().sum().transpose();
  grad.k.w.noalias() += c.kv_in.transpose() * dk_full;
  grad.k.b += dk_full.colwise().sum().transpose();
  grad.v.w.noalias() += c.kv_in.transpose() * dv_full;
  grad.v.b += dv_full.colwise().sum().transpose();

  Eigen::MatrixXd dq_in = dq_full * p.q.w.transpose();
  Eigen::MatrixXd dkv_in = dk_full * p.k.w.transpose() + dv_full * p.v.w.transpose();
  return {std::move(dq_in), std::move(dkv_in)};
}

Eigen::MatrixXd standardize(const FeatureMatrix& v, const FeatureAffine& a) {
  return ((v.rows.cast<double>().array() - a.offset) / a.scale).matrix();
}

}  // namespace

std::vector<std::pair<double*, std::size_t>> tensor_views(SetTransformerParams& p) {
  std::vector<std::pair<double*, std::size_t>> out;
  visit_tensors(p, [&](const std::string&, auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

SetTransformerParams init_params(const NetworkConfig& cfg, Rng& rng) {
  if (cfg.d_in < 1 || cfg.d_h < 1 || cfg.heads < 1 || cfg.inducing < 1) {
    throw std::invalid_argument("init_params: dimensions must be positive");
  }
  if (cfg.d_h % cfg.heads != 0) {
    throw std::invalid_argument("init_params: d_h must be divisible by the head count");
  }
  if (!(cfg.f_l < cfg.f_u)) {
    throw std::invalid_argument("init_params: need f_l < f_u");
  }
  SetTransformerParams p;
  p.cfg = cfg;
  p.isab1_ab = init_mab(cfg.d_h, cfg.d_in, cfg.d_h, rng);
  p.isab1_ba = init_mab(cfg.d_in, cfg.d_h, cfg.d_h, rng);
  p.isab1_inducing = xavier_uniform(cfg.inducing, cfg.d_h, rng);
  p.isab2_ab = init_mab(cfg.d_h, cfg.d_h, cfg.d_h, rng);
  p.isab2_ba = init_mab(cfg.d_h, cfg.d_h, cfg.d_h, rng);
  p.isab2_inducing = xavier_uniform(cfg.inducing, cfg.d_h, rng);
  p.pma = init_mab(cfg.d_h, cfg.d_h, cfg.d_h, rng);
  p.pma_seed = xavier_uniform(1, cfg.d_h, rng);
  p.sab1 = init_mab(cfg.d_h, cfg.d_h, cfg.d_h, rng);
  p.sab2 = init_mab(cfg.d_h, cfg.d_h, cfg.d_h, rng);
  p.head = init_linear(cfg.d_h, 1, rng);
  return p;
}

SetTransformerParams zeros_like(const SetTransformerParams& p) {
  SetTransformerParams z = p;
  visit_tensors(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

double forward(const SetTransformerParams& p, const FeatureMatrix& v) {
  ForwardCache cache;
  return forward(p, v, cache);
}

double forward(const SetTransformerParams& p, const FeatureMatrix& v, ForwardCache& c) {
  if (v.d() != p.cfg.d_in) {
    throw std::invalid_argument("forward: feature dimension does not match the input projection");
  }
  c.x0 = standardize(v, p.cfg.affine);
  const std::vector<char>* mask = nullptr;
  if (p.cfg.mask_padding) {
    c.key_mask.assign(static_cast<std::size_t>(v.n_max()), 0);
    for (int r = v.n_valid; r < v.n_max(); ++r) c.key_mask[static_cast<std::size_t>(r)] = 1;
    mask = &c.key_mask;
  } else {
    c.key_mask.clear();
  }
  const int heads = p.cfg.heads;
  const auto& h1 = mab_forward(p.isab1_ab, heads, p.isab1_inducing, c.x0, mask, c.isab1_ab);
  const auto& y1 = mab_forward(p.isab1_ba, heads, c.x0, h1, nullptr, c.isab1_ba);
  const auto& h2 = mab_forward(p.isab2_ab, heads, p.isab2_inducing, y1, mask, c.isab2_ab);
  const auto& y2 = mab_forward(p.isab2_ba, heads, y1, h2, nullptr, c.isab2_ba);
  const auto& pooled = mab_forward(p.pma, heads, p.pma_seed, y2, mask, c.pma);
  const auto& s1 = mab_forward(p.sab1, heads, pooled, pooled, nullptr, c.sab1);
  const auto& s2 = mab_forward(p.sab2, heads, s1, s1, nullptr, c.sab2);
  c.x = (s2 * p.head.w)(0, 0) + p.head.b(0);
  return c.x;
}

void backward(const SetTransformerParams& p, const ForwardCache& c, double dx,
              SetTransformerParams& grads) {
  const int heads = p.cfg.heads;
  grads.head.w.noalias() += c.sab2.out.transpose() * dx;
  grads.head.b(0) += dx;
  Eigen::MatrixXd ds2 = dx * p.head.w.transpose();

  auto [ds1_q, ds1_k] = mab_backward(p.sab2, heads, c.sab2, ds2, grads.sab2);
  Eigen::MatrixXd ds1 = ds1_q + ds1_k;
  auto [dp_q, dp_k] = mab_backward(p.sab1, heads, c.sab1, ds1, grads.sab1);
  Eigen::MatrixXd dpooled = dp_q + dp_k;
  auto [dseed, dy2] = mab_backward(p.pma, heads, c.pma, dpooled, grads.pma);
  grads.pma_seed += dseed;
  auto [dy1_a, dh2] = mab_backward(p.isab2_ba, heads, c.isab2_ba, dy2, grads.isab2_ba);
  auto [dind2, dy1_b] = mab_backward(p.isab2_ab, heads, c.isab2_ab, dh2, grads.isab2_ab);
  grads.isab2_inducing += dind2;
  Eigen::MatrixXd dy1 = dy1_a + dy1_b;
  auto [dx0_a, dh1] = mab_backward(p.isab1_ba, heads, c.isab1_ba, dy1, grads.isab1_ba);
  auto [dind1, dx0_b] = mab_backward(p.isab1_ab, heads, c.isab1_ab, dh1, grads.isab1_ab);
  grads.isab1_inducing += dind1;
  // dx0_a + dx0_b would be the input gradient; features are data, not params.
  (void)dx0_a;
  (void)dx0_b;
}

double calibrate(double x, double baseline_f, double f_l, double f_u) {
  if (!(f_l < f_u)) {
    throw std::invalid_argument("calibrate: need f_l < f_u");
  }
  const double f_c = std::min(std::max(baseline_f, f_l), f_u);
  const double t = std::tanh(std::abs(x));
  return f_c * (1.0 - t) + (x > 0.0 ? std::tanh(x) : 0.0);
}

double calibrate_dx(double x, double baseline_f, double f_l, double f_u) {
  if (!(f_l < f_u)) {
    throw std::invalid_argument("calibrate_dx: need f_l < f_u");
  }
  const double f_c = std::min(std::max(baseline_f, f_l), f_u);
  const double th = std::tanh(x);
  const double sech2 = 1.0 - th * th;
  return x >= 0.0 ? (1.0 - f_c) * sech2 : f_c * sech2;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double predict(const SetTransformerParams& p, const ExperimentInstance& instance) {
  const double x = forward(p, instance.features);
  if (p.cfg.mode == HeadMode::Direct) return logistic(x);
  return calibrate(x, instance.baseline_f, p.cfg.f_l, p.cfg.f_u);
}

double instance_loss_and_grad(const SetTransformerParams& p, const ExperimentInstance& inst,
                              double target, SetTransformerParams& grads, ForwardCache& cache) {
  const double x = forward(p, inst.features, cache);
  double estimate, destimate_dx;
  if (p.cfg.mode == HeadMode::Direct) {
    estimate = logistic(x);
    destimate_dx = estimate * (1.0 - estimate);
  } else {
    estimate = calibrate(x, inst.baseline_f, p.cfg.f_l, p.cfg.f_u);
    destimate_dx = calibrate_dx(x, inst.baseline_f, p.cfg.f_l, p.cfg.f_u);
  }
  const double err = estimate - target;
  backward(p, cache, 2.0 * err * destimate_dx, grads);
  return err * err;
}

void adam_step(SetTransformerParams& theta, SetTransformerParams& grad, AdamState& state,
               double learning_rate) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto tv = tensor_views(theta);
  auto gv = tensor_views(grad);
  auto mv = tensor_views(state.m);
  auto vv = tensor_views(state.v);
  for (std::size_t i = 0; i < tv.size(); ++i) {
    double* t = tv[i].first;
    const double* g = gv[i].first;
    double* m = mv[i].first;
    double* v = vv[i].first;
    for (std::size_t j = 0; j < tv[i].second; ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      t[j] -= learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

TrainResult train(const TrainConfig& config, const std::vector<ExperimentInstance>& dataset) {
  if (dataset.empty()) {
    throw std::invalid_argument("train: dataset is empty");
  }
  if (config.learning_rate <= 0 || config.batch_size < 1 || config.epochs < 0 ||
      config.n_max < 1 || config.threads < 1) {
    throw std::invalid_argument("train: invalid configuration");
  }
  if (!(config.f_l < config.f_u)) {
    throw std::invalid_argument("train: need f_l < f_u");
  }
  const int d = dataset.front().features.d();
  const Ensemble ensemble = dataset.front().meta.ensemble;
  for (const auto& inst : dataset) {
    if (inst.features.d() != d) {
      throw std::invalid_argument("train: inconsistent feature dimensions");
    }
  }

  NetworkConfig net;
  net.d_in = d;
  net.d_h = config.d_h;
  net.heads = config.heads;
  net.inducing = config.inducing;
  net.mask_padding = config.mask_padding;
  net.mode = config.mode;
  net.f_l = config.f_l;
  net.f_u = config.f_u;
  net.affine = feature_affine(ensemble);

  Rng rng = make_rng(config.seed);
  TrainResult result;
  result.params = init_params(net, rng);
  result.adam.m = zeros_like(result.params);
  result.adam.v = zeros_like(result.params);

  const std::size_t count = dataset.size();
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;

  const int threads = std::min<int>(config.threads, config.batch_size);
  std::vector<SetTransformerParams> slot_grads(config.batch_size, zeros_like(result.params));
  std::vector<double> slot_loss(config.batch_size, 0.0);
  std::vector<ForwardCache> caches(threads);
  SetTransformerParams batch_grad = zeros_like(result.params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < count; start += config.batch_size) {
      const std::size_t batch = std::min<std::size_t>(config.batch_size, count - start);
      auto run_slots = [&](int tid) {
        for (std::size_t s = tid; s < batch; s += threads) {
          visit_tensors(slot_grads[s], [](const std::string&, auto& t) { t.setZero(); });
          const ExperimentInstance& inst = dataset[order[start + s]];
          slot_loss[s] = instance_loss_and_grad(result.params, inst, inst.label, slot_grads[s],
                                                caches[tid]);
        }
      };
      if (threads == 1) {
        run_slots(0);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(run_slots, t);
        for (auto& t : pool) t.join();
      }
      visit_tensors(batch_grad, [](const std::string&, auto& t) { t.setZero(); });
      auto bg = tensor_views(batch_grad);
      for (std::size_t s = 0; s < batch; ++s) {
        auto sg = tensor_views(slot_grads[s]);
        for (std::size_t i = 0; i < bg.size(); ++i) {
          for (std::size_t j = 0; j < bg[i].second; ++j) bg[i].first[j] += sg[i].first[j];
        }
        epoch_loss += slot_loss[s];
      }
      const double inv = 1.0 / static_cast<double>(batch);
      for (auto& view : bg) {
        for (std::size_t j = 0; j < view.second; ++j) view.first[j] *= inv;
      }
      adam_step(result.params, batch_grad, result.adam, config.learning_rate);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(count));
  }
  return result;
}

namespace {

nlohmann::json config_to_json(const NetworkConfig& cfg) {
  return nlohmann::json{{"d_in", cfg.d_in},
                        {"d_h", cfg.d_h},
                        {"heads", cfg.heads},
                        {"inducing", cfg.inducing},
                        {"mask_padding", cfg.mask_padding},
                        {"mode", cfg.mode == HeadMode::Residual ? "residual" : "direct"},
                        {"f_l", cfg.f_l},
                        {"f_u", cfg.f_u},
                        {"feature_offset", cfg.affine.offset},
                        {"feature_scale", cfg.affine.scale}};
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig cfg;
  cfg.d_in = j.at("d_in").get<int>();
  cfg.d_h = j.at("d_h").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.inducing = j.at("inducing").get<int>();
  cfg.mask_padding = j.at("mask_padding").get<bool>();
  const std::string mode = j.at("mode").get<std::string>();
  if (mode != "residual" && mode != "direct") {
    throw validation_error("checkpoint: unknown head mode " + mode);
  }
  cfg.mode = mode == "residual" ? HeadMode::Residual : HeadMode::Direct;
  cfg.f_l = j.at("f_l").get<double>();
  cfg.f_u = j.at("f_u").get<double>();
  cfg.affine.offset = j.at("feature_offset").get<double>();
  cfg.affine.scale = j.at("feature_scale").get<double>();
  return cfg;
}

void add_params(ContainerWriter& w, const std::string& prefix, const SetTransformerParams& p) {
  visit_tensors(p, [&](const std::string& name, const auto& t) {
    std::vector<double> data(t.data(), t.data() + t.size());
    std::vector<std::int64_t> shape{t.rows(), t.cols()};
    w.add_f64(prefix + name, data, std::move(shape));
  });
}

void read_params(const ContainerReader& r, const std::string& prefix, SetTransformerParams& p) {
  visit_tensors(p, [&](const std::string& name, auto& t) {
    const auto shape = r.shape(prefix + name);
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols()) {
      throw validation_error("checkpoint tensor has unexpected shape: " + name);
    }
    const auto data = r.f64(prefix + name);
    std::copy(data.begin(), data.end(), t.data());
  });
}

}  // namespace

void save_checkpoint(const std::string& path, const SetTransformerParams& p,
                     const AdamState* adam) {
  ContainerWriter w;
  add_params(w, "", p);
  nlohmann::json meta{{"network", config_to_json(p.cfg)}, {"has_adam", adam != nullptr}};
  if (adam) {
    add_params(w, "adam.m.", adam->m);
    add_params(w, "adam.v.", adam->v);
    meta["adam"] = {{"step", adam->step},
                    {"beta1", adam->beta1},
                    {"beta2", adam->beta2},
                    {"eps", adam->eps}};
  }
  w.write(path, "checkpoint", std::move(meta));
}

Checkpoint load_checkpoint(const std::string& path) {
  ContainerReader r(path);
  if (r.kind() != "checkpoint") {
    throw validation_error("not a checkpoint container: " + path);
  }
  Checkpoint out;
  const NetworkConfig cfg = config_from_json(r.header().at("network"));
  Rng scratch(0);
  out.params = init_params(cfg, scratch);
  read_params(r, "", out.params);
  if (r.header().value("has_adam", false)) {
    AdamState st;
    st.m = zeros_like(out.params);
    st.v = zeros_like(out.params);
    read_params(r, "adam.m.", st.m);
    read_params(r, "adam.v.", st.v);
    const auto& aj = r.header().at("adam");
    st.step = aj.at("step").get<long>();
    st.beta1 = aj.at("beta1").get<double>();
    st.beta2 = aj.at("beta2").get<double>();
    st.eps = aj.at("eps").get<double>();
    out.adam = std::move(st);
  }
  return out;
}

}  // namespace shadowbayes
