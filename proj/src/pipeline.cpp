#include "shadowbayes/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

namespace shadowbayes {

std::string to_string(Prior p) {
  return p == Prior::DepolarizedGhz ? "depolarized_ghz" : "adversarial_ghz";
}

Prior prior_from_string(const std::string& s) {
  if (s == "depolarized_ghz") return Prior::DepolarizedGhz;
  if (s == "adversarial_ghz") return Prior::AdversarialGhz;
  throw validation_error("unknown prior: " + s);
}

void validate_spec(const TaskSpec& spec) {
  if (spec.n < 1 || spec.n > kMaxQubits) {
    throw validation_error("spec: qubit count out of range");
  }
  if (spec.n_meas_lo < 1 || spec.n_meas_hi < spec.n_meas_lo) {
    throw validation_error("spec: invalid measurement range");
  }
  if (spec.n_meas_hi > spec.n_max) {
    throw validation_error("spec: measurements exceed n_max");
  }
  if (!(spec.noise_lambda >= 0.0 && spec.noise_lambda <= 1.0)) {
    throw validation_error("spec: noise lambda out of [0, 1]");
  }
  if (spec.train_count < 0 || spec.test_count < 0) {
    throw validation_error("spec: negative instance counts");
  }
  if (!(spec.f_l < spec.f_u)) {
    throw validation_error("spec: need f_l < f_u");
  }
  if (spec.task == Task::RenyiPurity) {
    if (spec.n_meas_lo < 2) {
      throw validation_error("spec: renyi task needs at least two rounds per instance");
    }
    if (spec.subsystem.empty() && spec.n % 2 != 0) {
      throw validation_error("spec: default renyi bipartition needs an even qubit count");
    }
    validate_subsystem(spec.n, effective_subsystem(spec));
  }
}

std::vector<int> effective_subsystem(const TaskSpec& spec) {
  if (!spec.subsystem.empty()) return spec.subsystem;
  std::vector<int> a(spec.n / 2);
  for (int i = 0; i < spec.n / 2; ++i) a[i] = i;
  return a;
}

TaskSpec spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "schema_version", "task",        "ensemble",   "n",     "measurements",
      "noise_lambda",   "prior",       "train_count", "test_count",
      "n_max",          "subsystem",   "f_l",        "f_u"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw validation_error("spec: unknown field '" + it.key() + "'");
    }
  }
  if (j.value("schema_version", 0) != 1) {
    throw validation_error("spec: unsupported schema_version");
  }
  TaskSpec spec;
  spec.task = task_from_string(j.at("task").get<std::string>());
  spec.ensemble = ensemble_from_string(j.at("ensemble").get<std::string>());
  spec.n = j.at("n").get<int>();
  const auto& m = j.at("measurements");
  if (m.is_number_integer()) {
    spec.n_meas_lo = spec.n_meas_hi = m.get<int>();
  } else if (m.is_object() && m.contains("min") && m.contains("max") && m.size() == 2) {
    spec.n_meas_lo = m.at("min").get<int>();
    spec.n_meas_hi = m.at("max").get<int>();
  } else {
    throw validation_error("spec: measurements must be an integer or {min, max}");
  }
  spec.noise_lambda = j.value("noise_lambda", 0.0);
  if (j.contains("prior")) {
    spec.prior = prior_from_string(j.at("prior").get<std::string>());
  } else {
    spec.prior = spec.task == Task::GhzFidelity ? Prior::DepolarizedGhz : Prior::AdversarialGhz;
  }
  spec.train_count = j.value("train_count", 0);
  spec.test_count = j.value("test_count", 0);
  spec.n_max = j.value("n_max", 100);
  if (j.contains("subsystem")) {
    spec.subsystem = j.at("subsystem").get<std::vector<int>>();
  }
  spec.f_l = j.value("f_l", 0.0);
  spec.f_u = j.value("f_u", 1.0);
  validate_spec(spec);
  return spec;
}

nlohmann::json spec_to_json(const TaskSpec& spec) {
  nlohmann::json j{{"schema_version", 1},
                   {"task", to_string(spec.task)},
                   {"ensemble", to_string(spec.ensemble)},
                   {"n", spec.n},
                   {"noise_lambda", spec.noise_lambda},
                   {"prior", to_string(spec.prior)},
                   {"train_count", spec.train_count},
                   {"test_count", spec.test_count},
                   {"n_max", spec.n_max},
                   {"f_l", spec.f_l},
                   {"f_u", spec.f_u}};
  if (spec.n_meas_lo == spec.n_meas_hi) {
    j["measurements"] = spec.n_meas_lo;
  } else {
    j["measurements"] = {{"min", spec.n_meas_lo}, {"max", spec.n_meas_hi}};
  }
  if (!spec.subsystem.empty()) j["subsystem"] = spec.subsystem;
  return j;
}

TaskSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw io_error("cannot open spec file: " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("spec file is not valid JSON: ") + e.what());
  }
  return spec_from_json(j);
}

DensityMatrix rebuild_state(const TaskSpec& spec, std::uint64_t instance_seed,
                            double* prior_param_out) {
  Rng state_rng = derive_rng(instance_seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (spec.prior == Prior::DepolarizedGhz) {
    const double lambda = 0.1 * unit(state_rng);
    if (prior_param_out) *prior_param_out = lambda;
    return depolarize(ghz_state(spec.n), lambda);
  }
  const double p = unit(state_rng);
  if (prior_param_out) *prior_param_out = p;
  DensityMatrix omega = sample_hilbert_schmidt(spec.n, state_rng);
  DensityMatrix ghz = pure_to_density(ghz_state(spec.n));
  return DensityMatrix{spec.n, (1.0 - p) * ghz.data + p * omega.data};
}

double exact_label(const TaskSpec& spec, const DensityMatrix& rho) {
  if (spec.task == Task::GhzFidelity) {
    return fidelity_with_pure(rho, ghz_state(spec.n));
  }
  return swap_functional(rho, effective_subsystem(spec));
}

namespace {

ExperimentInstance generate_instance(const TaskSpec& spec, std::uint64_t instance_seed) {
  ExperimentInstance inst;
  inst.meta.n = spec.n;
  inst.meta.ensemble = spec.ensemble;
  inst.meta.task = spec.task;
  inst.meta.noise_lambda = spec.noise_lambda;
  inst.meta.instance_seed = instance_seed;

  const DensityMatrix rho = rebuild_state(spec, instance_seed, &inst.meta.prior_param);
  inst.label = exact_label(spec, rho);

  Rng meas_rng = derive_rng(instance_seed, 1);
  int n_meas = spec.n_meas_lo;
  if (spec.n_meas_hi > spec.n_meas_lo) {
    std::uniform_int_distribution<int> pick(spec.n_meas_lo, spec.n_meas_hi);
    n_meas = pick(meas_rng);
  }
  std::optional<BitFlipNoise> noise;
  if (spec.noise_lambda > 0.0) noise = BitFlipNoise{spec.noise_lambda};

  std::vector<MeasurementRecord> records;
  records.reserve(n_meas);
  if (spec.task == Task::GhzFidelity && spec.ensemble == Ensemble::Pauli) {
    DfeEstimate dfe = dfe_ghz(rho, n_meas, noise, meas_rng);
    inst.baseline_f = dfe.f_hat;
    for (auto& s : dfe.samples) records.push_back(std::move(s.record));
  } else if (spec.task == Task::GhzFidelity) {
    for (int k = 0; k < n_meas; ++k) {
      CliffordTableau t = sample_uniform_clifford(spec.n, meas_rng);
      records.push_back(measure_clifford(rho, t, noise, meas_rng));
    }
    const PureState ghz = ghz_state(spec.n);
    const CMatrix projector = ghz.amplitudes * ghz.amplitudes.adjoint();
    inst.baseline_f = estimate_linear(records, projector);
  } else {
    for (int k = 0; k < n_meas; ++k) {
      if (spec.ensemble == Ensemble::Pauli) {
        records.push_back(measure_pauli(rho, random_pauli_basis(spec.n, meas_rng), noise, meas_rng));
      } else {
        CliffordTableau t = sample_uniform_clifford(spec.n, meas_rng);
        records.push_back(measure_clifford(rho, t, noise, meas_rng));
      }
    }
    inst.baseline_f = renyi_estimate(records, effective_subsystem(spec));
  }

  inst.features = build_feature_matrix(records, spec.n_max, feature_dim(spec.ensemble, spec.n));
  if (!(inst.label >= spec.f_l && inst.label <= spec.f_u)) {
    throw validation_error("generated label fell outside the task range");
  }
  return inst;
}

}  // namespace

std::vector<ExperimentInstance> generate_dataset(const TaskSpec& spec, std::uint64_t root_seed,
                                                 int count, int threads) {
  validate_spec(spec);
  if (count < 0) {
    throw std::invalid_argument("generate_dataset: negative count");
  }
  std::vector<ExperimentInstance> out(count);
  const int workers = std::max(1, std::min(threads, count));
  auto run = [&](int tid) {
    for (int i = tid; i < count; i += workers) {
      out[i] = generate_instance(spec, derive_seed(root_seed, static_cast<std::uint64_t>(i)));
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(run, t);
    for (auto& t : pool) t.join();
  }
  return out;
}

EvalReport evaluate(const TaskSpec& spec, const SetTransformerParams& params,
                    const std::vector<ExperimentInstance>& test_set) {
  if (test_set.empty()) {
    throw std::invalid_argument("evaluate: empty test set");
  }
  if (params.cfg.d_in != feature_dim(spec.ensemble, spec.n)) {
    throw std::invalid_argument("evaluate: checkpoint feature dimension does not match the spec");
  }
  double mse_shadow = 0.0, mse_bayes = 0.0;
  for (const auto& inst : test_set) {
    const double e_shadow = inst.baseline_f - inst.label;
    const double e_bayes = predict(params, inst) - inst.label;
    mse_shadow += e_shadow * e_shadow;
    mse_bayes += e_bayes * e_bayes;
  }
  mse_shadow /= static_cast<double>(test_set.size());
  mse_bayes /= static_cast<double>(test_set.size());

  EvalRow row;
  row.task = spec.task;
  row.ensemble = spec.ensemble;
  row.n = spec.n;
  row.n_meas = spec.n_meas_lo == spec.n_meas_hi ? spec.n_meas_lo : 0;
  row.noise_lambda = spec.noise_lambda;
  row.mse_shadow = mse_shadow;
  row.mse_bayes = mse_bayes;
  row.reduction = 1.0 - mse_bayes / mse_shadow;
  row.count = static_cast<int>(test_set.size());
  // the reference curve assumes noiseless rounds
  if (spec.task == Task::GhzFidelity && spec.ensemble == Ensemble::Pauli && row.n_meas > 0 &&
      spec.noise_lambda == 0.0) {
    row.theory = expected_dfe_round_variance(spec.n) / static_cast<double>(row.n_meas);
  }
  EvalReport report;
  report.rows.push_back(row);
  return report;
}

TaskSpec spec_from_dataset(const Dataset& ds) {
  if (ds.instances.empty()) {
    throw validation_error("spec_from_dataset: dataset is empty");
  }
  const InstanceMeta& m = ds.instances.front().meta;
  TaskSpec spec;
  spec.task = m.task;
  spec.ensemble = m.ensemble;
  spec.n = m.n;
  spec.noise_lambda = m.noise_lambda;
  spec.f_l = ds.f_l;
  spec.f_u = ds.f_u;
  spec.n_max = ds.instances.front().features.n_max();
  int lo = ds.instances.front().features.n_valid;
  int hi = lo;
  for (const auto& inst : ds.instances) {
    lo = std::min(lo, inst.features.n_valid);
    hi = std::max(hi, inst.features.n_valid);
  }
  spec.n_meas_lo = lo;
  spec.n_meas_hi = hi;
  spec.test_count = static_cast<int>(ds.instances.size());
  return spec;
}

double expected_dfe_round_variance(int n) {
  const double width = 0.1;
  const int intervals = 1000;  // Simpson rule, even count
  const double contrast = 1.0 - 1.0 / static_cast<double>(dim_of(n));
  auto integrand = [&](double lambda) { return dfe_variance(1.0 - lambda * contrast); };
  const double h = width / intervals;
  double sum = integrand(0.0) + integrand(width);
  for (int i = 1; i < intervals; ++i) {
    sum += integrand(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * h / 3.0 / width;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw io_error("cannot open for writing: " + path);
  }
  out << "task,ensemble,n,N,noise_lambda,mse_shadow,mse_bayes,mse_direct,reduction,theory,"
         "test_instances\n";
  out.precision(12);
  for (const auto& r : report.rows) {
    out << to_string(r.task) << ',' << to_string(r.ensemble) << ',' << r.n << ',' << r.n_meas
        << ',' << r.noise_lambda << ',' << r.mse_shadow << ',' << r.mse_bayes << ',';
    if (r.mse_direct) out << *r.mse_direct;
    out << ',' << r.reduction << ',';
    if (r.theory) out << *r.theory;
    out << ',' << r.count << '\n';
  }
  if (!out) {
    throw io_error("write failed: " + path);
  }
}

ReproProfile desk_profile() { return ReproProfile{}; }

ReproProfile paper_profile() {
  ReproProfile p;
  p.train_count = 10000;
  p.test_count = 1000;
  p.d_h = 128;
  p.fidelity_n = {3, 4, 5, 6, 7};
  p.renyi_n = {2, 4, 6, 8};
  return p;
}

ReproProfile profile_for_scale(const std::string& scale) {
  if (scale == "desk") return desk_profile();
  if (scale == "paper") return paper_profile();
  throw config_error("unknown scale profile: " + scale);
}

namespace {

struct PanelSpec {
  std::string id;
  Task task;
  Ensemble ensemble;
  double noise_lambda;
  int n_meas;        // fixed round count; 0 means variable 10..100
  bool with_direct;  // adds the non-residual head column
  bool with_theory;
};

std::vector<PanelSpec> panels_for(const std::string& figure_id) {
  auto fixed = [](const std::string& id, Task t, Ensemble e, double lam, int nm) {
    return PanelSpec{id, t, e, lam, nm, false, false};
  };
  const std::vector<PanelSpec> all{
      fixed("fig2a", Task::GhzFidelity, Ensemble::Pauli, 0.0, 10),
      fixed("fig2b", Task::GhzFidelity, Ensemble::Pauli, 0.0, 100),
      fixed("fig2c", Task::GhzFidelity, Ensemble::Clifford, 0.0, 10),
      fixed("fig2d", Task::GhzFidelity, Ensemble::Clifford, 0.0, 100),
      fixed("fig3a", Task::GhzFidelity, Ensemble::Pauli, 0.1, 10),
      fixed("fig3b", Task::GhzFidelity, Ensemble::Pauli, 0.1, 100),
      fixed("fig3c", Task::GhzFidelity, Ensemble::Clifford, 0.1, 10),
      fixed("fig3d", Task::GhzFidelity, Ensemble::Clifford, 0.1, 100),
      fixed("fig4a", Task::RenyiPurity, Ensemble::Pauli, 0.0, 10),
      fixed("fig4b", Task::RenyiPurity, Ensemble::Pauli, 0.0, 100),
      fixed("fig4c", Task::RenyiPurity, Ensemble::Clifford, 0.0, 10),
      fixed("fig4d", Task::RenyiPurity, Ensemble::Clifford, 0.0, 100),
      fixed("fig5a", Task::RenyiPurity, Ensemble::Pauli, 0.1, 10),
      fixed("fig5b", Task::RenyiPurity, Ensemble::Pauli, 0.1, 100),
      fixed("fig5c", Task::RenyiPurity, Ensemble::Clifford, 0.1, 10),
      fixed("fig5d", Task::RenyiPurity, Ensemble::Clifford, 0.1, 100),
      PanelSpec{"fig6a", Task::GhzFidelity, Ensemble::Pauli, 0.0, 0, true, true},
      PanelSpec{"fig6b", Task::GhzFidelity, Ensemble::Clifford, 0.0, 0, false, false},
  };
  std::vector<PanelSpec> out;
  for (const auto& p : all) {
    if (p.id == figure_id || p.id.substr(0, p.id.size() - 1) == figure_id) {
      out.push_back(p);
    }
  }
  if (out.empty()) {
    throw config_error("unknown figure id: " + figure_id);
  }
  return out;
}

TaskSpec panel_task_spec(const PanelSpec& panel, const ReproProfile& profile, int n) {
  TaskSpec spec;
  spec.task = panel.task;
  spec.ensemble = panel.ensemble;
  spec.n = n;
  spec.noise_lambda = panel.noise_lambda;
  spec.prior = panel.task == Task::GhzFidelity ? Prior::DepolarizedGhz : Prior::AdversarialGhz;
  spec.train_count = profile.train_count;
  spec.test_count = profile.test_count;
  if (panel.n_meas > 0) {
    spec.n_meas_lo = spec.n_meas_hi = panel.n_meas;
  } else {
    spec.n_meas_lo = 10;
    spec.n_meas_hi = 100;
  }
  return spec;
}

TrainConfig panel_train_config(const ReproProfile& profile, const TaskSpec& spec,
                               std::uint64_t seed, HeadMode mode, int threads) {
  TrainConfig cfg;
  cfg.learning_rate = profile.learning_rate;
  cfg.batch_size = profile.batch_size;
  cfg.epochs = profile.epochs;
  cfg.seed = seed;
  cfg.n_max = spec.n_max;
  cfg.f_l = spec.f_l;
  cfg.f_u = spec.f_u;
  cfg.d_h = profile.d_h;
  cfg.heads = profile.heads;
  cfg.inducing = profile.inducing;
  cfg.mode = mode;
  cfg.threads = threads;
  return cfg;
}

}  // namespace

EvalReport reproduce_figure(const std::string& figure_id, const ReproProfile& profile,
                            const std::string& out_dir, std::uint64_t seed, int threads) {
  const std::vector<PanelSpec> panels = panels_for(figure_id);
  // fail on an unusable output location before hours of computation
  std::filesystem::create_directories(out_dir);
  EvalReport report;
  std::uint64_t stream = 0;
  for (const auto& panel : panels) {
    const std::vector<int>& n_values =
        panel.task == Task::GhzFidelity ? profile.fidelity_n : profile.renyi_n;
    if (panel.n_meas > 0) {
      for (int n : n_values) {
        TaskSpec spec = panel_task_spec(panel, profile, n);
        const std::uint64_t panel_seed = derive_seed(seed, stream++);
        auto train_set = generate_dataset(spec, derive_seed(panel_seed, 0), spec.train_count, threads);
        auto test_set = generate_dataset(spec, derive_seed(panel_seed, 1), spec.test_count, threads);
        TrainResult trained = train(
            panel_train_config(profile, spec, derive_seed(panel_seed, 2), HeadMode::Residual, threads),
            train_set);
        EvalReport one = evaluate(spec, trained.params, test_set);
        report.rows.push_back(one.rows.front());
      }
    } else {
      // variable-round training, evaluated on a grid of fixed round counts
      const int n = panel.task == Task::GhzFidelity ? 3 : 2;
      TaskSpec spec = panel_task_spec(panel, profile, n);
      const std::uint64_t panel_seed = derive_seed(seed, stream++);
      auto train_set = generate_dataset(spec, derive_seed(panel_seed, 0), spec.train_count, threads);
      TrainResult residual = train(
          panel_train_config(profile, spec, derive_seed(panel_seed, 2), HeadMode::Residual, threads),
          train_set);
      std::optional<TrainResult> direct;
      if (panel.with_direct) {
        direct = train(
            panel_train_config(profile, spec, derive_seed(panel_seed, 3), HeadMode::Direct, threads),
            train_set);
      }
      for (std::size_t gi = 0; gi < profile.n_grid.size(); ++gi) {
        TaskSpec eval_spec = spec;
        eval_spec.n_meas_lo = eval_spec.n_meas_hi = profile.n_grid[gi];
        auto test_set = generate_dataset(eval_spec, derive_seed(panel_seed, 100 + gi),
                                         eval_spec.test_count, threads);
        EvalRow row = evaluate(eval_spec, residual.params, test_set).rows.front();
        if (direct) {
          double mse = 0.0;
          for (const auto& inst : test_set) {
            const double e = predict(direct->params, inst) - inst.label;
            mse += e * e;
          }
          row.mse_direct = mse / static_cast<double>(test_set.size());
        }
        if (!panel.with_theory) row.theory.reset();
        report.rows.push_back(row);
      }
    }
  }
  write_report_csv(report, (std::filesystem::path(out_dir) / (figure_id + ".csv")).string());
  return report;
}

}  // namespace shadowbayes
