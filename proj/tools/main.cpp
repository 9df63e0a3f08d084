#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "shadowbayes/pipeline.hpp"

namespace fs = std::filesystem;
using namespace shadowbayes;

namespace {

// Exit code classes: 0 ok, 2 config, 3 io, 4 validation, 5 check failure.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;
constexpr int kExitCheckFailure = 5;

std::string default_out_root() {
  const char* env = std::getenv("SHADOWBAYES_DATA_DIR");
  return env ? std::string(env) : std::string(".");
}

void print_dataset_summary(const std::string& name,
                           const std::vector<ExperimentInstance>& data) {
  double lo = 1e300, hi = -1e300, mean = 0.0;
  for (const auto& inst : data) {
    lo = std::min(lo, inst.label);
    hi = std::max(hi, inst.label);
    mean += inst.label;
  }
  mean /= static_cast<double>(data.size());
  std::cout << name << ": " << data.size() << " instances, label mean " << mean << ", min " << lo
            << ", max " << hi << "\n";
}

int cmd_generate(const std::string& spec_path, std::uint64_t seed, const std::string& out,
                 int threads) {
  const TaskSpec spec = load_spec_file(spec_path);
  fs::create_directories(out);
  if (spec.train_count > 0) {
    auto train_set = generate_dataset(spec, derive_seed(seed, 0), spec.train_count, threads);
    dataset_write(train_set, (fs::path(out) / "train.sbc").string(), spec.f_l, spec.f_u);
    print_dataset_summary("train", train_set);
  }
  if (spec.test_count > 0) {
    auto test_set = generate_dataset(spec, derive_seed(seed, 1), spec.test_count, threads);
    dataset_write(test_set, (fs::path(out) / "test.sbc").string(), spec.f_l, spec.f_u);
    print_dataset_summary("test", test_set);
  }
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out, std::uint64_t seed,
              const std::string& scale, int epochs_override, const std::string& mode,
              bool mask_padding, int threads) {
  const Dataset ds = dataset_read(data_path);
  const ReproProfile profile = profile_for_scale(scale);

  TrainConfig cfg;
  cfg.learning_rate = profile.learning_rate;
  cfg.batch_size = profile.batch_size;
  cfg.epochs = epochs_override >= 0 ? epochs_override : profile.epochs;
  cfg.seed = seed;
  cfg.n_max = ds.instances.empty() ? 100 : ds.instances.front().features.n_max();
  cfg.f_l = ds.f_l;
  cfg.f_u = ds.f_u;
  cfg.d_h = profile.d_h;
  cfg.heads = profile.heads;
  cfg.inducing = profile.inducing;
  cfg.mask_padding = mask_padding;
  cfg.threads = threads;
  if (mode == "residual") {
    cfg.mode = HeadMode::Residual;
  } else if (mode == "direct") {
    cfg.mode = HeadMode::Direct;
  } else {
    throw config_error("unknown head mode: " + mode);
  }

  const TrainResult result = train(cfg, ds.instances);
  fs::create_directories(out);
  save_checkpoint((fs::path(out) / "checkpoint.sbc").string(), result.params, &result.adam);

  std::ofstream loss_csv(fs::path(out) / "loss.csv", std::ios::trunc);
  if (!loss_csv) {
    throw io_error("cannot write loss log");
  }
  loss_csv << "epoch,mean_loss\n";
  loss_csv.precision(12);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    loss_csv << e + 1 << ',' << result.epoch_loss[e] << '\n';
  }
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << result.epoch_loss[e] << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_csv) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Dataset ds = dataset_read(data_path);
  const TaskSpec spec = spec_from_dataset(ds);
  const EvalReport report = evaluate(spec, ck.params, ds.instances);
  if (!out_csv.empty()) {
    write_report_csv(report, out_csv);
  }
  const EvalRow& row = report.rows.front();
  std::cout << "mse_shadow " << row.mse_shadow << " mse_bayes " << row.mse_bayes << " reduction "
            << row.reduction << "\n";
  return 0;
}

int cmd_reproduce(const std::string& figure_id, const std::string& scale, const std::string& out,
                  std::uint64_t seed, int threads) {
  const ReproProfile profile = profile_for_scale(scale);
  const EvalReport report = reproduce_figure(figure_id, profile, out, seed, threads);
  std::cout << "wrote " << (fs::path(out) / (figure_id + ".csv")).string() << " ("
            << report.rows.size() << " rows)\n";
  return 0;
}

// --- verify: built-in statistical property checks --------------------------

struct CheckReporter {
  bool all_ok = true;
  void report(const std::string& name, double measured, double bound, bool ok) {
    all_ok = all_ok && ok;
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": measured " << measured << " vs bound "
              << bound << "\n";
  }
};

void verify_snapshot_unbiasedness(CheckReporter& rep, Rng& rng) {
  // Pauli ensemble, exact enumeration at n = 1, 2
  for (int n : {1, 2}) {
    const long d = dim_of(n);
    const long bases_count = static_cast<long>(std::pow(3.0, n));
    double worst = 0.0;
    for (int s = 0; s < 10; ++s) {
      const DensityMatrix rho = sample_hilbert_schmidt(n, rng);
      CMatrix acc = CMatrix::Zero(d, d);
      for (long code = 0; code < bases_count; ++code) {
        PauliBasis basis;
        basis.axes.resize(n);
        long c = code;
        for (int q = 0; q < n; ++q) {
          basis.axes[q] = static_cast<Axis>(c % 3);
          c /= 3;
        }
        const Eigen::VectorXd probs = pauli_outcome_probabilities(rho, basis);
        for (long b = 0; b < d; ++b) {
          std::vector<std::uint8_t> bits(n);
          for (int q = 0; q < n; ++q) bits[q] = (b >> q) & 1L;
          acc += probs(b) / static_cast<double>(bases_count) * pauli_snapshot_dense(basis, bits);
        }
      }
      worst = std::max(worst, (acc - rho.data).cwiseAbs().maxCoeff());
    }
    rep.report("pauli snapshot unbiasedness n=" + std::to_string(n), worst, 1e-10,
               worst < 1e-10);
  }

  // Clifford ensemble, all 24 single-qubit elements
  std::vector<CliffordTableau> group;
  const std::array<std::pair<std::uint32_t, std::uint32_t>, 3> paulis{
      {{1u, 0u}, {1u, 1u}, {0u, 1u}}};
  for (std::size_t ix = 0; ix < 3; ++ix) {
    for (std::uint8_t sx = 0; sx < 2; ++sx) {
      for (std::size_t iz = 0; iz < 3; ++iz) {
        if (iz == ix) continue;
        for (std::uint8_t sz = 0; sz < 2; ++sz) {
          CliffordTableau t;
          t.n = 1;
          t.rows = {PauliRow{paulis[ix].first, paulis[ix].second, sx},
                    PauliRow{paulis[iz].first, paulis[iz].second, sz}};
          group.push_back(t);
        }
      }
    }
  }
  double worst = 0.0;
  for (int s = 0; s < 10; ++s) {
    const DensityMatrix rho = sample_hilbert_schmidt(1, rng);
    CMatrix acc = CMatrix::Zero(2, 2);
    for (const auto& t : group) {
      const DensityMatrix rotated = apply_clifford(t, rho);
      for (long b = 0; b < 2; ++b) {
        acc += std::max(0.0, rotated.data(b, b).real()) / 24.0 *
               clifford_snapshot(t, {static_cast<std::uint8_t>(b)});
      }
    }
    worst = std::max(worst, (acc - rho.data).cwiseAbs().maxCoeff());
  }
  rep.report("clifford snapshot unbiasedness n=1", worst, 1e-10, worst < 1e-10);
}

void verify_bitflip(CheckReporter& rep, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd p(4);
  for (int k = 0; k < 4; ++k) p(k) = u(rng);
  p /= p.sum();
  const Eigen::VectorXd recovered = invert_bitflip(apply_bitflip(p, 2, 0.1), 2, 0.1);
  const double dev = (recovered - p).cwiseAbs().maxCoeff();
  rep.report("bit-flip inversion n=2 lambda=0.1", dev, 1e-12, dev < 1e-12);

  bool raised = false;
  try {
    invert_bitflip(p, 2, 0.5);
  } catch (const singular_noise_error&) {
    raised = true;
  }
  rep.report("bit-flip inversion rejects lambda=1/2", raised ? 1.0 : 0.0, 1.0, raised);
}

void verify_variance_law(CheckReporter& rep, Rng& rng) {
  const double f = 0.95;
  const double lambda = 8.0 * (1.0 - f) / 7.0;
  const DensityMatrix rho = depolarize(ghz_state(3), lambda);
  const int rounds = 20000;
  const DfeEstimate est = dfe_ghz(rho, rounds, std::nullopt, rng);
  double mean = 0.0;
  for (const auto& s : est.samples) mean += s.score;
  mean /= rounds;
  double var = 0.0, m4 = 0.0;
  for (const auto& s : est.samples) {
    const double d2 = (s.score - mean) * (s.score - mean);
    var += d2;
    m4 += d2 * d2;
  }
  var /= rounds;
  m4 /= rounds;
  const double se = std::sqrt(std::max(0.0, m4 - var * var) / rounds);
  const double target = dfe_variance(f);
  std::cout << "     variance law: empirical " << var << " vs (1+2f)(1-f)/2 = " << target
            << "\n";
  rep.report("dfe variance law at f=0.95", std::abs(var - target), 5.0 * se,
             std::abs(var - target) < 5.0 * se);
}

void verify_local_optimality_grid(CheckReporter& rep, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 0.1);
  const DensityMatrix rho = depolarize(ghz_state(2), u(rng));
  const std::vector<double> grid{0.1, 0.2, 1.0 / 3.0, 0.5, 0.7};
  const auto rows = verify_local_optimality(rho, grid);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::cout << "     q=" << rows[i].q << " variance=" << rows[i].variance << "\n";
    if (rows[i].variance < rows[argmin].variance) argmin = i;
  }
  rep.report("reweighted variance argmin at q=1/3", rows[argmin].q, 1.0 / 3.0, argmin == 2);
}

void verify_swap_identity(CheckReporter& rep, Rng& rng) {
  const int n = 2;
  const long d = dim_of(n);
  CMatrix s = CMatrix::Zero(d * d, d * d);
  const long mask = 1;  // subsystem {0}
  for (long i = 0; i < d; ++i) {
    for (long j = 0; j < d; ++j) {
      const long ip = (i & ~mask) | (j & mask);
      const long jp = (j & ~mask) | (i & mask);
      s(ip * d + jp, i * d + j) = 1.0;
    }
  }
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const DensityMatrix rho = sample_hilbert_schmidt(n, rng);
    CMatrix two = CMatrix::Zero(d * d, d * d);
    for (long a = 0; a < d; ++a) {
      for (long b = 0; b < d; ++b) {
        two.block(a * d, b * d, d, d) = rho.data(a, b) * rho.data;
      }
    }
    worst = std::max(worst,
                     std::abs(swap_functional(rho, {0}) - (two * s).trace().real()));
  }
  rep.report("swap functional vs explicit operator", worst, 1e-10, worst < 1e-10);
}

void verify_network_properties(CheckReporter& rep, Rng& rng) {
  NetworkConfig cfg;
  cfg.d_in = 3;
  cfg.d_h = 16;
  cfg.heads = 4;
  cfg.inducing = 4;
  cfg.affine = feature_affine(Ensemble::Pauli);
  const SetTransformerParams params = init_params(cfg, rng);

  FeatureMatrix fm;
  fm.n_valid = 7;
  fm.rows = FeatureRows::Constant(12, 3, -1);
  std::uniform_int_distribution<int> code(0, 5);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 3; ++c) fm.rows(r, c) = code(rng);
  }
  const double x_ref = forward(params, fm);
  double worst = 0.0;
  std::vector<int> perm{0, 1, 2, 3, 4, 5, 6};
  for (int t = 0; t < 20; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    FeatureMatrix shuffled = fm;
    for (int r = 0; r < 7; ++r) shuffled.rows.row(r) = fm.rows.row(perm[r]);
    worst = std::max(worst, std::abs(forward(params, shuffled) - x_ref));
  }
  rep.report("forward permutation invariance", worst, 1e-9, worst < 1e-9);

  double sigma_dev = 0.0;
  for (double f : {-0.4, 0.1, 0.7, 1.3}) {
    const double clipped = std::min(std::max(f, 0.0), 1.0);
    sigma_dev = std::max(sigma_dev, std::abs(calibrate(0.0, f, 0.0, 1.0) - clipped));
  }
  rep.report("sigma(0, F) equals the clipped baseline", sigma_dev, 0.0, sigma_dev == 0.0);
}

void verify_pair_table(CheckReporter& rep) {
  double worst = 0.0;
  for (Axis ak : {Axis::X, Axis::Y, Axis::Z}) {
    for (int bk : {0, 1}) {
      for (Axis al : {Axis::X, Axis::Y, Axis::Z}) {
        for (int bl : {0, 1}) {
          const double dense =
              (pauli_snapshot_factor(ak, bk) * pauli_snapshot_factor(al, bl)).trace().real();
          worst = std::max(worst, std::abs(pauli_pair_trace(ak, bk, al, bl) - dense));
        }
      }
    }
  }
  rep.report("pairwise local trace table (36 cases)", worst, 1e-12, worst < 1e-12);
}

int cmd_verify(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  CheckReporter rep;
  verify_snapshot_unbiasedness(rep, rng);
  verify_bitflip(rep, rng);
  verify_variance_law(rep, rng);
  verify_local_optimality_grid(rep, rng);
  verify_swap_identity(rep, rng);
  verify_network_properties(rep, rng);
  verify_pair_table(rep);
  std::cout << (rep.all_ok ? "all checks passed" : "some checks FAILED") << "\n";
  return rep.all_ok ? 0 : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomized-measurement simulation, shadow estimators, and the"
               " set-transformer correction"};
  app.require_subcommand(1);

  std::string spec_path, data_path, checkpoint_path, out, figure_id, mode = "residual";
  std::string scale = "desk";
  std::uint64_t seed = 0;
  int threads = 1;
  int epochs_override = -1;
  bool mask_padding = false;

  auto* gen = app.add_subcommand("generate", "simulate experiments into a dataset file");
  gen->add_option("--spec", spec_path, "task spec JSON")->required();
  gen->add_option("--seed", seed, "root seed");
  gen->add_option("--out", out, "output directory");
  gen->add_option("--threads", threads, "worker threads");

  auto* tr = app.add_subcommand("train", "train the correction network on a dataset");
  tr->add_option("--data", data_path, "training dataset file")->required();
  tr->add_option("--out", out, "output directory");
  tr->add_option("--seed", seed, "training seed");
  tr->add_option("--scale", scale, "profile: desk or paper");
  tr->add_option("--epochs", epochs_override, "override the profile epoch count");
  tr->add_option("--mode", mode, "head mode: residual or direct");
  tr->add_flag("--mask-padding", mask_padding, "mask padded rows in attention");
  tr->add_option("--threads", threads, "worker threads");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a test dataset");
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ev->add_option("--data", data_path, "test dataset file")->required();
  ev->add_option("--out", out, "report CSV path");

  auto* re = app.add_subcommand("reproduce", "regenerate one figure's plot data");
  re->add_option("--figure", figure_id, "fig2..fig6, optionally with panel letter")->required();
  re->add_option("--scale", scale, "profile: desk or paper");
  re->add_option("--out", out, "output directory");
  re->add_option("--seed", seed, "root seed");
  re->add_option("--threads", threads, "worker threads");

  auto* ve = app.add_subcommand("verify", "run the built-in property checks");
  ve->add_option("--seed", seed, "seed for the randomized checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(spec_path, seed, out.empty() ? default_out_root() : out, threads);
    }
    if (tr->parsed()) {
      return cmd_train(data_path, out.empty() ? default_out_root() : out, seed, scale,
                       epochs_override, mode, mask_padding, threads);
    }
    if (ev->parsed()) {
      return cmd_eval(checkpoint_path, data_path, out);
    }
    if (re->parsed()) {
      return cmd_reproduce(figure_id, scale, out.empty() ? default_out_root() : out, seed,
                           threads);
    }
    if (ve->parsed()) {
      return cmd_verify(seed);
    }
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const format_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const version_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const truncated_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const checksum_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const validation_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
