#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "shadowbayes/pipeline.hpp"

using namespace shadowbayes;
using namespace shadowbayes::testing;
using Catch::Approx;

namespace {

TaskSpec fidelity_spec(int n, int n_meas, double noise = 0.0) {
  TaskSpec spec;
  spec.task = Task::GhzFidelity;
  spec.ensemble = Ensemble::Pauli;
  spec.n = n;
  spec.n_meas_lo = spec.n_meas_hi = n_meas;
  spec.noise_lambda = noise;
  spec.prior = Prior::DepolarizedGhz;
  return spec;
}

TaskSpec renyi_spec(int n, int n_meas) {
  TaskSpec spec;
  spec.task = Task::RenyiPurity;
  spec.ensemble = Ensemble::Pauli;
  spec.n = n;
  spec.n_meas_lo = spec.n_meas_hi = n_meas;
  spec.prior = Prior::AdversarialGhz;
  return spec;
}

}  // namespace

TEST_CASE("generated fidelity instances") {
  const TaskSpec spec = fidelity_spec(3, 10);
  const auto data = generate_dataset(spec, 42, 200, 2);
  REQUIRE(data.size() == 200);
  for (const auto& inst : data) {
    REQUIRE(inst.label > 0.9125);
    REQUIRE(inst.label < 1.0);
    REQUIRE(inst.features.n_valid == 10);
    REQUIRE(inst.features.d() == 3);
    REQUIRE(inst.meta.task == Task::GhzFidelity);
  }
}

TEST_CASE("generation is reproducible and thread independent") {
  const TaskSpec spec = fidelity_spec(3, 12);
  const auto a = generate_dataset(spec, 7, 40, 1);
  const auto b = generate_dataset(spec, 7, 40, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].features.rows == b[i].features.rows);
    REQUIRE(a[i].baseline_f == b[i].baseline_f);
    REQUIRE(a[i].label == b[i].label);
    REQUIRE(a[i].meta.instance_seed == b[i].meta.instance_seed);
  }
}

TEST_CASE("labels can be recomputed from stored provenance") {
  for (const TaskSpec& spec : {fidelity_spec(3, 10), renyi_spec(2, 10)}) {
    const auto data = generate_dataset(spec, 99, 50, 2);
    for (const auto& inst : data) {
      double param = -1.0;
      const DensityMatrix rho = rebuild_state(spec, inst.meta.instance_seed, &param);
      REQUIRE(param == inst.meta.prior_param);
      REQUIRE(std::abs(exact_label(spec, rho) - inst.label) < 1e-10);
    }
  }
}

TEST_CASE("variable round counts are sampled per instance") {
  TaskSpec spec = fidelity_spec(3, 10);
  spec.n_meas_lo = 10;
  spec.n_meas_hi = 100;
  const auto data = generate_dataset(spec, 4, 300, 2);
  int lo = 1000, hi = 0;
  for (const auto& inst : data) {
    lo = std::min(lo, inst.features.n_valid);
    hi = std::max(hi, inst.features.n_valid);
    REQUIRE(inst.features.n_valid >= 10);
    REQUIRE(inst.features.n_valid <= 100);
  }
  REQUIRE(lo < 20);
  REQUIRE(hi > 90);
}

TEST_CASE("baseline estimators are unbiased in aggregate") {
  SECTION("fidelity task") {
    const auto data = generate_dataset(fidelity_spec(3, 10), 11, 10000, 2);
    double mean = 0.0, var = 0.0;
    for (const auto& inst : data) mean += inst.baseline_f - inst.label;
    mean /= data.size();
    for (const auto& inst : data) {
      const double d = inst.baseline_f - inst.label - mean;
      var += d * d;
    }
    var /= data.size();
    const double se = std::sqrt(var / data.size());
    REQUIRE(std::abs(mean) < 3.0 * se);
  }

  SECTION("renyi task") {
    const auto data = generate_dataset(renyi_spec(2, 10), 13, 10000, 2);
    double mean = 0.0, var = 0.0;
    for (const auto& inst : data) mean += inst.baseline_f - inst.label;
    mean /= data.size();
    for (const auto& inst : data) {
      const double d = inst.baseline_f - inst.label - mean;
      var += d * d;
    }
    var /= data.size();
    const double se = std::sqrt(var / data.size());
    REQUIRE(std::abs(mean) < 3.0 * se);
  }
}

TEST_CASE("renyi instances stay within the task range") {
  const auto data = generate_dataset(renyi_spec(2, 10), 21, 200, 2);
  for (const auto& inst : data) {
    REQUIRE(inst.label >= 0.0);
    REQUIRE(inst.label <= 1.0);
    REQUIRE(inst.features.d() == 2);
  }
  TaskSpec clifford = renyi_spec(2, 10);
  clifford.ensemble = Ensemble::Clifford;
  const auto cdata = generate_dataset(clifford, 23, 20, 2);
  for (const auto& inst : cdata) {
    REQUIRE(inst.features.d() == 2 * (2 * 2 + 3));
  }

  // larger register with the equal bipartition default
  TaskSpec wide = renyi_spec(4, 10);
  wide.ensemble = Ensemble::Clifford;
  const auto wdata = generate_dataset(wide, 29, 4, 2);
  for (const auto& inst : wdata) {
    REQUIRE(inst.features.d() == 4 * (2 * 4 + 3));
    REQUIRE(inst.label >= 0.0);
    REQUIRE(inst.label <= 1.0);
    double param = -1.0;
    const DensityMatrix rho = rebuild_state(wide, inst.meta.instance_seed, &param);
    REQUIRE(std::abs(exact_label(wide, rho) - inst.label) < 1e-10);
  }
}

TEST_CASE("theory curve value") {
  // numerical integration over the depolarization prior
  REQUIRE(std::abs(expected_dfe_round_variance(3) - 0.063) / 0.063 < 0.02);
}

TEST_CASE("evaluate") {
  const TaskSpec spec = fidelity_spec(3, 100);
  const auto test_set = generate_dataset(spec, 31, 150, 2);

  NetworkConfig net;
  net.d_in = 3;
  net.d_h = 16;
  net.heads = 2;
  net.inducing = 4;
  net.affine = feature_affine(Ensemble::Pauli);
  Rng rng = make_rng(3);
  SetTransformerParams params = init_params(net, rng);
  params.head.w.setZero();
  params.head.b.setZero();

  const EvalReport report = evaluate(spec, params, test_set);
  REQUIRE(report.rows.size() == 1);
  const EvalRow& row = report.rows.front();
  REQUIRE(row.mse_shadow >= 0.0);
  REQUIRE(row.mse_bayes >= 0.0);
  REQUIRE(row.count == 150);

  SECTION("zero head evaluates the clipped baseline") {
    double clipped_mse = 0.0;
    for (const auto& inst : test_set) {
      const double c = std::min(std::max(inst.baseline_f, 0.0), 1.0);
      clipped_mse += (c - inst.label) * (c - inst.label);
    }
    clipped_mse /= test_set.size();
    REQUIRE(row.mse_bayes == Approx(clipped_mse).margin(1e-15));
    // clipping toward the feasible interval never hurts against labels inside it
    REQUIRE(row.mse_bayes <= row.mse_shadow + 1e-15);
  }

  SECTION("theory column") {
    REQUIRE(row.theory.has_value());
    REQUIRE(*row.theory == Approx(0.063 / 100.0).epsilon(0.02));
  }

  SECTION("reduction column recomputes from the mse columns") {
    REQUIRE(row.reduction == 1.0 - row.mse_bayes / row.mse_shadow);
  }

  SECTION("rejects empty and mismatched inputs") {
    REQUIRE_THROWS_AS(evaluate(spec, params, {}), std::invalid_argument);
    TaskSpec wrong = spec;
    wrong.n = 4;
    REQUIRE_THROWS_AS(evaluate(wrong, params, test_set), std::invalid_argument);
  }
}

TEST_CASE("spec json round trip and validation") {
  nlohmann::json j{{"schema_version", 1},
                   {"task", "ghz_fidelity"},
                   {"ensemble", "pauli"},
                   {"n", 3},
                   {"measurements", 10},
                   {"train_count", 100},
                   {"test_count", 20}};
  const TaskSpec spec = spec_from_json(j);
  REQUIRE(spec.prior == Prior::DepolarizedGhz);  // task default
  REQUIRE(spec.n_meas_lo == 10);
  REQUIRE(spec.n_meas_hi == 10);

  const TaskSpec back = spec_from_json(spec_to_json(spec));
  REQUIRE(back.task == spec.task);
  REQUIRE(back.n == spec.n);
  REQUIRE(back.train_count == spec.train_count);

  SECTION("unknown fields are rejected") {
    nlohmann::json bad = j;
    bad["typo_field"] = 1;
    REQUIRE_THROWS_AS(spec_from_json(bad), validation_error);
  }

  SECTION("schema version is enforced") {
    nlohmann::json bad = j;
    bad["schema_version"] = 2;
    REQUIRE_THROWS_AS(spec_from_json(bad), validation_error);
  }

  SECTION("measurement ranges") {
    nlohmann::json ranged = j;
    ranged["measurements"] = {{"min", 10}, {"max", 100}};
    REQUIRE(spec_from_json(ranged).n_meas_hi == 100);
    nlohmann::json bad = j;
    bad["measurements"] = "ten";
    REQUIRE_THROWS_AS(spec_from_json(bad), validation_error);
  }

  SECTION("renyi default bipartition needs even n") {
    nlohmann::json bad = j;
    bad["task"] = "renyi_purity";
    bad["n"] = 3;
    REQUIRE_THROWS_AS(spec_from_json(bad), validation_error);
  }
}

TEST_CASE("spec_from_dataset reconstructs evaluation fields") {
  const TaskSpec spec = fidelity_spec(3, 25);
  const auto data = generate_dataset(spec, 77, 30, 2);
  const auto path = std::filesystem::temp_directory_path() / "sb_pipeline_ds.sbc";
  dataset_write(data, path.string());
  const Dataset ds = dataset_read(path.string());
  const TaskSpec derived = spec_from_dataset(ds);
  REQUIRE(derived.task == Task::GhzFidelity);
  REQUIRE(derived.ensemble == Ensemble::Pauli);
  REQUIRE(derived.n == 3);
  REQUIRE(derived.n_meas_lo == 25);
  REQUIRE(derived.n_meas_hi == 25);
  std::filesystem::remove(path);
}

TEST_CASE("reproduce_figure plumbing on a micro profile") {
  ReproProfile micro;
  micro.train_count = 60;
  micro.test_count = 20;
  micro.d_h = 16;
  micro.heads = 2;
  micro.inducing = 4;
  micro.epochs = 2;
  micro.batch_size = 20;
  micro.n_grid = {10, 30};

  const auto out_dir = std::filesystem::temp_directory_path() / "sb_fig_micro";
  const EvalReport report = reproduce_figure("fig6a", micro, out_dir.string(), 5, 2);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    REQUIRE(row.mse_shadow >= 0.0);
    REQUIRE(row.mse_bayes >= 0.0);
    REQUIRE(row.mse_direct.has_value());
    REQUIRE(*row.mse_direct >= 0.0);
    REQUIRE(row.theory.has_value());
  }
  REQUIRE(report.rows[0].n_meas == 10);
  REQUIRE(report.rows[1].n_meas == 30);

  std::ifstream csv(out_dir / "fig6a.csv");
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  REQUIRE(header ==
          "task,ensemble,n,N,noise_lambda,mse_shadow,mse_bayes,mse_direct,reduction,theory,"
          "test_instances");
  int rows = 0;
  std::string line;
  while (std::getline(csv, line)) {
    if (!line.empty()) ++rows;
  }
  REQUIRE(rows == 2);
  std::filesystem::remove_all(out_dir);

  REQUIRE_THROWS_AS(reproduce_figure("fig9", micro, out_dir.string(), 5, 1), config_error);

  SECTION("noisy fixed-round panel") {
    ReproProfile one_n = micro;
    one_n.fidelity_n = {3};
    const auto noisy_dir = std::filesystem::temp_directory_path() / "sb_fig_noisy";
    const EvalReport noisy = reproduce_figure("fig3a", one_n, noisy_dir.string(), 5, 2);
    REQUIRE(noisy.rows.size() == 1);
    REQUIRE(noisy.rows[0].noise_lambda == 0.1);
    REQUIRE(noisy.rows[0].n_meas == 10);
    REQUIRE_FALSE(noisy.rows[0].theory.has_value());
    std::filesystem::remove_all(noisy_dir);
  }
}
