#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shadowbayes/estimators.hpp"
#include "shadowbayes/neural.hpp"

namespace shadowbayes {

enum class Prior : std::uint8_t { DepolarizedGhz = 0, AdversarialGhz = 1 };

std::string to_string(Prior p);
Prior prior_from_string(const std::string& s);

struct TaskSpec {
  Task task = Task::GhzFidelity;
  Ensemble ensemble = Ensemble::Pauli;
  int n = 3;
  int n_meas_lo = 10;  // per-instance round count, sampled uniformly when lo < hi
  int n_meas_hi = 10;
  double noise_lambda = 0.0;
  Prior prior = Prior::DepolarizedGhz;
  int train_count = 2000;
  int test_count = 200;
  int n_max = 100;
  std::vector<int> subsystem;  // renyi bipartition; default first n/2 qubits
  double f_l = 0.0;
  double f_u = 1.0;
};

void validate_spec(const TaskSpec& spec);
std::vector<int> effective_subsystem(const TaskSpec& spec);

// Strict JSON mirror of TaskSpec; unknown fields are rejected.
TaskSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const TaskSpec& spec);
TaskSpec load_spec_file(const std::string& path);

// Replays the state-generation stream of one instance.
DensityMatrix rebuild_state(const TaskSpec& spec, std::uint64_t instance_seed,
                            double* prior_param_out = nullptr);
double exact_label(const TaskSpec& spec, const DensityMatrix& rho);

// Embarrassingly parallel over instances; stream i depends only on
// (root_seed, i), so the thread count never changes the output.
std::vector<ExperimentInstance> generate_dataset(const TaskSpec& spec, std::uint64_t root_seed,
                                                 int count, int threads = 1);

struct EvalRow {
  Task task = Task::GhzFidelity;
  Ensemble ensemble = Ensemble::Pauli;
  int n = 0;
  int n_meas = 0;  // 0 when the configuration uses variable round counts
  double noise_lambda = 0.0;
  double mse_shadow = 0.0;
  double mse_bayes = 0.0;
  std::optional<double> mse_direct;
  double reduction = 0.0;  // 1 - mse_bayes / mse_shadow
  std::optional<double> theory;
  int count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

EvalReport evaluate(const TaskSpec& spec, const SetTransformerParams& params,
                    const std::vector<ExperimentInstance>& test_set);

// Reconstructs the evaluation-relevant spec fields from a stored dataset
// (task, ensemble, n, noise, and the round count when it is uniform).
TaskSpec spec_from_dataset(const Dataset& ds);

// Prior mean of the single-round score variance for the depolarized-GHZ
// fidelity task, by Simpson quadrature over the noise interval.
double expected_dfe_round_variance(int n);

void write_report_csv(const EvalReport& report, const std::string& path);

struct ReproProfile {
  int train_count = 2000;
  int test_count = 200;
  int d_h = 64;
  int heads = 4;
  int inducing = 32;
  int epochs = 10;
  int batch_size = 50;
  double learning_rate = 1e-4;
  std::vector<int> fidelity_n{3, 4, 5};
  std::vector<int> renyi_n{2, 4};
  std::vector<int> n_grid{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
};

ReproProfile desk_profile();
ReproProfile paper_profile();
ReproProfile profile_for_scale(const std::string& scale);

// figure_id: fig2..fig6, optionally with a panel letter (e.g. fig6a).
// Writes <out_dir>/<figure_id>.csv and returns the rows.
EvalReport reproduce_figure(const std::string& figure_id, const ReproProfile& profile,
                            const std::string& out_dir, std::uint64_t seed, int threads = 1);

}  // namespace shadowbayes
