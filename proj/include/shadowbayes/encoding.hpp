#pragma once

#include <string>
#include <vector>

#include "shadowbayes/shadows.hpp"

namespace shadowbayes {

enum class Ensemble : std::uint8_t { Pauli = 0, Clifford = 1 };
enum class Task : std::uint8_t { GhzFidelity = 0, RenyiPurity = 1 };

std::string to_string(Ensemble e);
std::string to_string(Task t);
Ensemble ensemble_from_string(const std::string& s);
Task task_from_string(const std::string& s);

// Feature dimension: n for Pauli records, n(2n+3) for Clifford records.
int feature_dim(Ensemble ensemble, int n);

using FeatureRows =
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureMatrix {
  FeatureRows rows;  // n_max x d, padding rows are all -1
  int n_valid = 0;

  int n_max() const { return static_cast<int>(rows.rows()); }
  int d() const { return static_cast<int>(rows.cols()); }
};

struct InstanceMeta {
  int n = 0;
  Ensemble ensemble = Ensemble::Pauli;
  Task task = Task::GhzFidelity;
  double noise_lambda = 0.0;
  // Generation provenance, enough to rebuild rho and recheck the label.
  double prior_param = 0.0;
  std::uint64_t instance_seed = 0;
};

struct ExperimentInstance {
  FeatureMatrix features;
  double baseline_f = 0.0;  // stored unclipped
  double label = 0.0;
  InstanceMeta meta;
};

// Per-qubit value = axis code (X->0, Y->2, Z->4) + outcome bit.
std::vector<std::int32_t> encode_pauli_record(const MeasurementRecord& record);
std::vector<std::int32_t> encode_record(const MeasurementRecord& record);

// d is inferred from the records when omitted; pass it explicitly to allow an
// empty record list (all-padding matrix).
FeatureMatrix build_feature_matrix(const std::vector<MeasurementRecord>& records, int n_max);
FeatureMatrix build_feature_matrix(const std::vector<MeasurementRecord>& records, int n_max,
                                   int d);

// Fixed affine preprocessing of integer features; recorded in dataset headers
// so trained models stay reproducible.
struct FeatureAffine {
  double offset = 0.0;
  double scale = 1.0;
};
FeatureAffine feature_affine(Ensemble ensemble);

struct Dataset {
  std::vector<ExperimentInstance> instances;
  double f_l = 0.0;
  double f_u = 1.0;
};

void dataset_write(const std::vector<ExperimentInstance>& instances, const std::string& path,
                   double f_l = 0.0, double f_u = 1.0);
Dataset dataset_read(const std::string& path);

}  // namespace shadowbayes
