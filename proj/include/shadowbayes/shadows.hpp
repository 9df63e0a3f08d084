#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "shadowbayes/clifford.hpp"
#include "shadowbayes/qcore.hpp"

namespace shadowbayes {

enum class Axis : std::uint8_t { X = 0, Y = 1, Z = 2 };

struct PauliBasis {
  std::vector<Axis> axes;
};

struct BitFlipNoise {
  double lambda = 0.0;
};

struct MeasurementRecord {
  std::variant<PauliBasis, CliffordTableau> basis;
  std::vector<std::uint8_t> outcome;

  bool is_pauli() const { return std::holds_alternative<PauliBasis>(basis); }
  const PauliBasis& pauli() const { return std::get<PauliBasis>(basis); }
  const CliffordTableau& clifford() const { return std::get<CliffordTableau>(basis); }
  int n() const { return static_cast<int>(outcome.size()); }
};

PauliBasis random_pauli_basis(int n, Rng& rng);

// Exact computational-basis probabilities of the rotated state.
Eigen::VectorXd pauli_outcome_probabilities(const DensityMatrix& rho, const PauliBasis& basis);

MeasurementRecord measure_pauli(const DensityMatrix& rho, const PauliBasis& basis,
                                const std::optional<BitFlipNoise>& noise, Rng& rng);
MeasurementRecord measure_clifford(const DensityMatrix& rho, const CliffordTableau& t,
                                   const std::optional<BitFlipNoise>& noise, Rng& rng);

// 3 U†|bit><bit|U - I for the axis rotation; unit trace, not PSD.
Eigen::Matrix2cd pauli_snapshot_factor(Axis axis, int bit);
// Tensor product of the per-qubit factors.
CMatrix pauli_snapshot_dense(const PauliBasis& basis, const std::vector<std::uint8_t>& outcome);
// (2^n + 1) U†|b><b|U - I.
CMatrix clifford_snapshot(const CliffordTableau& t, const std::vector<std::uint8_t>& outcome);
CMatrix snapshot_dense(const MeasurementRecord& record);

double snapshot_trace(const MeasurementRecord& record, const CMatrix& observable);
double estimate_linear(const std::vector<MeasurementRecord>& records, const CMatrix& observable);
// Closed-form contractions can be plugged in instead of the dense trace.
double estimate_linear(const std::vector<MeasurementRecord>& records,
                       const std::function<double(const MeasurementRecord&)>& contraction);

Eigen::VectorXd apply_bitflip(const Eigen::VectorXd& p, int n, double lambda);
// Exact factor-wise inverse; throws singular_noise_error at lambda = 1/2.
Eigen::VectorXd invert_bitflip(const Eigen::VectorXd& p_noisy, int n, double lambda);

}  // namespace shadowbayes
