#pragma once

#include <optional>
#include <vector>

#include "shadowbayes/shadows.hpp"

namespace shadowbayes {

struct DfeSample {
  MeasurementRecord record;
  double score = 0.0;  // F, always ±3/4
};

struct DfeEstimate {
  double f_hat = 0.0;  // mean(F) + 1/4
  int n_rounds = 0;
  std::vector<DfeSample> samples;
};

// GHZ direct fidelity estimation with random Pauli settings: with probability
// 1/3 measure all-Z and score 3(δ_{b,0..0}+δ_{b,1..1})/2 - 3/4, otherwise an
// even-Y X/Y string scored (3/4)·(-1)^{|Y|/2 + |ones(b)|}.
DfeEstimate dfe_ghz(const DensityMatrix& rho, int n_rounds,
                    const std::optional<BitFlipNoise>& noise, Rng& rng);

// Round score for a measured setting; the all-Z string selects the
// computational-basis branch.
double dfe_score(const PauliBasis& basis, const std::vector<std::uint8_t>& outcome);

// Single-round score variance (1 + 2f)(1 - f)/2.
double dfe_variance(double f);

struct OptimalityRow {
  double q = 0.0;
  double variance = 0.0;
};

// Exact single-round variance of the importance-reweighted score when the
// computational-basis branch is sampled with probability q instead of 1/3.
std::vector<OptimalityRow> verify_local_optimality(const DensityMatrix& rho,
                                                   const std::vector<double>& q_grid);

// Local two-snapshot trace: 5 (same basis, same bit), -4 (same basis,
// different bit), 1/2 (different basis).
double pauli_pair_trace(Axis axis_k, int bit_k, Axis axis_l, int bit_l);

// U-statistic over ordered pairs of snapshots for tr((rho ⊗ rho) S_A).
double renyi_estimate(const std::vector<MeasurementRecord>& records,
                      const std::vector<int>& subsystem_a);

}  // namespace shadowbayes
