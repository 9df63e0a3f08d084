#include "shadowbayes/estimators.hpp"

#include <cmath>

namespace shadowbayes {

namespace {

bool all_zeros(const std::vector<std::uint8_t>& bits) {
  for (auto b : bits) {
    if (b) return false;
  }
  return true;
}

bool all_ones(const std::vector<std::uint8_t>& bits) {
  for (auto b : bits) {
    if (!b) return false;
  }
  return true;
}

double score_z_branch(const std::vector<std::uint8_t>& bits) {
  const int delta = (all_zeros(bits) || all_ones(bits)) ? 1 : 0;
  return 3.0 * delta / 2.0 - 0.75;
}

double score_xy_branch(const PauliBasis& basis, const std::vector<std::uint8_t>& bits) {
  int y_count = 0;
  for (Axis a : basis.axes) y_count += (a == Axis::Y) ? 1 : 0;
  int ones = 0;
  for (auto b : bits) ones += b;
  const int exponent = y_count / 2 + ones;
  return (exponent % 2 == 0) ? 0.75 : -0.75;
}

// All X/Y strings with an even number of Y's: the first n-1 axes are free,
// the last is forced.
PauliBasis xy_basis_from_bits(int n, std::uint32_t free_bits) {
  PauliBasis basis;
  basis.axes.resize(n);
  int y_count = 0;
  for (int q = 0; q < n - 1; ++q) {
    const bool y = (free_bits >> q) & 1u;
    basis.axes[q] = y ? Axis::Y : Axis::X;
    y_count += y;
  }
  basis.axes[n - 1] = (y_count % 2 == 1) ? Axis::Y : Axis::X;
  return basis;
}

}  // namespace

double dfe_score(const PauliBasis& basis, const std::vector<std::uint8_t>& outcome) {
  if (basis.axes.size() != outcome.size()) {
    throw std::invalid_argument("dfe_score: basis and outcome lengths differ");
  }
  bool all_z = true;
  for (Axis a : basis.axes) all_z = all_z && a == Axis::Z;
  return all_z ? score_z_branch(outcome) : score_xy_branch(basis, outcome);
}

DfeEstimate dfe_ghz(const DensityMatrix& rho, int n_rounds,
                    const std::optional<BitFlipNoise>& noise, Rng& rng) {
  if (n_rounds < 1) {
    throw std::invalid_argument("dfe_ghz: need at least one round");
  }
  const int n = rho.n;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);

  DfeEstimate est;
  est.n_rounds = n_rounds;
  est.samples.reserve(n_rounds);
  double sum = 0.0;
  for (int k = 0; k < n_rounds; ++k) {
    PauliBasis basis;
    basis.axes.resize(n);
    bool z_branch = unit(rng) < 1.0 / 3.0;
    if (z_branch) {
      for (auto& a : basis.axes) a = Axis::Z;
    } else {
      int y_count = 0;
      for (int q = 0; q < n - 1; ++q) {
        const bool y = coin(rng) == 1;
        basis.axes[q] = y ? Axis::Y : Axis::X;
        y_count += y;
      }
      basis.axes[n - 1] = (y_count % 2 == 1) ? Axis::Y : Axis::X;
    }
    MeasurementRecord record = measure_pauli(rho, basis, noise, rng);
    const double f = z_branch ? score_z_branch(record.outcome)
                              : score_xy_branch(basis, record.outcome);
    sum += f;
    est.samples.push_back(DfeSample{std::move(record), f});
  }
  est.f_hat = sum / static_cast<double>(n_rounds) + 0.25;
  return est;
}

double dfe_variance(double f) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw std::invalid_argument("dfe_variance: fidelity must be in [0, 1]");
  }
  return (1.0 + 2.0 * f) * (1.0 - f) / 2.0;
}

std::vector<OptimalityRow> verify_local_optimality(const DensityMatrix& rho,
                                                   const std::vector<double>& q_grid) {
  const int n = rho.n;
  const double p_z = 1.0 / 3.0;
  const std::uint32_t xy_settings = 1u << (n - 1);
  const double p_xy = (2.0 / 3.0) / static_cast<double>(xy_settings);

  // exact per-setting moments of the score
  PauliBasis all_z;
  all_z.axes.assign(n, Axis::Z);
  const Eigen::VectorXd pz_probs = pauli_outcome_probabilities(rho, all_z);
  double ez1 = 0.0, ez2 = 0.0;
  for (long b = 0; b < pz_probs.size(); ++b) {
    std::vector<std::uint8_t> bits(n);
    for (int q = 0; q < n; ++q) bits[q] = (b >> q) & 1L;
    const double f = score_z_branch(bits);
    ez1 += pz_probs(b) * f;
    ez2 += pz_probs(b) * f * f;
  }

  std::vector<double> exy1(xy_settings), exy2(xy_settings);
  for (std::uint32_t s = 0; s < xy_settings; ++s) {
    const PauliBasis basis = xy_basis_from_bits(n, s);
    const Eigen::VectorXd probs = pauli_outcome_probabilities(rho, basis);
    double e1 = 0.0, e2 = 0.0;
    for (long b = 0; b < probs.size(); ++b) {
      std::vector<std::uint8_t> bits(n);
      for (int q = 0; q < n; ++q) bits[q] = (b >> q) & 1L;
      const double f = score_xy_branch(basis, bits);
      e1 += probs(b) * f;
      e2 += probs(b) * f * f;
    }
    exy1[s] = e1;
    exy2[s] = e2;
  }

  std::vector<OptimalityRow> rows;
  rows.reserve(q_grid.size());
  for (double q : q_grid) {
    if (!(q > 0.0 && q < 1.0)) {
      throw std::invalid_argument("verify_local_optimality: q must lie strictly inside (0, 1)");
    }
    const double w_z = p_z / q;
    const double q_xy = (1.0 - q) / static_cast<double>(xy_settings);
    const double w_xy = p_xy / q_xy;
    double mean = q * w_z * ez1;
    double second = q * w_z * w_z * ez2;
    for (std::uint32_t s = 0; s < xy_settings; ++s) {
      mean += q_xy * w_xy * exy1[s];
      second += q_xy * w_xy * w_xy * exy2[s];
    }
    rows.push_back(OptimalityRow{q, second - mean * mean});
  }
  return rows;
}

double pauli_pair_trace(Axis axis_k, int bit_k, Axis axis_l, int bit_l) {
  if (axis_k != axis_l) return 0.5;
  return bit_k == bit_l ? 5.0 : -4.0;
}

double renyi_estimate(const std::vector<MeasurementRecord>& records,
                      const std::vector<int>& subsystem_a) {
  if (records.size() < 2) {
    throw std::invalid_argument("renyi_estimate: need at least two records");
  }
  const int n = records.front().n();
  validate_subsystem(n, subsystem_a);
  const bool pauli = records.front().is_pauli();
  for (const auto& r : records) {
    if (r.is_pauli() != pauli || r.n() != n) {
      throw std::invalid_argument("renyi_estimate: inconsistent records");
    }
  }
  const std::size_t count = records.size();
  double sum = 0.0;
  if (pauli) {
    for (std::size_t k = 0; k < count; ++k) {
      const auto& rk = records[k];
      for (std::size_t l = k + 1; l < count; ++l) {
        const auto& rl = records[l];
        double prod = 1.0;
        for (int q : subsystem_a) {
          prod *= pauli_pair_trace(rk.pauli().axes[q], rk.outcome[q], rl.pauli().axes[q],
                                   rl.outcome[q]);
        }
        sum += 2.0 * prod;  // the pair kernel is symmetric
      }
    }
  } else {
    std::vector<CMatrix> reduced;
    reduced.reserve(count);
    for (const auto& r : records) {
      reduced.push_back(
          partial_trace_complement(clifford_snapshot(r.clifford(), r.outcome), n, subsystem_a));
    }
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t l = k + 1; l < count; ++l) {
        sum += 2.0 * (reduced[k] * reduced[l]).trace().real();
      }
    }
  }
  const double pairs = static_cast<double>(count) * static_cast<double>(count - 1);
  return sum / pairs;
}

}  // namespace shadowbayes
