#include "shadowbayes/shadows.hpp"

#include <cmath>
#include <unsupported/Eigen/KroneckerProduct>

namespace shadowbayes {

namespace {

const Eigen::Matrix2cd& hadamard() {
  static const Eigen::Matrix2cd h = [] {
    Eigen::Matrix2cd m;
    const double s = 1.0 / std::sqrt(2.0);
    m << s, s, s, -s;
    return m;
  }();
  return h;
}

// Basis rotations: Z -> I, X -> H, Y -> H S†. Readout happens in the
// computational basis of U rho U†.
const Eigen::Matrix2cd& rotation(Axis axis) {
  static const Eigen::Matrix2cd hsdg = [] {
    Eigen::Matrix2cd sdg;
    sdg << 1.0, 0.0, 0.0, Complex(0.0, -1.0);
    return Eigen::Matrix2cd(hadamard() * sdg);
  }();
  static const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  switch (axis) {
    case Axis::X: return hadamard();
    case Axis::Y: return hsdg;
    default: return id;
  }
}

void conjugate_single_qubit(const Eigen::Matrix2cd& u, int q, CMatrix& m) {
  const long d = m.rows();
  const long bit = 1L << q;
  for (long c = 0; c < d; ++c) {
    for (long i = 0; i < d; ++i) {
      if (i & bit) continue;
      const Complex a = m(i, c), b = m(i | bit, c);
      m(i, c) = u(0, 0) * a + u(0, 1) * b;
      m(i | bit, c) = u(1, 0) * a + u(1, 1) * b;
    }
  }
  for (long j = 0; j < d; ++j) {
    if (j & bit) continue;
    for (long i = 0; i < d; ++i) {
      const Complex a = m(i, j), b = m(i, j | bit);
      m(i, j) = a * std::conj(u(0, 0)) + b * std::conj(u(0, 1));
      m(i, j | bit) = a * std::conj(u(1, 0)) + b * std::conj(u(1, 1));
    }
  }
}

std::vector<std::uint8_t> sample_bits_from_diagonal(const CMatrix& rotated, int n, Rng& rng) {
  const long d = rotated.rows();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  long idx = d - 1;
  double acc = 0.0;
  for (long i = 0; i < d; ++i) {
    acc += std::max(0.0, rotated(i, i).real());
    if (u < acc) {
      idx = i;
      break;
    }
  }
  std::vector<std::uint8_t> bits(n);
  for (int q = 0; q < n; ++q) bits[q] = (idx >> q) & 1L;
  return bits;
}

void apply_noise(std::vector<std::uint8_t>& bits, const std::optional<BitFlipNoise>& noise,
                 Rng& rng) {
  if (!noise) return;
  if (!(noise->lambda >= 0.0 && noise->lambda <= 1.0)) {
    throw std::invalid_argument("bit-flip lambda must be in [0, 1]");
  }
  if (noise->lambda == 0.0) return;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& b : bits) {
    if (unit(rng) < noise->lambda) b ^= 1;
  }
}

}  // namespace

PauliBasis random_pauli_basis(int n, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  PauliBasis basis;
  basis.axes.resize(n);
  for (auto& a : basis.axes) a = static_cast<Axis>(pick(rng));
  return basis;
}

Eigen::VectorXd pauli_outcome_probabilities(const DensityMatrix& rho, const PauliBasis& basis) {
  if (basis.axes.size() != static_cast<std::size_t>(rho.n)) {
    throw std::invalid_argument("basis length mismatch");
  }
  CMatrix m = rho.data;
  for (int q = 0; q < rho.n; ++q) {
    if (basis.axes[q] != Axis::Z) conjugate_single_qubit(rotation(basis.axes[q]), q, m);
  }
  Eigen::VectorXd probs(m.rows());
  for (long i = 0; i < m.rows(); ++i) probs(i) = std::max(0.0, m(i, i).real());
  return probs;
}

MeasurementRecord measure_pauli(const DensityMatrix& rho, const PauliBasis& basis,
                                const std::optional<BitFlipNoise>& noise, Rng& rng) {
  if (basis.axes.size() != static_cast<std::size_t>(rho.n)) {
    throw std::invalid_argument("measure_pauli: basis length mismatch");
  }
  CMatrix m = rho.data;
  for (int q = 0; q < rho.n; ++q) {
    if (basis.axes[q] != Axis::Z) conjugate_single_qubit(rotation(basis.axes[q]), q, m);
  }
  auto bits = sample_bits_from_diagonal(m, rho.n, rng);
  apply_noise(bits, noise, rng);
  return MeasurementRecord{basis, std::move(bits)};
}

MeasurementRecord measure_clifford(const DensityMatrix& rho, const CliffordTableau& t,
                                   const std::optional<BitFlipNoise>& noise, Rng& rng) {
  if (t.n != rho.n) {
    throw std::invalid_argument("measure_clifford: dimension mismatch");
  }
  DensityMatrix rotated = apply_clifford(t, rho);
  auto bits = sample_bits_from_diagonal(rotated.data, rho.n, rng);
  apply_noise(bits, noise, rng);
  return MeasurementRecord{t, std::move(bits)};
}

Eigen::Matrix2cd pauli_snapshot_factor(Axis axis, int bit) {
  Eigen::Vector2cd ket = Eigen::Vector2cd::Zero();
  ket(bit) = 1.0;
  Eigen::Vector2cd rotated = rotation(axis).adjoint() * ket;
  return 3.0 * (rotated * rotated.adjoint()) - Eigen::Matrix2cd::Identity();
}

CMatrix pauli_snapshot_dense(const PauliBasis& basis, const std::vector<std::uint8_t>& outcome) {
  const int n = static_cast<int>(basis.axes.size());
  if (outcome.size() != basis.axes.size()) {
    throw std::invalid_argument("pauli_snapshot_dense: outcome length mismatch");
  }
  // qubit 0 is the least significant index bit, so higher qubits become the
  // leading kron factor
  CMatrix acc = pauli_snapshot_factor(basis.axes[0], outcome[0]);
  for (int q = 1; q < n; ++q) {
    CMatrix factor = pauli_snapshot_factor(basis.axes[q], outcome[q]);
    acc = Eigen::kroneckerProduct(factor, acc).eval();
  }
  return acc;
}

CMatrix clifford_snapshot(const CliffordTableau& t, const std::vector<std::uint8_t>& outcome) {
  if (outcome.size() != static_cast<std::size_t>(t.n)) {
    throw std::invalid_argument("clifford_snapshot: outcome length mismatch");
  }
  const long d = dim_of(t.n);
  long idx = 0;
  for (int q = 0; q < t.n; ++q) idx |= static_cast<long>(outcome[q] & 1) << q;
  CMatrix m = CMatrix::Zero(d, d);
  m(idx, idx) = 1.0;
  conjugate_inverse_in_place(tableau_to_circuit(t), m);
  m *= static_cast<double>(d + 1);
  m -= CMatrix::Identity(d, d);
  return m;
}

CMatrix snapshot_dense(const MeasurementRecord& record) {
  if (record.is_pauli()) return pauli_snapshot_dense(record.pauli(), record.outcome);
  return clifford_snapshot(record.clifford(), record.outcome);
}

double snapshot_trace(const MeasurementRecord& record, const CMatrix& observable) {
  if (record.is_pauli()) {
    return (pauli_snapshot_dense(record.pauli(), record.outcome) * observable).trace().real();
  }
  // tr(snapshot · O) = (2^n+1) <b|U O U†|b> - tr(O)
  const CliffordTableau& t = record.clifford();
  CMatrix rotated = observable;
  conjugate_in_place(tableau_to_circuit(t), rotated);
  long idx = 0;
  for (int q = 0; q < t.n; ++q) idx |= static_cast<long>(record.outcome[q] & 1) << q;
  const double d = static_cast<double>(dim_of(t.n));
  return (d + 1.0) * rotated(idx, idx).real() - observable.trace().real();
}

namespace {

void check_records(const std::vector<MeasurementRecord>& records) {
  if (records.empty()) {
    throw std::invalid_argument("estimate_linear: no records");
  }
  const bool pauli = records.front().is_pauli();
  const int n = records.front().n();
  for (const auto& r : records) {
    if (r.is_pauli() != pauli) {
      throw std::invalid_argument("estimate_linear: mixed measurement ensembles");
    }
    if (r.n() != n) {
      throw std::invalid_argument("estimate_linear: inconsistent qubit counts");
    }
  }
}

}  // namespace

double estimate_linear(const std::vector<MeasurementRecord>& records, const CMatrix& observable) {
  check_records(records);
  if ((observable - observable.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol) {
    throw std::invalid_argument("estimate_linear: observable is not Hermitian");
  }
  const long d = dim_of(records.front().n());
  if (observable.rows() != d || observable.cols() != d) {
    throw std::invalid_argument("estimate_linear: observable dimension mismatch");
  }
  double sum = 0.0;
  for (const auto& r : records) sum += snapshot_trace(r, observable);
  return sum / static_cast<double>(records.size());
}

double estimate_linear(const std::vector<MeasurementRecord>& records,
                       const std::function<double(const MeasurementRecord&)>& contraction) {
  check_records(records);
  double sum = 0.0;
  for (const auto& r : records) sum += contraction(r);
  return sum / static_cast<double>(records.size());
}

Eigen::VectorXd apply_bitflip(const Eigen::VectorXd& p, int n, double lambda) {
  if (p.size() != dim_of(n)) {
    throw std::invalid_argument("apply_bitflip: dimension mismatch");
  }
  Eigen::VectorXd out = p;
  for (int q = 0; q < n; ++q) {
    const long bit = 1L << q;
    for (long i = 0; i < out.size(); ++i) {
      if (i & bit) continue;
      const double a = out(i), b = out(i | bit);
      out(i) = (1.0 - lambda) * a + lambda * b;
      out(i | bit) = lambda * a + (1.0 - lambda) * b;
    }
  }
  return out;
}

Eigen::VectorXd invert_bitflip(const Eigen::VectorXd& p_noisy, int n, double lambda) {
  if (lambda == 0.5) {
    throw singular_noise_error("invert_bitflip: noise map is singular at lambda = 1/2");
  }
  if (p_noisy.size() != dim_of(n)) {
    throw std::invalid_argument("invert_bitflip: dimension mismatch");
  }
  if (std::abs(p_noisy.sum() - 1.0) > 1e-8) {
    throw std::invalid_argument("invert_bitflip: input does not sum to 1");
  }
  const double det = 1.0 - 2.0 * lambda;
  Eigen::VectorXd out = p_noisy;
  for (int q = 0; q < n; ++q) {
    const long bit = 1L << q;
    for (long i = 0; i < out.size(); ++i) {
      if (i & bit) continue;
      const double a = out(i), b = out(i | bit);
      out(i) = ((1.0 - lambda) * a - lambda * b) / det;
      out(i | bit) = (-lambda * a + (1.0 - lambda) * b) / det;
    }
  }
  return out;
}

}  // namespace shadowbayes
