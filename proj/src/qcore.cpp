#include "shadowbayes/qcore.hpp"

#include <cmath>

namespace shadowbayes {

void validate_pure_state(const PureState& psi) {
  if (psi.n < 1 || psi.n > kMaxQubits) {
    throw std::invalid_argument("pure state qubit count out of range");
  }
  if (psi.amplitudes.size() != dim_of(psi.n)) {
    throw std::invalid_argument("pure state dimension mismatch");
  }
  double norm2 = psi.amplitudes.squaredNorm();
  if (std::abs(norm2 - 1.0) > kNormTol) {
    throw std::invalid_argument("pure state is not normalized");
  }
}

void validate_density_matrix(const DensityMatrix& rho) {
  const long d = dim_of(rho.n);
  if (rho.n < 1 || rho.n > kMaxQubits || rho.data.rows() != d || rho.data.cols() != d) {
    throw std::invalid_argument("density matrix dimension mismatch");
  }
  double herm_dev = (rho.data - rho.data.adjoint()).cwiseAbs().maxCoeff();
  if (herm_dev > kHermitianTol) {
    throw std::invalid_argument("density matrix is not Hermitian");
  }
  if (std::abs(rho.data.trace() - Complex(1.0, 0.0)) > kTraceTol) {
    throw std::invalid_argument("density matrix trace is not 1");
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.data, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < kEigenvalueFloor) {
    throw std::invalid_argument("density matrix is not positive semi-definite");
  }
}

void validate_subsystem(int n, const std::vector<int>& subsystem_a) {
  if (subsystem_a.empty()) {
    throw std::invalid_argument("subsystem index set is empty");
  }
  int prev = -1;
  for (int q : subsystem_a) {
    if (q < 0 || q >= n) {
      throw std::invalid_argument("subsystem index out of range");
    }
    if (q <= prev) {
      throw std::invalid_argument("subsystem indices must be strictly increasing");
    }
    prev = q;
  }
}

PureState ghz_state(int n) {
  if (n < 1 || n > kMaxQubits) {
    throw std::invalid_argument("ghz_state: qubit count out of range");
  }
  const long d = dim_of(n);
  CVector amps = CVector::Zero(d);
  const double a = 1.0 / std::sqrt(2.0);
  amps(0) = a;
  amps(d - 1) = a;
  return PureState{n, std::move(amps)};
}

DensityMatrix pure_to_density(const PureState& psi) {
  validate_pure_state(psi);
  return DensityMatrix{psi.n, psi.amplitudes * psi.amplitudes.adjoint()};
}

DensityMatrix depolarize(const PureState& psi, double lambda) {
  validate_pure_state(psi);
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("depolarize: lambda must be in [0, 1]");
  }
  const long d = dim_of(psi.n);
  CMatrix out = (1.0 - lambda) * (psi.amplitudes * psi.amplitudes.adjoint());
  out += (lambda / static_cast<double>(d)) * CMatrix::Identity(d, d);
  return DensityMatrix{psi.n, std::move(out)};
}

DensityMatrix sample_hilbert_schmidt(int n, Rng& rng) {
  if (n < 1 || n > kMaxQubits) {
    throw std::invalid_argument("sample_hilbert_schmidt: qubit count out of range");
  }
  const long d = dim_of(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = 1.0 / std::sqrt(2.0);
  CMatrix g(d, d);
  for (long c = 0; c < d; ++c) {
    for (long r = 0; r < d; ++r) {
      g(r, c) = Complex(normal(rng) * s, normal(rng) * s);
    }
  }
  CMatrix w = g * g.adjoint();
  w /= w.trace().real();
  // symmetrize away the last bits of rounding so invariant checks are exact
  CMatrix rho = 0.5 * (w + w.adjoint());
  return DensityMatrix{n, std::move(rho)};
}

CMatrix partial_trace_complement(const CMatrix& m, int n, const std::vector<int>& keep) {
  validate_subsystem(n, keep);
  const long d = dim_of(n);
  if (m.rows() != d || m.cols() != d) {
    throw std::invalid_argument("partial trace: matrix dimension mismatch");
  }
  std::vector<int> rest;
  rest.reserve(n - keep.size());
  {
    std::size_t ki = 0;
    for (int q = 0; q < n; ++q) {
      if (ki < keep.size() && keep[ki] == q) {
        ++ki;
      } else {
        rest.push_back(q);
      }
    }
  }
  const long da = 1L << keep.size();
  const long db = 1L << rest.size();
  auto scatter = [](long bits, const std::vector<int>& positions) {
    long out = 0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      out |= ((bits >> i) & 1L) << positions[i];
    }
    return out;
  };
  CMatrix out = CMatrix::Zero(da, da);
  for (long ib = 0; ib < db; ++ib) {
    const long base = scatter(ib, rest);
    for (long ic = 0; ic < da; ++ic) {
      const long col = base | scatter(ic, keep);
      for (long ir = 0; ir < da; ++ir) {
        out(ir, ic) += m(base | scatter(ir, keep), col);
      }
    }
  }
  return out;
}

DensityMatrix partial_trace_b(const DensityMatrix& rho, const std::vector<int>& subsystem_a) {
  CMatrix reduced = partial_trace_complement(rho.data, rho.n, subsystem_a);
  return DensityMatrix{static_cast<int>(subsystem_a.size()), std::move(reduced)};
}

double fidelity_with_pure(const DensityMatrix& rho, const PureState& psi) {
  if (rho.n != psi.n || rho.data.rows() != psi.amplitudes.size()) {
    throw std::invalid_argument("fidelity_with_pure: dimension mismatch");
  }
  Complex v = (psi.amplitudes.adjoint() * rho.data * psi.amplitudes)(0, 0);
  return v.real();
}

double purity(const CMatrix& m) { return (m * m).trace().real(); }

double swap_functional(const DensityMatrix& rho, const std::vector<int>& subsystem_a) {
  return purity(partial_trace_complement(rho.data, rho.n, subsystem_a));
}

}  // namespace shadowbayes
