#include "support.hpp"

namespace shadowbayes::testing {

DensityMatrix random_state(int n, Rng& rng) { return sample_hilbert_schmidt(n, rng); }

PureState random_pure_state(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  CVector v(dim_of(n));
  for (long i = 0; i < v.size(); ++i) v(i) = Complex(normal(rng), normal(rng));
  v /= v.norm();
  return PureState{n, std::move(v)};
}

double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

CMatrix dense_swap_operator(int n, const std::vector<int>& subsystem_a) {
  const long d = dim_of(n);
  long mask = 0;
  for (int q : subsystem_a) mask |= 1L << q;
  CMatrix s = CMatrix::Zero(d * d, d * d);
  for (long i = 0; i < d; ++i) {
    for (long j = 0; j < d; ++j) {
      const long ip = (i & ~mask) | (j & mask);
      const long jp = (j & ~mask) | (i & mask);
      // first tensor factor carries the high bits, matching kroneckerProduct
      s(ip * d + jp, i * d + j) = 1.0;
    }
  }
  return s;
}

}  // namespace shadowbayes::testing
