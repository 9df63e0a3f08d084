#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "shadowbayes/common.hpp"

namespace shadowbayes {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

constexpr int kMaxQubits = 8;
constexpr double kHermitianTol = 1e-10;
constexpr double kTraceTol = 1e-10;
constexpr double kEigenvalueFloor = -1e-9;
constexpr double kNormTol = 1e-12;

// Qubit convention used throughout: indices are 0-based and qubit 0 is the
// least significant bit of a computational-basis index.

struct PureState {
  int n = 0;
  CVector amplitudes;
};

struct DensityMatrix {
  int n = 0;
  CMatrix data;
};

inline long dim_of(int n) { return 1L << n; }

// Throws std::invalid_argument when the matrix fails Hermiticity, unit trace,
// or the eigenvalue floor.
void validate_density_matrix(const DensityMatrix& rho);
void validate_pure_state(const PureState& psi);
// Subsystems are strictly increasing 0-based qubit index lists.
void validate_subsystem(int n, const std::vector<int>& subsystem_a);

PureState ghz_state(int n);
DensityMatrix pure_to_density(const PureState& psi);
DensityMatrix depolarize(const PureState& psi, double lambda);
DensityMatrix sample_hilbert_schmidt(int n, Rng& rng);

// Partial trace over the complement of `keep`, by direct index arithmetic.
// Works on any square matrix of dimension 2^n (snapshots included).
CMatrix partial_trace_complement(const CMatrix& m, int n, const std::vector<int>& keep);
DensityMatrix partial_trace_b(const DensityMatrix& rho, const std::vector<int>& subsystem_a);

double fidelity_with_pure(const DensityMatrix& rho, const PureState& psi);
double purity(const CMatrix& m);
// tr((rho ⊗ rho) S_A), evaluated as the purity of the reduced state.
double swap_functional(const DensityMatrix& rho, const std::vector<int>& subsystem_a);

}  // namespace shadowbayes
