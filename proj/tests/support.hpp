#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "shadowbayes/qcore.hpp"

namespace shadowbayes::testing {

// Random mixed state via the Hilbert-Schmidt construction, for oracle sweeps.
DensityMatrix random_state(int n, Rng& rng);

// Haar-ish random pure state: normalized complex Gaussian vector.
PureState random_pure_state(int n, Rng& rng);

double max_abs_diff(const CMatrix& a, const CMatrix& b);

// Explicit two-copy swap operator on subsystem A (dimension 4^n), used as the
// independent oracle for the swap functional.
CMatrix dense_swap_operator(int n, const std::vector<int>& subsystem_a);

}  // namespace shadowbayes::testing
