#pragma once

#include <cstdint>
#include <vector>

#include "shadowbayes/qcore.hpp"

namespace shadowbayes {

// One conjugated Pauli: bit q of x/z marks an X/Z component on qubit q.
// phase follows the feature-encoding convention: 1 -> eigenvalue +1, 0 -> -1.
struct PauliRow {
  std::uint32_t x = 0;
  std::uint32_t z = 0;
  std::uint8_t phase = 1;

  int sign() const { return phase ? +1 : -1; }
  bool operator==(const PauliRow& o) const { return x == o.x && z == o.z && phase == o.phase; }
};

// rows[q] is the image of X_q, rows[n+q] the image of Z_q under conjugation.
struct CliffordTableau {
  int n = 0;
  std::vector<PauliRow> rows;

  bool operator==(const CliffordTableau& o) const { return n == o.n && rows == o.rows; }
};

struct Gate {
  enum Kind : std::uint8_t { H, S, CNOT } kind = H;
  int a = 0;   // target qubit (control for CNOT)
  int b = -1;  // CNOT target
};

struct CliffordCircuit {
  int n = 0;
  std::vector<Gate> gates;
};

CliffordTableau identity_tableau(int n);
// 1 when the two Pauli descriptors anticommute.
int symplectic_product(const PauliRow& a, const PauliRow& b);
bool is_symplectic(const CliffordTableau& t);

// Exactly uniform over the Clifford group modulo global phase: uniform
// symplectic part via the transvection construction, uniform phase bits.
CliffordTableau sample_uniform_clifford(int n, Rng& rng);

// H/S/CNOT sequence whose dense unitary realizes the tableau's conjugation
// action, global phase unconstrained. Throws on non-symplectic input.
CliffordCircuit tableau_to_circuit(const CliffordTableau& t);

// m -> U m U† (or U† m U) applied gate by gate.
void conjugate_in_place(const CliffordCircuit& c, CMatrix& m);
void conjugate_inverse_in_place(const CliffordCircuit& c, CMatrix& m);

DensityMatrix apply_clifford(const CliffordTableau& t, const DensityMatrix& rho);

// Flattened tableau rows (I,X,Y,Z -> 0,1,2,3 plus phase bit) with the outcome
// bits appended; length n(2n+3).
std::vector<std::int32_t> encode_tableau(const CliffordTableau& t,
                                         const std::vector<std::uint8_t>& outcome);

// Dense helpers, used by tests and by the Clifford snapshot path.
CMatrix dense_pauli(int n, std::uint32_t x, std::uint32_t z, int sign);
CMatrix circuit_unitary(const CliffordCircuit& c);

}  // namespace shadowbayes
