#include "shadowbayes/clifford.hpp"

#include <bit>
#include <cmath>

namespace shadowbayes {

namespace {

int parity(std::uint32_t v) { return std::popcount(v) & 1; }

// --- tableau conjugation updates -------------------------------------------

void tableau_h(CliffordTableau& t, int a) {
  const std::uint32_t m = 1u << a;
  for (auto& r : t.rows) {
    if ((r.x & m) && (r.z & m)) r.phase ^= 1;
    const std::uint32_t xa = r.x & m, za = r.z & m;
    r.x = (r.x & ~m) | za;
    r.z = (r.z & ~m) | xa;
  }
}

void tableau_s(CliffordTableau& t, int a) {
  const std::uint32_t m = 1u << a;
  for (auto& r : t.rows) {
    if ((r.x & m) && (r.z & m)) r.phase ^= 1;
    r.z ^= r.x & m;
  }
}

void tableau_cnot(CliffordTableau& t, int c, int tq) {
  const std::uint32_t mc = 1u << c, mt = 1u << tq;
  for (auto& r : t.rows) {
    const bool xc = r.x & mc, zt = r.z & mt, xt = r.x & mt, zc = r.z & mc;
    if (xc && zt && !(xt ^ zc)) r.phase ^= 1;
    if (xc) r.x ^= mt;
    if (zt) r.z ^= mc;
  }
}

void tableau_apply(CliffordTableau& t, const Gate& g) {
  switch (g.kind) {
    case Gate::H: tableau_h(t, g.a); break;
    case Gate::S: tableau_s(t, g.a); break;
    case Gate::CNOT: tableau_cnot(t, g.a, g.b); break;
  }
}

// --- uniform symplectic sampling (transvection construction) ---------------
//
// Vectors over GF(2) with interleaved components: bit 2q is the X part on
// qubit q, bit 2q+1 the Z part.

int sym_inner(std::uint32_t v, std::uint32_t w) {
  constexpr std::uint32_t even = 0x55555555u;
  constexpr std::uint32_t odd = 0xaaaaaaaau;
  return parity((v & (w >> 1) & even) ^ (v & (w << 1) & odd));
}

std::uint32_t transvect(std::uint32_t h, std::uint32_t v) {
  return sym_inner(h, v) ? (v ^ h) : v;
}

struct TransvectionPair {
  std::uint32_t first = 0, second = 0;
};

std::uint32_t pair_bits(std::uint32_t v, int q) { return (v >> (2 * q)) & 3u; }

// h1, h2 with y = Z_h2 Z_h1 x (apply `first` then `second`).
TransvectionPair find_transvection(std::uint32_t x, std::uint32_t y, int nn) {
  TransvectionPair out;
  if (x == y) return out;
  if (sym_inner(x, y)) {
    out.first = x ^ y;
    return out;
  }
  const int pairs = nn / 2;
  std::uint32_t z = 0;
  for (int q = 0; q < pairs; ++q) {
    const std::uint32_t px = pair_bits(x, q), py = pair_bits(y, q);
    if (px != 0 && py != 0) {
      std::uint32_t pz = px ^ py;
      if (pz == 0) {
        // same nonzero Pauli on this qubit: pick one that anticommutes with it
        pz = 2u;                             // Z component
        if ((px & 1u) != ((px >> 1) & 1u)) {  // X or Z there -> use the other
          pz = ((px & 1u) << 1) | ((px >> 1) & 1u);
        }
      }
      z = pz << (2 * q);
      out.first = x ^ z;
      out.second = y ^ z;
      return out;
    }
  }
  for (int q = 0; q < pairs; ++q) {
    const std::uint32_t px = pair_bits(x, q), py = pair_bits(y, q);
    if (px != 0 && py == 0) {
      std::uint32_t pz;
      if ((px & 1u) == ((px >> 1) & 1u)) {
        pz = 2u;
      } else {
        pz = ((px & 1u) << 1) | ((px >> 1) & 1u);
      }
      z |= pz << (2 * q);
      break;
    }
  }
  for (int q = 0; q < pairs; ++q) {
    const std::uint32_t px = pair_bits(x, q), py = pair_bits(y, q);
    if (px == 0 && py != 0) {
      std::uint32_t pz;
      if ((py & 1u) == ((py >> 1) & 1u)) {
        pz = 2u;
      } else {
        pz = ((py & 1u) << 1) | ((py >> 1) & 1u);
      }
      z |= pz << (2 * q);
      break;
    }
  }
  out.first = x ^ z;
  out.second = y ^ z;
  return out;
}

// Rows of a uniformly random element of Sp(2n, GF(2)); row 2q is the image of
// X_q, row 2q+1 of Z_q.
std::vector<std::uint32_t> random_symplectic(int n, Rng& rng) {
  const int nn = 2 * n;
  std::uniform_int_distribution<std::uint32_t> nonzero(1u, (1u << nn) - 1u);
  const std::uint32_t f1_draw = nonzero(rng);
  std::uniform_int_distribution<std::uint32_t> coin(0u, 1u);

  const std::uint32_t e1 = 1u;
  TransvectionPair t = find_transvection(e1, f1_draw, nn);

  const std::uint32_t b0 = coin(rng);
  std::uint32_t eprime = e1;
  for (int j = 2; j < nn; ++j) {
    eprime |= coin(rng) << j;
  }
  std::uint32_t h0 = transvect(t.second, transvect(t.first, eprime));
  const std::uint32_t f1 = b0 ? 0u : f1_draw;

  std::vector<std::uint32_t> g;
  if (n == 1) {
    g = {1u, 2u};
  } else {
    std::vector<std::uint32_t> sub = random_symplectic(n - 1, rng);
    g.resize(nn);
    g[0] = 1u;
    g[1] = 2u;
    for (int j = 0; j < nn - 2; ++j) {
      g[j + 2] = sub[j] << 2;
    }
  }
  for (auto& row : g) {
    row = transvect(f1, transvect(h0, transvect(t.second, transvect(t.first, row))));
  }
  return g;
}

std::uint32_t gather_even(std::uint32_t v, int n) {
  std::uint32_t out = 0;
  for (int q = 0; q < n; ++q) out |= ((v >> (2 * q)) & 1u) << q;
  return out;
}

std::uint32_t gather_odd(std::uint32_t v, int n) {
  std::uint32_t out = 0;
  for (int q = 0; q < n; ++q) out |= ((v >> (2 * q + 1)) & 1u) << q;
  return out;
}

// --- dense gate action ------------------------------------------------------

const Eigen::Matrix2cd& h_matrix() {
  static const Eigen::Matrix2cd h = [] {
    Eigen::Matrix2cd m;
    const double s = 1.0 / std::sqrt(2.0);
    m << s, s, s, -s;
    return m;
  }();
  return h;
}

const Eigen::Matrix2cd& s_matrix() {
  static const Eigen::Matrix2cd s = [] {
    Eigen::Matrix2cd m;
    m << 1.0, 0.0, 0.0, Complex(0.0, 1.0);
    return m;
  }();
  return s;
}

void left_mul_single(const Eigen::Matrix2cd& u, int q, CMatrix& m) {
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
}

void right_mul_single_dagger(const Eigen::Matrix2cd& u, int q, CMatrix& m) {
  const long d = m.rows();
  const long bit = 1L << q;
  for (long j = 0; j < d; ++j) {
    if (j & bit) continue;
    for (long i = 0; i < d; ++i) {
      const Complex a = m(i, j), b = m(i, j | bit);
      m(i, j) = a * std::conj(u(0, 0)) + b * std::conj(u(0, 1));
      m(i, j | bit) = a * std::conj(u(1, 0)) + b * std::conj(u(1, 1));
    }
  }
}

void conjugate_single(const Eigen::Matrix2cd& u, int q, CMatrix& m) {
  left_mul_single(u, q, m);
  right_mul_single_dagger(u, q, m);
}

void conjugate_cnot(int c, int t, CMatrix& m) {
  const long d = m.rows();
  const long mc = 1L << c, mt = 1L << t;
  for (long i = 0; i < d; ++i) {
    const long pi = (i & mc) ? (i ^ mt) : i;
    if (pi > i) m.row(i).swap(m.row(pi));
  }
  for (long j = 0; j < d; ++j) {
    const long pj = (j & mc) ? (j ^ mt) : j;
    if (pj > j) m.col(j).swap(m.col(pj));
  }
}

void conjugate_gate(const Gate& g, CMatrix& m, bool inverse) {
  switch (g.kind) {
    case Gate::H: conjugate_single(h_matrix(), g.a, m); break;
    case Gate::S: conjugate_single(inverse ? Eigen::Matrix2cd(s_matrix().adjoint()) : s_matrix(), g.a, m); break;
    case Gate::CNOT: conjugate_cnot(g.a, g.b, m); break;
  }
}

}  // namespace

CliffordTableau identity_tableau(int n) {
  CliffordTableau t;
  t.n = n;
  t.rows.resize(2 * n);
  for (int q = 0; q < n; ++q) {
    t.rows[q].x = 1u << q;
    t.rows[n + q].z = 1u << q;
  }
  return t;
}

int symplectic_product(const PauliRow& a, const PauliRow& b) {
  return parity(a.x & b.z) ^ parity(a.z & b.x);
}

bool is_symplectic(const CliffordTableau& t) {
  const int n = t.n;
  if (n < 1 || t.rows.size() != static_cast<std::size_t>(2 * n)) return false;
  for (int i = 0; i < 2 * n; ++i) {
    for (int j = i; j < 2 * n; ++j) {
      const int want = (j == i + n) ? 1 : 0;
      if (symplectic_product(t.rows[i], t.rows[j]) != want) return false;
    }
  }
  return true;
}

CliffordTableau sample_uniform_clifford(int n, Rng& rng) {
  if (n < 1 || n > kMaxQubits) {
    throw std::invalid_argument("sample_uniform_clifford: qubit count out of range");
  }
  const std::vector<std::uint32_t> g = random_symplectic(n, rng);
  CliffordTableau t;
  t.n = n;
  t.rows.resize(2 * n);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int q = 0; q < n; ++q) {
    t.rows[q] = PauliRow{gather_even(g[2 * q], n), gather_odd(g[2 * q], n),
                         static_cast<std::uint8_t>(coin(rng))};
    t.rows[n + q] = PauliRow{gather_even(g[2 * q + 1], n), gather_odd(g[2 * q + 1], n),
                             static_cast<std::uint8_t>(coin(rng))};
  }
  return t;
}

CliffordCircuit tableau_to_circuit(const CliffordTableau& t) {
  if (!is_symplectic(t)) {
    throw std::invalid_argument("tableau_to_circuit: tableau is not symplectic");
  }
  const int n = t.n;
  CliffordTableau w = t;
  std::vector<Gate> applied;
  auto emit = [&](Gate g) {
    tableau_apply(w, g);
    applied.push_back(g);
  };
  auto h = [&](int q) { emit({Gate::H, q, -1}); };
  auto s = [&](int q) { emit({Gate::S, q, -1}); };
  auto cnot = [&](int c, int tq) { emit({Gate::CNOT, c, tq}); };
  auto cz = [&](int c, int tq) { h(tq); cnot(c, tq); h(tq); };

  // Reduce row k to X_k: pivot, clear extra X's with CNOT, the local Z with S,
  // remote Z's with CZ. Assumes no support below qubit k (holds inductively).
  auto reduce_x_row = [&](PauliRow& row, int k) {
    if (!(row.x >> k)) {
      for (int j = k; j < n; ++j) {
        if ((row.z >> j) & 1u) {
          h(j);
          break;
        }
      }
    }
    int pivot = std::countr_zero(row.x >> k) + k;
    if (pivot != k) {
      cnot(pivot, k);
      cnot(k, pivot);
      cnot(pivot, k);
    }
    for (int j = 0; j < n; ++j) {
      if (j != k && ((row.x >> j) & 1u)) cnot(k, j);
    }
    if ((row.z >> k) & 1u) s(k);
    for (int j = 0; j < n; ++j) {
      if (j != k && ((row.z >> j) & 1u)) cz(k, j);
    }
  };

  for (int k = 0; k < n; ++k) {
    reduce_x_row(w.rows[k], k);
    PauliRow& zrow = w.rows[n + k];
    if (!(zrow.x == 0 && zrow.z == (1u << k))) {
      h(k);
      reduce_x_row(zrow, k);
      h(k);
    }
    if (w.rows[k].phase == 0) {
      s(k);
      s(k);
    }
    if (w.rows[n + k].phase == 0) {
      h(k);
      s(k);
      s(k);
      h(k);
    }
  }

  // `applied` maps U to the identity; U itself is the reversed inverse.
  CliffordCircuit out;
  out.n = n;
  for (auto it = applied.rbegin(); it != applied.rend(); ++it) {
    if (it->kind == Gate::S) {
      out.gates.push_back(*it);
      out.gates.push_back(*it);
      out.gates.push_back(*it);
    } else {
      out.gates.push_back(*it);
    }
  }
  return out;
}

void conjugate_in_place(const CliffordCircuit& c, CMatrix& m) {
  for (const Gate& g : c.gates) conjugate_gate(g, m, false);
}

void conjugate_inverse_in_place(const CliffordCircuit& c, CMatrix& m) {
  for (auto it = c.gates.rbegin(); it != c.gates.rend(); ++it) {
    conjugate_gate(*it, m, true);
  }
}

DensityMatrix apply_clifford(const CliffordTableau& t, const DensityMatrix& rho) {
  if (t.n != rho.n) {
    throw std::invalid_argument("apply_clifford: dimension mismatch");
  }
  CMatrix m = rho.data;
  conjugate_in_place(tableau_to_circuit(t), m);
  return DensityMatrix{rho.n, std::move(m)};
}

std::vector<std::int32_t> encode_tableau(const CliffordTableau& t,
                                         const std::vector<std::uint8_t>& outcome) {
  const int n = t.n;
  if (outcome.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("encode_tableau: outcome length mismatch");
  }
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(n) * (2 * n + 3));
  for (const PauliRow& r : t.rows) {
    for (int q = 0; q < n; ++q) {
      const bool x = (r.x >> q) & 1u, z = (r.z >> q) & 1u;
      out.push_back(x ? (z ? 2 : 1) : (z ? 3 : 0));
    }
    out.push_back(r.phase);
  }
  for (std::uint8_t b : outcome) out.push_back(b);
  return out;
}

CMatrix dense_pauli(int n, std::uint32_t x, std::uint32_t z, int sign) {
  const long d = dim_of(n);
  CMatrix p = CMatrix::Zero(d, d);
  const int ys = std::popcount(x & z);
  Complex iy(1.0, 0.0);
  for (int k = 0; k < (ys & 3); ++k) iy *= Complex(0.0, 1.0);
  for (long b = 0; b < d; ++b) {
    const double zsign = parity(static_cast<std::uint32_t>(b) & z) ? -1.0 : 1.0;
    p(b ^ x, b) = static_cast<double>(sign) * iy * zsign;
  }
  return p;
}

CMatrix circuit_unitary(const CliffordCircuit& c) {
  const long d = dim_of(c.n);
  CMatrix u = CMatrix::Identity(d, d);
  for (const Gate& g : c.gates) {
    switch (g.kind) {
      case Gate::H: left_mul_single(h_matrix(), g.a, u); break;
      case Gate::S: left_mul_single(s_matrix(), g.a, u); break;
      case Gate::CNOT: {
        const long mc = 1L << g.a, mt = 1L << g.b;
        for (long i = 0; i < d; ++i) {
          const long pi = (i & mc) ? (i ^ mt) : i;
          if (pi > i) u.row(i).swap(u.row(pi));
        }
        break;
      }
    }
  }
  return u;
}

}  // namespace shadowbayes
