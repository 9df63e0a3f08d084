#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace shadowbayes {

using Rng = std::mt19937_64;

// Container / dataset error taxonomy. Each class maps to a distinct CLI exit
// code group (config, io, validation).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct version_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct truncated_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct checksum_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Thrown by bit-flip inversion at lambda = 1/2, where the noise map loses rank.
struct singular_noise_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(splitmix64(root) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// Independent per-index stream from a root seed. Instance generation relies on
// this so results do not depend on worker scheduling.
inline Rng derive_rng(std::uint64_t root, std::uint64_t index) {
  return Rng(derive_seed(root, index));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

}  // namespace shadowbayes
