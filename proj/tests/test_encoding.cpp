#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"
#include "shadowbayes/container.hpp"
#include "shadowbayes/encoding.hpp"

using namespace shadowbayes;
using namespace shadowbayes::testing;
using Catch::Approx;

namespace {

PauliBasis basis_from(std::initializer_list<Axis> axes) {
  PauliBasis b;
  b.axes.assign(axes);
  return b;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

ExperimentInstance make_instance(Rng& rng, int n, int n_max, int rounds) {
  const DensityMatrix rho = random_state(n, rng);
  std::vector<MeasurementRecord> records;
  for (int k = 0; k < rounds; ++k) {
    records.push_back(measure_pauli(rho, random_pauli_basis(n, rng), std::nullopt, rng));
  }
  ExperimentInstance inst;
  inst.features = build_feature_matrix(records, n_max);
  inst.baseline_f = 0.7;
  inst.label = 0.93;
  inst.meta = InstanceMeta{n, Ensemble::Pauli, Task::GhzFidelity, 0.0, 0.05, 12345};
  return inst;
}

}  // namespace

TEST_CASE("pauli record encoding") {
  MeasurementRecord xzy{basis_from({Axis::X, Axis::Z, Axis::Y}), {1, 0, 1}};
  REQUIRE(encode_pauli_record(xzy) == std::vector<std::int32_t>{1, 4, 3});

  MeasurementRecord xxx{basis_from({Axis::X, Axis::X, Axis::X}), {0, 0, 0}};
  REQUIRE(encode_pauli_record(xxx) == std::vector<std::int32_t>{0, 0, 0});

  MeasurementRecord zzz{basis_from({Axis::Z, Axis::Z, Axis::Z}), {1, 1, 1}};
  REQUIRE(encode_pauli_record(zzz) == std::vector<std::int32_t>{5, 5, 5});

  MeasurementRecord clifford{identity_tableau(2), {0, 0}};
  REQUIRE_THROWS_AS(encode_pauli_record(clifford), std::invalid_argument);
}

TEST_CASE("pauli encoding is injective") {
  // full enumeration at n = 2: 9 bases x 4 outcomes
  std::set<std::vector<std::int32_t>> seen;
  for (int basis_code = 0; basis_code < 9; ++basis_code) {
    PauliBasis b;
    b.axes = {static_cast<Axis>(basis_code % 3), static_cast<Axis>(basis_code / 3)};
    for (std::uint8_t bits = 0; bits < 4; ++bits) {
      MeasurementRecord rec{b, {static_cast<std::uint8_t>(bits & 1),
                                static_cast<std::uint8_t>((bits >> 1) & 1)}};
      seen.insert(encode_pauli_record(rec));
    }
  }
  REQUIRE(seen.size() == 36);
}

TEST_CASE("feature matrix construction") {
  Rng rng = make_rng(111);
  const DensityMatrix rho = random_state(3, rng);
  std::vector<MeasurementRecord> records;
  for (int k = 0; k < 10; ++k) {
    records.push_back(measure_pauli(rho, random_pauli_basis(3, rng), std::nullopt, rng));
  }

  SECTION("padding rows are all -1") {
    const FeatureMatrix fm = build_feature_matrix(records, 100);
    REQUIRE(fm.n_max() == 100);
    REQUIRE(fm.d() == 3);
    REQUIRE(fm.n_valid == 10);
    for (int r = 0; r < 10; ++r) {
      for (int c = 0; c < 3; ++c) {
        REQUIRE(fm.rows(r, c) >= 0);
        REQUIRE(fm.rows(r, c) <= 5);
      }
    }
    for (int r = 10; r < 100; ++r) {
      for (int c = 0; c < 3; ++c) REQUIRE(fm.rows(r, c) == -1);
    }
  }

  SECTION("full capacity leaves no padding") {
    const FeatureMatrix fm = build_feature_matrix(records, 10);
    REQUIRE(fm.n_valid == 10);
    REQUIRE((fm.rows.array() == -1).count() == 0);
  }

  SECTION("empty record list with an explicit dimension") {
    const FeatureMatrix fm = build_feature_matrix({}, 8, 3);
    REQUIRE(fm.n_valid == 0);
    REQUIRE((fm.rows.array() == -1).count() == 24);
  }

  SECTION("overflow is rejected") {
    REQUIRE_THROWS_AS(build_feature_matrix(records, 5), std::invalid_argument);
  }
}

TEST_CASE("dataset round trip") {
  Rng rng = make_rng(113);
  std::vector<ExperimentInstance> instances;
  for (int i = 0; i < 1000; ++i) {
    ExperimentInstance inst = make_instance(rng, 3, 20, 5 + (i % 10));
    inst.baseline_f = -0.25 + i * 1e-3;  // exercises unclipped storage
    inst.label = 0.9125 + 1e-5 * i;
    inst.meta.prior_param = i * 1e-4;
    inst.meta.instance_seed = 0x9e3779b97f4a7c15ULL + i;
    instances.push_back(std::move(inst));
  }
  const auto path = temp_file("sb_dataset_roundtrip.sbc");
  dataset_write(instances, path.string());
  const Dataset ds = dataset_read(path.string());

  REQUIRE(ds.instances.size() == instances.size());
  REQUIRE(ds.f_l == 0.0);
  REQUIRE(ds.f_u == 1.0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& a = instances[i];
    const auto& b = ds.instances[i];
    REQUIRE(a.features.rows == b.features.rows);
    REQUIRE(a.features.n_valid == b.features.n_valid);
    REQUIRE(a.baseline_f == b.baseline_f);  // bit-exact
    REQUIRE(a.label == b.label);
    REQUIRE(a.meta.n == b.meta.n);
    REQUIRE(a.meta.ensemble == b.meta.ensemble);
    REQUIRE(a.meta.task == b.meta.task);
    REQUIRE(a.meta.noise_lambda == b.meta.noise_lambda);
    REQUIRE(a.meta.prior_param == b.meta.prior_param);
    REQUIRE(a.meta.instance_seed == b.meta.instance_seed);
  }
  std::filesystem::remove(path);
}

TEST_CASE("container error taxonomy") {
  Rng rng = make_rng(117);
  std::vector<ExperimentInstance> instances{make_instance(rng, 2, 10, 4)};
  const auto path = temp_file("sb_dataset_errors.sbc");
  dataset_write(instances, path.string());

  auto read_bytes = [&]() {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  };
  auto write_bytes = [&](const std::vector<char>& bytes, const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };

  SECTION("wrong magic bytes") {
    auto bytes = read_bytes();
    bytes[0] = 'X';
    const auto bad = temp_file("sb_bad_magic.sbc");
    write_bytes(bytes, bad);
    REQUIRE_THROWS_AS(dataset_read(bad.string()), format_error);
    std::filesystem::remove(bad);
  }

  SECTION("flipped payload byte fails the checksum") {
    auto bytes = read_bytes();
    bytes[bytes.size() / 2] ^= 0x40;
    const auto bad = temp_file("sb_bad_crc.sbc");
    write_bytes(bytes, bad);
    REQUIRE_THROWS_AS(dataset_read(bad.string()), checksum_error);
    std::filesystem::remove(bad);
  }

  SECTION("truncated file") {
    auto bytes = read_bytes();
    bytes.resize(bytes.size() / 2);
    // keep the checksum consistent so truncation itself is what trips
    const std::uint32_t crc =
        crc32(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size() - 4);
    for (int i = 0; i < 4; ++i) {
      bytes[bytes.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
    }
    const auto bad = temp_file("sb_truncated.sbc");
    write_bytes(bytes, bad);
    REQUIRE_THROWS_AS(dataset_read(bad.string()), truncated_error);
    std::filesystem::remove(bad);
  }

  SECTION("version mismatch") {
    auto bytes = read_bytes();
    // the header is JSON text right after the 8-byte preamble
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 10] = '2';
    const std::uint32_t crc =
        crc32(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size() - 4);
    for (int i = 0; i < 4; ++i) {
      bytes[bytes.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
    }
    const auto bad = temp_file("sb_bad_version.sbc");
    write_bytes(bytes, bad);
    REQUIRE_THROWS_AS(dataset_read(bad.string()), version_error);
    std::filesystem::remove(bad);
  }

  SECTION("header d inconsistent with n and ensemble") {
    auto bytes = read_bytes();
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("\"d\":2");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 4] = '3';  // claims d = 3 for a 2-qubit Pauli dataset
    const std::uint32_t crc =
        crc32(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size() - 4);
    for (int i = 0; i < 4; ++i) {
      bytes[bytes.size() - 4 + i] = static_cast<char>((crc >> (8 * i)) & 0xff);
    }
    const auto bad = temp_file("sb_bad_d.sbc");
    write_bytes(bytes, bad);
    REQUIRE_THROWS_AS(dataset_read(bad.string()), validation_error);
    std::filesystem::remove(bad);
  }

  SECTION("missing file raises io_error") {
    REQUIRE_THROWS_AS(dataset_read("/nonexistent/really_not_here.sbc"), io_error);
  }

  std::filesystem::remove(path);
}

TEST_CASE("feature affine keeps padding outside the vocabulary") {
  const FeatureAffine pa = feature_affine(Ensemble::Pauli);
  const FeatureAffine ca = feature_affine(Ensemble::Clifford);
  // valid codes land in [-1, 1]; padding maps strictly below
  REQUIRE((0 - pa.offset) / pa.scale == Approx(-1.0));
  REQUIRE((5 - pa.offset) / pa.scale == Approx(1.0));
  REQUIRE((-1 - pa.offset) / pa.scale < -1.0);
  REQUIRE((0 - ca.offset) / ca.scale == Approx(-1.0));
  REQUIRE((3 - ca.offset) / ca.scale == Approx(1.0));
  REQUIRE((-1 - ca.offset) / ca.scale < -1.0);
}
