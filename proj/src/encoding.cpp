#include "shadowbayes/encoding.hpp"

#include "shadowbayes/container.hpp"

namespace shadowbayes {

std::string to_string(Ensemble e) { return e == Ensemble::Pauli ? "pauli" : "clifford"; }
std::string to_string(Task t) { return t == Task::GhzFidelity ? "ghz_fidelity" : "renyi_purity"; }

Ensemble ensemble_from_string(const std::string& s) {
  if (s == "pauli") return Ensemble::Pauli;
  if (s == "clifford") return Ensemble::Clifford;
  throw validation_error("unknown ensemble: " + s);
}

Task task_from_string(const std::string& s) {
  if (s == "ghz_fidelity") return Task::GhzFidelity;
  if (s == "renyi_purity") return Task::RenyiPurity;
  throw validation_error("unknown task: " + s);
}

int feature_dim(Ensemble ensemble, int n) {
  return ensemble == Ensemble::Pauli ? n : n * (2 * n + 3);
}

std::vector<std::int32_t> encode_pauli_record(const MeasurementRecord& record) {
  if (!record.is_pauli()) {
    throw std::invalid_argument("encode_pauli_record: record is not a Pauli measurement");
  }
  const PauliBasis& basis = record.pauli();
  std::vector<std::int32_t> out(basis.axes.size());
  for (std::size_t q = 0; q < basis.axes.size(); ++q) {
    std::int32_t code = 0;
    switch (basis.axes[q]) {
      case Axis::X: code = 0; break;
      case Axis::Y: code = 2; break;
      case Axis::Z: code = 4; break;
    }
    out[q] = code + record.outcome[q];
  }
  return out;
}

std::vector<std::int32_t> encode_record(const MeasurementRecord& record) {
  if (record.is_pauli()) return encode_pauli_record(record);
  return encode_tableau(record.clifford(), record.outcome);
}

FeatureMatrix build_feature_matrix(const std::vector<MeasurementRecord>& records, int n_max) {
  if (records.empty()) {
    throw std::invalid_argument("build_feature_matrix: cannot infer dimension from no records");
  }
  return build_feature_matrix(records, n_max, static_cast<int>(encode_record(records.front()).size()));
}

FeatureMatrix build_feature_matrix(const std::vector<MeasurementRecord>& records, int n_max,
                                   int d) {
  if (n_max < 1 || d < 1) {
    throw std::invalid_argument("build_feature_matrix: capacity and dimension must be positive");
  }
  if (records.size() > static_cast<std::size_t>(n_max)) {
    throw std::invalid_argument("build_feature_matrix: more records than capacity");
  }
  FeatureMatrix out;
  out.n_valid = static_cast<int>(records.size());
  out.rows = FeatureRows::Constant(n_max, d, -1);
  const bool pauli = records.empty() ? true : records.front().is_pauli();
  for (std::size_t k = 0; k < records.size(); ++k) {
    if (records[k].is_pauli() != pauli) {
      throw std::invalid_argument("build_feature_matrix: mixed ensembles");
    }
    const std::vector<std::int32_t> row = encode_record(records[k]);
    if (static_cast<int>(row.size()) != d) {
      throw std::invalid_argument("build_feature_matrix: inconsistent record dimension");
    }
    for (int c = 0; c < d; ++c) out.rows(static_cast<long>(k), c) = row[c];
  }
  return out;
}

FeatureAffine feature_affine(Ensemble ensemble) {
  // mid-vocabulary mean and half-range: Pauli codes live in {0..5}, Clifford
  // symbols in {0..3}; padding (-1) passes through the same map.
  if (ensemble == Ensemble::Pauli) return FeatureAffine{2.5, 2.5};
  return FeatureAffine{1.5, 1.5};
}

void dataset_write(const std::vector<ExperimentInstance>& instances, const std::string& path,
                   double f_l, double f_u) {
  if (instances.empty()) {
    throw validation_error("dataset_write: no instances");
  }
  const InstanceMeta& m0 = instances.front().meta;
  const int n_max = instances.front().features.n_max();
  const int d = instances.front().features.d();
  if (d != feature_dim(m0.ensemble, m0.n)) {
    throw validation_error("dataset_write: feature dimension inconsistent with ensemble");
  }
  const std::size_t count = instances.size();

  std::vector<std::int32_t> features;
  features.reserve(count * static_cast<std::size_t>(n_max) * d);
  std::vector<std::int32_t> n_valid(count);
  std::vector<double> baseline(count), label(count), prior_param(count);
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) {
    const ExperimentInstance& inst = instances[i];
    if (inst.meta.n != m0.n || inst.meta.ensemble != m0.ensemble || inst.meta.task != m0.task ||
        inst.meta.noise_lambda != m0.noise_lambda) {
      throw validation_error("dataset_write: instances are not homogeneous");
    }
    if (inst.features.n_max() != n_max || inst.features.d() != d) {
      throw validation_error("dataset_write: feature shapes are not homogeneous");
    }
    if (!(inst.label >= f_l && inst.label <= f_u)) {
      throw validation_error("dataset_write: label outside the task range");
    }
    features.insert(features.end(), inst.features.rows.data(),
                    inst.features.rows.data() + static_cast<std::size_t>(n_max) * d);
    n_valid[i] = inst.features.n_valid;
    baseline[i] = inst.baseline_f;
    label[i] = inst.label;
    prior_param[i] = inst.meta.prior_param;
    seeds[i] = inst.meta.instance_seed;
  }

  const FeatureAffine affine = feature_affine(m0.ensemble);
  nlohmann::json meta{{"n", m0.n},
                      {"d", d},
                      {"n_max", n_max},
                      {"count", count},
                      {"ensemble", to_string(m0.ensemble)},
                      {"task", to_string(m0.task)},
                      {"noise_lambda", m0.noise_lambda},
                      {"f_l", f_l},
                      {"f_u", f_u},
                      {"feature_offset", affine.offset},
                      {"feature_scale", affine.scale}};

  ContainerWriter w;
  w.add_i32("features", features,
            {static_cast<std::int64_t>(count), n_max, d});
  w.add_i32("n_valid", n_valid, {static_cast<std::int64_t>(count)});
  w.add_f64("baseline_f", baseline, {static_cast<std::int64_t>(count)});
  w.add_f64("label", label, {static_cast<std::int64_t>(count)});
  w.add_f64("prior_param", prior_param, {static_cast<std::int64_t>(count)});
  w.add_u64("instance_seed", seeds, {static_cast<std::int64_t>(count)});
  w.write(path, "dataset", std::move(meta));
}

Dataset dataset_read(const std::string& path) {
  ContainerReader r(path);
  if (r.kind() != "dataset") {
    throw validation_error("not a dataset container: " + path);
  }
  const auto& h = r.header();
  Dataset ds;
  ds.f_l = h.at("f_l").get<double>();
  ds.f_u = h.at("f_u").get<double>();
  const int n = h.at("n").get<int>();
  const int d = h.at("d").get<int>();
  const int n_max = h.at("n_max").get<int>();
  const std::size_t count = h.at("count").get<std::size_t>();
  const Ensemble ensemble = ensemble_from_string(h.at("ensemble").get<std::string>());
  const Task task = task_from_string(h.at("task").get<std::string>());
  const double noise_lambda = h.at("noise_lambda").get<double>();
  if (d != feature_dim(ensemble, n)) {
    throw validation_error("dataset header: d inconsistent with n and ensemble");
  }
  const auto fshape = r.shape("features");
  if (fshape != std::vector<std::int64_t>{static_cast<std::int64_t>(count), n_max, d}) {
    throw validation_error("dataset features array has unexpected shape");
  }

  const auto features = r.i32("features");
  const auto n_valid = r.i32("n_valid");
  const auto baseline = r.f64("baseline_f");
  const auto label = r.f64("label");
  const auto prior_param = r.f64("prior_param");
  const auto seeds = r.u64("instance_seed");
  if (n_valid.size() != count || baseline.size() != count || label.size() != count ||
      prior_param.size() != count || seeds.size() != count) {
    throw validation_error("dataset arrays have inconsistent lengths");
  }

  ds.instances.resize(count);
  const std::size_t stride = static_cast<std::size_t>(n_max) * d;
  for (std::size_t i = 0; i < count; ++i) {
    ExperimentInstance& inst = ds.instances[i];
    inst.features.rows = FeatureRows(n_max, d);
    std::copy(features.begin() + i * stride, features.begin() + (i + 1) * stride,
              inst.features.rows.data());
    if (n_valid[i] < 0 || n_valid[i] > n_max) {
      throw validation_error("dataset n_valid out of range");
    }
    inst.features.n_valid = n_valid[i];
    inst.baseline_f = baseline[i];
    inst.label = label[i];
    inst.meta = InstanceMeta{n, ensemble, task, noise_lambda, prior_param[i], seeds[i]};
  }
  return ds;
}

}  // namespace shadowbayes
