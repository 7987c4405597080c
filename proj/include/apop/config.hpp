#pragma once

#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "apop/data.hpp"
#include "apop/trainer.hpp"

namespace apop {

using nlohmann::json;

namespace detail {

inline void expect_keys(const json& obj, const char* where,
                        std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T require_key(const json& obj, const char* where, const char* key) {
  if (!obj.contains(key)) throw ConfigError(std::string(where) + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

template <typename T>
T key_or(const json& obj, const char* where, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace detail

enum class DataKind { Csv, Idx, Teacher, Abs, Blobs };

struct DataConfig {
  DataKind kind = DataKind::Csv;
  // csv
  std::string train_path, test_path;
  bool label_first = true;
  bool binary = false;
  bool skip_header = false;
  bool standardize = false;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  bool normalize = true;
  // synthetic (teacher / abs / blobs)
  std::int64_t samples = 0, test_samples = 0;
  int input_dim = 0, hidden = 0, pairs = 0, classes = 0, outputs = 2;
  ActivationKind activation = ActivationKind::Sigmoid;
  double noise = 0.3;
  std::uint64_t seed = 7777;
};

struct RunConfig {
  std::vector<int> sizes;
  ActivationKind hidden_activation = ActivationKind::Sigmoid;
  ActivationKind output_activation = ActivationKind::Sigmoid;
  SolverConfig solver;
  bool apoptosis_enabled = false;
  ApoptosisConfig apoptosis;
  DataConfig data;
  int workers = 1;
  std::string metrics_out = "metrics.jsonl";
  std::string reports_out = "apoptosis.jsonl";
  std::string model_out = "model.apnw";
  std::string baseline;
};

/// --apoptosis off | <preset> | factor=<f>
inline void apply_apoptosis_flag(RunConfig& cfg, const std::string& value) {
  if (value == "off") {
    cfg.apoptosis_enabled = false;
    return;
  }
  cfg.apoptosis_enabled = true;
  if (value.rfind("factor=", 0) == 0) {
    try {
      cfg.apoptosis.f = std::stod(value.substr(7));
    } catch (const std::exception&) {
      throw ConfigError("apoptosis: cannot parse factor in '" + value + "'");
    }
    if (!(cfg.apoptosis.f > 1.0)) throw ConfigError("apoptosis: factor must exceed 1");
    return;
  }
  cfg.apoptosis.f = preset_factor(value);
}

/// --schedule quarter-log | half-fixed=<n> | random | end
inline void apply_schedule_flag(RunConfig& cfg, const std::string& value) {
  ApoptosisConfig& a = cfg.apoptosis;
  if (value == "quarter-log") {
    a.initial = InitialPoint::QuarterLife;
    a.subsequent = SubsequentPolicy::Logarithmic;
  } else if (value.rfind("half-fixed=", 0) == 0) {
    a.initial = InitialPoint::HalfLife;
    a.subsequent = SubsequentPolicy::Fixed;
    try {
      a.interval = std::stoll(value.substr(11));
    } catch (const std::exception&) {
      throw ConfigError("schedule: cannot parse interval in '" + value + "'");
    }
  } else if (value == "random") {
    a.initial = InitialPoint::Random;
    a.subsequent = SubsequentPolicy::Logarithmic;
  } else if (value == "end") {
    a.initial = InitialPoint::EndOfTraining;
  } else {
    throw ConfigError("schedule: unknown value '" + value + "'");
  }
}

/// --degree fixed | ramp=<f0>:<f1>
inline void apply_degree_flag(RunConfig& cfg, const std::string& value) {
  ApoptosisConfig& a = cfg.apoptosis;
  if (value == "fixed") {
    a.degree = DegreePolicy::Fixed;
    return;
  }
  if (value.rfind("ramp=", 0) == 0) {
    const std::string body = value.substr(5);
    const std::size_t colon = body.find(':');
    if (colon != std::string::npos) {
      try {
        a.f_start = std::stod(body.substr(0, colon));
        a.f_end = std::stod(body.substr(colon + 1));
        a.degree = DegreePolicy::LinearRamp;
        return;
      } catch (const std::exception&) {
      }
    }
  }
  throw ConfigError("degree: expected 'fixed' or 'ramp=<f0>:<f1>', got '" + value + "'");
}

namespace detail {

inline DataConfig parse_data(const json& j) {
  DataConfig d;
  const std::string kind = require_key<std::string>(j, "data", "kind");
  if (kind == "csv") {
    expect_keys(j, "data", {"kind", "train", "test", "label_first", "binary", "skip_header",
                            "standardize"});
    d.kind = DataKind::Csv;
    d.train_path = require_key<std::string>(j, "data", "train");
    d.test_path = require_key<std::string>(j, "data", "test");
    d.label_first = key_or(j, "data", "label_first", true);
    d.binary = key_or(j, "data", "binary", false);
    d.skip_header = key_or(j, "data", "skip_header", false);
    d.standardize = key_or(j, "data", "standardize", false);
  } else if (kind == "idx") {
    expect_keys(j, "data", {"kind", "train_images", "train_labels", "test_images", "test_labels",
                            "normalize"});
    d.kind = DataKind::Idx;
    d.train_images = require_key<std::string>(j, "data", "train_images");
    d.train_labels = require_key<std::string>(j, "data", "train_labels");
    d.test_images = require_key<std::string>(j, "data", "test_images");
    d.test_labels = require_key<std::string>(j, "data", "test_labels");
    d.normalize = key_or(j, "data", "normalize", true);
  } else if (kind == "teacher") {
    expect_keys(j, "data", {"kind", "input_dim", "hidden", "pairs", "activation", "samples",
                            "test_samples", "seed", "outputs"});
    d.kind = DataKind::Teacher;
    d.input_dim = require_key<int>(j, "data", "input_dim");
    d.hidden = require_key<int>(j, "data", "hidden");
    d.pairs = require_key<int>(j, "data", "pairs");
    d.activation = activation_from_name(require_key<std::string>(j, "data", "activation"));
    d.samples = require_key<std::int64_t>(j, "data", "samples");
    d.test_samples = require_key<std::int64_t>(j, "data", "test_samples");
    d.seed = key_or<std::uint64_t>(j, "data", "seed", d.seed);
    d.outputs = key_or<int>(j, "data", "outputs", 2);
  } else if (kind == "abs") {
    expect_keys(j, "data", {"kind", "samples", "test_samples", "seed"});
    d.kind = DataKind::Abs;
    d.samples = require_key<std::int64_t>(j, "data", "samples");
    d.test_samples = require_key<std::int64_t>(j, "data", "test_samples");
    d.seed = key_or<std::uint64_t>(j, "data", "seed", d.seed);
  } else if (kind == "blobs") {
    expect_keys(j, "data", {"kind", "samples", "test_samples", "dim", "classes", "noise", "seed"});
    d.kind = DataKind::Blobs;
    d.samples = require_key<std::int64_t>(j, "data", "samples");
    d.test_samples = require_key<std::int64_t>(j, "data", "test_samples");
    d.input_dim = require_key<int>(j, "data", "dim");
    d.classes = require_key<int>(j, "data", "classes");
    d.noise = key_or(j, "data", "noise", 0.3);
    d.seed = key_or<std::uint64_t>(j, "data", "seed", d.seed);
  } else {
    throw ConfigError("data.kind: unknown kind '" + kind + "'");
  }
  return d;
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  detail::expect_keys(j, "config",
                      {"network", "solver", "apoptosis", "data", "workers", "outputs", "baseline"});
  RunConfig cfg;

  const json& net = j.contains("network") ? j.at("network") : json::object();
  detail::expect_keys(net, "network", {"sizes", "hidden_activation", "output_activation"});
  cfg.sizes = detail::require_key<std::vector<int>>(net, "network", "sizes");
  if (cfg.sizes.size() < 3) throw ConfigError("network.sizes: need input, hidden..., output");
  for (int s : cfg.sizes)
    if (s < 1) throw ConfigError("network.sizes: layer sizes must be positive");
  cfg.hidden_activation =
      activation_from_name(detail::key_or<std::string>(net, "network", "hidden_activation", "sigmoid"));
  cfg.output_activation =
      activation_from_name(detail::key_or<std::string>(net, "network", "output_activation", "sigmoid"));

  const json& sol = j.contains("solver") ? j.at("solver") : json::object();
  detail::expect_keys(sol, "solver",
                      {"total_iterations", "batch_size", "learning_rate", "lr_decay", "lr_gamma",
                       "momentum", "loss", "seed"});
  cfg.solver.total_iterations = detail::require_key<std::int64_t>(sol, "solver", "total_iterations");
  cfg.solver.batch_size = detail::require_key<Index>(sol, "solver", "batch_size");
  cfg.solver.learning_rate = detail::require_key<double>(sol, "solver", "learning_rate");
  const std::string decay = detail::key_or<std::string>(sol, "solver", "lr_decay", "constant");
  if (decay == "constant") {
    cfg.solver.lr_decay = LrDecay::Constant;
    cfg.solver.lr_gamma = 1.0;
  } else if (decay == "exponential") {
    cfg.solver.lr_decay = LrDecay::Exponential;
    cfg.solver.lr_gamma = detail::require_key<double>(sol, "solver", "lr_gamma");
  } else {
    throw ConfigError("solver.lr_decay: unknown value '" + decay + "'");
  }
  cfg.solver.momentum = detail::key_or(sol, "solver", "momentum", 0.0);
  cfg.solver.loss = loss_from_name(detail::require_key<std::string>(sol, "solver", "loss"));
  cfg.solver.seed = detail::key_or<std::uint64_t>(sol, "solver", "seed", 0);
  cfg.solver.validate();

  if (j.contains("apoptosis")) {
    const json& ap = j.at("apoptosis");
    detail::expect_keys(ap, "apoptosis", {"mode", "factor", "schedule", "degree"});
    const std::string mode = detail::key_or<std::string>(ap, "apoptosis", "mode", "off");
    if (mode == "factor") {
      cfg.apoptosis_enabled = true;
      cfg.apoptosis.f = detail::require_key<double>(ap, "apoptosis", "factor");
      if (!(cfg.apoptosis.f > 1.0)) throw ConfigError("apoptosis.factor: must exceed 1");
    } else {
      apply_apoptosis_flag(cfg, mode);
    }
    if (ap.contains("schedule")) {
      const json& s = ap.at("schedule");
      detail::expect_keys(s, "apoptosis.schedule",
                          {"initial", "subsequent", "min_gap", "interval", "count"});
      const std::string initial = detail::key_or<std::string>(s, "apoptosis.schedule", "initial", "quarter");
      if (initial == "quarter") cfg.apoptosis.initial = InitialPoint::QuarterLife;
      else if (initial == "half") cfg.apoptosis.initial = InitialPoint::HalfLife;
      else if (initial == "random") cfg.apoptosis.initial = InitialPoint::Random;
      else if (initial == "end") cfg.apoptosis.initial = InitialPoint::EndOfTraining;
      else throw ConfigError("apoptosis.schedule.initial: unknown value '" + initial + "'");
      const std::string sub =
          detail::key_or<std::string>(s, "apoptosis.schedule", "subsequent", "logarithmic");
      if (sub == "logarithmic") cfg.apoptosis.subsequent = SubsequentPolicy::Logarithmic;
      else if (sub == "fixed") cfg.apoptosis.subsequent = SubsequentPolicy::Fixed;
      else if (sub == "random-count") cfg.apoptosis.subsequent = SubsequentPolicy::RandomCount;
      else throw ConfigError("apoptosis.schedule.subsequent: unknown value '" + sub + "'");
      cfg.apoptosis.min_gap = detail::key_or<std::int64_t>(s, "apoptosis.schedule", "min_gap", 1000);
      cfg.apoptosis.interval = detail::key_or<std::int64_t>(s, "apoptosis.schedule", "interval", 1000);
      cfg.apoptosis.random_count = detail::key_or<int>(s, "apoptosis.schedule", "count", 3);
    }
    if (ap.contains("degree")) {
      const json& d = ap.at("degree");
      detail::expect_keys(d, "apoptosis.degree", {"policy", "f_start", "f_end"});
      const std::string policy = detail::key_or<std::string>(d, "apoptosis.degree", "policy", "fixed");
      if (policy == "fixed") {
        cfg.apoptosis.degree = DegreePolicy::Fixed;
      } else if (policy == "ramp") {
        cfg.apoptosis.degree = DegreePolicy::LinearRamp;
        cfg.apoptosis.f_start = detail::require_key<double>(d, "apoptosis.degree", "f_start");
        cfg.apoptosis.f_end = detail::require_key<double>(d, "apoptosis.degree", "f_end");
      } else {
        throw ConfigError("apoptosis.degree.policy: unknown value '" + policy + "'");
      }
    }
    cfg.apoptosis.seed = cfg.solver.seed;
    if (cfg.apoptosis_enabled) cfg.apoptosis.validate();
  }

  if (!j.contains("data")) throw ConfigError("config: missing key 'data'");
  cfg.data = detail::parse_data(j.at("data"));

  cfg.workers = detail::key_or(j, "config", "workers", 1);
  if (cfg.workers < 1) throw ConfigError("workers: must be positive");
  cfg.baseline = detail::key_or<std::string>(j, "config", "baseline", "");

  if (j.contains("outputs")) {
    const json& out = j.at("outputs");
    detail::expect_keys(out, "outputs", {"metrics", "reports", "model"});
    cfg.metrics_out = detail::key_or<std::string>(out, "outputs", "metrics", cfg.metrics_out);
    cfg.reports_out = detail::key_or<std::string>(out, "outputs", "reports", cfg.reports_out);
    cfg.model_out = detail::key_or<std::string>(out, "outputs", "model", cfg.model_out);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  return parse_run_config(j);
}

struct LoadedData {
  Dataset train;
  Dataset test;
};

/// Materialize the configured dataset pair. Synthetic kinds draw one pool
/// and split it so train and test share the same generating process (and,
/// for teacher data, the same teacher).
inline LoadedData load_datasets(const DataConfig& d) {
  auto split = [](const Dataset& all, Index train_n) {
    LoadedData out;
    out.train.features = all.features.topRows(train_n);
    out.train.labels.assign(all.labels.begin(), all.labels.begin() + train_n);
    out.train.class_count = all.class_count;
    out.test.features = all.features.bottomRows(all.size() - train_n);
    out.test.labels.assign(all.labels.begin() + train_n, all.labels.end());
    out.test.class_count = all.class_count;
    out.train.validate();
    out.test.validate();
    return out;
  };

  switch (d.kind) {
    case DataKind::Csv: {
      LoadedData out;
      out.train = load_csv(d.train_path, d.label_first, d.binary, d.skip_header, d.standardize);
      out.test = load_csv(d.test_path, d.label_first, d.binary, d.skip_header, d.standardize);
      return out;
    }
    case DataKind::Idx: {
      LoadedData out;
      out.train = load_idx(d.train_images, d.train_labels, d.normalize);
      out.test = load_idx(d.test_images, d.test_labels, d.normalize);
      return out;
    }
    case DataKind::Teacher: {
      auto [teacher, all] = gen_planted_teacher(d.input_dim, d.hidden, d.pairs, d.activation,
                                                d.samples + d.test_samples, d.seed, 0.0, d.outputs);
      return split(all, d.samples);
    }
    case DataKind::Abs:
      return split(gen_abs_dataset(d.samples + d.test_samples, d.seed), d.samples);
    case DataKind::Blobs:
      return split(gen_blobs(d.samples + d.test_samples, d.input_dim, d.classes, d.noise, d.seed),
                   d.samples);
  }
  throw ContractError("unknown data kind");
}

}  // namespace apop
