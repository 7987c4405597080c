#include <catch2/catch.hpp>

#include <cstdio>
#include <fstream>

#include "apop/config.hpp"

using namespace apop;

namespace {

json full_config() {
  return json::parse(R"({
    "network": {"sizes": [4, 16, 8, 3], "hidden_activation": "relu",
                "output_activation": "linear"},
    "solver": {"total_iterations": 500, "batch_size": 32, "learning_rate": 0.1,
               "lr_decay": "exponential", "lr_gamma": 0.999964, "momentum": 0.9,
               "loss": "softmax_ce", "seed": 42},
    "apoptosis": {"mode": "normal",
                  "schedule": {"initial": "half", "subsequent": "fixed", "interval": 50},
                  "degree": {"policy": "ramp", "f_start": 2.0, "f_end": 1.25}},
    "data": {"kind": "blobs", "samples": 100, "test_samples": 40, "dim": 4,
             "classes": 3, "noise": 0.2, "seed": 5},
    "workers": 4,
    "outputs": {"metrics": "m.jsonl", "reports": "r.jsonl", "model": "net.apnw"},
    "baseline": "base.jsonl"
  })");
}

}  // namespace

TEST_CASE("a full config lands in every field", "[config]") {
  const RunConfig cfg = parse_run_config(full_config());
  CHECK(cfg.sizes == std::vector<int>{4, 16, 8, 3});
  CHECK(cfg.hidden_activation == ActivationKind::Relu);
  CHECK(cfg.output_activation == ActivationKind::Linear);
  CHECK(cfg.solver.total_iterations == 500);
  CHECK(cfg.solver.batch_size == 32);
  CHECK(cfg.solver.lr_decay == LrDecay::Exponential);
  CHECK(cfg.solver.lr_gamma == 0.999964);
  CHECK(cfg.solver.momentum == 0.9);
  CHECK(cfg.solver.loss == LossKind::SoftmaxCrossEntropy);
  CHECK(cfg.solver.seed == 42);
  CHECK(cfg.apoptosis_enabled);
  CHECK(cfg.apoptosis.f == 1.75);  // "normal" preset
  CHECK(cfg.apoptosis.initial == InitialPoint::HalfLife);
  CHECK(cfg.apoptosis.subsequent == SubsequentPolicy::Fixed);
  CHECK(cfg.apoptosis.interval == 50);
  CHECK(cfg.apoptosis.degree == DegreePolicy::LinearRamp);
  CHECK(cfg.apoptosis.f_start == 2.0);
  CHECK(cfg.apoptosis.f_end == 1.25);
  CHECK(cfg.apoptosis.seed == 42);  // adopted from the solver
  CHECK(cfg.data.kind == DataKind::Blobs);
  CHECK(cfg.data.classes == 3);
  CHECK(cfg.workers == 4);
  CHECK(cfg.metrics_out == "m.jsonl");
  CHECK(cfg.reports_out == "r.jsonl");
  CHECK(cfg.model_out == "net.apnw");
  CHECK(cfg.baseline == "base.jsonl");
}

TEST_CASE("unknown keys are rejected wherever they appear", "[config]") {
  json j = full_config();
  j["surprise"] = 1;
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("unknown key 'surprise'"));

  j = full_config();
  j["network"]["width"] = 3;
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("network") && Catch::Contains("width"));

  j = full_config();
  j["solver"]["nesterov"] = true;
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("solver") && Catch::Contains("nesterov"));

  j = full_config();
  j["apoptosis"]["extra"] = 1;
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("apoptosis"));

  j = full_config();
  j["apoptosis"]["schedule"]["cadence"] = 1;
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("schedule"));

  j = full_config();
  j["data"]["shuffle"] = true;
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("data"));
}

TEST_CASE("missing and mistyped keys name their location", "[config]") {
  json j = full_config();
  j["network"].erase("sizes");
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("missing key 'sizes'"));

  j = full_config();
  j["solver"].erase("loss");
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("missing key 'loss'"));

  j = full_config();
  j.erase("data");
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("missing key 'data'"));

  j = full_config();
  j["network"]["sizes"] = "wide";
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("network.sizes"));

  j = full_config();
  j["solver"]["learning_rate"] = "fast";
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("solver.learning_rate"));
}

TEST_CASE("structural validation happens at load time", "[config]") {
  json j = full_config();
  j["network"]["sizes"] = json::array({4, 3});
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  j = full_config();
  j["network"]["sizes"] = json::array({4, 0, 3});
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  j = full_config();
  j["solver"]["momentum"] = 1.0;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  j = full_config();
  j["solver"]["lr_decay"] = "cosine";
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  j = full_config();
  j["solver"]["lr_decay"] = "exponential";
  j["solver"].erase("lr_gamma");
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("lr_gamma"));

  j = full_config();
  j["workers"] = 0;
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  j = full_config();
  j["data"]["kind"] = "parquet";
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("parquet"));
}

TEST_CASE("apoptosis mode grammar", "[config]") {
  json j = full_config();
  j["apoptosis"] = json{{"mode", "off"}};
  CHECK(!parse_run_config(j).apoptosis_enabled);

  j["apoptosis"] = json{{"mode", "factor"}, {"factor", 1.9}};
  CHECK(parse_run_config(j).apoptosis.f == 1.9);

  j["apoptosis"] = json{{"mode", "factor"}};
  CHECK_THROWS_WITH(parse_run_config(j), Catch::Contains("factor"));

  j["apoptosis"] = json{{"mode", "factor"}, {"factor", 0.8}};
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  j["apoptosis"] = json{{"mode", "very-aggressive"}};
  CHECK(parse_run_config(j).apoptosis.f == 1.25);

  j["apoptosis"] = json{{"mode", "gentle"}};
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);
}

TEST_CASE("override flag grammars", "[config]") {
  RunConfig cfg;

  apply_apoptosis_flag(cfg, "aggressive");
  CHECK(cfg.apoptosis_enabled);
  CHECK(cfg.apoptosis.f == 1.5);
  apply_apoptosis_flag(cfg, "factor=2.25");
  CHECK(cfg.apoptosis.f == 2.25);
  apply_apoptosis_flag(cfg, "off");
  CHECK(!cfg.apoptosis_enabled);
  CHECK_THROWS_AS(apply_apoptosis_flag(cfg, "factor=0.5"), ConfigError);
  CHECK_THROWS_AS(apply_apoptosis_flag(cfg, "factor=abc"), ConfigError);
  CHECK_THROWS_AS(apply_apoptosis_flag(cfg, "massive"), ConfigError);

  apply_schedule_flag(cfg, "quarter-log");
  CHECK(cfg.apoptosis.initial == InitialPoint::QuarterLife);
  CHECK(cfg.apoptosis.subsequent == SubsequentPolicy::Logarithmic);
  apply_schedule_flag(cfg, "half-fixed=500");
  CHECK(cfg.apoptosis.initial == InitialPoint::HalfLife);
  CHECK(cfg.apoptosis.interval == 500);
  apply_schedule_flag(cfg, "random");
  CHECK(cfg.apoptosis.initial == InitialPoint::Random);
  apply_schedule_flag(cfg, "end");
  CHECK(cfg.apoptosis.initial == InitialPoint::EndOfTraining);
  CHECK_THROWS_AS(apply_schedule_flag(cfg, "hourly"), ConfigError);
  CHECK_THROWS_AS(apply_schedule_flag(cfg, "half-fixed=x"), ConfigError);

  apply_degree_flag(cfg, "ramp=2.0:1.2");
  CHECK(cfg.apoptosis.degree == DegreePolicy::LinearRamp);
  CHECK(cfg.apoptosis.f_start == 2.0);
  CHECK(cfg.apoptosis.f_end == 1.2);
  apply_degree_flag(cfg, "fixed");
  CHECK(cfg.apoptosis.degree == DegreePolicy::Fixed);
  CHECK_THROWS_AS(apply_degree_flag(cfg, "ramp=2.0"), ConfigError);
  CHECK_THROWS_AS(apply_degree_flag(cfg, "ramp=a:b"), ConfigError);
}

TEST_CASE("config files load from disk with their own errors", "[config]") {
  const std::string path = "/tmp/apop_test_config.json";
  std::ofstream(path) << full_config().dump();
  const RunConfig cfg = load_run_config(path);
  CHECK(cfg.solver.total_iterations == 500);

  std::ofstream(path) << "{ not json";
  CHECK_THROWS_WITH(load_run_config(path), Catch::Contains("not valid JSON"));
  CHECK_THROWS_AS(load_run_config("/tmp/apop_test_missing_config.json"), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("synthetic dataset pairs split one pool", "[config]") {
  DataConfig d;
  d.kind = DataKind::Teacher;
  d.input_dim = 4;
  d.hidden = 8;
  d.pairs = 2;
  d.outputs = 8;
  d.samples = 100;
  d.test_samples = 50;
  d.seed = 3;
  const LoadedData first = load_datasets(d);
  CHECK(first.train.size() == 100);
  CHECK(first.test.size() == 50);
  CHECK(first.train.class_count == 8);
  CHECK(first.test.class_count == 8);
  const LoadedData again = load_datasets(d);
  CHECK((first.train.features.array() == again.train.features.array()).all());
  CHECK((first.test.features.array() == again.test.features.array()).all());

  d.kind = DataKind::Abs;
  const LoadedData abs_pair = load_datasets(d);
  CHECK(abs_pair.train.dim() == 1);
  CHECK(abs_pair.test.class_count == 2);

  d.kind = DataKind::Blobs;
  d.classes = 3;
  d.noise = 0.1;
  const LoadedData blobs = load_datasets(d);
  CHECK(blobs.train.dim() == 4);
  CHECK(blobs.train.class_count == 3);
}

TEST_CASE("csv dataset pairs load both files", "[config]") {
  const std::string train = "/tmp/apop_test_cfg_train.csv";
  const std::string test = "/tmp/apop_test_cfg_test.csv";
  std::ofstream(train) << "1,0.5,0.2\n0,0.1,0.9\n";
  std::ofstream(test) << "0,0.4,0.4\n";
  DataConfig d;
  d.kind = DataKind::Csv;
  d.train_path = train;
  d.test_path = test;
  d.binary = true;
  const LoadedData pair = load_datasets(d);
  CHECK(pair.train.size() == 2);
  CHECK(pair.test.size() == 1);
  CHECK(pair.test.class_count == 2);
  std::remove(train.c_str());
  std::remove(test.c_str());
}
