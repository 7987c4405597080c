// Experiment harness: train/inspect/gen/eval around the apop headers.
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apop/apoptosis.hpp"
#include "apop/config.hpp"
#include "apop/data.hpp"
#include "apop/model_io.hpp"
#include "apop/run_io.hpp"
#include "apop/trainer.hpp"

namespace {

using apop::json;

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const apop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const apop::FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const apop::DivergedError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 4;
  } catch (const apop::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

void run_train(apop::RunConfig cfg) {
  const apop::LoadedData data = apop::load_datasets(cfg.data);
  if (data.train.dim() != cfg.sizes.front())
    throw apop::ConfigError("network.sizes[0]=" + std::to_string(cfg.sizes.front()) +
                            " does not match data width " + std::to_string(data.train.dim()));
  if (cfg.solver.loss == apop::LossKind::SoftmaxCrossEntropy &&
      cfg.output_activation != apop::ActivationKind::Linear)
    throw apop::ConfigError("solver.loss softmax_ce needs network.output_activation linear");
  if (cfg.solver.loss == apop::LossKind::SigmoidBinaryCrossEntropy &&
      cfg.output_activation != apop::ActivationKind::Sigmoid)
    throw apop::ConfigError("solver.loss sigmoid_bce needs network.output_activation sigmoid");

  apop::Network net = apop::init_network(cfg.sizes, cfg.hidden_activation, cfg.output_activation,
                                         cfg.solver.seed);
  const std::int64_t initial_params = apop::param_count(net);

  std::optional<apop::ApoptosisConfig> apo;
  if (cfg.apoptosis_enabled) apo = cfg.apoptosis;
  const apop::TrainResult result =
      apop::train(net, data.train, data.test, cfg.solver, apo, cfg.workers);

  std::vector<json> metric_lines;
  metric_lines.reserve(result.metrics.size() + 1);
  for (const apop::MetricsRecord& m : result.metrics) metric_lines.push_back(apop::metrics_to_json(m));
  const json summary =
      apop::make_summary(result.metrics, result.reports, initial_params, cfg.baseline);
  metric_lines.push_back(summary);
  apop::write_jsonl(cfg.metrics_out, metric_lines);

  std::vector<json> report_lines;
  report_lines.reserve(result.reports.size());
  for (const apop::ApoptosisReport& r : result.reports) report_lines.push_back(apop::report_to_json(r));
  apop::write_jsonl(cfg.reports_out, report_lines);

  apop::save_model(result.net, cfg.model_out);
  std::cout << summary.dump() << '\n';
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

json rule_line(int layer, apop::Index neurons, const char* rule, const std::vector<double>& dists,
               std::int64_t candidates, double factor) {
  json j{{"layer", layer},
         {"neurons", neurons},
         {"rule", rule},
         {"pairs", dists.size()},
         {"candidates", candidates},
         {"factor", factor}};
  if (dists.empty()) {
    j["min"] = nullptr;
    j["median"] = nullptr;
  } else {
    j["min"] = *std::min_element(dists.begin(), dists.end());
    j["median"] = median_of(dists);
  }
  return j;
}

void run_inspect(const std::string& model_path, double factor) {
  const apop::Network net = apop::load_model(model_path);
  for (int l = 0; l + 1 < static_cast<int>(net.depth()); ++l) {
    const apop::Layer& lay = net.layers[l];
    const apop::Index n = lay.out();
    const apop::Matrix vin = lay.weights.transpose();
    const auto candidates = n >= 2 ? apop::detect_candidates(net, l, factor)
                                   : std::vector<apop::MergeCandidate>{};
    auto count_kind = [&](apop::MergeKind k) {
      std::int64_t c = 0;
      for (const auto& cand : candidates) c += cand.kind == k ? 1 : 0;
      return c;
    };

    if (lay.activation == apop::ActivationKind::Relu) {
      std::vector<double> dists;
      for (apop::Index i = 0; i < n; ++i) {
        const double ni = vin.col(i).norm();
        if (ni == 0.0) continue;
        for (apop::Index j = i + 1; j < n; ++j) {
          const double nj = vin.col(j).norm();
          if (nj == 0.0 || vin.col(i).dot(vin.col(j)) <= 0.0) continue;
          dists.push_back((vin.col(j) / nj - vin.col(i) / ni).norm());
        }
      }
      std::cout << rule_line(l, n, "relu_directional", dists,
                             count_kind(apop::MergeKind::ReluDirectional), factor)
                       .dump()
                << '\n';
      continue;
    }

    std::vector<double> in_dists;
    std::vector<double> out_dists;
    const apop::Matrix wout = net.layers[l + 1].weights.leftCols(n);
    for (apop::Index i = 0; i < n; ++i) {
      const double wi2 = wout.col(i).squaredNorm();
      for (apop::Index j = i + 1; j < n; ++j) {
        in_dists.push_back((vin.col(i) - vin.col(j)).norm());
        if (wi2 > 0.0) {
          const double alpha = wout.col(j).dot(wout.col(i)) / wi2;
          out_dists.push_back((wout.col(j) - alpha * wout.col(i)).norm());
        }
      }
    }
    std::cout << rule_line(l, n, "sigmoid_incoming", in_dists,
                           count_kind(apop::MergeKind::SigmoidIncoming), factor)
                     .dump()
              << '\n';
    std::cout << rule_line(l, n, "sigmoid_outgoing", out_dists,
                           count_kind(apop::MergeKind::SigmoidOutgoing), factor)
                     .dump()
              << '\n';
  }
}

struct GenOptions {
  std::string kind;
  std::string out;
  std::string model_out;
  std::int64_t samples = 1000;
  int dim = 4;
  int hidden = 8;
  int pairs = 0;
  int classes = 2;
  int outputs = 2;
  double noise = 0.3;
  double alpha = 0.0;
  std::string activation = "sigmoid";
  std::uint64_t seed = 7777;
};

void run_gen(const GenOptions& opt) {
  if (opt.kind == "teacher") {
    auto [teacher, ds] =
        apop::gen_planted_teacher(opt.dim, opt.hidden, opt.pairs,
                                  apop::activation_from_name(opt.activation), opt.samples, opt.seed,
                                  opt.alpha, opt.outputs);
    apop::save_csv(ds, opt.out);
    if (!opt.model_out.empty()) apop::save_model(teacher, opt.model_out);
  } else if (opt.kind == "abs") {
    apop::save_csv(apop::gen_abs_dataset(opt.samples, opt.seed), opt.out);
  } else if (opt.kind == "blobs") {
    apop::save_csv(apop::gen_blobs(opt.samples, opt.dim, opt.classes, opt.noise, opt.seed), opt.out);
  } else {
    throw apop::ConfigError("gen: unknown kind '" + opt.kind + "' (expected teacher, abs or blobs)");
  }
}

struct EvalOptions {
  std::string model;
  std::string csv;
  bool label_first = true;
  bool binary = false;
  bool skip_header = false;
  bool standardize = false;
  std::string idx_images, idx_labels;
  bool normalize = true;
};

void run_eval(const EvalOptions& opt) {
  const apop::Network net = apop::load_model(opt.model);
  apop::Dataset ds;
  if (!opt.csv.empty()) {
    ds = apop::load_csv(opt.csv, opt.label_first, opt.binary, opt.skip_header, opt.standardize);
  } else if (!opt.idx_images.empty() && !opt.idx_labels.empty()) {
    ds = apop::load_idx(opt.idx_images, opt.idx_labels, opt.normalize);
  } else {
    throw apop::ConfigError("eval: supply --csv or both --idx-images and --idx-labels");
  }
  json out{{"accuracy", apop::evaluate_accuracy(net, ds)},
           {"auc", apop::detail::test_auc_or_nan(net, ds)},
           {"param_count", apop::param_count(net)}};
  std::cout << out.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-network training engine that merges redundant neurons as it runs"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Run a training job from a JSON config");
  std::string config_path;
  train->add_option("--config", config_path, "JSON run configuration")->required();
  std::string apoptosis_flag, schedule_flag, degree_flag;
  std::optional<int> workers_flag;
  std::optional<std::uint64_t> seed_flag;
  std::string metrics_out, reports_out, model_out, baseline;
  train->add_option("--apoptosis", apoptosis_flag,
                    "off | very-conservative | conservative | normal | aggressive | "
                    "very-aggressive | factor=<f>");
  train->add_option("--schedule", schedule_flag, "quarter-log | half-fixed=<n> | random | end");
  train->add_option("--degree", degree_flag, "fixed | ramp=<f0>:<f1>");
  train->add_option("--workers", workers_flag, "data-parallel worker count");
  train->add_option("--seed", seed_flag, "run seed");
  train->add_option("--metrics-out", metrics_out, "metrics JSON-lines path");
  train->add_option("--reports-out", reports_out, "apoptosis-report JSON-lines path");
  train->add_option("--model-out", model_out, "final model path");
  train->add_option("--baseline", baseline, "paired baseline metrics file for speedup summary");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Report pairwise redundancy stats of a model");
  std::string inspect_model;
  double inspect_factor = 1.75;
  inspect->add_option("model", inspect_model, "model file")->required();
  inspect->add_option("--factor", inspect_factor, "merge factor to count candidates at");

  // gen
  auto* gen = app.add_subcommand("gen", "Write a synthetic dataset (and teacher model)");
  GenOptions gopt;
  gen->add_option("kind", gopt.kind, "teacher | abs | blobs")->required();
  gen->add_option("--out", gopt.out, "CSV output path")->required();
  gen->add_option("--model-out", gopt.model_out, "teacher model output path");
  gen->add_option("--samples", gopt.samples, "sample count");
  gen->add_option("--dim", gopt.dim, "input width");
  gen->add_option("--hidden", gopt.hidden, "teacher hidden width");
  gen->add_option("--pairs", gopt.pairs, "planted redundant pairs");
  gen->add_option("--outputs", gopt.outputs, "teacher output width");
  gen->add_option("--classes", gopt.classes, "blob class count");
  gen->add_option("--noise", gopt.noise, "blob noise level");
  gen->add_option("--alpha", gopt.alpha, "force the planted ReLU scale (0 = draw)");
  gen->add_option("--activation", gopt.activation, "teacher hidden activation");
  gen->add_option("--seed", gopt.seed, "generator seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a saved model against a dataset");
  EvalOptions eopt;
  eval->add_option("--model", eopt.model, "model file")->required();
  bool label_last = false, raw_pixels = false;
  eval->add_option("--csv", eopt.csv, "CSV dataset path");
  eval->add_flag("--label-last", label_last, "label is the last CSV column");
  eval->add_flag("--binary", eopt.binary, "CSV labels are binary");
  eval->add_flag("--skip-header", eopt.skip_header, "skip the first CSV line");
  eval->add_flag("--standardize", eopt.standardize, "standardize CSV features");
  eval->add_option("--idx-images", eopt.idx_images, "IDX image file");
  eval->add_option("--idx-labels", eopt.idx_labels, "IDX label file");
  eval->add_flag("--raw", raw_pixels, "keep raw 0-255 pixel values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (train->parsed()) {
    return guarded([&] {
      apop::RunConfig cfg = apop::load_run_config(config_path);
      if (!apoptosis_flag.empty()) apop::apply_apoptosis_flag(cfg, apoptosis_flag);
      if (!schedule_flag.empty()) apop::apply_schedule_flag(cfg, schedule_flag);
      if (!degree_flag.empty()) apop::apply_degree_flag(cfg, degree_flag);
      if (workers_flag) cfg.workers = *workers_flag;
      if (seed_flag) {
        cfg.solver.seed = *seed_flag;
        cfg.apoptosis.seed = *seed_flag;
      }
      if (!metrics_out.empty()) cfg.metrics_out = metrics_out;
      if (!reports_out.empty()) cfg.reports_out = reports_out;
      if (!model_out.empty()) cfg.model_out = model_out;
      if (!baseline.empty()) cfg.baseline = baseline;
      if (cfg.workers < 1) throw apop::ConfigError("workers: must be positive");
      if (cfg.apoptosis_enabled) cfg.apoptosis.validate();
      run_train(std::move(cfg));
    });
  }
  if (inspect->parsed())
    return guarded([&] {
      if (!(inspect_factor > 1.0)) throw apop::ConfigError("inspect: factor must exceed 1");
      run_inspect(inspect_model, inspect_factor);
    });
  if (gen->parsed()) return guarded([&] { run_gen(gopt); });
  eopt.label_first = !label_last;
  eopt.normalize = !raw_pixels;
  return guarded([&] { run_eval(eopt); });
}
