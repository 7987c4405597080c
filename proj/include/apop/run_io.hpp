#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "apop/apoptosis.hpp"
#include "apop/trainer.hpp"

namespace apop {

using nlohmann::json;

inline json metrics_to_json(const MetricsRecord& rec) {
  return json{{"kind", rec.kind},
              {"epoch", rec.epoch},
              {"iteration", rec.iteration},
              {"train_loss", rec.train_loss},
              {"test_accuracy", rec.test_accuracy},
              {"test_auc", rec.test_auc},
              {"param_count", rec.param_count},
              {"wall_ms", rec.wall_ms},
              {"apoptosis_events", rec.apoptosis_events}};
}

inline json report_to_json(const ApoptosisReport& rep) {
  json layers = json::array();
  for (const auto& s : rep.per_layer)
    layers.push_back(json{{"layer", s.layer},
                          {"candidates", s.candidates},
                          {"removed", s.removed},
                          {"params_removed", s.params_removed}});
  return json{{"iter", rep.iteration}, {"factor", rep.factor}, {"per_layer", layers},
              {"wall_ms", rep.wall_ms}};
}

inline void write_jsonl(const std::string& path, const std::vector<json>& lines) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  for (const json& j : lines) f << j.dump() << '\n';
  if (!f) throw FormatError("short write to '" + path + "'");
}

inline std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::vector<json> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw FormatError("'" + path + "' line " + std::to_string(line_no) + ": not valid JSON");
    lines.push_back(std::move(j));
  }
  return lines;
}

/// Mean wall time of the epoch windows that start at or after `min_iter`.
/// A window runs from one epoch-kind record to the next (the run start
/// counts as iteration 0 at wall 0). NaN when no window qualifies.
inline double mean_epoch_ms(const std::vector<json>& records, std::int64_t min_iter = 0) {
  std::int64_t prev_iter = 0;
  double prev_wall = 0.0;
  double sum = 0.0;
  int windows = 0;
  for (const json& j : records) {
    if (!j.is_object() || j.value("kind", "") != "epoch") continue;
    const std::int64_t iter = j.at("iteration").get<std::int64_t>();
    const double wall = j.at("wall_ms").get<double>();
    if (prev_iter >= min_iter) {
      sum += wall - prev_wall;
      ++windows;
    }
    prev_iter = iter;
    prev_wall = wall;
  }
  return windows > 0 ? sum / windows : std::numeric_limits<double>::quiet_NaN();
}

inline std::optional<json> find_summary(const std::vector<json>& records) {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (it->is_object() && it->value("kind", "") == "summary") return *it;
  return std::nullopt;
}

/// Trailing metrics line: everything needed to compute parameter-reduction
/// and, when a paired baseline metrics file is supplied, wall-time speedups
/// (whole run, and steady-state epochs after the last apoptosis event).
inline json make_summary(const std::vector<MetricsRecord>& metrics,
                         const std::vector<ApoptosisReport>& reports, std::int64_t initial_params,
                         const std::string& baseline_path = "") {
  if (metrics.empty()) throw ContractError("summary needs at least one metrics record");
  const MetricsRecord& last = metrics.back();
  std::int64_t last_event_iter = 0;
  for (const ApoptosisReport& r : reports) last_event_iter = std::max(last_event_iter, r.iteration);

  std::vector<json> own;
  own.reserve(metrics.size());
  for (const MetricsRecord& m : metrics) own.push_back(metrics_to_json(m));

  json summary{{"kind", "summary"},
               {"total_wall_ms", last.wall_ms},
               {"initial_param_count", initial_params},
               {"final_param_count", last.param_count},
               {"reduction_ratio", static_cast<double>(initial_params) / last.param_count},
               {"final_test_accuracy", last.test_accuracy},
               {"final_test_auc", last.test_auc},
               {"apoptosis_events", static_cast<std::int64_t>(reports.size())},
               {"last_event_iteration", last_event_iter},
               {"mean_epoch_ms", mean_epoch_ms(own)},
               {"post_apoptosis_mean_epoch_ms", mean_epoch_ms(own, last_event_iter)}};

  if (!baseline_path.empty()) {
    const std::vector<json> base = read_jsonl(baseline_path);
    const auto base_summary = find_summary(base);
    if (!base_summary) throw FormatError("'" + baseline_path + "' has no summary record");
    const double base_total = base_summary->at("total_wall_ms").get<double>();
    const double base_epoch = mean_epoch_ms(base);
    summary["baseline"] = json{
        {"path", baseline_path},
        {"total_wall_ms", base_total},
        {"mean_epoch_ms", base_epoch},
        {"whole_run_speedup", base_total / last.wall_ms},
        {"epoch_speedup", base_epoch / summary.at("post_apoptosis_mean_epoch_ms").get<double>()},
        {"baseline_accuracy", base_summary->at("final_test_accuracy").get<double>()},
        {"baseline_param_count", base_summary->at("final_param_count").get<std::int64_t>()}};
  }
  return summary;
}

}  // namespace apop
