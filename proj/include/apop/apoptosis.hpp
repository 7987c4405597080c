#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "apop/network.hpp"

namespace apop {

enum class MergeKind { SigmoidIncoming, SigmoidOutgoing, ReluDirectional };

inline const char* merge_kind_name(MergeKind k) {
  switch (k) {
    case MergeKind::SigmoidIncoming: return "sigmoid_incoming";
    case MergeKind::SigmoidOutgoing: return "sigmoid_outgoing";
    case MergeKind::ReluDirectional: return "relu_directional";
  }
  return "?";
}

/// One mergeable pair. `survivor`/`removed` index neurons of layer `layer`;
/// `distance` is the measured left-hand side of the detection rule and
/// `alpha` the scale the merge formula will use (1 where unused).
struct MergeCandidate {
  int layer = 0;
  Index survivor = 0;
  Index removed = 0;
  MergeKind kind = MergeKind::SigmoidIncoming;
  double alpha = 1.0;
  double distance = 0.0;
};

enum class InitialPoint { QuarterLife, HalfLife, Random, EndOfTraining };
enum class SubsequentPolicy { Logarithmic, Fixed, RandomCount };
enum class DegreePolicy { Fixed, LinearRamp };

struct ApoptosisConfig {
  InitialPoint initial = InitialPoint::QuarterLife;
  SubsequentPolicy subsequent = SubsequentPolicy::Logarithmic;
  std::int64_t min_gap = 1000;   // Logarithmic: stop once the next gap is smaller
  std::int64_t interval = 1000;  // Fixed: arithmetic stride
  int random_count = 0;          // RandomCount: draws after the initial point
  DegreePolicy degree = DegreePolicy::Fixed;
  double f = 1.75;
  double f_start = 1.75;
  double f_end = 1.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (degree == DegreePolicy::Fixed) {
      if (!(f > 1.0)) throw ConfigError("apoptosis factor must exceed 1");
    } else {
      if (f_start < 1.1 || f_start > 10.0 || f_end < 1.1 || f_end > 10.0)
        throw ConfigError("ramp factors must lie in [1.1, 10]");
    }
    if (subsequent == SubsequentPolicy::Logarithmic && min_gap < 1)
      throw ConfigError("min_gap must be at least 1");
    if (subsequent == SubsequentPolicy::Fixed && interval < 1)
      throw ConfigError("event interval must be at least 1");
    if (subsequent == SubsequentPolicy::RandomCount && random_count < 0)
      throw ConfigError("random event count cannot be negative");
  }
};

/// Aggressiveness presets. Lower f widens the merge threshold.
inline double preset_factor(const std::string& name) {
  if (name == "very-conservative") return 2.5;
  if (name == "conservative") return 2.0;
  if (name == "normal") return 1.75;
  if (name == "aggressive") return 1.5;
  if (name == "very-aggressive") return 1.25;
  throw ConfigError("unknown apoptosis preset '" + name + "'");
}

struct ApoptosisReport {
  struct LayerStats {
    int layer = 0;
    std::int64_t candidates = 0;
    std::int64_t removed = 0;
    std::int64_t params_removed = 0;
  };
  std::int64_t iteration = 0;
  double factor = 0.0;
  std::vector<LayerStats> per_layer;
  double wall_ms = 0.0;  // time spent in the distance passes

  std::int64_t total_removed() const {
    std::int64_t n = 0;
    for (const auto& s : per_layer) n += s.removed;
    return n;
  }
  std::int64_t total_params_removed() const {
    std::int64_t n = 0;
    for (const auto& s : per_layer) n += s.params_removed;
    return n;
  }
};

/// Redundant-pair scan of one hidden layer. Sigmoid layers: a pair merges on
/// near-equal incoming vectors (|v_i - v_j| < |v_i|/f, bias included) or,
/// failing that, on near-proportional outgoing vectors (alpha the
/// least-squares scale, |w_j - alpha w_i| < |w_j|/f, alpha away from -1).
/// ReLU layers: same-direction incoming vectors (|v_hat_j - v_hat_i| < 1/f,
/// alpha = |v_j|/|v_i|); opposite directions never merge. One candidate per
/// pair at most; zero-norm vectors make a rule inapplicable.
inline std::vector<MergeCandidate> detect_candidates(const Network& net, int layer, double f) {
  if (layer < 0 || static_cast<std::size_t>(layer) + 1 >= net.depth())
    throw ContractError("layer " + std::to_string(layer) + " is not a hidden layer");
  if (!(f > 1.0)) throw ContractError("apoptosis factor must exceed 1");

  const Layer& lay = net.layers[layer];
  const Layer& next = net.layers[layer + 1];
  const Index n = lay.out();
  std::vector<MergeCandidate> found;
  if (n < 2) return found;

  // Column-contiguous copies: incoming vectors (bias row appended) and, for
  // sigmoid layers, outgoing vectors (the next layer's columns).
  Matrix vin = lay.weights.transpose();
  Vector vnorm(n);
  for (Index i = 0; i < n; ++i) vnorm(i) = vin.col(i).norm();

  if (lay.activation == ActivationKind::Relu) {
    Matrix unit = vin;
    for (Index i = 0; i < n; ++i)
      if (vnorm(i) > 0.0) unit.col(i) /= vnorm(i);
    for (Index i = 0; i < n; ++i) {
      if (vnorm(i) == 0.0) continue;
      for (Index j = i + 1; j < n; ++j) {
        if (vnorm(j) == 0.0) continue;
        if (unit.col(i).dot(unit.col(j)) <= 0.0) continue;
        const double dist = (unit.col(j) - unit.col(i)).norm();
        if (dist < 1.0 / f)
          found.push_back({layer, i, j, MergeKind::ReluDirectional, vnorm(j) / vnorm(i), dist});
      }
    }
    return found;
  }

  const Matrix wout = next.weights.leftCols(n);
  Vector wnorm2(n);
  for (Index i = 0; i < n; ++i) wnorm2(i) = wout.col(i).squaredNorm();

  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (vnorm(i) > 0.0) {
        const double dist = (vin.col(i) - vin.col(j)).norm();
        if (dist < vnorm(i) / f) {
          found.push_back({layer, i, j, MergeKind::SigmoidIncoming, 1.0, dist});
          continue;
        }
      }
      if (wnorm2(i) > 0.0) {
        const double alpha = wout.col(j).dot(wout.col(i)) / wnorm2(i);
        if (std::abs(alpha + 1.0) <= 1e-3) continue;
        const double dist = (wout.col(j) - alpha * wout.col(i)).norm();
        if (dist < std::sqrt(wnorm2(j)) / f)
          found.push_back({layer, i, j, MergeKind::SigmoidOutgoing, alpha, dist});
      }
    }
  }
  return found;
}

namespace detail {

inline Matrix drop_row(const Matrix& m, Index r) {
  Matrix out(m.rows() - 1, m.cols());
  out.topRows(r) = m.topRows(r);
  out.bottomRows(m.rows() - 1 - r) = m.bottomRows(m.rows() - 1 - r);
  return out;
}

inline Matrix drop_col(const Matrix& m, Index c) {
  Matrix out(m.rows(), m.cols() - 1);
  out.leftCols(c) = m.leftCols(c);
  out.rightCols(m.cols() - 1 - c) = m.rightCols(m.cols() - 1 - c);
  return out;
}

}  // namespace detail

/// Fold the removed neuron into the survivor and shrink the two touched
/// weight matrices. The survivor's incoming/outgoing updates follow the
/// candidate kind; the removed neuron's row and downstream column vanish.
inline Network merge_pair(const Network& net, const MergeCandidate& c) {
  if (c.layer < 0 || static_cast<std::size_t>(c.layer) + 1 >= net.depth())
    throw ContractError("candidate layer " + std::to_string(c.layer) + " is not a hidden layer");
  const Index n = net.layers[c.layer].out();
  if (c.survivor == c.removed || c.survivor < 0 || c.removed < 0 || c.survivor >= n || c.removed >= n)
    throw ContractError("stale candidate indices " + std::to_string(c.survivor) + "," +
                        std::to_string(c.removed) + " against width " + std::to_string(n));
  if (n < 2) throw ContractError("cannot remove the last neuron of a layer");

  Network out = net;
  Matrix& w = out.layers[c.layer].weights;
  Matrix& wnext = out.layers[c.layer + 1].weights;

  switch (c.kind) {
    case MergeKind::SigmoidIncoming:
      wnext.col(c.survivor) += wnext.col(c.removed);
      break;
    case MergeKind::SigmoidOutgoing:
      wnext.col(c.survivor) += wnext.col(c.removed);
      w.row(c.survivor) = (c.alpha * w.row(c.removed) + w.row(c.survivor)) / (c.alpha + 1.0);
      break;
    case MergeKind::ReluDirectional:
      wnext.col(c.survivor) += c.alpha * wnext.col(c.removed);
      break;
  }
  w = detail::drop_row(w, c.removed);
  wnext = detail::drop_col(wnext, c.removed);
  return out;
}

/// One apoptosis event over every hidden layer. Candidates are detected once
/// per layer, then applied greedily in ascending-distance order. Within an
/// event a removed neuron is gone, an outgoing-merge survivor is frozen (its
/// incoming vector was averaged, so further pairings are stale), and
/// incoming/directional survivors may keep absorbing. A layer is never
/// drained below one neuron.
inline std::pair<Network, ApoptosisReport> apply_apoptosis(const Network& net, double f) {
  if (!(f > 1.0)) throw ContractError("apoptosis factor must exceed 1");
  net.check_shape();

  Network cur = net;
  ApoptosisReport report;
  report.factor = f;
  double wall = 0.0;

  for (int l = 0; l + 1 < static_cast<int>(cur.depth()); ++l) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<MergeCandidate> cands = detect_candidates(cur, l, f);
    wall += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    std::sort(cands.begin(), cands.end(), [](const MergeCandidate& a, const MergeCandidate& b) {
      if (a.distance != b.distance) return a.distance < b.distance;
      if (a.survivor != b.survivor) return a.survivor < b.survivor;
      return a.removed < b.removed;
    });

    const Index width = cur.layers[l].out();
    const std::int64_t params_per_neuron = (cur.layers[l].in() + 1) + cur.layers[l + 1].out();
    std::vector<bool> gone(width, false), frozen(width, false);
    std::vector<Index> now(width);  // original index -> current index
    for (Index i = 0; i < width; ++i) now[i] = i;

    ApoptosisReport::LayerStats stats;
    stats.layer = l;
    stats.candidates = static_cast<std::int64_t>(cands.size());

    for (const MergeCandidate& c : cands) {
      if (cur.layers[l].out() < 2) break;
      if (gone[c.survivor] || gone[c.removed] || frozen[c.survivor] || frozen[c.removed]) continue;
      MergeCandidate live = c;
      live.survivor = now[c.survivor];
      live.removed = now[c.removed];
      cur = merge_pair(cur, live);
      gone[c.removed] = true;
      if (c.kind == MergeKind::SigmoidOutgoing) frozen[c.survivor] = true;
      for (Index i = 0; i < width; ++i)
        if (!gone[i] && now[i] > live.removed) --now[i];
      ++stats.removed;
    }
    stats.params_removed = stats.removed * params_per_neuron;
    report.per_layer.push_back(stats);
  }
  report.wall_ms = wall;
  return {std::move(cur), std::move(report)};
}

/// Worst-case output deviation of a directional ReLU merge for one input:
/// |ReLU(v2.x) - alpha ReLU(v1.x)| split by which side of the hinge each
/// pre-activation falls on.
inline double relu_error_bound(const Vector& v1, const Vector& v2, double alpha, const Vector& x) {
  if (!(alpha > 0.0)) throw ContractError("relu merge scale must be positive");
  if (v1.size() != v2.size() || v1.size() != x.size())
    throw ShapeError("bound inputs must share one dimension");
  const double d1 = v1.dot(x);
  const double d2 = v2.dot(x);
  if (d1 <= 0.0 && d2 <= 0.0) return 0.0;
  if (d2 <= 0.0) return alpha * v1.norm() * x.norm();
  if (d1 <= 0.0) return v2.norm() * x.norm();
  return x.norm() * (v2 - alpha * v1).norm();
}

namespace detail {

inline double log_sigmoid(double t) {
  return t > 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

// log(e^d - 1); for large d the -1 is below resolution.
inline double log_expm1(double d) {
  if (d <= 0.0) return -std::numeric_limits<double>::infinity();
  return d > 30.0 ? d : std::log(std::expm1(d));
}

}  // namespace detail

/// Worst-case output deviation of a near-equal sigmoid merge for one input:
/// |w2| |sigmoid(v2.x) - sigmoid(v1.x)| with v2.x pinned only to within
/// eps|x| of v1.x, eps = |v1 - v2|. Evaluated in log space, so dot products
/// up to ~700 in magnitude stay finite throughout.
inline double sigmoid_error_bound(const Vector& v1, const Vector& v2, const Vector& w2,
                                  const Vector& x) {
  if (v1.size() != v2.size() || v1.size() != x.size())
    throw ShapeError("bound inputs must share one dimension");
  const double eps = (v1 - v2).norm();
  const double slack = eps * x.norm();
  const double a = v1.dot(x);
  const double b = v2.dot(x);
  const double log_bound = std::log(w2.norm()) + detail::log_sigmoid(a) + detail::log_sigmoid(-b) +
                           detail::log_expm1(slack);
  return std::exp(log_bound);
}

/// Event iterations for a T-step run: one initial point, then a tail policy.
/// The logarithmic tail halves the remaining run each time and stops when
/// the next hop would be shorter than min_gap.
inline std::vector<std::int64_t> schedule_events(std::int64_t total_iterations,
                                                 const ApoptosisConfig& cfg) {
  if (total_iterations < 4) throw ContractError("schedule needs at least 4 iterations");
  cfg.validate();
  const std::int64_t T = total_iterations;

  if (cfg.initial == InitialPoint::EndOfTraining) return {T};

  std::int64_t t0 = 0;
  switch (cfg.initial) {
    case InitialPoint::QuarterLife: t0 = T / 4; break;
    case InitialPoint::HalfLife: t0 = T / 2; break;
    case InitialPoint::Random: {
      std::mt19937_64 rng(derive_seed(cfg.seed, 0xA90));
      t0 = std::uniform_int_distribution<std::int64_t>(1, T)(rng);
      break;
    }
    case InitialPoint::EndOfTraining: break;
  }

  std::vector<std::int64_t> events{t0};
  switch (cfg.subsequent) {
    case SubsequentPolicy::Logarithmic: {
      std::int64_t t = t0;
      for (;;) {
        const std::int64_t inc = (T - t + 1) / 2;  // ceil((T - t) / 2)
        if (inc < cfg.min_gap) break;
        t += inc;
        events.push_back(t);
      }
      break;
    }
    case SubsequentPolicy::Fixed: {
      for (std::int64_t t = t0 + cfg.interval; t <= T; t += cfg.interval) events.push_back(t);
      break;
    }
    case SubsequentPolicy::RandomCount: {
      std::mt19937_64 rng(derive_seed(cfg.seed, 0xA91));
      const std::int64_t room = T - t0;
      const std::int64_t want = std::min<std::int64_t>(cfg.random_count, room);
      std::set<std::int64_t> draws;
      std::uniform_int_distribution<std::int64_t> dist(t0 + 1, T);
      while (static_cast<std::int64_t>(draws.size()) < want) draws.insert(dist(rng));
      events.insert(events.end(), draws.begin(), draws.end());
      break;
    }
  }
  return events;
}

/// Merge factor for event k of K. A ramp interpolates endpoint factors
/// linearly across events; remember lower f means a wider merge threshold.
inline double factor_at(std::size_t k, std::size_t total_events, const ApoptosisConfig& cfg) {
  if (k >= total_events) throw ContractError("event index past schedule end");
  if (cfg.degree == DegreePolicy::Fixed) return cfg.f;
  if (total_events == 1) return cfg.f_start;
  const double frac = static_cast<double>(k) / static_cast<double>(total_events - 1);
  return cfg.f_start + (cfg.f_end - cfg.f_start) * frac;
}

}  // namespace apop
