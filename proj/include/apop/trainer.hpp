#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "apop/apoptosis.hpp"
#include "apop/data.hpp"
#include "apop/parallel.hpp"

namespace apop {

enum class LrDecay { Constant, Exponential };

struct SolverConfig {
  std::int64_t total_iterations = 1;
  Index batch_size = 1;
  double learning_rate = 0.1;
  LrDecay lr_decay = LrDecay::Constant;
  double lr_gamma = 1.0;  // per-iteration multiplier when Exponential
  double momentum = 0.0;
  LossKind loss = LossKind::Mse;
  std::uint64_t seed = 0;

  void validate() const {
    if (total_iterations < 1) throw ConfigError("total_iterations must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(lr_gamma > 0.0) || lr_gamma > 1.0) throw ConfigError("lr_gamma must lie in (0, 1]");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  }
};

inline double lr_at(std::int64_t iter, const SolverConfig& solver) {
  if (iter < 0 || iter >= solver.total_iterations) throw ContractError("lr query outside the run");
  if (solver.lr_decay == LrDecay::Constant) return solver.learning_rate;
  return solver.learning_rate * std::pow(solver.lr_gamma, static_cast<double>(iter));
}

struct MetricsRecord {
  std::int64_t epoch = 0;
  std::int64_t iteration = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double test_auc = std::numeric_limits<double>::quiet_NaN();  // binary tasks only
  std::int64_t param_count = 0;
  double wall_ms = 0.0;  // cumulative since run start
  std::int64_t apoptosis_events = 0;
  std::string kind;  // "epoch", "event" or "final"
};

/// Fraction of samples whose predicted class matches the label. Width-1
/// outputs are binary scores thresholded at 0.5; wider outputs take the
/// argmax, lowest index winning ties.
inline double evaluate_accuracy(const Network& net, const Dataset& ds) {
  ds.validate();
  if (ds.dim() != net.input_dim())
    throw ShapeError("dataset width does not match network input");
  const Matrix out = forward(net, ds.features).post.back();
  Index hits = 0;
  for (Index i = 0; i < out.rows(); ++i) {
    int predicted = 0;
    if (out.cols() == 1) {
      predicted = out(i, 0) > 0.5 ? 1 : 0;
    } else {
      for (Index j = 1; j < out.cols(); ++j)
        if (out(i, j) > out(i, predicted)) predicted = static_cast<int>(j);
    }
    if (predicted == ds.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(out.rows());
}

/// Probability a random positive outscores a random negative, ties worth
/// half; computed from average ranks in O(n log n).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ContractError("scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("auc labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw ContractError("auc needs both classes present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t at = 0;
  while (at < n) {
    std::size_t end = at;
    while (end < n && scores[order[end]] == scores[order[at]]) ++end;
    const double mean_rank = 0.5 * static_cast<double>(at + 1 + end);  // ranks are 1-based
    for (std::size_t k = at; k < end; ++k)
      if (labels[order[k]] == 1) positive_rank_sum += mean_rank;
    at = end;
  }
  const double u = positive_rank_sum -
                   0.5 * static_cast<double>(positives) * static_cast<double>(positives + 1);
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

/// Test points for the training loop; any hook may be empty. Used by tests
/// to snapshot nets at event boundaries and audit optimizer state.
struct TrainHooks {
  std::function<void(std::int64_t iter, const Network& net, double factor)> before_apoptosis;
  std::function<void(std::int64_t iter, const Network& net, const ApoptosisReport&)> after_apoptosis;
  std::function<void(std::int64_t iter, const Network& net, const std::vector<Matrix>& velocity)>
      after_iteration;
};

struct TrainResult {
  Network net;
  std::vector<MetricsRecord> metrics;
  std::vector<ApoptosisReport> reports;
};

namespace detail {

inline Matrix gather_rows(const Matrix& m, const std::vector<Index>& order, Index start, Index count) {
  Matrix out(count, m.cols());
  for (Index r = 0; r < count; ++r) out.row(r) = m.row(order[start + r]);
  return out;
}

inline bool binary_task(const Network& net, const Dataset& test) {
  return net.output_dim() == 1 && test.class_count == 2;
}

inline double test_auc_or_nan(const Network& net, const Dataset& test) {
  if (!binary_task(net, test)) return std::numeric_limits<double>::quiet_NaN();
  const Matrix out = forward(net, test.features).post.back();
  std::vector<double> scores(out.rows());
  for (Index i = 0; i < out.rows(); ++i) scores[i] = out(i, 0);
  return auc(scores, test.labels);
}

}  // namespace detail

/// Minibatch SGD with classic momentum. Steps are 1-based; scheduled
/// apoptosis events fire after their step's weight update, shrink the
/// network, and reset momentum to zero in the new shapes. Metrics are
/// recorded at epoch boundaries, after every event, and once at the end.
inline TrainResult train(const Network& initial, const Dataset& train_set, const Dataset& test_set,
                         const SolverConfig& solver, const std::optional<ApoptosisConfig>& apop,
                         int workers = 1, const TrainHooks& hooks = {}) {
  initial.validate();
  solver.validate();
  train_set.validate();
  test_set.validate();
  if (train_set.dim() != initial.input_dim() || test_set.dim() != initial.input_dim())
    throw ShapeError("dataset width does not match network input");
  const WorkerPool pool(workers);

  std::vector<std::int64_t> events;
  if (apop) events = schedule_events(solver.total_iterations, *apop);

  const Index n = train_set.size();
  const Index batch = std::min(solver.batch_size, n);
  const std::int64_t epoch_len = (n + batch - 1) / batch;
  const Matrix targets = make_targets(train_set, initial.output_dim());

  TrainResult result;
  result.net = initial;
  std::vector<Matrix> velocity;
  auto reset_velocity = [&] {
    velocity.clear();
    for (const Layer& lay : result.net.layers)
      velocity.push_back(Matrix::Zero(lay.weights.rows(), lay.weights.cols()));
  };
  reset_velocity();

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto run_start = std::chrono::steady_clock::now();
  auto wall_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - run_start)
        .count();
  };

  std::size_t next_event = 0;
  std::int64_t events_fired = 0;
  double epoch_loss_sum = 0.0;
  std::int64_t epoch_loss_batches = 0;

  auto record = [&](std::int64_t t, const char* kind) {
    MetricsRecord rec;
    rec.epoch = t / epoch_len;
    rec.iteration = t;
    rec.train_loss = epoch_loss_batches > 0 ? epoch_loss_sum / static_cast<double>(epoch_loss_batches)
                                            : std::numeric_limits<double>::quiet_NaN();
    rec.test_accuracy = evaluate_accuracy(result.net, test_set);
    rec.test_auc = detail::test_auc_or_nan(result.net, test_set);
    rec.param_count = param_count(result.net);
    rec.wall_ms = wall_ms();
    rec.apoptosis_events = events_fired;
    rec.kind = kind;
    result.metrics.push_back(std::move(rec));
  };

  for (std::int64_t t = 1; t <= solver.total_iterations; ++t) {
    const std::int64_t within = (t - 1) % epoch_len;
    if (within == 0) {
      const std::int64_t epoch = (t - 1) / epoch_len;
      std::mt19937_64 rng(derive_seed(solver.seed, 0x100000000ULL + static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      epoch_loss_sum = 0.0;
      epoch_loss_batches = 0;
    }
    const Index start = static_cast<Index>(within) * batch;
    const Index count = std::min<Index>(batch, n - start);
    const Matrix x = detail::gather_rows(train_set.features, order, start, count);
    const Matrix y = detail::gather_rows(targets, order, start, count);

    const Gradients grads = parallel_gradient(result.net, x, y, solver.loss, pool);
    if (!std::isfinite(grads.loss))
      throw DivergedError("loss diverged at iteration " + std::to_string(t));
    epoch_loss_sum += grads.loss;
    ++epoch_loss_batches;

    const double lr = lr_at(t - 1, solver);
    for (std::size_t l = 0; l < result.net.layers.size(); ++l) {
      velocity[l] = solver.momentum * velocity[l] - lr * grads.layer[l];
      result.net.layers[l].weights += velocity[l];
    }
    if (hooks.after_iteration) hooks.after_iteration(t, result.net, velocity);

    if (next_event < events.size() && t == events[next_event]) {
      const double f = factor_at(next_event, events.size(), *apop);
      if (hooks.before_apoptosis) hooks.before_apoptosis(t, result.net, f);
      auto [shrunk, report] = apply_apoptosis(result.net, f);
      report.iteration = t;
      result.net = std::move(shrunk);
      reset_velocity();
      ++events_fired;
      ++next_event;
      if (hooks.after_apoptosis) hooks.after_apoptosis(t, result.net, report);
      result.reports.push_back(std::move(report));
      record(t, "event");
    }
    if (t % epoch_len == 0) record(t, "epoch");
  }
  record(solver.total_iterations, "final");
  return result;
}

/// Greedy layerwise pretraining: each hidden layer is fit as the encoder of
/// a one-hidden-layer autoencoder (fresh linear decoder, mean-squared
/// reconstruction) on the previous layer's outputs, then frozen. Zero
/// epochs returns the plain seeded network, bit for bit.
inline Network pretrain_autoencoders(const std::vector<int>& sizes, ActivationKind hidden_activation,
                                     ActivationKind output_activation, const Dataset& data,
                                     int epochs_per_layer, std::uint64_t seed, Index batch_size = 32,
                                     double learning_rate = 0.1) {
  if (epochs_per_layer < 0) throw ContractError("negative epoch count");
  data.validate();
  Network net = init_network(sizes, hidden_activation, output_activation, seed);
  if (data.dim() != net.input_dim()) throw ShapeError("dataset width does not match network input");
  if (epochs_per_layer == 0) return net;

  Matrix activations = data.features;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    const Index in = net.layers[l].in();
    const Index code = net.layers[l].out();

    Network coder;
    coder.layers.push_back(net.layers[l]);
    Layer decoder;
    decoder.activation = ActivationKind::Linear;
    decoder.weights = Matrix::Zero(in, code + 1);
    {
      const double r = std::sqrt(6.0 / static_cast<double>(code + in));
      std::mt19937_64 rng(derive_seed(seed, 1000 + l));
      std::uniform_real_distribution<double> dist(-r, r);
      for (Index i = 0; i < in; ++i)
        for (Index j = 0; j < code; ++j) decoder.weights(i, j) = dist(rng);
    }
    coder.layers.push_back(std::move(decoder));

    const Index n = activations.rows();
    const Index batch = std::min(batch_size, n);
    const Index batches = (n + batch - 1) / batch;
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < epochs_per_layer; ++epoch) {
      std::mt19937_64 rng(derive_seed(seed, 2000 + 100 * l + static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      for (Index b = 0; b < batches; ++b) {
        const Index start = b * batch;
        const Index count = std::min<Index>(batch, n - start);
        const Matrix x = detail::gather_rows(activations, order, start, count);
        const Gradients grads = backward(coder, forward(coder, x), x, LossKind::Mse);
        if (!std::isfinite(grads.loss))
          throw DivergedError("pretraining diverged at layer " + std::to_string(l));
        for (std::size_t k = 0; k < coder.layers.size(); ++k)
          coder.layers[k].weights -= learning_rate * grads.layer[k];
      }
    }
    net.layers[l] = coder.layers[0];
    activations = forward(coder, activations).post.front();
  }
  return net;
}

}  // namespace apop
