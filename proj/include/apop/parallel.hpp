#pragma once

#include <cmath>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

#include "apop/network.hpp"

namespace apop {

/// Data-parallel plan: P logical workers, each owning a contiguous slice of
/// the minibatch. Slice sizes differ by at most one; workers past the batch
/// end get empty slices.
struct WorkerPool {
  int workers = 1;

  explicit WorkerPool(int p = 1) : workers(p) {
    if (p < 1) throw ContractError("worker count must be positive");
  }

  std::vector<std::pair<Index, Index>> shards(Index batch) const {  // (start, count)
    std::vector<std::pair<Index, Index>> plan;
    plan.reserve(workers);
    const Index base = batch / workers;
    const Index extra = batch % workers;
    Index at = 0;
    for (int w = 0; w < workers; ++w) {
      const Index count = base + (w < extra ? 1 : 0);
      plan.emplace_back(at, count);
      at += count;
    }
    return plan;
  }
};

/// Left-to-right weighted sum of shape-identical gradient sets. The fold
/// order is part of the contract: it is what makes the parallel path
/// deterministic under any thread scheduling.
inline Gradients reduce_gradients(const std::vector<Gradients>& parts,
                                  const std::vector<double>& weights) {
  if (parts.empty() || parts.size() != weights.size())
    throw ContractError("need one weight per gradient part");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-12) throw ContractError("reduction weights must sum to 1");
  for (const Gradients& p : parts) {
    if (p.layer.size() != parts.front().layer.size())
      throw ContractError("gradient parts disagree on layer count");
    for (std::size_t l = 0; l < p.layer.size(); ++l)
      if (p.layer[l].rows() != parts.front().layer[l].rows() ||
          p.layer[l].cols() != parts.front().layer[l].cols())
        throw ContractError("gradient parts disagree on layer shapes");
  }

  Gradients acc;
  acc.loss = weights[0] * parts[0].loss;
  acc.layer.reserve(parts[0].layer.size());
  for (const Matrix& m : parts[0].layer) acc.layer.push_back(weights[0] * m);
  for (std::size_t w = 1; w < parts.size(); ++w) {
    acc.loss += weights[w] * parts[w].loss;
    for (std::size_t l = 0; l < acc.layer.size(); ++l) acc.layer[l] += weights[w] * parts[w].layer[l];
  }
  return acc;
}

/// Batch-mean gradient computed by P workers on disjoint shards of the batch
/// against the shared read-only network, then reduced in worker order with
/// weights shard/batch. P=1 runs in the calling thread and is bit-identical
/// to plain backward.
inline Gradients parallel_gradient(const Network& net, const Matrix& batch, const Matrix& targets,
                                   LossKind loss, const WorkerPool& pool) {
  if (batch.rows() != targets.rows())
    throw ShapeError("batch and targets disagree on row count");
  if (pool.workers == 1) return backward(net, forward(net, batch), targets, loss);

  const auto plan = pool.shards(batch.rows());
  std::vector<std::pair<int, std::pair<Index, Index>>> live;  // worker index, shard
  for (int w = 0; w < pool.workers; ++w)
    if (plan[w].second > 0) live.emplace_back(w, plan[w]);

  std::vector<Gradients> parts(live.size());
  std::vector<std::exception_ptr> errors(live.size());
  std::vector<std::thread> threads;
  threads.reserve(live.size());
  for (std::size_t k = 0; k < live.size(); ++k) {
    const auto [start, count] = live[k].second;
    threads.emplace_back([&, k, start, count] {
      try {
        const Matrix shard = batch.middleRows(start, count);
        const Matrix shard_targets = targets.middleRows(start, count);
        parts[k] = backward(net, forward(net, shard), shard_targets, loss);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> weights;
  weights.reserve(live.size());
  const double b = static_cast<double>(batch.rows());
  for (const auto& [w, shard] : live) weights.push_back(static_cast<double>(shard.second) / b);
  return reduce_gradients(parts, weights);
}

}  // namespace apop
