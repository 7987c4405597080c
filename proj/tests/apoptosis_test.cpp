#include <catch2/catch.hpp>

#include <random>
#include <set>

#include "apop/apoptosis.hpp"
#include "apop/data.hpp"
#include "oracles.hpp"

using namespace apop;

namespace {

Network two_layer(Matrix hidden, ActivationKind hidden_kind, Matrix out,
                  ActivationKind out_kind = ActivationKind::Linear) {
  Network net;
  net.layers.push_back({std::move(hidden), hidden_kind});
  net.layers.push_back({std::move(out), out_kind});
  net.check_shape();
  return net;
}

Matrix grid(Index points, Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix m(points, dim);
  for (Index i = 0; i < points; ++i)
    for (Index j = 0; j < dim; ++j) m(i, j) = unit(rng);
  return m;
}

std::set<std::pair<Index, Index>> candidate_pairs(const std::vector<MergeCandidate>& cands) {
  std::set<std::pair<Index, Index>> pairs;
  for (const MergeCandidate& c : cands) pairs.emplace(c.survivor, c.removed);
  return pairs;
}

}  // namespace

TEST_CASE("opposite-direction ReLU rows never merge", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 1, 0, 0, -1, 0, 0;
  Matrix out = Matrix::Ones(1, 3);
  const Network net = two_layer(hidden, ActivationKind::Relu, out);
  for (double f : {1.01, 1.25, 1.75, 2.5, 100.0, 1e6})
    CHECK(detect_candidates(net, 0, f).empty());
}

TEST_CASE("identical sigmoid rows give one zero-distance incoming candidate", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 1, -1, 0.5, 1, -1, 0.5;
  Matrix out(1, 3);
  out << 0.4, -0.2, 0.1;
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].kind == MergeKind::SigmoidIncoming);
  CHECK(cands[0].survivor == 0);
  CHECK(cands[0].removed == 1);
  CHECK(cands[0].distance == 0.0);
}

TEST_CASE("exact ReLU multiple gives alpha exactly two at distance zero", "[apoptosis]") {
  Matrix hidden(2, 4);
  hidden << 0.3, -0.7, 0.2, 0.1, 0.6, -1.4, 0.4, 0.2;  // row1 = 2 * row0
  Matrix out(2, 3);
  out << 1, 0, 0, 0, 1, 0;
  const Network net = two_layer(hidden, ActivationKind::Relu, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].kind == MergeKind::ReluDirectional);
  CHECK(cands[0].alpha == 2.0);
  CHECK(cands[0].distance == 0.0);
}

TEST_CASE("incoming rule wins when both rules match", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 0.2, 0.4, -0.1, 0.2, 0.4, -0.1;
  Matrix out(2, 3);
  out << 1, 1, 0, 2, 2, 0;  // outgoing columns identical too
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].kind == MergeKind::SigmoidIncoming);
}

TEST_CASE("proportional outgoing columns are caught with least-squares alpha", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 5, 0, 0, 0, 5, 0;  // incoming far apart
  Matrix out(2, 3);
  out << 1.0, 2.0, 0.0, 0.5, 1.0, 0.0;  // w1 = 2 * w0
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].kind == MergeKind::SigmoidOutgoing);
  CHECK(cands[0].alpha == Approx(2.0));
  CHECK(cands[0].distance == Approx(0.0).margin(1e-15));
}

TEST_CASE("alpha near minus one is excluded", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 5, 0, 0, 0, 5, 0;
  Matrix out(2, 3);
  out << 1.0, -1.0, 0.0, 1.0, -1.0, 0.0;  // w1 = -w0 exactly
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  CHECK(detect_candidates(net, 0, 1.75).empty());
}

TEST_CASE("zero-norm vectors make a rule inapplicable", "[apoptosis]") {
  Matrix hidden = Matrix::Zero(2, 3);
  Matrix out(1, 3);
  out << 1.0, 1.0, 0.0;
  const Network sig = two_layer(hidden, ActivationKind::Sigmoid, out);
  // identical all-zero incoming rows, but |v0| = 0 so the incoming rule is
  // off; identical outgoing columns still merge via the outgoing rule
  const auto cands = detect_candidates(sig, 0, 1.75);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].kind == MergeKind::SigmoidOutgoing);

  const Network relu = two_layer(Matrix::Zero(2, 3), ActivationKind::Relu, out);
  CHECK(detect_candidates(relu, 0, 1.75).empty());
}

TEST_CASE("detection contract errors", "[apoptosis]") {
  const Network net = init_network({3, 4, 2}, ActivationKind::Sigmoid, ActivationKind::Sigmoid, 5);
  CHECK_THROWS_AS(detect_candidates(net, 1, 1.75), ContractError);  // output layer
  CHECK_THROWS_AS(detect_candidates(net, -1, 1.75), ContractError);
  CHECK_THROWS_AS(detect_candidates(net, 0, 1.0), ContractError);
}

TEST_CASE("lower factor widens the candidate set", "[apoptosis]") {
  for (std::uint64_t seed : {101u, 102u, 103u, 104u}) {
    const Network sig = init_network({4, 12, 3}, ActivationKind::Sigmoid, ActivationKind::Linear, seed);
    const Network rel = init_network({4, 12, 3}, ActivationKind::Relu, ActivationKind::Linear, seed);
    for (const Network& net : {sig, rel}) {
      auto narrow = candidate_pairs(detect_candidates(net, 0, 2.5));
      auto wide = candidate_pairs(detect_candidates(net, 0, 1.1));
      for (const auto& p : narrow) CHECK(wide.count(p) == 1);
      CHECK(wide.size() >= narrow.size());
    }
  }
}

TEST_CASE("incoming merge adds outgoing weights and keeps the survivor row", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 1, -1, 0.5, 1, -1, 0.5;
  Matrix out(2, 3);
  out << 0.2, 0.1, 0.0, 0.3, -0.3, 0.0;  // columns w0=(0.2,0.3), w1=(0.1,-0.3)
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  const Network merged = merge_pair(net, cands[0]);

  REQUIRE(merged.layers[0].out() == 1);
  CHECK(merged.layers[0].weights(0, 0) == 1.0);
  CHECK(merged.layers[0].weights(0, 1) == -1.0);
  CHECK(merged.layers[0].weights(0, 2) == 0.5);
  CHECK(merged.layers[1].weights(0, 0) == Approx(0.3));
  CHECK(merged.layers[1].weights(1, 0) == Approx(0.0).margin(1e-16));
  CHECK(merged.layers[1].weights.cols() == 2);
}

TEST_CASE("outgoing merge averages incoming vectors by alpha", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 5, 0, 1, 0, 5, -1;
  Matrix out(2, 3);
  out << 1.0, 2.0, 0.0, 0.5, 1.0, 0.0;  // w1 = 2 w0, alpha = 2
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  REQUIRE(cands[0].kind == MergeKind::SigmoidOutgoing);
  const Network merged = merge_pair(net, cands[0]);

  // v <- (alpha * v_removed + v_survivor) / (alpha + 1) = (2*(0,5,-1)+(5,0,1))/3
  CHECK(merged.layers[0].weights(0, 0) == Approx(5.0 / 3.0));
  CHECK(merged.layers[0].weights(0, 1) == Approx(10.0 / 3.0));
  CHECK(merged.layers[0].weights(0, 2) == Approx(-1.0 / 3.0));
  // w <- w0 + w1
  CHECK(merged.layers[1].weights(0, 0) == Approx(3.0));
  CHECK(merged.layers[1].weights(1, 0) == Approx(1.5));
}

TEST_CASE("directional merge scales the absorbed outgoing column", "[apoptosis]") {
  Matrix hidden(2, 3);
  hidden << 0.25, -0.5, 0.125, 0.5, -1.0, 0.25;  // row1 = 2 row0
  Matrix out(2, 3);
  out << 1, 0, 0, 0, 1, 0;  // w0=(1,0), w1=(0,1)
  const Network net = two_layer(hidden, ActivationKind::Relu, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  REQUIRE(cands.size() == 1);
  const Network merged = merge_pair(net, cands[0]);

  CHECK(merged.layers[1].weights(0, 0) == 1.0);
  CHECK(merged.layers[1].weights(1, 0) == 2.0);  // w = w0 + alpha w1 = (1,2)
  CHECK(oracle::max_output_deviation(net, merged, grid(100, 2, 9)) < 1e-12);
}

TEST_CASE("stale candidate indices are rejected", "[apoptosis]") {
  const Network net = init_network({3, 4, 2}, ActivationKind::Sigmoid, ActivationKind::Sigmoid, 6);
  MergeCandidate c;
  c.layer = 0;
  c.survivor = 0;
  c.removed = 7;
  CHECK_THROWS_AS(merge_pair(net, c), ContractError);
  c.removed = 0;
  CHECK_THROWS_AS(merge_pair(net, c), ContractError);  // i == j
  c.layer = 1;
  c.removed = 1;
  CHECK_THROWS_AS(merge_pair(net, c), ContractError);  // output layer
}

TEST_CASE("exact merges leave the network function unchanged", "[apoptosis]") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Network sig = init_network({5, 8, 3}, ActivationKind::Sigmoid, ActivationKind::Linear, seed);
    sig.layers[0].weights.row(3) = sig.layers[0].weights.row(1);
    auto cands = detect_candidates(sig, 0, 1.75);
    const auto it = std::find_if(cands.begin(), cands.end(), [](const MergeCandidate& c) {
      return c.survivor == 1 && c.removed == 3;
    });
    REQUIRE(it != cands.end());
    CHECK(oracle::max_output_deviation(sig, merge_pair(sig, *it), grid(500, 5, seed)) < 1e-12);

    Network rel = init_network({5, 8, 3}, ActivationKind::Relu, ActivationKind::Linear, seed);
    rel.layers[0].weights.row(3) = 0.75 * rel.layers[0].weights.row(1);
    cands = detect_candidates(rel, 0, 1.75);
    const auto rt = std::find_if(cands.begin(), cands.end(), [](const MergeCandidate& c) {
      return c.survivor == 1 && c.removed == 3;
    });
    REQUIRE(rt != cands.end());
    CHECK(oracle::max_output_deviation(rel, merge_pair(rel, *rt), grid(500, 5, seed)) < 1e-12);
  }
}

TEST_CASE("planted duplicates are removed exactly, output intact", "[apoptosis]") {
  for (ActivationKind kind : {ActivationKind::Sigmoid, ActivationKind::Relu}) {
    const auto [teacher, ds] = gen_planted_teacher(4, 8, 3, kind, 100, 424242, 0.0, 8);
    const auto [shrunk, report] = apply_apoptosis(teacher, 1.75);
    INFO((kind == ActivationKind::Sigmoid ? "sigmoid" : "relu"));
    CHECK(report.total_removed() == 3);
    CHECK(shrunk.layers[0].out() == 5);
    CHECK(param_count(teacher) - param_count(shrunk) == report.total_params_removed());
    CHECK(oracle::max_output_deviation(teacher, shrunk, grid(2000, 4, 31)) < 1e-9);
  }
}

TEST_CASE("huge factor removes nothing", "[apoptosis]") {
  const Network net = init_network({6, 10, 10, 4}, ActivationKind::Sigmoid, ActivationKind::Linear, 77);
  const auto [same, report] = apply_apoptosis(net, 1e6);
  CHECK(report.total_removed() == 0);
  CHECK(param_count(same) == param_count(net));
  CHECK(report.per_layer.size() == 2);
}

TEST_CASE("single-neuron layers are left alone", "[apoptosis]") {
  const Network net = init_network({3, 1, 2}, ActivationKind::Sigmoid, ActivationKind::Sigmoid, 8);
  const auto [same, report] = apply_apoptosis(net, 1.1);
  CHECK(report.total_removed() == 0);
  CHECK(same.layers[0].out() == 1);
}

TEST_CASE("a layer is never drained below one neuron", "[apoptosis]") {
  Matrix hidden(3, 3);
  hidden << 1, 2, 0.5, 1, 2, 0.5, 1, 2, 0.5;  // three identical neurons
  Matrix out(1, 4);
  out << 0.1, 0.2, 0.3, 0.0;
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto [shrunk, report] = apply_apoptosis(net, 1.75);
  CHECK(report.total_removed() == 2);
  CHECK(shrunk.layers[0].out() == 1);
  CHECK(oracle::max_output_deviation(net, shrunk, grid(200, 2, 4)) < 1e-12);
}

TEST_CASE("outgoing-merge survivors are frozen for the rest of the event", "[apoptosis]") {
  Matrix hidden(3, 3);
  hidden << 5, 0, 0, 0, 5, 0, 0, 0, 5;  // incoming rule never fires
  Matrix out(4, 4);
  out << 1.0, 1.1, 1.3, 0.0,
         0.0, 0.0, 0.3, 0.0,
         0.0, 0.0, 0.0, 0.0,
         0.0, 0.0, 0.0, 0.0;
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto cands = detect_candidates(net, 0, 1.75);
  // pairs (0,1) exact, (0,2) and (1,2) near: all three are candidates
  REQUIRE(cands.size() == 3);
  const auto [shrunk, report] = apply_apoptosis(net, 1.75);
  // (0,1) fires first at distance 0 and freezes 0, blocking (0,2); (1,2) is
  // dead because 1 was removed
  CHECK(report.total_removed() == 1);
  CHECK(shrunk.layers[0].out() == 2);
  CHECK(shrunk.layers[0].weights(1, 0) == 0.0);  // neuron 2 untouched
  CHECK(shrunk.layers[0].weights(1, 2) == 5.0);
}

TEST_CASE("incoming survivors may absorb repeatedly", "[apoptosis]") {
  Matrix hidden(4, 3);
  hidden << 1, 2, 0, 1, 2, 0, 1, 2, 0, -3, 4, 1;
  Matrix out(2, 5);
  out << 0.1, 0.2, 0.4, -0.5, 0.0, 0.3, -0.1, 0.2, 0.7, 0.0;
  const Network net = two_layer(hidden, ActivationKind::Sigmoid, out);
  const auto [shrunk, report] = apply_apoptosis(net, 1.75);
  CHECK(report.total_removed() == 2);
  REQUIRE(shrunk.layers[0].out() == 2);
  // survivor holds the sum of all three merged outgoing columns
  CHECK(shrunk.layers[1].weights(0, 0) == Approx(0.1 + 0.2 + 0.4));
  CHECK(shrunk.layers[1].weights(1, 0) == Approx(0.3 - 0.1 + 0.2));
  CHECK(oracle::max_output_deviation(net, shrunk, grid(200, 2, 5)) < 1e-12);
}

TEST_CASE("report parameter accounting matches the network exactly", "[apoptosis]") {
  for (std::uint64_t seed : {21u, 22u, 23u, 24u, 25u}) {
    const Network net =
        init_network({6, 14, 12, 9, 4}, ActivationKind::Sigmoid, ActivationKind::Linear, seed);
    const auto [shrunk, report] = apply_apoptosis(net, 1.05);
    CHECK(param_count(net) - param_count(shrunk) == report.total_params_removed());
    CHECK(param_count(shrunk) <= param_count(net));
    CHECK(shrunk.input_dim() == net.input_dim());
    CHECK(shrunk.output_dim() == net.output_dim());
    for (const auto& s : report.per_layer) CHECK(s.removed <= s.candidates);
    CHECK(report.wall_ms >= 0.0);
    CHECK_NOTHROW(shrunk.validate());
  }
}
