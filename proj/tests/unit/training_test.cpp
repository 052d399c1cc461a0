#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lmd/kernels.hpp"
#include "lmd/training.hpp"
#include "unrolled_check.hpp"

using namespace lmd;
namespace k = lmd::kernels;

namespace {

Problem half_norm(std::size_t d) {
  Problem p;
  p.kind = ProblemKind::lsq2d;
  p.dim = d;
  p.matrix = k::scale(1.0 / std::sqrt(2.0), Tensor::identity(d));
  p.target = Tensor::zeros(d);
  p.minimizer = Tensor::zeros(d);
  return p;
}

std::vector<BatchItem> lsq_batch(std::size_t n, std::uint64_t seed) {
  const FunctionClass fc = make_function_class(ProblemKind::lsq2d, 0);
  std::vector<BatchItem> b;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    Problem p = sample_instance(fc, seed * 100 + i);
    Tensor x0 = sample_start(p, rng);
    b.push_back({std::move(p), std::move(x0)});
  }
  return b;
}

NetConfig smooth_net() {
  NetConfig net;
  net.hidden = {8, 8};
  net.activation = net.backward_activation = Activation::smooth;
  net.mu = 0.5;
  net.output_scale = 0.1;
  return net;
}

MirrorPair network_pair(std::uint64_t seed) {
  const NetConfig net = smooth_net();
  return {init_potential(PotentialKind::icnn, 2, net, seed), init_backward_network(2, net, seed + 1)};
}

TrainConfig small_config(std::size_t unroll) {
  TrainConfig c;
  c.unroll = unroll;
  c.batch = 4;
  c.epochs = 5;
  c.lr = 1e-3;
  return c;
}

}  // namespace

TEST(TrainConfig, PenaltySchedule) {
  TrainConfig c;
  EXPECT_EQ(c.s_at(0), 1.0);
  EXPECT_EQ(c.s_at(49), 1.0);
  EXPECT_DOUBLE_EQ(c.s_at(50), 1.05);
  EXPECT_DOUBLE_EQ(c.s_at(100), 1.1025);
  c.consistency = false;
  EXPECT_EQ(c.s_at(100), 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.unroll = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.r_weights = {1.0, 2.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.step_init = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(UnrolledLoss, ZeroAtExactMinimizerStep) {
  TrainConfig c = small_config(1);
  TrainState s = init_state(exact_pair(make_euclidean(3)), c);
  s.steps = {1.0};
  const LossValue l = unrolled_loss(s, {{half_norm(3), Tensor::vector({1, -2, 3})}}, c, 0);
  EXPECT_LT(l.total, 1e-28);
}

TEST(UnrolledLoss, MatchesHandRolledGradientDescent) {
  TrainConfig c = small_config(3);
  c.r_weights = {0.5, 1.0, 2.0};
  TrainState s = init_state(exact_pair(make_euclidean(2)), c);
  s.steps = {0.01, 0.02, 0.03};
  const auto batch = lsq_batch(3, 1);
  double expected = 0.0;
  for (const BatchItem& b : batch) {
    Tensor x = b.x0;
    for (std::size_t i = 0; i < 3; ++i) {
      x = k::sub(x, k::scale(s.steps[i], subgradient(b.problem, x)));
      expected += c.r_weights[i] * objective(b.problem, x);
    }
  }
  expected /= 3.0;
  const LossValue l = unrolled_loss(s, batch, c, 0);
  EXPECT_NEAR(l.total, expected, 1e-12 * std::abs(expected));
  EXPECT_EQ(l.consistency_part, 0.0);
}

TEST(UnrolledLoss, PartsResum) {
  TrainConfig c = small_config(3);
  const TrainState s = init_state(network_pair(3), c);
  const LossValue l = unrolled_loss(s, lsq_batch(4, 2), c, 120);
  EXPECT_DOUBLE_EQ(l.s, c.s_at(120));
  EXPECT_GT(l.consistency_part, 0.0);
  EXPECT_NEAR(l.total, l.objective_part + l.s * l.consistency_part, 1e-12 * std::abs(l.total));
  TrainConfig off = c;
  off.consistency = false;
  const LossValue lo = unrolled_loss(s, lsq_batch(4, 2), off, 120);
  EXPECT_EQ(lo.total, lo.objective_part);
}

TEST(UnrolledLoss, ZeroWeightsGiveZeroGradient) {
  TrainConfig c = small_config(3);
  c.r_weights = {0.0, 0.0, 0.0};
  c.consistency = false;
  const TrainState s = init_state(network_pair(4), c);
  const LossValue l = unrolled_loss(s, lsq_batch(2, 3), c, 0);
  for (const Tensor& g : l.gradients)
    for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(UnrolledLoss, StepGradientMatchesFiniteDifferences) {
  TrainConfig c = small_config(4);
  TrainState s = init_state(exact_pair(make_quadratic(Tensor::matrix(2, 2, {1.5, 0.3, 0.3, 0.8}))), c);
  s.steps = {0.02, 0.04, 0.03, 0.05};
  const auto batch = lsq_batch(3, 4);
  const LossValue l = unrolled_loss(s, batch, c, 0);
  ASSERT_EQ(l.gradients.size(), 2u);  // quadratic A, then the steps
  const double h = 1e-6;
  for (std::size_t i = 0; i < 4; ++i) {
    TrainState p = s, m = s;
    p.steps[i] += h;
    m.steps[i] -= h;
    const double fd = (unrolled_loss(p, batch, c, 0, false).total - unrolled_loss(m, batch, c, 0, false).total) / (2 * h);
    EXPECT_NEAR(l.gradients[1][i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(UnrolledLoss, NetworkGradientMatchesDirectionalDifferences) {
  const TrainConfig c = small_config(3);
  const TrainState s = init_state(network_pair(7), c);
  for (double e : check::unrolled_directional_errors(s, lsq_batch(2, 5), c, 60, 20, 11)) EXPECT_LT(e, 1e-4);
}

TEST(UnrolledLoss, QuadraticGradientMatchesDirectionalDifferences) {
  const TrainConfig c = small_config(3);
  const TrainState s = init_state(exact_pair(make_quadratic(Tensor::matrix(2, 2, {1.2, 0.4, 0.1, 0.9}))), c);
  for (double e : check::unrolled_directional_errors(s, lsq_batch(3, 6), c, 0, 20, 12)) EXPECT_LT(e, 1e-4);
}

TEST(Train, NonAdaptiveKeepsStepsFixed) {
  TrainConfig c = small_config(3);
  c.adaptive = false;
  const auto batch = lsq_batch(4, 6);
  const TrainResult r = train(init_state(network_pair(1), c), [&](std::size_t) { return batch; }, c);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.schedule.at(i), c.step_init);
  EXPECT_EQ(r.log.size(), c.epochs);
}

TEST(Train, IcnnWeightsStayClippedAndStepsClamped) {
  TrainConfig c = small_config(3);
  c.lr = 0.05;
  c.epochs = 20;
  const auto batch = lsq_batch(4, 7);
  const TrainResult r = train(init_state(network_pair(2), c), [&](std::size_t) { return batch; }, c);
  const std::vector<bool> mask = icnn_clipped_mask(r.pair.forward);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i])
      for (double v : r.pair.forward.params[i].values()) EXPECT_GE(v, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_GE(r.schedule.at(i), c.clip_lo);
    EXPECT_LE(r.schedule.at(i), c.clip_hi);
  }
}

TEST(Train, LearnedStepsOnHalfNormReachUpperClip) {
  TrainConfig c = small_config(5);
  c.lr = 1e-2;
  c.epochs = 100;
  c.train_maps = false;
  Rng rng(0);
  std::vector<BatchItem> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({half_norm(3), sample_start(half_norm(3), rng)});
  const TrainResult r = train(init_state(exact_pair(make_euclidean(3)), c), [&](std::size_t) { return batch; }, c);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.schedule.at(i), c.clip_hi);
  EXPECT_LT(r.log.back().total, r.log.front().total);
}

TEST(Train, Deterministic) {
  const FunctionClass fc = make_function_class(ProblemKind::lsq2d, 0);
  TrainConfig c = small_config(3);
  c.seed = 9;
  const TrainResult a = train_lmd(fc, network_pair(3), c);
  const TrainResult b = train_lmd(fc, network_pair(3), c);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].total, b.log[i].total);
  for (std::size_t i = 0; i < a.pair.forward.params.size(); ++i)
    EXPECT_EQ(a.pair.forward.params[i].values(), b.pair.forward.params[i].values());
  c.seed = 10;
  const TrainResult d = train_lmd(fc, network_pair(3), c);
  EXPECT_NE(a.log.back().total, d.log.back().total);
}

TEST(Train, AbortsOnPersistentNonFiniteLoss) {
  TrainConfig c = small_config(2);
  c.epochs = 50;
  BatchItem bad{half_norm(2), Tensor::vector({std::nan(""), 0.0})};
  EXPECT_THROW(train(init_state(exact_pair(make_euclidean(2)), c), [&](std::size_t) { return std::vector{bad}; }, c),
               std::runtime_error);
}

TEST(Train, LgdAndAblationConfigs) {
  const FunctionClass fc = make_function_class(ProblemKind::lsq2d, 0);
  TrainConfig c = small_config(3);
  const TrainResult lgd = train_lgd(fc, c);
  EXPECT_EQ(lgd.pair.forward.kind, PotentialKind::euclidean);
  EXPECT_EQ(lgd.pair.backward.kind, BackwardKind::exact);
  const TrainResult ab = ablation_no_consistency(fc, network_pair(5), c);
  for (const LogRow& r : ab.log) {
    EXPECT_EQ(r.s, 0.0);
    EXPECT_EQ(r.total, r.objective_part);
  }
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const MirrorPair pair = network_pair(8);
  const std::vector<double> sched{0.01, 0.02, 0.05};
  std::stringstream ss;
  save_checkpoint(ss, pair, sched);
  MirrorPair loaded = network_pair(99);
  std::vector<double> ls;
  load_checkpoint(ss, loaded, ls);
  EXPECT_EQ(ls, sched);
  for (std::size_t i = 0; i < pair.forward.params.size(); ++i)
    EXPECT_EQ(pair.forward.params[i].values(), loaded.forward.params[i].values());
  for (std::size_t i = 0; i < pair.backward.params.size(); ++i)
    EXPECT_EQ(pair.backward.params[i].values(), loaded.backward.params[i].values());

  std::stringstream again;
  save_checkpoint(again, pair, sched);
  MirrorPair quad = exact_pair(make_quadratic(Tensor::identity(2)));
  EXPECT_THROW(load_checkpoint(again, quad, ls), std::runtime_error);

  NetConfig wide = smooth_net();
  wide.hidden = {16, 8};
  MirrorPair other{init_potential(PotentialKind::icnn, 2, wide, 1), init_backward_network(2, wide, 2)};
  std::stringstream third;
  save_checkpoint(third, pair, sched);
  EXPECT_THROW(load_checkpoint(third, other, ls), std::runtime_error);
}

TEST(TrainLog, Header) {
  std::stringstream ss;
  write_log_csv(ss, {{0, 1.0, 0.5, 0.5, 1.0}});
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "epoch,total_loss,objective_part,consistency_part,s_value");
}
