#include <gtest/gtest.h>

#include <cmath>

#include "lmd/kernels.hpp"
#include "lmd/potentials.hpp"

using namespace lmd;
namespace k = lmd::kernels;

namespace {

Tensor normal(std::size_t n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Tensor t = Tensor::zeros(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = nd(rng);
  return t;
}

Tensor point(const MirrorPotential& p, Rng& rng) {
  if (p.kind == PotentialKind::entropic) {
    Tensor t = k::exp(normal(p.dim, rng));
    return k::scale(1.0 / k::sum(t).item(), t);
  }
  return normal(p.dim, rng);
}

NetConfig small_net(Activation act) {
  NetConfig net;
  net.hidden = {8, 8};
  net.activation = act;
  net.backward_activation = act;
  net.mu = 0.1;
  return net;
}

// icnn with weights pushed off the nonnegative cone, then clipped back.
MirrorPotential perturbed_icnn(std::size_t d, Activation act, std::uint64_t seed) {
  MirrorPotential p = init_potential(PotentialKind::icnn, d, small_net(act), seed);
  Rng rng(seed);
  for (Tensor& t : p.params) t = k::add(t, k::reshape(normal(t.size(), rng, 0.5), t.shape()));
  return clip_icnn_weights(p);
}

std::vector<MirrorPotential> all_kinds(std::size_t d) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0 / static_cast<double>(d));
  Tensor w = Tensor::zeros(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = u(rng) + 0.05;
  return {make_euclidean(d), make_entropic(d), init_potential(PotentialKind::quadratic, d, {}, 2),
          make_one_layer(k::add(Tensor::identity(d), k::reshape(normal(d * d, rng, 0.1), {d, d})), w),
          perturbed_icnn(d, Activation::smooth, 4)};
}

}  // namespace

TEST(Potentials, Names) {
  EXPECT_EQ(parse_potential_kind("one-layer"), PotentialKind::one_layer);
  EXPECT_EQ(potential_kind_name(PotentialKind::icnn), "icnn");
  EXPECT_EQ(parse_norm("l2"), NormKind::l2);
  EXPECT_THROW(parse_activation("tanh"), std::invalid_argument);
}

TEST(Potentials, DualNorms) {
  const Tensor v = Tensor::vector({1.0, -3.0});
  EXPECT_EQ(primal_norm(NormKind::l1, v), 4.0);
  EXPECT_EQ(dual_norm(NormKind::l1, v), 3.0);
  EXPECT_EQ(dual_norm(NormKind::l2, v), std::sqrt(10.0));
}

TEST(Potentials, ExactRoundTrips) {
  Rng rng(1);
  for (const MirrorPotential& p : all_kinds(6)) {
    if (p.kind == PotentialKind::icnn) continue;
    const MirrorPair pair = exact_pair(p);
    for (int i = 0; i < 50; ++i) {
      const Tensor x = point(p, rng);
      EXPECT_LT(fb_residual(pair, x, NormKind::l1), 1e-8) << potential_kind_name(p.kind);
    }
  }
}

TEST(Potentials, EntropicMapsMatchClosedForms) {
  const MirrorPotential p = make_entropic(3);
  const Tensor x = Tensor::vector({0.2, 0.3, 0.5});
  const Tensor g = forward_map(p, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], std::log(x[i]) + 1.0, 1e-15);
  const Tensor back = backward_map(exact_pair(p).backward, p, g);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back[i], x[i], 1e-15);
  EXPECT_THROW(forward_map(p, Tensor::vector({0.5, 0.5, 0.0})), std::domain_error);
}

TEST(Potentials, ThreePointIdentity) {
  Rng rng(7);
  for (const MirrorPotential& p : all_kinds(5)) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Tensor x = point(p, rng), y = point(p, rng), z = point(p, rng);
      const double lhs = bregman(p, x, z) - bregman(p, x, y) - bregman(p, y, z);
      const double rhs = k::inner(k::sub(forward_map(p, y), forward_map(p, z)), k::sub(x, y));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    EXPECT_LT(worst, 1e-10) << potential_kind_name(p.kind);
  }
}

TEST(Potentials, BregmanNonNegativeAndZeroOnDiagonal) {
  Rng rng(8);
  for (const MirrorPotential& p : all_kinds(4)) {
    for (int i = 0; i < 200; ++i) {
      const Tensor x = point(p, rng), y = point(p, rng);
      EXPECT_GE(bregman(p, x, y), -1e-12) << potential_kind_name(p.kind);
      EXPECT_EQ(bregman(p, x, x), 0.0);
    }
  }
}

TEST(Potentials, IcnnConvexAfterClipping) {
  for (Activation act : {Activation::leaky, Activation::smooth}) {
    const MirrorPotential p = perturbed_icnn(6, act, 12);
    Rng rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const Tensor x = normal(6, rng, 2.0), y = normal(6, rng, 2.0);
      const double t = u(rng);
      const double mid = potential_value(p, k::add(k::scale(t, x), k::scale(1 - t, y)));
      EXPECT_LE(mid, t * potential_value(p, x) + (1 - t) * potential_value(p, y) + 1e-9);
    }
  }
}

TEST(Potentials, ClippingTouchesOnlyInterLayerWeights) {
  MirrorPotential p = init_potential(PotentialKind::icnn, 4, small_net(Activation::leaky), 1);
  for (Tensor& t : p.params) t = Tensor::filled(t.shape(), -1.0);
  const MirrorPotential c = clip_icnn_weights(p);
  const auto mask = icnn_clipped_mask(p);
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    for (double v : c.params[i].values()) EXPECT_EQ(v, mask[i] ? 0.0 : -1.0);
  }
  EXPECT_THROW(clip_icnn_weights(make_euclidean(2)), std::invalid_argument);
}

TEST(Potentials, IcnnGradientMatchesFiniteDifferences) {
  const MirrorPotential p = perturbed_icnn(5, Activation::smooth, 21);
  Rng rng(22);
  for (int i = 0; i < 20; ++i) {
    Tensor x = normal(5, rng);
    const Tensor g = forward_map(p, x);
    for (std::size_t j = 0; j < 5; ++j) {
      Tensor up = x, down = x;
      up[j] += 1e-6;
      down[j] -= 1e-6;
      EXPECT_NEAR(g[j], (potential_value(p, up) - potential_value(p, down)) / 2e-6, 1e-6 * (1 + std::abs(g[j])));
    }
  }
}

TEST(Potentials, BackwardNetworkIsGradientField) {
  const NetConfig net = small_net(Activation::smooth);
  const BackwardMap b = init_backward_network(5, net, 3);
  const MirrorPotential p = init_potential(PotentialKind::icnn, 5, net, 3);
  Rng rng(4);
  Eager e;
  const BackwardExpr<Eager> expr{e, b, bind_params(e, b.params)};
  for (int i = 0; i < 20; ++i) {
    const Tensor y = normal(5, rng);
    const Tensor g = backward_map(b, p, y);
    for (std::size_t j = 0; j < 5; ++j) {
      Tensor up = y, down = y;
      up[j] += 1e-6;
      down[j] -= 1e-6;
      const double fd = (expr.value(up).item() - expr.value(down).item()) / 2e-6;
      EXPECT_NEAR(g[j], fd, 1e-6 * (1 + std::abs(fd)));
    }
  }
}

TEST(Potentials, OracleRoundTrip) {
  Rng rng(31);
  for (const MirrorPotential& p : all_kinds(6)) {
    if (p.kind == PotentialKind::one_layer) continue;
    for (int i = 0; i < 20; ++i) {
      const Tensor x = point(p, rng);
      const Tensor y = forward_map(p, x);
      const Tensor back = exact_inverse_oracle(p, y);
      EXPECT_LT(k::norm_inf(k::sub(back, x)), 1e-8) << potential_kind_name(p.kind);
    }
  }
}

TEST(Potentials, CertifiedSigmaPerNorm) {
  EXPECT_EQ(certified_sigma(make_euclidean(4), NormKind::l2), 1.0);
  EXPECT_EQ(certified_sigma(make_euclidean(4), NormKind::l1), 0.25);
  EXPECT_EQ(certified_sigma(make_entropic(4), NormKind::l1), 1.0);
  const MirrorPotential q = make_quadratic(Tensor::matrix(2, 2, {2, 1, 1, 2}));
  EXPECT_NEAR(certified_sigma(q, NormKind::l2), 1.0, 1e-14);
  NetConfig net;
  net.mu = 0.3;
  EXPECT_NEAR(certified_sigma(init_potential(PotentialKind::icnn, 3, net, 0), NormKind::l2), 0.6, 1e-15);
}

TEST(Potentials, QuadraticInitNearIdentity) {
  const MirrorPotential p = init_potential(PotentialKind::quadratic, 3, {}, 5);
  const Tensor& a = p.params[0];
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) EXPECT_NEAR(a.at(i, j), 1.0, 0.15);
      else EXPECT_EQ(a.at(i, j), 0.0);
    }
  }
}
