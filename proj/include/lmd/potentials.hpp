#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "lmd/backend.hpp"
#include "lmd/problems.hpp"
#include "lmd/tensor.hpp"

namespace lmd {

enum class PotentialKind { euclidean, entropic, quadratic, one_layer, icnn };
enum class BackwardKind { exact, network };
enum class NormKind { l1, l2 };
/// leaky: max(t, slope t). smooth: slope t + (1 - slope) log(1 + e^t).
enum class Activation { leaky, smooth };

PotentialKind parse_potential_kind(std::string_view name);
std::string_view potential_kind_name(PotentialKind kind);
NormKind parse_norm(std::string_view name);
Activation parse_activation(std::string_view name);

double primal_norm(NormKind norm, const Tensor& x);
double dual_norm(NormKind norm, const Tensor& y);

/// Shape of the icnn forward potential and of the backward network.
///   forward:  z1 = act(W0x x + b0), z_{i+1} = act(Wz_i z_i + Wx_i x + b_i),
///             M(x) = wz.z_L + wx.x + mu |x|^2 + 0.5 |Q x|^2
///   backward: h1 = act(V0 y + c0), h_{i+1} = act(V_i h_i + c_i),
///             M*(y) = v.h_L + 0.5 beta |y|^2 - 0.5 |R y|^2
/// Q and R exist only when quad_rank > 0.
struct NetConfig {
  std::vector<std::size_t> hidden{64, 64};
  double slope = 0.2;
  Activation activation = Activation::leaky;
  Activation backward_activation = Activation::leaky;
  double mu = 1e-2;
  std::size_t quad_rank = 0;
  double output_scale = 1.0;
  double quad_scale = 0.1;
};

struct MirrorPotential {
  PotentialKind kind = PotentialKind::euclidean;
  std::size_t dim = 0;
  Domain domain = Domain::all;
  std::vector<Tensor> params;
  NetConfig net;
  double alpha = 0.2;  // one-layer activation mix
};

struct BackwardMap {
  BackwardKind kind = BackwardKind::exact;
  std::vector<Tensor> params;
  NetConfig net;
};

struct MirrorPair {
  MirrorPotential forward;
  BackwardMap backward;
  double clip_lo = 1e-3;
  double clip_hi = 1e-1;
};

MirrorPotential make_euclidean(std::size_t dim);
MirrorPotential make_entropic(std::size_t dim);
MirrorPotential make_quadratic(Tensor a);
MirrorPotential make_one_layer(Tensor a, Tensor w, double alpha = 0.2);
/// Initial parameters follow the usual literature choices: quadratic
/// A = I + diag(N(0, 1e-3)), one-layer A = I + N(0, 1e-2), w ~ U(0, 1/d).
MirrorPotential init_potential(PotentialKind kind, std::size_t dim, const NetConfig& net, std::uint64_t seed);
BackwardMap init_backward_network(std::size_t dim, const NetConfig& net, std::uint64_t seed);
MirrorPair exact_pair(MirrorPotential forward);

/// Strong-convexity modulus certified for the potential in the given norm.
double certified_sigma(const MirrorPotential& p, NormKind norm);

double potential_value(const MirrorPotential& p, const Tensor& x);
Tensor forward_map(const MirrorPotential& p, const Tensor& x);
Tensor backward_map(const BackwardMap& b, const MirrorPotential& p, const Tensor& y);
double bregman(const MirrorPotential& p, const Tensor& x, const Tensor& y);

struct OracleOptions {
  double tol = 1e-10;
  std::size_t max_iterations = 10000;
  double backtrack = 0.5;
};
/// Solves forward_map(p, x) = y by minimizing Psi(x) - <y, x>. Throws
/// std::runtime_error when tol is not reached within the iteration cap.
Tensor exact_inverse_oracle(const MirrorPotential& p, const Tensor& y, const OracleOptions& opt = {});

MirrorPotential clip_icnn_weights(MirrorPotential p);
/// Projects Wz entries of an icnn potential onto >= 0 in place.
void clip_icnn_weights_inplace(MirrorPotential& p);
/// True for the parameter indices that clip_icnn_weights touches.
std::vector<bool> icnn_clipped_mask(const MirrorPotential& p);

/// Forward-backward inconsistency |(grad M* o grad M - I)(x)| in the norm.
double fb_residual(const MirrorPair& pair, const Tensor& x, NormKind norm);

// Backend-generic building blocks shared by the eager path and training.
template <class B>
struct PotentialExpr {
  using V = typename B::Value;
  B b;
  const MirrorPotential& pot;
  std::vector<V> params;

  V value(V x) const;
  V gradient(V x) const;
  /// Closed-form inverse for exact kinds.
  V inverse(V y) const;
};

template <class B>
struct BackwardExpr {
  using V = typename B::Value;
  B b;
  const BackwardMap& map;
  std::vector<V> params;

  V value(V y) const;
  V gradient(V y) const;
};

template <class B>
std::vector<typename B::Value> bind_params(const B& b, const std::vector<Tensor>& params) {
  std::vector<typename B::Value> out;
  out.reserve(params.size());
  for (const Tensor& t : params) out.push_back(b.constant(t));
  return out;
}

}  // namespace lmd
