#include "lmd/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "lmd/kernels.hpp"

namespace lmd {
namespace k = kernels;

namespace {

constexpr double kLogitEps = 1e-6;

struct IcnnLayout {
  std::size_t layers = 0;
  std::size_t wz_out = 0;
  std::size_t wx_out = 0;
  std::size_t quad = 0;
  std::size_t count = 0;
};

// W0x, b0, then (Wz_i, Wx_i, b_i) per further layer, then wz, wx, [Q].
IcnnLayout icnn_layout(const NetConfig& net) {
  IcnnLayout l;
  l.layers = net.hidden.size();
  if (l.layers == 0) throw std::invalid_argument("icnn needs at least one hidden layer");
  l.wz_out = 2 + 3 * (l.layers - 1);
  l.wx_out = l.wz_out + 1;
  l.quad = l.wx_out + 1;
  l.count = l.quad + (net.quad_rank > 0 ? 1 : 0);
  return l;
}

// (V_i, c_i) per layer, then v, beta, [R].
void require_positive(const Tensor& x, const char* what) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw std::domain_error(std::string(what) + ": entropic potential needs positive coordinates");
  }
}

template <class B>
typename B::Value activate(const B& b, Activation act, double slope, typename B::Value t) {
  if (act == Activation::leaky) return b.leaky_relu(t, slope);
  return b.add(b.scale(slope, t), b.scale(1.0 - slope, b.softplus(t)));
}

template <class B>
typename B::Value activation_slope(const B& b, Activation act, double slope, typename B::Value t) {
  if (act == Activation::leaky) return b.leaky_slope(t, slope);
  const Tensor& tv = b.value(t);
  return b.add(b.constant(Tensor::filled(tv.shape(), slope)), b.scale(1.0 - slope, b.sigmoid(t)));
}

Tensor gaussian(Shape shape, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = sd * nd(rng);
  return t;
}

}  // namespace

PotentialKind parse_potential_kind(std::string_view name) {
  if (name == "euclidean") return PotentialKind::euclidean;
  if (name == "entropic") return PotentialKind::entropic;
  if (name == "quadratic") return PotentialKind::quadratic;
  if (name == "one-layer" || name == "one_layer") return PotentialKind::one_layer;
  if (name == "icnn") return PotentialKind::icnn;
  throw std::invalid_argument("unknown potential kind '" + std::string(name) + "'");
}

std::string_view potential_kind_name(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::euclidean: return "euclidean";
    case PotentialKind::entropic: return "entropic";
    case PotentialKind::quadratic: return "quadratic";
    case PotentialKind::one_layer: return "one-layer";
    case PotentialKind::icnn: return "icnn";
  }
  return "unknown";
}

NormKind parse_norm(std::string_view name) {
  if (name == "l1") return NormKind::l1;
  if (name == "l2") return NormKind::l2;
  throw std::invalid_argument("unknown norm '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
  if (name == "leaky" || name == "leaky-relu") return Activation::leaky;
  if (name == "smooth" || name == "smooth-leaky") return Activation::smooth;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

double primal_norm(NormKind norm, const Tensor& x) { return norm == NormKind::l1 ? k::norm1(x) : k::norm2(x); }
double dual_norm(NormKind norm, const Tensor& y) { return norm == NormKind::l1 ? k::norm_inf(y) : k::norm2(y); }

// ---- backend-generic expressions ----

template <class B>
typename B::Value PotentialExpr<B>::value(V x) const {
  switch (pot.kind) {
    case PotentialKind::euclidean:
      return b.scale(0.5, b.sum(b.square(x)));
    case PotentialKind::entropic:
      return b.sum(b.mul(x, b.log(x)));
    case PotentialKind::quadratic:
      return b.scale(0.5, b.dot(x, b.matvec(params[0], x)));
    case PotentialKind::one_layer: {
      V u = b.matvec(params[0], x);
      V g = b.add(b.scale(pot.alpha, u), b.scale(1.0 - pot.alpha, b.softplus(u)));
      return b.dot(params[1], g);
    }
    case PotentialKind::icnn: {
      const NetConfig& net = pot.net;
      const IcnnLayout l = icnn_layout(net);
      V z = activate(b, net.activation, net.slope, b.add(b.matvec(params[0], x), params[1]));
      for (std::size_t i = 1; i < l.layers; ++i) {
        const std::size_t base = 2 + 3 * (i - 1);
        V pre = b.add(b.add(b.matvec(params[base], z), b.matvec(params[base + 1], x)), params[base + 2]);
        z = activate(b, net.activation, net.slope, pre);
      }
      V out = b.add(b.dot(params[l.wz_out], z), b.dot(params[l.wx_out], x));
      out = b.add(out, b.scale(net.mu, b.sum(b.square(x))));
      if (net.quad_rank > 0) out = b.add(out, b.scale(0.5, b.sum(b.square(b.matvec(params[l.quad], x)))));
      return out;
    }
  }
  throw std::logic_error("potential: unhandled kind");
}

template <class B>
typename B::Value PotentialExpr<B>::gradient(V x) const {
  switch (pot.kind) {
    case PotentialKind::euclidean:
      return x;
    case PotentialKind::entropic:
      return b.add(b.log(x), b.constant(Tensor::filled(b.value(x).shape(), 1.0)));
    case PotentialKind::quadratic: {
      V sym = b.scale(0.5, b.add(params[0], b.transpose(params[0])));
      return b.matvec(sym, x);
    }
    case PotentialKind::one_layer: {
      V at = b.transpose(params[0]);
      V u = b.matvec(params[0], x);
      V lin = b.scale(pot.alpha, b.matvec(at, params[1]));
      V curved = b.scale(1.0 - pot.alpha, b.matvec(at, b.mul(params[1], b.sigmoid(u))));
      return b.add(lin, curved);
    }
    case PotentialKind::icnn: {
      const NetConfig& net = pot.net;
      const IcnnLayout l = icnn_layout(net);
      std::vector<V> pre;
      pre.reserve(l.layers);
      pre.push_back(b.add(b.matvec(params[0], x), params[1]));
      V z = activate(b, net.activation, net.slope, pre.back());
      for (std::size_t i = 1; i < l.layers; ++i) {
        const std::size_t base = 2 + 3 * (i - 1);
        pre.push_back(b.add(b.add(b.matvec(params[base], z), b.matvec(params[base + 1], x)), params[base + 2]));
        if (i + 1 < l.layers) z = activate(b, net.activation, net.slope, pre.back());
      }
      V g = b.add(params[l.wx_out], b.scale(2.0 * net.mu, x));
      if (net.quad_rank > 0) {
        V q = params[l.quad];
        g = b.add(g, b.matvec(b.transpose(q), b.matvec(q, x)));
      }
      V delta = b.mul(params[l.wz_out], activation_slope(b, net.activation, net.slope, pre[l.layers - 1]));
      for (std::size_t i = l.layers - 1; i >= 1; --i) {
        const std::size_t base = 2 + 3 * (i - 1);
        g = b.add(g, b.matvec(b.transpose(params[base + 1]), delta));
        delta = b.mul(b.matvec(b.transpose(params[base]), delta),
                      activation_slope(b, net.activation, net.slope, pre[i - 1]));
      }
      return b.add(g, b.matvec(b.transpose(params[0]), delta));
    }
  }
  throw std::logic_error("potential: unhandled kind");
}

template <class B>
typename B::Value PotentialExpr<B>::inverse(V y) const {
  switch (pot.kind) {
    case PotentialKind::euclidean:
      return y;
    case PotentialKind::entropic:
      return b.softmax(y);
    case PotentialKind::quadratic: {
      V sym = b.scale(0.5, b.add(params[0], b.transpose(params[0])));
      return b.solve(sym, y);
    }
    case PotentialKind::one_layer: {
      // grad Psi(x) = A^T (w . g'(Ax)), g' = alpha + (1 - alpha) sigmoid.
      V w = params[1];
      V shifted = b.sub(b.solve(b.transpose(params[0]), y), b.scale(pot.alpha, w));
      V s = b.div(shifted, b.scale(1.0 - pot.alpha, w));
      s = b.clamp(s, kLogitEps, 1.0 - kLogitEps);
      V ones = b.constant(Tensor::filled(b.value(s).shape(), 1.0));
      V logit = b.sub(b.log(s), b.log(b.sub(ones, s)));
      return b.solve(params[0], logit);
    }
    case PotentialKind::icnn:
      throw std::invalid_argument("icnn potential has no closed-form inverse");
  }
  throw std::logic_error("potential: unhandled kind");
}

template <class B>
typename B::Value BackwardExpr<B>::value(V y) const {
  const NetConfig& net = map.net;
  const std::size_t layers = net.hidden.size();
  V h = y;
  for (std::size_t i = 0; i < layers; ++i) {
    h = activate(b, net.backward_activation, net.slope, b.add(b.matvec(params[2 * i], h), params[2 * i + 1]));
  }
  V out = b.dot(params[2 * layers], h);
  V quad = b.scale_by(params[2 * layers + 1], b.scale(0.5, b.sum(b.square(y))));
  out = b.add(out, b.sum(quad));
  if (net.quad_rank > 0) out = b.sub(out, b.scale(0.5, b.sum(b.square(b.matvec(params[2 * layers + 2], y)))));
  return out;
}

template <class B>
typename B::Value BackwardExpr<B>::gradient(V y) const {
  const NetConfig& net = map.net;
  const std::size_t layers = net.hidden.size();
  std::vector<V> pre;
  pre.reserve(layers);
  V h = y;
  for (std::size_t i = 0; i < layers; ++i) {
    pre.push_back(b.add(b.matvec(params[2 * i], h), params[2 * i + 1]));
    if (i + 1 < layers) h = activate(b, net.backward_activation, net.slope, pre.back());
  }
  V delta = b.mul(params[2 * layers], activation_slope(b, net.backward_activation, net.slope, pre[layers - 1]));
  for (std::size_t i = layers - 1; i >= 1; --i) {
    delta = b.mul(b.matvec(b.transpose(params[2 * i]), delta),
                  activation_slope(b, net.backward_activation, net.slope, pre[i - 1]));
  }
  V g = b.add(b.matvec(b.transpose(params[0]), delta), b.scale_by(params[2 * layers + 1], y));
  if (net.quad_rank > 0) {
    V r = params[2 * layers + 2];
    g = b.sub(g, b.matvec(b.transpose(r), b.matvec(r, y)));
  }
  return g;
}

template struct PotentialExpr<Eager>;
template struct PotentialExpr<Recorder>;
template struct BackwardExpr<Eager>;
template struct BackwardExpr<Recorder>;

// ---- construction ----

MirrorPotential make_euclidean(std::size_t dim) {
  MirrorPotential p;
  p.kind = PotentialKind::euclidean;
  p.dim = dim;
  return p;
}

MirrorPotential make_entropic(std::size_t dim) {
  MirrorPotential p;
  p.kind = PotentialKind::entropic;
  p.dim = dim;
  p.domain = Domain::simplex;
  return p;
}

MirrorPotential make_quadratic(Tensor a) {
  if (a.rank() != 2 || a.rows() != a.cols()) throw std::invalid_argument("quadratic potential needs a square matrix");
  MirrorPotential p;
  p.kind = PotentialKind::quadratic;
  p.dim = a.rows();
  p.params = {std::move(a)};
  return p;
}

MirrorPotential make_one_layer(Tensor a, Tensor w, double alpha) {
  if (a.rank() != 2 || a.rows() != a.cols() || w.size() != a.rows()) {
    throw std::invalid_argument("one-layer potential needs square A and matching w");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("one-layer alpha must lie in (0, 1)");
  MirrorPotential p;
  p.kind = PotentialKind::one_layer;
  p.dim = a.rows();
  p.alpha = alpha;
  p.params = {std::move(a), std::move(w)};
  return p;
}

MirrorPotential init_potential(PotentialKind kind, std::size_t dim, const NetConfig& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  switch (kind) {
    case PotentialKind::euclidean:
      return make_euclidean(dim);
    case PotentialKind::entropic:
      return make_entropic(dim);
    case PotentialKind::quadratic: {
      Tensor a = Tensor::identity(dim);
      std::normal_distribution<double> nd(0.0, std::sqrt(1e-3));
      for (std::size_t i = 0; i < dim; ++i) a.at(i, i) += nd(rng);
      return make_quadratic(std::move(a));
    }
    case PotentialKind::one_layer: {
      Tensor a = k::add(Tensor::identity(dim), gaussian({dim, dim}, std::sqrt(1e-2), rng));
      std::uniform_real_distribution<double> u(0.0, 1.0 / static_cast<double>(dim));
      Tensor w = Tensor::zeros(dim);
      for (double& v : w.data()) v = u(rng);
      return make_one_layer(std::move(a), std::move(w));
    }
    case PotentialKind::icnn: {
      const IcnnLayout l = icnn_layout(net);
      MirrorPotential p;
      p.kind = PotentialKind::icnn;
      p.dim = dim;
      p.net = net;
      const double sd_in = 1.0 / std::sqrt(static_cast<double>(dim));
      p.params.push_back(gaussian({net.hidden[0], dim}, sd_in, rng));
      p.params.push_back(Tensor::zeros(net.hidden[0]));
      for (std::size_t i = 1; i < l.layers; ++i) {
        const double sd_z = 1.0 / std::sqrt(static_cast<double>(net.hidden[i - 1]));
        p.params.push_back(k::abs(gaussian({net.hidden[i], net.hidden[i - 1]}, sd_z, rng)));
        p.params.push_back(gaussian({net.hidden[i], dim}, sd_in, rng));
        p.params.push_back(Tensor::zeros(net.hidden[i]));
      }
      const double sd_out = net.output_scale / std::sqrt(static_cast<double>(net.hidden.back()));
      p.params.push_back(k::abs(gaussian({net.hidden.back()}, sd_out, rng)));
      p.params.push_back(Tensor::zeros(dim));
      if (net.quad_rank > 0) p.params.push_back(gaussian({net.quad_rank, dim}, net.quad_scale * sd_in, rng));
      return p;
    }
  }
  throw std::logic_error("init_potential: unhandled kind");
}

BackwardMap init_backward_network(std::size_t dim, const NetConfig& net, std::uint64_t seed) {
  if (net.hidden.empty()) throw std::invalid_argument("backward network needs at least one hidden layer");
  if (!(net.mu > 0.0)) throw std::invalid_argument("backward network initialisation needs mu > 0");
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  BackwardMap m;
  m.kind = BackwardKind::network;
  m.net = net;
  std::size_t prev = dim;
  for (std::size_t width : net.hidden) {
    m.params.push_back(gaussian({width, prev}, 1.0 / std::sqrt(static_cast<double>(prev)), rng));
    m.params.push_back(Tensor::zeros(width));
    prev = width;
  }
  m.params.push_back(gaussian({prev}, net.output_scale / std::sqrt(static_cast<double>(prev)), rng));
  m.params.push_back(Tensor::scalar(1.0 / (2.0 * net.mu)));
  if (net.quad_rank > 0) {
    m.params.push_back(gaussian({net.quad_rank, dim}, net.quad_scale / std::sqrt(static_cast<double>(dim)), rng));
  }
  return m;
}

MirrorPair exact_pair(MirrorPotential forward) {
  if (forward.kind == PotentialKind::icnn) throw std::invalid_argument("icnn potential has no exact backward map");
  MirrorPair pair;
  pair.forward = std::move(forward);
  pair.backward.kind = BackwardKind::exact;
  return pair;
}

double certified_sigma(const MirrorPotential& p, NormKind norm) {
  const double d = static_cast<double>(p.dim);
  // An l2 modulus m gives m/d in l1 because |x|_1^2 <= d |x|_2^2.
  const double to_l1 = norm == NormKind::l1 ? 1.0 / d : 1.0;
  switch (p.kind) {
    case PotentialKind::euclidean:
      return to_l1;
    case PotentialKind::entropic:
      return 1.0;  // Pinsker on the simplex, l1; in l2 |x|_1 >= |x|_2 keeps 1
    case PotentialKind::quadratic: {
      const Tensor& a = p.params[0];
      Eigen::MatrixXd s(p.dim, p.dim);
      for (std::size_t i = 0; i < p.dim; ++i) {
        for (std::size_t j = 0; j < p.dim; ++j) s(i, j) = 0.5 * (a.at(i, j) + a.at(j, i));
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
      return std::max(0.0, es.eigenvalues().minCoeff()) * to_l1;
    }
    case PotentialKind::one_layer:
      return 0.0;
    case PotentialKind::icnn:
      return 2.0 * p.net.mu * to_l1;
  }
  return 0.0;
}

// ---- eager entry points ----

namespace {

void check_dim(const MirrorPotential& p, const Tensor& x) {
  if (p.dim != 0 && x.size() != p.dim) {
    throw std::invalid_argument("potential " + std::string(potential_kind_name(p.kind)) + ": expected dimension " +
                                std::to_string(p.dim) + ", got " + std::to_string(x.size()));
  }
  if (p.kind == PotentialKind::entropic) require_positive(x, "potential");
}

PotentialExpr<Eager> eager_potential(const MirrorPotential& p) {
  Eager e;
  return PotentialExpr<Eager>{e, p, bind_params(e, p.params)};
}

}  // namespace

double potential_value(const MirrorPotential& p, const Tensor& x) {
  check_dim(p, x);
  return eager_potential(p).value(x).item();
}

Tensor forward_map(const MirrorPotential& p, const Tensor& x) {
  check_dim(p, x);
  return eager_potential(p).gradient(x);
}

Tensor backward_map(const BackwardMap& bm, const MirrorPotential& p, const Tensor& y) {
  if (bm.kind == BackwardKind::exact) return eager_potential(p).inverse(y);
  Eager e;
  return BackwardExpr<Eager>{e, bm, bind_params(e, bm.params)}.gradient(y);
}

double bregman(const MirrorPotential& p, const Tensor& x, const Tensor& y) {
  check_dim(p, x);
  check_dim(p, y);
  if (x == y) return 0.0;
  const auto expr = eager_potential(p);
  return expr.value(x).item() - expr.value(y).item() - k::inner(expr.gradient(y), k::sub(x, y));
}

Tensor exact_inverse_oracle(const MirrorPotential& p, const Tensor& y, const OracleOptions& opt) {
  if (p.kind != PotentialKind::entropic && certified_sigma(p, NormKind::l2) <= 0.0) {
    throw std::invalid_argument("exact_inverse_oracle needs a strongly convex potential");
  }
  const auto expr = eager_potential(p);
  auto phi = [&](const Tensor& x) { return expr.value(x).item() - k::inner(y, x); };

  // Barzilai-Borwein gradient steps on Psi(x) - <y, x>, safeguarded by
  // backtracking; the entropic domain is kept by rejecting non-positive trials.
  Tensor x = p.kind == PotentialKind::entropic ? Tensor::filled({p.dim}, 1.0 / static_cast<double>(p.dim))
                                               : Tensor::zeros(p.dim);
  if (p.kind != PotentialKind::entropic) {
    // Start from the inverse of the explicit quadratic part when there is one.
    if (p.kind == PotentialKind::icnn) x = k::scale(1.0 / (2.0 * p.net.mu), y);
  }
  Tensor g = k::sub(expr.gradient(x), y);
  double fx = phi(x);
  double step = 1.0;
  if (p.kind == PotentialKind::icnn) step = 1.0 / (2.0 * p.net.mu);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    if (k::norm_inf(g) <= opt.tol) return x;
    double t = step;
    Tensor trial;
    double ft = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 200; ++bt) {
      trial = k::sub(x, k::scale(t, g));
      bool inside = true;
      if (p.kind == PotentialKind::entropic) {
        for (double v : trial.values()) inside = inside && v > 0.0;
      }
      if (inside) {
        ft = phi(trial);
        if (std::isfinite(ft) && ft <= fx - 1e-4 * t * k::inner(g, g)) {
          accepted = true;
          break;
        }
        // Near the solution phi stalls at rounding level while the gradient
        // still shrinks; accept steps that reduce the residual instead.
        if (std::isfinite(ft) && std::abs(ft - fx) <= 1e-12 * std::max(1.0, std::abs(fx))) {
          Tensor gt = k::sub(expr.gradient(trial), y);
          if (k::norm_inf(gt) < k::norm_inf(g)) {
            accepted = true;
            break;
          }
        }
      }
      t *= opt.backtrack;
    }
    if (!accepted) break;
    Tensor gn = k::sub(expr.gradient(trial), y);
    const Tensor s = k::sub(trial, x);
    const Tensor dg = k::sub(gn, g);
    const double sy = k::inner(s, dg);
    step = sy > 0.0 ? k::inner(s, s) / sy : t * 2.0;
    x = std::move(trial);
    g = std::move(gn);
    fx = ft;
  }
  if (k::norm_inf(g) <= opt.tol) return x;
  throw std::runtime_error("exact_inverse_oracle: residual " + std::to_string(k::norm_inf(g)) +
                           " above tolerance after " + std::to_string(opt.max_iterations) + " iterations");
}

std::vector<bool> icnn_clipped_mask(const MirrorPotential& p) {
  std::vector<bool> mask(p.params.size(), false);
  if (p.kind != PotentialKind::icnn) return mask;
  const IcnnLayout l = icnn_layout(p.net);
  for (std::size_t i = 1; i < l.layers; ++i) mask[2 + 3 * (i - 1)] = true;
  mask[l.wz_out] = true;
  return mask;
}

void clip_icnn_weights_inplace(MirrorPotential& p) {
  if (p.kind != PotentialKind::icnn) throw std::invalid_argument("clip_icnn_weights: potential is not an icnn");
  const auto mask = icnn_clipped_mask(p);
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    if (!mask[i]) continue;
    for (double& v : p.params[i].data()) v = std::max(v, 0.0);
  }
}

MirrorPotential clip_icnn_weights(MirrorPotential p) {
  clip_icnn_weights_inplace(p);
  return p;
}

double fb_residual(const MirrorPair& pair, const Tensor& x, NormKind norm) {
  const Tensor back = backward_map(pair.backward, pair.forward, forward_map(pair.forward, x));
  return primal_norm(norm, k::sub(back, x));
}

}  // namespace lmd
