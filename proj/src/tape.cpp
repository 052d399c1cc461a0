#include "lmd/tape.hpp"

#include <stdexcept>
#include <string>
#include <utility>

#include "lmd/kernels.hpp"

namespace lmd::ad {
namespace k = lmd::kernels;

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::variable: return "variable";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::scale: return "scale";
    case OpKind::scale_by: return "scale_by";
    case OpKind::multiply: return "multiply";
    case OpKind::divide: return "divide";
    case OpKind::matvec: return "matvec";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::abs: return "abs";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::leaky_slope: return "leaky_slope";
    case OpKind::relu: return "relu";
    case OpKind::step: return "step";
    case OpKind::sign: return "sign";
    case OpKind::clamp: return "clamp";
    case OpKind::sum: return "sum";
    case OpKind::dot: return "dot";
    case OpKind::logsumexp: return "logsumexp";
    case OpKind::softmax: return "softmax";
    case OpKind::solve: return "solve";
  }
  return "unknown";
}

namespace {

int arity_of(OpKind op) {
  switch (op) {
    case OpKind::variable:
    case OpKind::constant:
      return 0;
    case OpKind::add:
    case OpKind::subtract:
    case OpKind::scale_by:
    case OpKind::multiply:
    case OpKind::divide:
    case OpKind::matvec:
    case OpKind::matmul:
    case OpKind::dot:
    case OpKind::solve:
      return 2;
    default:
      return 1;
  }
}

bool locally_constant(OpKind op) {
  return op == OpKind::leaky_slope || op == OpKind::step || op == OpKind::sign;
}

void accumulate(Tensor& into, const Tensor& g) {
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void accumulate_scaled(Tensor& into, double c, const Tensor& g) {
  auto dst = into.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

}  // namespace

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::variable(Tensor value) {
  Node n{OpKind::variable};
  n.needs_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value) {
  Node n{OpKind::constant};
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId input, Shape shape) {
  const Node& a = nodes_.at(input);
  Node n{OpKind::reshape};
  n.arity = 1;
  n.in[0] = input;
  n.needs_grad = a.needs_grad;
  n.value = k::reshape(a.value, shape);
  return push(std::move(n));
}

NodeId Tape::record(OpKind op, std::initializer_list<NodeId> inputs, double attr0, double attr1) {
  const int arity = arity_of(op);
  if (arity == 0 || op == OpKind::reshape) {
    throw std::invalid_argument("tape: " + std::string(op_name(op)) + " cannot be recorded directly");
  }
  if (static_cast<int>(inputs.size()) != arity) {
    throw std::invalid_argument("tape: " + std::string(op_name(op)) + " takes " +
                                std::to_string(arity) + " inputs");
  }
  Node n{op};
  n.arity = static_cast<std::uint8_t>(arity);
  n.attr0 = attr0;
  n.attr1 = attr1;
  std::size_t i = 0;
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) throw std::out_of_range("tape: input node " + std::to_string(id) + " not on tape");
    n.in[i++] = id;
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  if (locally_constant(op)) n.needs_grad = false;

  const Tensor& a = nodes_[n.in[0]].value;
  const Tensor& b = arity == 2 ? nodes_[n.in[1]].value : a;
  switch (op) {
    case OpKind::add: n.value = k::add(a, b); break;
    case OpKind::subtract: n.value = k::sub(a, b); break;
    case OpKind::scale: n.value = k::scale(attr0, a); break;
    case OpKind::scale_by: n.value = k::scale_by(a, b); break;
    case OpKind::multiply: n.value = k::mul(a, b); break;
    case OpKind::divide: n.value = k::div(a, b); break;
    case OpKind::matvec: n.value = k::matvec(a, b); break;
    case OpKind::matmul: n.value = k::matmul(a, b); break;
    case OpKind::transpose: n.value = k::transpose(a); break;
    case OpKind::exp: n.value = k::exp(a); break;
    case OpKind::log: n.value = k::log(a); break;
    case OpKind::square: n.value = k::square(a); break;
    case OpKind::abs: n.value = k::abs(a); break;
    case OpKind::sigmoid: n.value = k::sigmoid(a); break;
    case OpKind::softplus: n.value = k::softplus(a); break;
    case OpKind::leaky_relu: n.value = k::leaky_relu(a, attr0); break;
    case OpKind::leaky_slope: n.value = k::leaky_slope(a, attr0); break;
    case OpKind::relu: n.value = k::relu(a); break;
    case OpKind::step: n.value = k::step(a); break;
    case OpKind::sign: n.value = k::sign(a); break;
    case OpKind::clamp: n.value = k::clamp(a, attr0, attr1); break;
    case OpKind::sum: n.value = k::sum(a); break;
    case OpKind::dot: n.value = k::dot(a, b); break;
    case OpKind::logsumexp: n.value = k::logsumexp(a); break;
    case OpKind::softmax: n.value = k::softmax(a); break;
    case OpKind::solve: n.value = k::solve(a, b); break;
    default: throw std::logic_error("tape: unhandled op");
  }
  return push(std::move(n));
}

Gradients Tape::backward(NodeId root) const {
  if (root >= nodes_.size()) throw std::out_of_range("backward: root not on tape");
  if (nodes_[root].value.rank() != 0) {
    throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                shape_string(nodes_[root].value.shape()));
  }
  std::vector<Tensor> grads;
  grads.reserve(nodes_.size());
  for (const Node& n : nodes_) grads.emplace_back(n.value.shape());
  grads[root][0] = 1.0;

  for (NodeId id = root + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || n.arity == 0) continue;
    const Tensor& g = grads[id];
    const NodeId ia = n.in[0];
    const NodeId ib = n.in[1];
    const Tensor& a = nodes_[ia].value;
    const bool ga = nodes_[ia].needs_grad;
    const bool gb = n.arity == 2 && nodes_[ib].needs_grad;
    switch (n.op) {
      case OpKind::add:
        if (ga) accumulate(grads[ia], g);
        if (gb) accumulate(grads[ib], g);
        break;
      case OpKind::subtract:
        if (ga) accumulate(grads[ia], g);
        if (gb) accumulate_scaled(grads[ib], -1.0, g);
        break;
      case OpKind::scale:
        if (ga) accumulate_scaled(grads[ia], n.attr0, g);
        break;
      case OpKind::scale_by: {
        const Tensor& t = nodes_[ib].value;
        if (ga) grads[ia][0] += k::inner(g, t);
        if (gb) accumulate_scaled(grads[ib], a[0], g);
        break;
      }
      case OpKind::multiply: {
        const Tensor& b = nodes_[ib].value;
        if (ga) accumulate(grads[ia], k::mul(g, b));
        if (gb) accumulate(grads[ib], k::mul(g, a));
        break;
      }
      case OpKind::divide: {
        const Tensor& b = nodes_[ib].value;
        if (ga) accumulate(grads[ia], k::div(g, b));
        if (gb) accumulate_scaled(grads[ib], -1.0, k::div(k::mul(g, n.value), b));
        break;
      }
      case OpKind::matvec: {
        const Tensor& v = nodes_[ib].value;
        if (ga) {
          Tensor& gm = grads[ia];
          const std::size_t cols = v.size();
          for (std::size_t r = 0; r < g.size(); ++r) {
            const double gr = g[r];
            if (gr == 0.0) continue;
            double* row = gm.data().data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) row[c] += gr * v[c];
          }
        }
        if (gb) {
          Tensor& gv = grads[ib];
          const std::size_t cols = v.size();
          for (std::size_t r = 0; r < g.size(); ++r) {
            const double gr = g[r];
            if (gr == 0.0) continue;
            const double* row = a.data().data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gv[c] += gr * row[c];
          }
        }
        break;
      }
      case OpKind::matmul: {
        const Tensor& b = nodes_[ib].value;
        if (ga) accumulate(grads[ia], k::matmul(g, k::transpose(b)));
        if (gb) accumulate(grads[ib], k::matmul(k::transpose(a), g));
        break;
      }
      case OpKind::transpose:
        if (ga) accumulate(grads[ia], k::transpose(g));
        break;
      case OpKind::reshape:
        if (ga) accumulate(grads[ia], k::reshape(g, a.shape()));
        break;
      case OpKind::exp:
        if (ga) accumulate(grads[ia], k::mul(g, n.value));
        break;
      case OpKind::log:
        if (ga) accumulate(grads[ia], k::div(g, a));
        break;
      case OpKind::square:
        if (ga) accumulate(grads[ia], k::scale(2.0, k::mul(g, a)));
        break;
      case OpKind::abs:
        if (ga) accumulate(grads[ia], k::mul(g, k::sign(a)));
        break;
      case OpKind::sigmoid:
        if (ga) {
          Tensor d(a.shape());
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
          accumulate(grads[ia], d);
        }
        break;
      case OpKind::softplus:
        if (ga) accumulate(grads[ia], k::mul(g, k::sigmoid(a)));
        break;
      case OpKind::leaky_relu:
        if (ga) accumulate(grads[ia], k::mul(g, k::leaky_slope(a, n.attr0)));
        break;
      case OpKind::relu:
        if (ga) accumulate(grads[ia], k::mul(g, k::step(a)));
        break;
      case OpKind::clamp:
        if (ga) {
          Tensor d(a.shape());
          for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = (a[i] >= n.attr0 && a[i] <= n.attr1) ? g[i] : 0.0;
          }
          accumulate(grads[ia], d);
        }
        break;
      case OpKind::sum:
        if (ga) {
          Tensor& d = grads[ia];
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
        }
        break;
      case OpKind::dot: {
        const Tensor& b = nodes_[ib].value;
        if (ga) accumulate_scaled(grads[ia], g[0], b);
        if (gb) accumulate_scaled(grads[ib], g[0], a);
        break;
      }
      case OpKind::logsumexp:
        if (ga) {
          const Tensor s = k::softmax(a);
          Tensor& d = grads[ia];
          const std::size_t cols = a.rank() == 1 ? a.size() : a.cols();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i / cols] * s[i];
        }
        break;
      case OpKind::softmax:
        if (ga) {
          const Tensor& s = n.value;
          Tensor& d = grads[ia];
          const std::size_t cols = a.rank() == 1 ? a.size() : a.cols();
          for (std::size_t r = 0; r * cols < d.size(); ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += s[r * cols + c] * g[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
              d[r * cols + c] += s[r * cols + c] * (g[r * cols + c] - acc);
            }
          }
        }
        break;
      case OpKind::solve: {
        const Tensor& x = n.value;
        const Tensor gbv = k::solve(k::transpose(a), g);
        if (gb) accumulate(grads[ib], gbv);
        if (ga) {
          Tensor& gm = grads[ia];
          const std::size_t dim = x.size();
          for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t c = 0; c < dim; ++c) gm.at(r, c) -= gbv[r] * x[c];
          }
        }
        break;
      }
      default:
        break;
    }
  }
  return Gradients(std::move(grads));
}

}  // namespace lmd::ad
