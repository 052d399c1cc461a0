#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "lmd/tensor.hpp"

namespace lmd::ad {

using NodeId = std::size_t;

enum class OpKind : std::uint8_t {
  variable,
  constant,
  add,
  subtract,
  scale,     // constant factor in attr0
  scale_by,  // scalar node times tensor node
  multiply,
  divide,
  matvec,
  matmul,
  transpose,
  reshape,
  exp,
  log,
  square,
  abs,
  sigmoid,
  softplus,
  leaky_relu,   // slope in attr0
  leaky_slope,  // derivative mask of leaky_relu; treated as locally constant
  relu,         // max-with-zero
  step,         // derivative mask of relu; locally constant
  sign,         // sign(0) = 0; locally constant
  clamp,        // [attr0, attr1]
  sum,
  dot,
  logsumexp,
  softmax,
  solve,
};

std::string_view op_name(OpKind op);

class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  const Tensor& operator[](NodeId id) const { return grads_.at(id); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Append-only reverse-mode record. Node ids increase from inputs to
/// outputs, so the reverse pass is a single sweep over the node list.
/// A tape is single-threaded; independent tapes share nothing.
class Tape {
 public:
  NodeId variable(Tensor value);
  NodeId constant(Tensor value);

  /// Records an operation and computes its primal. Throws
  /// std::invalid_argument when input shapes violate the op contract.
  NodeId record(OpKind op, std::initializer_list<NodeId> inputs, double attr0 = 0.0,
                double attr1 = 0.0);
  NodeId reshape(NodeId input, Shape shape);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of a scalar root with respect to every node. Nodes the root
  /// does not depend on (or that carry no variable) get zeros.
  Gradients backward(NodeId root) const;

 private:
  struct Node {
    OpKind op;
    std::uint8_t arity = 0;
    bool needs_grad = false;
    std::array<NodeId, 2> in{};
    double attr0 = 0.0;
    double attr1 = 0.0;
    Tensor value;
  };

  NodeId push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace lmd::ad
