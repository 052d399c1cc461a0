#pragma once

#include "lmd/kernels.hpp"
#include "lmd/tape.hpp"
#include "lmd/tensor.hpp"

// Two interchangeable evaluation backends with the same member names, so
// potentials and objectives are written once as templates:
//   Eager    - Value = Tensor, computes directly through the kernels
//   Recorder - Value = NodeId, records onto a Tape
namespace lmd {

struct Eager {
  using Value = Tensor;

  Value constant(const Tensor& t) const { return t; }
  const Tensor& value(const Value& v) const { return v; }

  Value add(const Value& a, const Value& b) const { return kernels::add(a, b); }
  Value sub(const Value& a, const Value& b) const { return kernels::sub(a, b); }
  Value mul(const Value& a, const Value& b) const { return kernels::mul(a, b); }
  Value div(const Value& a, const Value& b) const { return kernels::div(a, b); }
  Value scale(double c, const Value& a) const { return kernels::scale(c, a); }
  Value scale_by(const Value& s, const Value& a) const { return kernels::scale_by(s, a); }
  Value matvec(const Value& m, const Value& v) const { return kernels::matvec(m, v); }
  Value matmul(const Value& a, const Value& b) const { return kernels::matmul(a, b); }
  Value transpose(const Value& a) const { return kernels::transpose(a); }
  Value reshape(const Value& a, const Shape& s) const { return kernels::reshape(a, s); }
  Value exp(const Value& a) const { return kernels::exp(a); }
  Value log(const Value& a) const { return kernels::log(a); }
  Value square(const Value& a) const { return kernels::square(a); }
  Value abs(const Value& a) const { return kernels::abs(a); }
  Value sigmoid(const Value& a) const { return kernels::sigmoid(a); }
  Value softplus(const Value& a) const { return kernels::softplus(a); }
  Value leaky_relu(const Value& a, double slope) const { return kernels::leaky_relu(a, slope); }
  Value leaky_slope(const Value& a, double slope) const { return kernels::leaky_slope(a, slope); }
  Value relu(const Value& a) const { return kernels::relu(a); }
  Value step(const Value& a) const { return kernels::step(a); }
  Value sign(const Value& a) const { return kernels::sign(a); }
  Value clamp(const Value& a, double lo, double hi) const { return kernels::clamp(a, lo, hi); }
  Value sum(const Value& a) const { return kernels::sum(a); }
  Value dot(const Value& a, const Value& b) const { return kernels::dot(a, b); }
  Value logsumexp(const Value& a) const { return kernels::logsumexp(a); }
  Value softmax(const Value& a) const { return kernels::softmax(a); }
  Value solve(const Value& a, const Value& b) const { return kernels::solve(a, b); }
};

struct Recorder {
  using Value = ad::NodeId;
  using Op = ad::OpKind;

  ad::Tape* tape;

  explicit Recorder(ad::Tape& t) : tape(&t) {}

  Value constant(const Tensor& t) const { return tape->constant(t); }
  const Tensor& value(Value v) const { return tape->value(v); }

  Value add(Value a, Value b) const { return tape->record(Op::add, {a, b}); }
  Value sub(Value a, Value b) const { return tape->record(Op::subtract, {a, b}); }
  Value mul(Value a, Value b) const { return tape->record(Op::multiply, {a, b}); }
  Value div(Value a, Value b) const { return tape->record(Op::divide, {a, b}); }
  Value scale(double c, Value a) const { return tape->record(Op::scale, {a}, c); }
  Value scale_by(Value s, Value a) const { return tape->record(Op::scale_by, {s, a}); }
  Value matvec(Value m, Value v) const { return tape->record(Op::matvec, {m, v}); }
  Value matmul(Value a, Value b) const { return tape->record(Op::matmul, {a, b}); }
  Value transpose(Value a) const { return tape->record(Op::transpose, {a}); }
  Value reshape(Value a, const Shape& s) const { return tape->reshape(a, s); }
  Value exp(Value a) const { return tape->record(Op::exp, {a}); }
  Value log(Value a) const { return tape->record(Op::log, {a}); }
  Value square(Value a) const { return tape->record(Op::square, {a}); }
  Value abs(Value a) const { return tape->record(Op::abs, {a}); }
  Value sigmoid(Value a) const { return tape->record(Op::sigmoid, {a}); }
  Value softplus(Value a) const { return tape->record(Op::softplus, {a}); }
  Value leaky_relu(Value a, double slope) const { return tape->record(Op::leaky_relu, {a}, slope); }
  Value leaky_slope(Value a, double slope) const { return tape->record(Op::leaky_slope, {a}, slope); }
  Value relu(Value a) const { return tape->record(Op::relu, {a}); }
  Value step(Value a) const { return tape->record(Op::step, {a}); }
  Value sign(Value a) const { return tape->record(Op::sign, {a}); }
  Value clamp(Value a, double lo, double hi) const { return tape->record(Op::clamp, {a}, lo, hi); }
  Value sum(Value a) const { return tape->record(Op::sum, {a}); }
  Value dot(Value a, Value b) const { return tape->record(Op::dot, {a, b}); }
  Value logsumexp(Value a) const { return tape->record(Op::logsumexp, {a}); }
  Value softmax(Value a) const { return tape->record(Op::softmax, {a}); }
  Value solve(Value a, Value b) const { return tape->record(Op::solve, {a, b}); }
};

}  // namespace lmd
