#pragma once

#include "lmd/tensor.hpp"

// Tape-free numerical kernels. The autodiff tape computes every primal
// through these same functions, so eager and recorded evaluations agree
// bit for bit when the operation order matches.
namespace lmd::kernels {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(double c, const Tensor& a);
/// s is a scalar tensor.
Tensor scale_by(const Tensor& s, const Tensor& a);

Tensor matvec(const Tensor& m, const Tensor& v);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(1 + e^t), evaluated without overflow.
Tensor softplus(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
/// Derivative of leaky_relu: 1 where t >= 0, slope elsewhere.
Tensor leaky_slope(const Tensor& a, double slope);
/// max(t, 0).
Tensor relu(const Tensor& a);
/// 1 where t >= 0, else 0 (derivative of relu with the right-branch convention).
Tensor step(const Tensor& a);
/// sign with sign(0) = 0.
Tensor sign(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
/// Vector -> scalar, matrix -> per-row vector. Max-shifted.
Tensor logsumexp(const Tensor& a);
/// Vector or per-row softmax. Max-shifted.
Tensor softmax(const Tensor& a);
/// Solves a x = b for square a via partial-pivot LU; throws on singular a.
Tensor solve(const Tensor& a, const Tensor& b);

double norm1(const Tensor& a);
double norm2(const Tensor& a);
double norm_inf(const Tensor& a);
double inner(const Tensor& a, const Tensor& b);

}  // namespace lmd::kernels
