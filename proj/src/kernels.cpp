#include "lmd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lmd::kernels {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

template <class F>
Tensor unary(const Tensor& a, F fn) {
  Tensor out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
  return out;
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F fn) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = fn(x[i], y[i]);
  return out;
}

double softplus_scalar(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid_scalar(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "subtract", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "multiply", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(a, b, "divide", [](double x, double y) { return x / y; });
}

Tensor scale(double c, const Tensor& a) {
  return unary(a, [c](double x) { return c * x; });
}

Tensor scale_by(const Tensor& s, const Tensor& a) {
  if (s.size() != 1 || s.rank() != 0) {
    throw std::invalid_argument("scale: factor must be a scalar, got " + shape_string(s.shape()));
  }
  return scale(s[0], a);
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.size()) {
    throw std::invalid_argument("matvec: incompatible shapes " + shape_string(m.shape()) + " x " +
                                shape_string(v.shape()));
  }
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  Tensor out(Shape{rows});
  auto a = m.data();
  auto x = v.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  const std::size_t n = a.rows();
  const std::size_t k = a.cols();
  const std::size_t m = b.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("transpose: needs a matrix, got " + shape_string(a.shape()));
  }
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_size(shape) != a.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(a.shape()) + " as " +
                                shape_string(shape));
  }
  return Tensor(shape, a.values());
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::abs(x); });
}

Tensor sigmoid(const Tensor& a) { return unary(a, sigmoid_scalar); }

Tensor softplus(const Tensor& a) { return unary(a, softplus_scalar); }

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x >= 0 ? x : slope * x; });
}

Tensor leaky_slope(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x >= 0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; });
}

Tensor step(const Tensor& a) {
  return unary(a, [](double x) { return x >= 0 ? 1.0 : 0.0; });
}

Tensor sign(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::scalar(acc);
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return Tensor::scalar(inner(a, b));
}

namespace {

double lse_row(const double* p, std::size_t n) {
  double m = p[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, p[i]);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(p[i] - m);
  return m + std::log(acc);
}

}  // namespace

Tensor logsumexp(const Tensor& a) {
  if (a.rank() == 1 && a.size() > 0) return Tensor::scalar(lse_row(a.data().data(), a.size()));
  if (a.rank() == 2 && a.cols() > 0) {
    Tensor out(Shape{a.rows()});
    for (std::size_t r = 0; r < a.rows(); ++r) out[r] = lse_row(a.data().data() + r * a.cols(), a.cols());
    return out;
  }
  throw std::invalid_argument("logsumexp: needs a nonempty vector or matrix, got " +
                              shape_string(a.shape()));
}

Tensor softmax(const Tensor& a) {
  if (a.rank() != 1 && a.rank() != 2) {
    throw std::invalid_argument("softmax: needs a vector or matrix, got " + shape_string(a.shape()));
  }
  const std::size_t rows = a.rank() == 1 ? 1 : a.rows();
  const std::size_t cols = a.rank() == 1 ? a.size() : a.cols();
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = a.data().data() + r * cols;
    double* dst = out.data().data() + r * cols;
    double m = src[0];
    for (std::size_t i = 1; i < cols; ++i) m = std::max(m, src[i]);
    double acc = 0.0;
    for (std::size_t i = 0; i < cols; ++i) {
      dst[i] = std::exp(src[i] - m);
      acc += dst[i];
    }
    for (std::size_t i = 0; i < cols; ++i) dst[i] /= acc;
  }
  return out;
}

Tensor solve(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.rows() != a.cols() || b.rank() != 1 || b.size() != a.rows()) {
    throw std::invalid_argument("solve: incompatible shapes " + shape_string(a.shape()) + " \\ " +
                                shape_string(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(a.rows());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> am(
      a.data().data(), n, n);
  Eigen::Map<const Eigen::VectorXd> bv(b.data().data(), n);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(am);
  const double det = lu.determinant();
  if (!std::isfinite(det) || det == 0.0 || lu.rcond() < 1e-14) {
    throw std::domain_error("solve: matrix is singular to working precision");
  }
  Eigen::VectorXd x = lu.solve(bv);
  return Tensor::vector(std::vector<double>(x.data(), x.data() + n));
}

double norm1(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += std::abs(v);
  return acc;
}

double norm2(const Tensor& a) { return std::sqrt(inner(a, a)); }

double norm_inf(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double inner(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "inner");
  double acc = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

}  // namespace lmd::kernels
