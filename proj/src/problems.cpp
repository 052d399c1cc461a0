#include "lmd/problems.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "lmd/io.hpp"
#include "lmd/kernels.hpp"

namespace lmd {
namespace k = kernels;

namespace {

constexpr std::size_t kSvmSamples = 1000;
constexpr std::size_t kClassifierSamples = 2000;
constexpr std::size_t kFeatureDim = 50;
constexpr std::size_t kClassifierClasses = 10;

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor standard_normal(std::size_t n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t = Tensor::zeros(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = nd(rng);
  return t;
}

Tensor uniform_simplex(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> ed(1.0);
  Tensor t = Tensor::zeros(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = ed(rng);
    total += t[i];
  }
  for (std::size_t i = 0; i < n; ++i) t[i] /= total;
  return t;
}

}  // namespace

ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "kl-simplex") return ProblemKind::kl_simplex;
  if (name == "lsq-simplex") return ProblemKind::lsq_simplex;
  if (name == "lsq2d" || name == "lsq-2d") return ProblemKind::lsq2d;
  if (name == "svm" || name == "svm-hinge") return ProblemKind::svm;
  if (name == "classifier" || name == "linear-classifier") return ProblemKind::classifier;
  if (name == "denoise" || name == "tv-denoise") return ProblemKind::denoise;
  if (name == "inpaint" || name == "tv-inpaint") return ProblemKind::inpaint;
  throw std::invalid_argument("unknown problem kind '" + std::string(name) + "'");
}

std::string_view problem_kind_name(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kl_simplex: return "kl-simplex";
    case ProblemKind::lsq_simplex: return "lsq-simplex";
    case ProblemKind::lsq2d: return "lsq2d";
    case ProblemKind::svm: return "svm";
    case ProblemKind::classifier: return "classifier";
    case ProblemKind::denoise: return "denoise";
    case ProblemKind::inpaint: return "inpaint";
  }
  return "unknown";
}

FeatureModel make_feature_model(std::size_t dim, std::size_t classes, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("feature model needs at least two classes");
  Rng rng(mix(seed, 11));
  FeatureModel m{dim, classes, Tensor({classes, dim})};
  for (std::size_t c = 0; c < classes; ++c) {
    Tensor dir = standard_normal(dim, rng);
    const double r = k::norm2(dir);
    for (std::size_t j = 0; j < dim; ++j) m.means.at(c, j) = 4.0 * dir[j] / r;
  }
  return m;
}

FeatureSet draw_features(const FeatureModel& model, std::size_t n, std::uint64_t seed) {
  if (n < model.classes) throw std::invalid_argument("draw_features: n must be at least the class count");
  Rng rng(mix(seed, 12));
  std::normal_distribution<double> nd(0.0, 1.0);
  FeatureSet set{Tensor({n, model.dim}), Tensor::zeros(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % model.classes;
    for (std::size_t j = 0; j < model.dim; ++j) set.features.at(i, j) = model.means.at(c, j) + nd(rng);
    set.labels[i] = model.classes == 2 ? (c == 0 ? 1.0 : -1.0) : static_cast<double>(c);
  }
  return set;
}

FeatureSet synth_features(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  return draw_features(make_feature_model(dim, classes, seed), n, seed);
}

Tensor tv_operator(std::size_t side) {
  const std::size_t d = side * side;
  Tensor D({2 * side * (side - 1), d});
  std::size_t r = 0;
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j + 1 < side; ++j, ++r) {
      D.at(r, i * side + j) = -1.0;
      D.at(r, i * side + j + 1) = 1.0;
    }
  }
  for (std::size_t i = 0; i + 1 < side; ++i) {
    for (std::size_t j = 0; j < side; ++j, ++r) {
      D.at(r, i * side + j) = -1.0;
      D.at(r, (i + 1) * side + j) = 1.0;
    }
  }
  return D;
}

Tensor lsq2d_matrix() { return Tensor::matrix(2, 2, {2.0, 1.0, 1.0, 2.0}); }

Tensor clean_image(std::size_t side, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pos(0, side - 1);
  Tensor img = Tensor::filled({side * side}, 0.5 * u(rng));
  for (int rect = 0; rect < 3; ++rect) {
    std::size_t r0 = pos(rng), r1 = pos(rng), c0 = pos(rng), c1 = pos(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    const double level = u(rng);
    for (std::size_t r = r0; r <= r1; ++r) {
      for (std::size_t c = c0; c <= c1; ++c) img[r * side + c] = level;
    }
  }
  return img;
}

template <class B>
ProblemExpr<B>::ProblemExpr(const B& b, const Problem& p) : b_(b), p_(p) {
  switch (p.kind) {
    case ProblemKind::kl_simplex:
      log_target_ = b_.constant(k::log(p.target));
      break;
    case ProblemKind::lsq_simplex:
      target_ = b_.constant(p.target);
      break;
    case ProblemKind::lsq2d:
      target_ = b_.constant(p.target);
      matrix_ = b_.constant(p.matrix);
      matrix_t_ = b_.constant(k::transpose(p.matrix));
      break;
    case ProblemKind::svm:
      target_ = b_.constant(Tensor::filled({p.matrix.rows()}, 1.0));
      matrix_ = b_.constant(p.matrix);
      matrix_t_ = b_.constant(k::transpose(p.matrix));
      labels_ = b_.constant(p.labels);
      mask_ = b_.constant(p.mask);
      break;
    case ProblemKind::classifier:
      matrix_ = b_.constant(p.matrix);
      labels_ = b_.constant(p.labels);
      break;
    case ProblemKind::inpaint:
      mask_ = b_.constant(p.mask);
      [[fallthrough]];
    case ProblemKind::denoise:
      target_ = b_.constant(p.target);
      tv_ = b_.constant(*p.tv);
      tv_t_ = b_.constant(*p.tv_t);
      break;
  }
}

template <class B>
typename B::Value ProblemExpr<B>::objective(V x) const {
  V f{};
  switch (p_.kind) {
    case ProblemKind::kl_simplex:
      f = b_.sum(b_.mul(x, b_.sub(b_.log(x), log_target_)));
      break;
    case ProblemKind::lsq_simplex:
      f = b_.sum(b_.square(b_.sub(x, target_)));
      break;
    case ProblemKind::lsq2d:
      f = b_.sum(b_.square(b_.sub(b_.matvec(matrix_, x), target_)));
      break;
    case ProblemKind::svm: {
      V slack = b_.sub(target_, b_.mul(labels_, b_.matvec(matrix_, x)));
      f = b_.add(b_.scale(0.5, b_.sum(b_.mul(mask_, b_.square(x)))), b_.scale(p_.C, b_.sum(b_.relu(slack))));
      break;
    }
    case ProblemKind::classifier: {
      V w = b_.reshape(x, {p_.classes, p_.matrix.cols()});
      V scores = b_.matmul(matrix_, b_.transpose(w));
      V total = b_.sub(b_.sum(b_.logsumexp(scores)), b_.sum(b_.mul(labels_, scores)));
      f = b_.scale(1.0 / static_cast<double>(p_.matrix.rows()), total);
      break;
    }
    case ProblemKind::denoise:
    case ProblemKind::inpaint: {
      V r = b_.sub(x, target_);
      if (p_.kind == ProblemKind::inpaint) r = b_.mul(mask_, r);
      f = b_.add(b_.sum(b_.square(r)), b_.scale(p_.lambda, b_.sum(b_.abs(b_.matvec(tv_, x)))));
      break;
    }
  }
  if (p_.strong_convexity > 0.0) f = b_.add(f, b_.scale(0.5 * p_.strong_convexity, b_.sum(b_.square(x))));
  return f;
}

template <class B>
typename B::Value ProblemExpr<B>::gradient(V x) const {
  V g{};
  switch (p_.kind) {
    case ProblemKind::kl_simplex:
      g = b_.sub(b_.log(x), log_target_);
      g = b_.add(g, b_.constant(Tensor::filled(p_.target.shape(), 1.0)));
      break;
    case ProblemKind::lsq_simplex:
      g = b_.scale(2.0, b_.sub(x, target_));
      break;
    case ProblemKind::lsq2d:
      g = b_.scale(2.0, b_.matvec(matrix_t_, b_.sub(b_.matvec(matrix_, x), target_)));
      break;
    case ProblemKind::svm: {
      V slack = b_.sub(target_, b_.mul(labels_, b_.matvec(matrix_, x)));
      V active = b_.mul(labels_, b_.step(slack));
      g = b_.sub(b_.mul(mask_, x), b_.scale(p_.C, b_.matvec(matrix_t_, active)));
      break;
    }
    case ProblemKind::classifier: {
      V w = b_.reshape(x, {p_.classes, p_.matrix.cols()});
      V scores = b_.matmul(matrix_, b_.transpose(w));
      V resid = b_.sub(b_.softmax(scores), labels_);
      V gw = b_.matmul(b_.transpose(resid), matrix_);
      g = b_.reshape(b_.scale(1.0 / static_cast<double>(p_.matrix.rows()), gw), {p_.dim});
      break;
    }
    case ProblemKind::denoise:
    case ProblemKind::inpaint: {
      V r = b_.sub(x, target_);
      if (p_.kind == ProblemKind::inpaint) r = b_.mul(mask_, b_.mul(mask_, r));
      V tv = b_.matvec(tv_t_, b_.sign(b_.matvec(tv_, x)));
      g = b_.add(b_.scale(2.0, r), b_.scale(p_.lambda, tv));
      break;
    }
  }
  if (p_.strong_convexity > 0.0) g = b_.add(g, b_.scale(p_.strong_convexity, x));
  return g;
}

template class ProblemExpr<Eager>;
template class ProblemExpr<Recorder>;

namespace {

void check_domain(const Problem& p, const Tensor& x) {
  if (x.size() != p.dim) {
    throw std::invalid_argument("problem " + std::string(problem_kind_name(p.kind)) + ": expected dimension " +
                                std::to_string(p.dim) + ", got " + std::to_string(x.size()));
  }
}

}  // namespace

double objective(const Problem& p, const Tensor& x) {
  check_domain(p, x);
  if (p.kind == ProblemKind::kl_simplex) {
    bool has_zero = false;
    for (double v : x.values()) {
      if (v < 0.0 || std::isnan(v)) throw std::domain_error("kl objective: negative coordinate");
      has_zero = has_zero || v == 0.0;
    }
    if (has_zero) {
      double f = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) f += x[i] * (std::log(x[i]) - std::log(p.target[i]));
      }
      if (p.strong_convexity > 0.0) f += 0.5 * p.strong_convexity * k::sum(k::square(x)).item();
      return f;
    }
  }
  Eager e;
  return ProblemExpr<Eager>(e, p).objective(x).item();
}

Tensor subgradient(const Problem& p, const Tensor& x) {
  check_domain(p, x);
  if (p.kind == ProblemKind::kl_simplex) {
    // Zero coordinates sit on the boundary where the gradient is unbounded;
    // evaluate at the smallest positive double instead.
    Tensor floored = x;
    for (std::size_t i = 0; i < floored.size(); ++i) {
      if (floored[i] < 0.0 || std::isnan(floored[i])) throw std::domain_error("kl subgradient: negative coordinate");
      floored[i] = std::max(floored[i], std::numeric_limits<double>::min());
    }
    Eager e;
    return ProblemExpr<Eager>(e, p).gradient(floored);
  }
  Eager e;
  return ProblemExpr<Eager>(e, p).gradient(x);
}

std::optional<Tensor> true_minimizer(const Problem& p) { return p.minimizer; }

Problem with_strong_convexity(Problem p, double mu) {
  if (mu < 0.0) throw std::invalid_argument("strong convexity must be non-negative");
  p.strong_convexity += mu;
  if (mu > 0.0 && p.kind != ProblemKind::lsq2d) p.minimizer.reset();
  if (mu > 0.0 && p.kind == ProblemKind::lsq2d) {
    // argmin |Wx-b|^2 + mu/2 |x|^2 solves (2 W^T W + mu I) x = 2 W^T b.
    Tensor h = k::scale(2.0, k::matmul(k::transpose(p.matrix), p.matrix));
    for (std::size_t i = 0; i < p.dim; ++i) h.at(i, i) += p.strong_convexity;
    p.minimizer = k::solve(h, k::scale(2.0, k::matvec(k::transpose(p.matrix), p.target)));
  }
  return p;
}

void finalize_function_class(FunctionClass& fc) {
  switch (fc.kind) {
    case ProblemKind::svm:
      fc.features = make_feature_model(kFeatureDim, 2, fc.seed);
      if (fc.samples == 0) fc.samples = kSvmSamples;
      break;
    case ProblemKind::classifier:
      fc.features = make_feature_model(kFeatureDim, kClassifierClasses, fc.seed);
      if (fc.samples == 0) fc.samples = kClassifierSamples;
      break;
    case ProblemKind::denoise:
    case ProblemKind::inpaint: {
      const std::size_t d = fc.image_side * fc.image_side;
      auto D = std::make_shared<Tensor>(tv_operator(fc.image_side));
      fc.tv_t = std::make_shared<const Tensor>(k::transpose(*D));
      fc.tv = std::move(D);
      fc.mask = Tensor::filled({d}, 1.0);
      if (fc.kind == ProblemKind::inpaint) {
        Rng rng(mix(fc.seed, 21));
        std::vector<std::size_t> idx(d);
        for (std::size_t i = 0; i < d; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto zeros = static_cast<std::size_t>(std::llround(fc.mask_zero_fraction * static_cast<double>(d)));
        for (std::size_t i = 0; i < zeros; ++i) fc.mask[idx[i]] = 0.0;
      }
      break;
    }
    default:
      break;
  }
}

FunctionClass make_function_class(ProblemKind kind, std::uint64_t seed) {
  FunctionClass fc;
  fc.kind = kind;
  fc.seed = seed;
  finalize_function_class(fc);
  return fc;
}

Problem sample_instance(const FunctionClass& fc, std::uint64_t seed) {
  Rng rng(mix(fc.seed ^ mix(seed, 31), static_cast<std::uint64_t>(fc.kind)));
  Problem p;
  p.kind = fc.kind;
  switch (fc.kind) {
    case ProblemKind::kl_simplex:
    case ProblemKind::lsq_simplex:
      p.domain = Domain::simplex;
      p.dim = fc.dim;
      p.target = uniform_simplex(fc.dim, rng);
      p.minimizer = p.target;
      break;
    case ProblemKind::lsq2d: {
      p.dim = 2;
      p.matrix = lsq2d_matrix();
      p.target = standard_normal(2, rng);
      p.minimizer = k::solve(p.matrix, p.target);
      break;
    }
    case ProblemKind::svm: {
      const FeatureSet set = draw_features(fc.features, fc.samples, rng());
      const std::size_t n = set.features.rows(), d = set.features.cols();
      p.dim = d + 1;
      p.C = fc.C;
      p.matrix = Tensor({n, d + 1});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) p.matrix.at(i, j) = set.features.at(i, j);
        p.matrix.at(i, d) = 1.0;
      }
      p.labels = set.labels;
      p.mask = Tensor::filled({d + 1}, 1.0);
      p.mask[d] = 0.0;
      break;
    }
    case ProblemKind::classifier: {
      const FeatureSet set = draw_features(fc.features, fc.samples, rng());
      const std::size_t n = set.features.rows(), c = fc.features.classes;
      p.classes = c;
      p.dim = c * set.features.cols();
      p.matrix = set.features;
      p.labels = Tensor({n, c});
      for (std::size_t i = 0; i < n; ++i) p.labels.at(i, static_cast<std::size_t>(set.labels[i])) = 1.0;
      break;
    }
    case ProblemKind::denoise:
    case ProblemKind::inpaint: {
      const std::size_t d = fc.image_side * fc.image_side;
      p.dim = d;
      p.lambda = fc.lambda;
      p.tv = fc.tv;
      p.tv_t = fc.tv_t;
      Tensor img = clean_image(fc.image_side, rng);
      std::normal_distribution<double> nd(0.0, fc.noise);
      p.target = Tensor::zeros(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double base = fc.kind == ProblemKind::inpaint ? fc.mask[i] * img[i] : img[i];
        p.target[i] = std::clamp(base + nd(rng), 0.0, 1.0);
      }
      if (fc.kind == ProblemKind::inpaint) p.mask = fc.mask;
      break;
    }
  }
  return p;
}

Tensor project_simplex(const Tensor& y) {
  std::vector<double> u(y.values());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  Tensor out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = std::max(y[i] - theta, 0.0);
  return out;
}

Tensor sample_start(const Problem& p, Rng& rng) {
  switch (p.kind) {
    case ProblemKind::kl_simplex:
    case ProblemKind::lsq_simplex:
      return uniform_simplex(p.dim, rng);
    case ProblemKind::denoise:
    case ProblemKind::inpaint:
      return p.target;
    default:
      return standard_normal(p.dim, rng);
  }
}

Tensor reference_point(const Problem& p, const Tensor& x0, std::size_t iterations) {
  if (p.minimizer) return *p.minimizer;
  double t0 = 0.05;
  if (p.kind == ProblemKind::svm) t0 = 1e-4;
  if (p.kind == ProblemKind::classifier) t0 = 0.5;
  Tensor x = x0, best = x0;
  double best_f = objective(p, x0);
  for (std::size_t i = 0; i < iterations; ++i) {
    if (p.domain == Domain::simplex) {
      // Exponentiated gradient keeps the iterates strictly inside the simplex.
      Tensor g = subgradient(p, x);
      const double shift = k::norm_inf(g);
      Tensor w = k::mul(x, k::exp(k::scale(-0.5, k::sub(g, Tensor::filled(g.shape(), shift)))));
      x = k::scale(1.0 / k::sum(w).item(), w);
    } else {
      const double t = t0 / std::sqrt(static_cast<double>(i) + 1.0);
      x = k::sub(x, k::scale(t, subgradient(p, x)));
    }
    const double fx = objective(p, x);
    if (fx < best_f) {
      best_f = fx;
      best = x;
    }
  }
  return best;
}

namespace {

std::vector<std::vector<double>> read_rows(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(io::parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size()) throw std::runtime_error("csv: ragged rows");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_row(std::ostream& out, const double* v, std::size_t n, const double* extra) {
  for (std::size_t i = 0; i < n; ++i) out << (i ? "," : "") << io::format_double(v[i]);
  if (extra) out << ',' << io::format_double(*extra);
  out << '\n';
}

}  // namespace

void write_features_csv(std::ostream& out, const FeatureSet& set) {
  const std::size_t n = set.features.rows(), d = set.features.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double label = set.labels[i];
    write_row(out, set.features.data().data() + i * d, d, &label);
  }
}

FeatureSet read_features_csv(std::istream& in) {
  const auto rows = read_rows(in);
  if (rows.empty() || rows.front().size() < 2) throw std::runtime_error("features csv: no data");
  const std::size_t n = rows.size(), d = rows.front().size() - 1;
  FeatureSet set{Tensor({n, d}), Tensor::zeros(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) set.features.at(i, j) = rows[i][j];
    set.labels[i] = rows[i][d];
  }
  return set;
}

void write_images_csv(std::ostream& out, const std::vector<Tensor>& images) {
  for (const Tensor& img : images) write_row(out, img.data().data(), img.size(), nullptr);
}

std::vector<Tensor> read_images_csv(std::istream& in) {
  std::vector<Tensor> out;
  for (auto& row : read_rows(in)) out.push_back(Tensor::vector(std::move(row)));
  return out;
}

}  // namespace lmd
