#include "lmd/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "lmd/io.hpp"
#include "lmd/kernels.hpp"

namespace lmd {
namespace k = kernels;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDivergence = 1e12;

bool escaped(const Tensor& x) {
  for (double v : x.values()) {
    if (!std::isfinite(v) || std::abs(v) > kDivergence) return true;
  }
  return false;
}

// Appends row (x, f(x)); returns false and marks divergence when x escapes.
bool push_row(Trace& tr, const Problem& prob, Tensor x) {
  double fx = kNaN;
  if (!escaped(x)) fx = objective(prob, x);
  if (!std::isfinite(fx)) {
    tr.diverged = true;
    tr.diverged_at = tr.iterates.size();
    return false;
  }
  tr.iterates.push_back(std::move(x));
  tr.objectives.push_back(fx);
  tr.steps.push_back(kNaN);
  tr.fb_inconsistency.push_back(kNaN);
  tr.dual_discrepancy.push_back(kNaN);
  return true;
}

Tensor project_if_needed(const MirrorPotential& p, const Problem& prob, const Tensor& x) {
  if (prob.domain != Domain::simplex) return x;
  return bregman_project(p, x);
}

}  // namespace

StepSchedule StepSchedule::fixed(double t) {
  if (!(t > 0.0)) throw std::invalid_argument("step size must be positive");
  StepSchedule s;
  s.kind = Kind::fixed;
  s.base = t;
  return s;
}

StepSchedule StepSchedule::multiplied(double base, double multiplier) {
  if (!(base > 0.0) || !(multiplier > 0.0)) throw std::invalid_argument("step size and multiplier must be positive");
  StepSchedule s;
  s.kind = Kind::multiplied;
  s.base = base;
  s.multiplier = multiplier;
  return s;
}

StepSchedule StepSchedule::from_learned(std::vector<double> values, double lo, double hi) {
  if (values.empty()) throw std::invalid_argument("learned schedule needs at least one value");
  if (!(lo > 0.0 && lo < hi)) throw std::invalid_argument("learned schedule needs 0 < lo < hi");
  StepSchedule s;
  s.kind = Kind::learned;
  s.lo = lo;
  s.hi = hi;
  for (double& v : values) v = std::clamp(v, lo, hi);
  s.learned = std::move(values);
  return s;
}

double StepSchedule::at(std::size_t k) const {
  switch (kind) {
    case Kind::fixed: return base;
    case Kind::multiplied: return base * multiplier;
    case Kind::learned: return learned[std::min(k, learned.size() - 1)];
  }
  return base;
}

Tensor bregman_project(const MirrorPotential& p, const Tensor& y) {
  if (p.kind == PotentialKind::entropic) {
    double total = 0.0;
    for (double v : y.values()) {
      if (!(v > 0.0)) throw std::domain_error("bregman_project: non-positive coordinate");
      total += v;
    }
    return k::scale(1.0 / total, y);
  }
  if (p.kind == PotentialKind::euclidean) return project_simplex(y);
  throw std::invalid_argument("bregman_project: unsupported potential " + std::string(potential_kind_name(p.kind)));
}

Trace md_run(const MirrorPair& pair, const Problem& prob, const Tensor& x0, const StepSchedule& sched,
             std::size_t iterations, NormKind norm) {
  if (pair.backward.kind != BackwardKind::exact) throw std::invalid_argument("md_run needs an exact backward map");
  ApproxOptions opt;
  opt.log_fb = false;
  opt.norm = norm;
  return approx_md_run(pair, prob, x0, sched, iterations, opt);
}

Trace approx_md_run(const MirrorPair& pair, const Problem& prob, const Tensor& x0, const StepSchedule& sched,
                    std::size_t iterations, const ApproxOptions& opt) {
  Trace tr;
  const MirrorPotential& pot = pair.forward;
  if (!push_row(tr, prob, x0)) return tr;
  if (opt.oracle) tr.oracle_iterates.push_back(x0);
  for (std::size_t it = 0; it < iterations; ++it) {
    const Tensor& x = tr.iterates.back();
    if (opt.log_fb) tr.fb_inconsistency.back() = fb_residual(pair, x, opt.norm);
    const double t = sched.at(it);
    const Tensor dual = k::sub(forward_map(pot, x), k::scale(t, subgradient(prob, x)));
    Tensor next = backward_map(pair.backward, pot, dual);
    tr.steps.back() = t;
    if (escaped(next) || (pot.kind == PotentialKind::entropic && !(*std::min_element(next.data().begin(), next.data().end()) > 0.0))) {
      tr.diverged = true;
      tr.diverged_at = it + 1;
      break;
    }
    next = project_if_needed(pot, prob, next);
    if (opt.oracle) {
      Tensor exact = pair.backward.kind == BackwardKind::exact ? backward_map(pair.backward, pot, dual)
                                                               : exact_inverse_oracle(pot, dual, opt.oracle_options);
      exact = project_if_needed(pot, prob, exact);
      tr.dual_discrepancy.back() = k::norm_inf(k::sub(forward_map(pot, next), forward_map(pot, exact)));
      tr.oracle_iterates.push_back(std::move(exact));
    }
    if (!push_row(tr, prob, std::move(next))) {
      if (opt.oracle) tr.oracle_iterates.pop_back();
      break;
    }
  }
  if (opt.log_fb && !tr.diverged && !tr.iterates.empty()) {
    tr.fb_inconsistency.back() = fb_residual(pair, tr.iterates.back(), opt.norm);
  }
  return tr;
}

Trace gd_run(const Problem& prob, const Tensor& x0, const StepSchedule& sched, std::size_t iterations) {
  Trace tr;
  const MirrorPotential euclid = make_euclidean(prob.dim);
  if (!push_row(tr, prob, x0)) return tr;
  for (std::size_t it = 0; it < iterations; ++it) {
    const Tensor& x = tr.iterates.back();
    const double t = sched.at(it);
    Tensor next = k::sub(x, k::scale(t, subgradient(prob, x)));
    tr.steps.back() = t;
    if (escaped(next)) {
      tr.diverged = true;
      tr.diverged_at = it + 1;
      break;
    }
    next = project_if_needed(euclid, prob, next);
    if (!push_row(tr, prob, std::move(next))) break;
  }
  return tr;
}

Trace adam_run(const Problem& prob, const Tensor& x0, double lr, std::size_t iterations, const AdamOptions& opt) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam learning rate must be positive");
  Trace tr;
  const MirrorPotential euclid = make_euclidean(prob.dim);
  if (!push_row(tr, prob, x0)) return tr;
  Tensor m(x0.shape()), v(x0.shape());
  double b1 = 1.0, b2 = 1.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const Tensor& x = tr.iterates.back();
    const Tensor g = subgradient(prob, x);
    b1 *= opt.beta1;
    b2 *= opt.beta2;
    Tensor next(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - b1);
      const double vhat = v[i] / (1.0 - b2);
      next[i] = x[i] - lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
    tr.steps.back() = lr;
    if (escaped(next)) {
      tr.diverged = true;
      tr.diverged_at = it + 1;
      break;
    }
    next = project_if_needed(euclid, prob, next);
    if (!push_row(tr, prob, std::move(next))) break;
  }
  return tr;
}

void write_trace_csv(std::ostream& out, const Trace& trace, std::optional<std::size_t> marker) {
  out << "k,objective,step_size,fb_inconsistency,dual_discrepancy";
  if (marker) out << ",train_end";
  out << '\n';
  for (std::size_t r = 0; r < trace.rows(); ++r) {
    out << r << ',' << io::format_double(trace.objectives[r]) << ',' << io::format_double(trace.steps[r]) << ','
        << io::format_double(trace.fb_inconsistency[r]) << ',' << io::format_double(trace.dual_discrepancy[r]);
    if (marker) out << ',' << (r == *marker ? 1 : 0);
    out << '\n';
  }
}

}  // namespace lmd
