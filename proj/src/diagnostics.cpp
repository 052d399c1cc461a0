#include "lmd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

#include "lmd/io.hpp"
#include "lmd/kernels.hpp"

namespace lmd {
namespace k = kernels;

bool holds_with_slack(double lhs, double rhs, double slack) {
  return lhs <= rhs + slack * std::max(std::abs(lhs), std::abs(rhs));
}

bool RegretReport::all_hold() const {
  return std::all_of(holds.begin(), holds.end(), [](bool b) { return b; });
}

bool RelativeBoundReport::all_hold() const {
  return std::all_of(holds.begin(), holds.end(), [](bool b) { return b; });
}

namespace {

std::size_t step_count(const Trace& trace) {
  if (trace.rows() == 0) throw std::invalid_argument("regret check: empty trace");
  return trace.rows() - 1;
}

void close_rows(RegretReport& r) {
  double lhs = 0.0, rhs = r.initial_term;
  for (std::size_t i = 0; i < r.rows(); ++i) {
    lhs += r.lhs_term[i];
    rhs += r.grad_term[i] + r.discrepancy_term[i];
    r.cum_lhs.push_back(lhs);
    r.cum_rhs.push_back(rhs);
    r.holds.push_back(holds_with_slack(lhs, rhs));
  }
}

}  // namespace

RegretReport classical_regret_check(const Trace& trace, const MirrorPotential& p, const Problem& prob,
                                    const Tensor& reference, double sigma, NormKind norm) {
  if (!(sigma > 0.0)) throw std::invalid_argument("classical_regret_check: sigma must be positive");
  const std::size_t steps = step_count(trace);
  const double fstar = objective(prob, reference);
  RegretReport r;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = trace.steps[i];
    const Tensor& x = trace.iterates[i];
    const double gnorm = dual_norm(norm, subgradient(prob, x));
    r.lhs_term.push_back(t * (trace.objectives[i] - fstar));
    r.grad_term.push_back(t * t * gnorm * gnorm / (2.0 * sigma));
    r.discrepancy_term.push_back(bregman(p, reference, x) - bregman(p, reference, trace.iterates[i + 1]));
  }
  close_rows(r);
  return r;
}

RegretReport approx_regret_check(const Trace& trace, const MirrorPotential& p, const Problem& prob,
                                 const Tensor& reference, double mu_f, double sigma, NormKind norm) {
  if (!(sigma > 0.0)) throw std::invalid_argument("approx_regret_check: sigma must be positive");
  if (!(mu_f > 0.0)) throw std::invalid_argument("approx_regret_check: objective must be strongly convex (mu > 0)");
  if (trace.oracle_iterates.size() != trace.rows()) {
    throw std::invalid_argument("approx_regret_check: trace has no oracle iterates");
  }
  const std::size_t steps = step_count(trace);
  const double fstar = objective(prob, reference);
  RegretReport r;
  r.initial_term = bregman(p, reference, trace.iterates[0]);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = trace.steps[i];
    if (!(t > 0.0)) throw std::invalid_argument("approx_regret_check: step size must be positive");
    const Tensor& x = trace.iterates[i];
    const double gnorm = dual_norm(norm, subgradient(prob, x));
    const double disc =
        dual_norm(norm, k::sub(forward_map(p, trace.iterates[i + 1]), forward_map(p, trace.oracle_iterates[i + 1])));
    r.lhs_term.push_back(t * (trace.objectives[i] - fstar));
    r.grad_term.push_back(t * t * gnorm * gnorm / sigma);
    r.discrepancy_term.push_back((1.0 / (2.0 * t * mu_f) + 1.0 / sigma) * disc * disc);
  }
  close_rows(r);
  return r;
}

RelativeBoundReport relative_bound_check(const Trace& trace, const MirrorPair& exact, const Problem& prob,
                                         const Tensor& reference, double L, double mu) {
  if (!(L > mu) || mu < 0.0) throw std::invalid_argument("relative_bound_check: need L > mu >= 0");
  if (exact.backward.kind != BackwardKind::exact) {
    throw std::invalid_argument("relative_bound_check: needs an exact backward map");
  }
  const MirrorPotential& p = exact.forward;
  const std::size_t steps = step_count(trace);
  const double fref = objective(prob, reference);
  RelativeBoundReport r;
  r.L = L;
  r.mu = mu;
  r.initial_bregman = bregman(p, reference, trace.iterates[0]);
  const double ratio = L / (L - mu);
  double weight = 1.0, weight_sum = 0.0, weighted = 0.0, best = INFINITY;
  for (std::size_t i = 1; i <= steps; ++i) {
    const Tensor& prev = trace.iterates[i - 1];
    const Tensor dual = k::sub(forward_map(p, prev), k::scale(1.0 / L, subgradient(prob, prev)));
    const Tensor xi = backward_map(exact.backward, p, dual);
    const Tensor& xt = trace.iterates[i];
    const double term = L * k::inner(k::sub(forward_map(p, xi), forward_map(p, xt)), k::sub(reference, xt)) +
                        k::inner(subgradient(prob, xi), k::sub(xt, xi));
    weight *= ratio;
    weight_sum += weight;
    weighted += weight * term;
    r.m_terms.push_back(term);
    r.weights.push_back(weight);
    r.m_running.push_back(weighted / weight_sum);

    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < r.m_terms.size(); ++j) {
      num += r.weights[j] * r.m_terms[j];
      den += r.weights[j];
    }
    r.m_direct.push_back(num / den);

    best = std::min(best, trace.objectives[i]);
    const double gap = best - fref;
    const double kk = static_cast<double>(i);
    const double weak = (L - mu) / kk * r.initial_bregman + r.m_running.back();
    const double strong = mu > 0.0 ? mu * r.initial_bregman / (std::pow(1.0 + mu / (L - mu), kk) - 1.0) + r.m_running.back()
                                   : weak;
    r.min_gap.push_back(gap);
    r.bound.push_back(strong);
    r.bound_weak.push_back(weak);
    r.holds.push_back(holds_with_slack(gap, strong) && holds_with_slack(strong, weak));
  }
  return r;
}

std::pair<double, double> relative_constants(const Tensor& hessian_f, const Tensor& hessian_psi) {
  const std::size_t n = hessian_f.rows();
  Eigen::MatrixXd a(n, n), b(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = 0.5 * (hessian_f.at(i, j) + hessian_f.at(j, i));
      b(i, j) = 0.5 * (hessian_psi.at(i, j) + hessian_psi.at(j, i));
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::domain_error("relative_constants: reference Hessian not positive definite");
  return {std::max(0.0, es.eigenvalues().minCoeff()), es.eigenvalues().maxCoeff()};
}

FbStats fb_inconsistency(const MirrorPair& pair, const std::vector<Tensor>& points, NormKind norm) {
  FbStats s;
  for (const Tensor& x : points) {
    const double v = fb_residual(pair, x, norm);
    s.values.push_back(v);
    s.mean += v;
    s.max = std::max(s.max, v);
  }
  if (!points.empty()) s.mean /= static_cast<double>(points.size());
  return s;
}

void write_regret_csv(std::ostream& out, const RegretReport& r) {
  out << "k,lhs_term,grad_term,discrepancy_term,cum_lhs,cum_rhs,holds\n";
  for (std::size_t i = 0; i < r.rows(); ++i) {
    out << i + 1 << ',' << io::format_double(r.lhs_term[i]) << ',' << io::format_double(r.grad_term[i]) << ','
        << io::format_double(r.discrepancy_term[i]) << ',' << io::format_double(r.cum_lhs[i]) << ','
        << io::format_double(r.cum_rhs[i]) << ',' << (r.holds[i] ? "true" : "false") << '\n';
  }
}

void write_relative_csv(std::ostream& out, const RelativeBoundReport& r) {
  out << "k,min_gap,m_k,bound,bound_weak,holds\n";
  for (std::size_t i = 0; i < r.min_gap.size(); ++i) {
    out << i + 1 << ',' << io::format_double(r.min_gap[i]) << ',' << io::format_double(r.m_running[i]) << ','
        << io::format_double(r.bound[i]) << ',' << io::format_double(r.bound_weak[i]) << ','
        << (r.holds[i] ? "true" : "false") << '\n';
  }
}

}  // namespace lmd
