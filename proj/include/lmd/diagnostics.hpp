#pragma once

#include <iosfwd>
#include <vector>

#include "lmd/potentials.hpp"
#include "lmd/problems.hpp"
#include "lmd/solvers.hpp"
#include "lmd/tensor.hpp"

namespace lmd {

/// Default relative slack applied to the larger side of every inequality.
inline constexpr double kBoundSlack = 1e-7;

bool holds_with_slack(double lhs, double rhs, double slack = kBoundSlack);

/// One row per step k = 1..K (the update leaving trace row k-1).
struct RegretReport {
  double initial_term = 0.0;  // B(x*, x~_1); zero in the classical layout
  std::vector<double> lhs_term;
  std::vector<double> grad_term;
  std::vector<double> discrepancy_term;
  std::vector<double> cum_lhs;
  std::vector<double> cum_rhs;
  std::vector<bool> holds;

  bool all_hold() const;
  std::size_t rows() const { return lhs_term.size(); }
};

/// Classical regret bound for exact MD. The discrepancy column carries the
/// telescoping increment B(x*, x_k) - B(x*, x_{k+1}), so cum_rhs re-sums the
/// per-row terms exactly.
RegretReport classical_regret_check(const Trace& trace, const MirrorPotential& p, const Problem& prob,
                                    const Tensor& reference, double sigma, NormKind norm = NormKind::l1);

/// Regret bound for approximate MD. `trace` must carry oracle iterates;
/// `prob` must already include the strong-convexity term mu_f refers to.
RegretReport approx_regret_check(const Trace& trace, const MirrorPotential& p, const Problem& prob,
                                 const Tensor& reference, double mu_f, double sigma, NormKind norm = NormKind::l1);

struct RelativeBoundReport {
  double L = 0.0;
  double mu = 0.0;
  double initial_bregman = 0.0;  // B(x, x~_0)
  std::vector<double> m_terms;   // per i: L<grad Psi(x_i) - grad Psi(x~_i), x - x~_i> + <grad f(x_i), x~_i - x_i>
  std::vector<double> weights;   // (L / (L - mu))^i
  std::vector<double> m_running;
  std::vector<double> m_direct;
  std::vector<double> min_gap;
  std::vector<double> bound;       // mu form (equals the weak form when mu = 0)
  std::vector<double> bound_weak;  // (L - mu)/k B + M_k
  std::vector<bool> holds;

  bool all_hold() const;
};

/// x_i is recomputed as one exact MD step of size 1/L from x~_{i-1}. When the
/// trace itself was produced that way the two coincide bitwise and every
/// M_k term is exactly zero.
RelativeBoundReport relative_bound_check(const Trace& trace, const MirrorPair& exact, const Problem& prob,
                                         const Tensor& reference, double L, double mu);

/// Relative constants (mu, L) of 0.5 x^T Hf x against 0.5 x^T Hpsi x from the
/// generalized eigenvalues of (Hf, Hpsi).
std::pair<double, double> relative_constants(const Tensor& hessian_f, const Tensor& hessian_psi);

struct FbStats {
  std::vector<double> values;
  double mean = 0.0;
  double max = 0.0;
};
FbStats fb_inconsistency(const MirrorPair& pair, const std::vector<Tensor>& points, NormKind norm = NormKind::l1);

void write_regret_csv(std::ostream& out, const RegretReport& report);
void write_relative_csv(std::ostream& out, const RelativeBoundReport& report);

}  // namespace lmd
