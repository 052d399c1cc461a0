#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "lmd/potentials.hpp"
#include "lmd/problems.hpp"
#include "lmd/tensor.hpp"

namespace lmd {

struct StepSchedule {
  enum class Kind { fixed, multiplied, learned };

  Kind kind = Kind::fixed;
  double base = 1e-2;
  double multiplier = 1.0;
  std::vector<double> learned;
  double lo = 1e-3;
  double hi = 1e-1;

  static StepSchedule fixed(double t);
  static StepSchedule multiplied(double base, double multiplier);
  /// Values are clipped into [lo, hi]; iterations past the end reuse the last one.
  static StepSchedule from_learned(std::vector<double> values, double lo, double hi);

  /// Step used for the update x_k -> x_{k+1}, k counted from 0.
  double at(std::size_t k) const;
};

/// Row k holds x~_k and f(x~_k). The per-step columns (step size and dual
/// discrepancy) describe the update leaving row k and are NaN on the last row.
struct Trace {
  std::vector<Tensor> iterates;
  std::vector<double> objectives;
  std::vector<double> steps;
  std::vector<double> fb_inconsistency;
  std::vector<double> dual_discrepancy;
  /// Oracle iterates x_k, aligned with iterates (x_0 = x~_0); empty when off.
  std::vector<Tensor> oracle_iterates;
  bool diverged = false;
  std::size_t diverged_at = 0;

  std::size_t rows() const { return iterates.size(); }
};

Trace md_run(const MirrorPair& pair, const Problem& prob, const Tensor& x0, const StepSchedule& sched,
             std::size_t iterations, NormKind norm = NormKind::l1);

struct ApproxOptions {
  bool oracle = false;
  bool log_fb = true;
  NormKind norm = NormKind::l1;
  OracleOptions oracle_options;
};

Trace approx_md_run(const MirrorPair& pair, const Problem& prob, const Tensor& x0, const StepSchedule& sched,
                    std::size_t iterations, const ApproxOptions& opt = {});
Trace gd_run(const Problem& prob, const Tensor& x0, const StepSchedule& sched, std::size_t iterations);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
Trace adam_run(const Problem& prob, const Tensor& x0, double lr, std::size_t iterations, const AdamOptions& opt = {});

/// Bregman projection onto the simplex. Entropic: y / sum(y) for positive y.
/// Euclidean: the usual sort-based Euclidean projection.
Tensor bregman_project(const MirrorPotential& p, const Tensor& y);

/// Writes `k,objective,step_size,fb_inconsistency,dual_discrepancy`, plus a
/// `train_end` column flagging row `marker` when given.
void write_trace_csv(std::ostream& out, const Trace& trace, std::optional<std::size_t> marker = std::nullopt);

}  // namespace lmd
