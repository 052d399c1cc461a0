// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "lmd/cli.hpp"
#include "lmd/diagnostics.hpp"
#include "lmd/kernels.hpp"
#include "lmd/solvers.hpp"
#include "lmd/training.hpp"
#include "unrolled_check.hpp"

using namespace lmd;
namespace k = lmd::kernels;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kEntropicOneStep = 1e-12;
constexpr double kEntropicSixty = 1e-8;
constexpr double kRatioLo = 0.75, kRatioHi = 0.85;
constexpr double kOpGradTol = 1e-5;
constexpr int kOpCases = 100;
constexpr double kUnrolledTol = 1e-4;
constexpr int kUnrolledTrials = 20;
constexpr double kConvexTol = 1e-9;
constexpr double kRoundTripTol = 1e-8;
constexpr double kLgdMargin = 1.05;
constexpr double kMuF = 1e-3;
constexpr std::uint64_t kTestSeedBase = 1ULL << 40;
constexpr std::uint64_t kSeed = 0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Tensor normal(std::size_t n, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Tensor t = Tensor::zeros(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = nd(rng);
  return t;
}

cli::Experiment experiment(const std::string& kind, std::vector<std::string> overrides = {}) {
  Config c;
  c.set("kind", kind);
  for (const std::string& o : overrides) c.set_override(o);
  return cli::resolve(cli::Command::train, c, "unused", kSeed, true);
}

Problem test_instance(const FunctionClass& fc, std::size_t i) { return sample_instance(fc, kTestSeedBase + i); }

Tensor test_start(const Problem& p, std::size_t i) {
  Rng rng(kSeed + 7919 * (i + 1));
  return sample_start(p, rng);
}

NetConfig smooth_net(std::vector<std::size_t> hidden, double mu, double scale) {
  NetConfig net;
  net.hidden = std::move(hidden);
  net.activation = net.backward_activation = Activation::smooth;
  net.mu = mu;
  net.output_scale = scale;
  return net;
}

// Approximate regret check on f + 0.5 mu_f |x|^2 with oracle iterates.
bool regret_holds(const MirrorPair& pair, const Problem& base, const Tensor& x0, const StepSchedule& sched,
                  std::size_t steps) {
  const Problem p = with_strong_convexity(base, kMuF);
  const Tensor ref = reference_point(p, x0);
  ApproxOptions o;
  o.oracle = true;
  const Trace t = approx_md_run(pair, p, x0, sched, steps, o);
  if (t.diverged) return false;
  const double d = static_cast<double>(pair.forward.dim);
  return approx_regret_check(t, pair.forward, p, ref, kMuF / d, certified_sigma(pair.forward, NormKind::l1)).all_hold();
}

struct Trained {
  cli::Experiment e;
  TrainResult lmd, no_consistency, lgd;
  double seconds = 0.0;
};

std::vector<double> objectives_at(const MirrorPair& pair, const StepSchedule& sched, const FunctionClass& fc,
                                  std::size_t k, std::vector<Tensor>* iterates = nullptr) {
  std::vector<double> out;
  for (std::size_t i = 0; i < 10; ++i) {
    const Problem p = test_instance(fc, i);
    const Trace t = approx_md_run(pair, p, test_start(p, i), sched, k);
    out.push_back(t.rows() > k ? t.objectives[k] : INFINITY);
    if (iterates) iterates->insert(iterates->end(), t.iterates.begin() + 1, t.iterates.end());
  }
  return out;
}

Outcome criterion1() {
  const FunctionClass fc = make_function_class(ProblemKind::kl_simplex, kSeed);
  const MirrorPair pair = exact_pair(make_entropic(fc.dim));
  double worst1 = 0.0, worst60 = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Problem p = sample_instance(fc, s);
    Rng rng(s);
    const Tensor x0 = sample_start(p, rng);
    const Trace a = md_run(pair, p, x0, StepSchedule::fixed(1.0), 1);
    const Trace b = md_run(pair, p, x0, StepSchedule::fixed(0.5), 60);
    worst1 = std::max(worst1, a.rows() > 1 ? a.objectives[1] : INFINITY);
    worst60 = std::max(worst60, b.rows() > 60 ? b.objectives[60] : INFINITY);
  }
  return {worst1 < kEntropicOneStep && worst60 < kEntropicSixty,
          "max f at k=1 (t=1) " + num(worst1) + ", max f at k=60 (t=0.5) " + num(worst60)};
}

Outcome criterion2() {
  const cli::Experiment e = experiment("lsq2d");
  const TrainResult r = train_lmd(e.fc, cli::initial_pair(e), e.train);
  const Tensor& a = r.pair.forward.params.at(0);
  const double off = 0.5 * (a.at(0, 1) + a.at(1, 0));
  const double diag = 0.5 * (a.at(0, 0) + a.at(1, 1));
  const double ratio = off / diag;
  return {ratio >= kRatioLo && ratio <= kRatioHi,
          "off/diag " + num(ratio) + " after " + std::to_string(e.train.epochs) + " epochs"};
}

Outcome criterion3(const Trained& den) {
  int ok_exact = 0, ok_trained = 0, ok_random = 0;
  // (a) exact pairs: quadratic on lsq-2d, entropic on kl-simplex.
  const FunctionClass lsq = make_function_class(ProblemKind::lsq2d, kSeed);
  const FunctionClass kl = make_function_class(ProblemKind::kl_simplex, kSeed);
  for (std::size_t i = 0; i < 10; ++i) {
    const bool simplex = i % 2;
    const FunctionClass& fc = simplex ? kl : lsq;
    const Problem p = test_instance(fc, i);
    const MirrorPair pair = simplex ? exact_pair(make_entropic(p.dim))
                                    : exact_pair(init_potential(PotentialKind::quadratic, 2, {}, i));
    ok_exact += regret_holds(pair, p, test_start(p, i), StepSchedule::fixed(simplex ? 0.1 : 0.05), 20);
  }
  // (b) trained denoising pair (5 runs) and a trained SVM pair (5 runs).
  for (std::size_t i = 0; i < 5; ++i) {
    const Problem p = test_instance(den.e.fc, i);
    ok_trained += regret_holds(den.lmd.pair, p, test_start(p, i), den.lmd.schedule, den.e.train.unroll);
  }
  cli::Experiment svm = experiment("svm", {"epochs=60", "batch=8"});
  const TrainResult svm_pair = train_lmd(svm.fc, cli::initial_pair(svm), svm.train);
  for (std::size_t i = 0; i < 5; ++i) {
    const Problem p = test_instance(svm.fc, i);
    ok_trained += regret_holds(svm_pair.pair, p, test_start(p, i), svm_pair.schedule, svm.train.unroll);
  }
  // (c) untrained random backward networks.
  for (std::size_t i = 0; i < 10; ++i) {
    const NetConfig net = smooth_net({16, 16}, 0.5, 1.0);
    const MirrorPair pair{init_potential(PotentialKind::icnn, 2, net, 100 + i), init_backward_network(2, net, 200 + i)};
    const Problem p = test_instance(lsq, i);
    ok_random += regret_holds(pair, p, test_start(p, i), StepSchedule::fixed(0.01), 10);
  }
  return {ok_exact == 10 && ok_trained == 10 && ok_random == 10,
          "all prefixes hold in " + std::to_string(ok_exact) + "/10 exact, " + std::to_string(ok_trained) +
              "/10 trained, " + std::to_string(ok_random) + "/10 random-backward runs"};
}

Outcome criterion4() {
  const FunctionClass fc = make_function_class(ProblemKind::lsq2d, kSeed);
  Rng rng(4);
  int ok = 0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    const Problem p = test_instance(fc, i);
    const Tensor g = k::reshape(normal(4, rng, 0.5), {2, 2});
    const Tensor a = k::add(k::matmul(g, k::transpose(g)), k::scale(0.2, Tensor::identity(2)));
    const MirrorPair pair = exact_pair(make_quadratic(a));
    const Tensor hf = k::scale(2.0, k::matmul(k::transpose(p.matrix), p.matrix));
    const double L = relative_constants(hf, a).second;
    const Trace t = md_run(pair, p, test_start(p, i), StepSchedule::fixed(1.0 / L), 100);
    const RelativeBoundReport r = relative_bound_check(t, pair, p, *p.minimizer, L, 0.0);
    bool good = r.min_gap.size() == 100;
    for (double m : r.m_terms) good = good && m == 0.0;
    for (double m : r.m_running) good = good && m == 0.0;
    for (std::size_t j = 0; j < r.min_gap.size(); ++j) {
      const double cap = L / static_cast<double>(j + 1) * r.initial_bregman;
      good = good && holds_with_slack(r.min_gap[j], cap);
      if (cap > 0) worst_ratio = std::max(worst_ratio, r.min_gap[j] / cap);
    }
    ok += good;
  }
  return {ok == 10, std::to_string(ok) + "/10 pairs hold for k <= 100 with M_k = 0; max min_gap/bound " +
                        num(worst_ratio)};
}

Outcome criterion5() {
  Rng rng(5);
  double worst_op = 0.0;
  for (ad::OpKind op : check::all_op_kinds())
    for (int i = 0; i < kOpCases; ++i) worst_op = std::max(worst_op, check::op_gradient_error(op, rng));

  const FunctionClass fc = make_function_class(ProblemKind::lsq2d, kSeed);
  std::vector<BatchItem> batch;
  for (std::size_t i = 0; i < 4; ++i) {
    Problem p = sample_instance(fc, i);
    Tensor x0 = test_start(p, i);
    batch.push_back({std::move(p), std::move(x0)});
  }
  TrainConfig cfg;
  cfg.unroll = 3;
  const NetConfig net = smooth_net({16, 16}, 0.5, 0.1);
  const TrainState s =
      init_state({init_potential(PotentialKind::icnn, 2, net, 1), init_backward_network(2, net, 2)}, cfg);
  const std::vector<double> errs = check::unrolled_directional_errors(s, batch, cfg, 60, kUnrolledTrials, 55);
  const double worst_unrolled = *std::max_element(errs.begin(), errs.end());
  return {worst_op < kOpGradTol && worst_unrolled < kUnrolledTol,
          "max op rel err " + num(worst_op) + " over " + std::to_string(check::all_op_kinds().size()) +
              " kinds, max unrolled N=3 rel err " + num(worst_unrolled)};
}

Outcome criterion6() {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_convex = 0.0;
  for (Activation act : {Activation::leaky, Activation::smooth}) {
    NetConfig net = smooth_net({16, 16}, 0.1, 1.0);
    net.activation = act;
    MirrorPotential p = init_potential(PotentialKind::icnn, 6, net, 60);
    for (Tensor& t : p.params) t = k::add(t, k::reshape(normal(t.size(), rng, 0.5), t.shape()));
    clip_icnn_weights_inplace(p);
    for (int i = 0; i < 1000; ++i) {
      const Tensor x = normal(6, rng, 2.0), y = normal(6, rng, 2.0);
      const double t = u(rng);
      const double mid = potential_value(p, k::add(k::scale(t, x), k::scale(1 - t, y)));
      worst_convex = std::max(worst_convex, mid - t * potential_value(p, x) - (1 - t) * potential_value(p, y));
    }
  }

  double worst_exact = 0.0;
  const Tensor g = k::reshape(normal(36, rng, 0.3), {6, 6});
  for (const MirrorPotential& p :
       {make_euclidean(6), make_entropic(6), make_quadratic(k::add(k::matmul(g, k::transpose(g)), Tensor::identity(6)))}) {
    const MirrorPair pair = exact_pair(p);
    for (int i = 0; i < 100; ++i) {
      Tensor x = normal(6, rng);
      if (p.kind == PotentialKind::entropic) {
        x = k::exp(x);
        x = k::scale(1.0 / k::sum(x).item(), x);
      }
      const Tensor back = backward_map(pair.backward, p, forward_map(p, x));
      worst_exact = std::max(worst_exact, k::norm_inf(k::sub(back, x)));
    }
  }

  double worst_oracle = 0.0;
  const MirrorPotential icnn = init_potential(PotentialKind::icnn, 6, smooth_net({16, 16}, 0.1, 1.0), 61);
  for (int i = 0; i < 100; ++i) {
    const Tensor x = normal(6, rng, 2.0);
    worst_oracle = std::max(worst_oracle, k::norm_inf(k::sub(exact_inverse_oracle(icnn, forward_map(icnn, x)), x)));
  }
  return {worst_convex <= kConvexTol && worst_exact < kRoundTripTol && worst_oracle < kRoundTripTol,
          "max convexity violation " + num(worst_convex) + ", exact round trip " + num(worst_exact) +
              ", icnn oracle round trip " + num(worst_oracle)};
}

Outcome criterion7(const Trained& den) {
  const std::size_t n = den.e.train.unroll;
  const double adaptive = median(objectives_at(den.lmd.pair, den.lmd.schedule, den.e.fc, n));
  const double fixed = median(objectives_at(den.lmd.pair, StepSchedule::fixed(1e-2), den.e.fc, n));
  std::vector<double> gd;
  for (std::size_t i = 0; i < 10; ++i) {
    const Problem p = test_instance(den.e.fc, i);
    const Trace t = gd_run(p, test_start(p, i), StepSchedule::fixed(1e-2), n);
    gd.push_back(t.rows() > n ? t.objectives[n] : INFINITY);
  }
  const double g = median(gd);
  return {adaptive < g, "median f at k=10: trained LMD " + num(adaptive) + ", GD " + num(g) +
                            " (fixed-step LMD " + num(fixed) + "); training " + num(den.seconds) + " s"};
}

Outcome criterion8(const Trained& den) {
  const std::size_t n = den.e.train.unroll;
  std::vector<Tensor> pts_lmd, pts_nc;
  const double lmd = median(objectives_at(den.lmd.pair, den.lmd.schedule, den.e.fc, n, &pts_lmd));
  const double lgd = median(objectives_at(den.lgd.pair, den.lgd.schedule, den.e.fc, n));
  objectives_at(den.no_consistency.pair, den.no_consistency.schedule, den.e.fc, n, &pts_nc);
  const double fb_lmd = fb_inconsistency(den.lmd.pair, pts_lmd).mean;
  const double fb_nc = fb_inconsistency(den.no_consistency.pair, pts_nc).mean;
  const bool a = lgd >= kLgdMargin * lmd;
  const bool b = fb_nc > fb_lmd;
  return {a && b, std::string("(a) ") + (a ? "pass" : "fail") + ": median f at k=10 LGD " + num(lgd) + " vs LMD " +
                      num(lmd) + " (ratio " + num(lgd / lmd) + ", need >= " + num(kLgdMargin) + "); (b) " +
                      (b ? "pass" : "fail") + ": mean fb inconsistency s=0 " + num(fb_nc) + " vs regularized " +
                      num(fb_lmd)};
}

Outcome criterion9(const Trained& den) {
  const std::vector<LogRow>& log = den.lmd.log;
  const auto at50 = std::find_if(log.begin(), log.end(), [](const LogRow& r) { return r.epoch == 50; });
  if (at50 == log.end() || log.back().epoch < 500) return {false, "log too short"};
  const bool falls = log.back().consistency_part < at50->consistency_part;
  double best = INFINITY;
  std::size_t above_at = 0;
  for (const LogRow& r : log) {
    if (r.epoch >= 500 && r.objective_part > best && above_at == 0) above_at = r.epoch;
    best = std::min(best, r.objective_part);
  }
  return {falls && above_at > 0, "consistency part epoch 50 " + num(at50->consistency_part) + " -> final " +
                                     num(log.back().consistency_part) + "; objective part above running min at epoch " +
                                     (above_at ? std::to_string(above_at) : std::string("none"))};
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

Outcome criterion10() {
  const fs::path root = fs::temp_directory_path() / "lmd_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> runs{
      "train kind=lsq2d epochs=40 batch=16",
      "eval kind=lsq2d instances=2",
      "diagnose --oracle on kind=lsq2d instances=2",
      "sweep kind=kl-simplex instances=3",
      "train kind=denoise epochs=3 batch=2 hidden=8,8 image_side=8",
      "eval kind=denoise instances=1 hidden=8,8 image_side=8 multipliers=1",
      "ablate kind=lsq2d epochs=10 batch=8 instances=2",
  };
  for (const char* rep : {"a", "b"}) {
    for (const std::string& args : runs) {
      const std::string cmd =
          std::string(LMD_CLI_PATH) + " " + args + " --seed 11 --out " + (root / rep).string() + " > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + args};
    }
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = root / "b" / fs::relative(e.path(), root / "a");
    ++compared;
    if (!fs::exists(twin) || !same_bytes(e.path(), twin)) ++differing;
  }
  fs::remove_all(root);
  return {compared > 0 && differing == 0,
          std::to_string(compared) + " output files compared across 5 commands, " + std::to_string(differing) + " differ"};
}

Trained train_denoise() {
  Trained t{experiment("denoise"), {}, {}, {}, 0.0};
  const auto start = std::chrono::steady_clock::now();
  t.lmd = train_lmd(t.e.fc, cli::initial_pair(t.e), t.e.train);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  t.no_consistency = ablation_no_consistency(t.e.fc, cli::initial_pair(t.e), t.e.train);
  t.lgd = train_lgd(t.e.fc, t.e.train);
  return t;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << std::endl;
  };

  report(1, "entropic MD exactness", criterion1);
  report(2, "quadratic LMD structure recovery", criterion2);

  Trained den;
  bool trained = true;
  try {
    den = train_denoise();
  } catch (const std::exception& ex) {
    trained = false;
    std::cout << "denoising training failed: " << ex.what() << std::endl;
  }
  auto needs = [&](const std::function<Outcome(const Trained&)>& f) {
    return [&, f] { return trained ? f(den) : Outcome{false, "no trained denoising pair"}; };
  };
  report(3, "approximate regret bound at every prefix", needs(criterion3));
  report(4, "relative smoothness rate with exact iterates", criterion4);
  report(5, "gradient fidelity", criterion5);
  report(6, "ICNN convexity and inverse round trips", criterion6);
  report(7, "desk-scale denoising ordering", needs(criterion7));
  report(8, "ablation ordering", needs(criterion8));
  report(9, "regularization trade-off trend", needs(criterion9));
  report(10, "determinism", criterion10);

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
