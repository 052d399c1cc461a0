#include "lmd/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <tuple>

#include "CLI11.hpp"
#include "lmd/diagnostics.hpp"
#include "lmd/io.hpp"
#include "lmd/kernels.hpp"
#include "lmd/solvers.hpp"

namespace lmd::cli {

namespace fs = std::filesystem;
namespace k = kernels;

namespace {

constexpr std::uint64_t kTestSeedBase = 1ULL << 40;

bool is_imaging(ProblemKind kind) { return kind == ProblemKind::denoise || kind == ProblemKind::inpaint; }
bool is_simplex(ProblemKind kind) { return kind == ProblemKind::kl_simplex || kind == ProblemKind::lsq_simplex; }

PotentialKind default_potential(ProblemKind kind) {
  if (is_simplex(kind)) return PotentialKind::entropic;
  if (kind == ProblemKind::lsq2d) return PotentialKind::quadratic;
  return PotentialKind::icnn;
}

std::size_t default_epochs(ProblemKind kind) {
  if (is_imaging(kind)) return 1500;
  if (kind == ProblemKind::svm || kind == ProblemKind::classifier) return 3000;
  return 2000;
}

std::string fmt(double v) { return io::format_double(v); }

class CsvFile {
 public:
  CsvFile(const fs::path& path, const Experiment& e) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << "# seed=" << e.seed << " config_hash=" << e.config.hash() << '\n';
  }
  std::ostream& operator*() { return out_; }

 private:
  std::ofstream out_;
};

fs::path output_dir(const Experiment& e) {
  fs::path dir = fs::path(e.out) / command_name(e.command) / std::string(problem_kind_name(e.fc.kind));
  fs::create_directories(dir);
  return dir;
}

std::string default_checkpoint(const Experiment& e, const std::string& method) {
  return (fs::path(e.out) / "train" / std::string(problem_kind_name(e.fc.kind)) / (method + "_checkpoint.txt")).string();
}

Problem test_instance(const Experiment& e, std::size_t i) { return sample_instance(e.fc, kTestSeedBase + i); }

Tensor test_start(const Experiment& e, const Problem& p, std::size_t i) {
  Rng rng(io::fnv1a("start:" + std::to_string(i)) ^ e.seed);
  return sample_start(p, rng);
}

bool has_trainable_maps(const MirrorPair& pair) {
  return !pair.forward.params.empty() || pair.backward.kind == BackwardKind::network;
}

struct Loaded {
  MirrorPair pair;
  std::vector<double> schedule;  // empty when nothing was trained
};

Loaded load_or_default(const Experiment& e) {
  Loaded l{initial_pair(e), {}};
  const std::string path = e.checkpoint.empty() ? default_checkpoint(e, "lmd") : e.checkpoint;
  std::ifstream in(path);
  if (in) {
    load_checkpoint(in, l.pair, l.schedule);
  } else if (has_trainable_maps(l.pair) || !e.checkpoint.empty()) {
    throw std::runtime_error("checkpoint not found: " + path);
  }
  return l;
}

/// Learned steps scaled by m; the fixed base step when nothing was learned.
StepSchedule learned_schedule(const Loaded& l, double m, const Experiment& e) {
  if (l.schedule.empty()) return StepSchedule::multiplied(e.base_step, m);
  std::vector<double> v = l.schedule;
  for (double& t : v) t *= m;
  return StepSchedule::from_learned(std::move(v), e.train.clip_lo * m, e.train.clip_hi * m);
}

ApproxOptions approx_options(const Experiment& e) {
  ApproxOptions o;
  o.oracle = e.oracle;
  return o;
}

Trace run_method(const Experiment& e, const std::string& method, const Loaded& l, const Problem& p, const Tensor& x0,
                 double m) {
  if (method == "lmd")
    return approx_md_run(l.pair, p, x0, StepSchedule::multiplied(e.base_step, m), e.iterations, approx_options(e));
  if (method == "adaptive-lmd")
    return approx_md_run(l.pair, p, x0, learned_schedule(l, m, e), e.iterations, approx_options(e));
  if (method == "gd") return gd_run(p, x0, StepSchedule::multiplied(e.base_step, m), e.iterations);
  if (method == "adam") return adam_run(p, x0, e.adam_step * m, e.iterations);
  throw std::invalid_argument("unknown method " + method);
}

const std::vector<std::string> kMethods{"lmd", "adaptive-lmd", "gd", "adam"};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

TrainResult run_training(const Experiment& e, const std::string& method) {
  if (method == "lgd") return train_lgd(e.fc, e.train);
  if (method == "no-consistency") return ablation_no_consistency(e.fc, initial_pair(e), e.train);
  if (method == "lmd") return train_lmd(e.fc, initial_pair(e), e.train);
  throw ConfigError("unknown training method '" + method + "' (lmd, lgd, no-consistency)");
}

void write_training(const Experiment& e, const fs::path& dir, const std::string& method, const TrainResult& r) {
  CsvFile log(dir / (method + "_log.csv"), e);
  write_log_csv(*log, r.log);
  std::ofstream ck(dir / (method + "_checkpoint.txt"));
  save_checkpoint(ck, r.pair, r.schedule.learned);
}

int cmd_train(const Experiment& e, std::ostream& log) {
  const fs::path dir = output_dir(e);
  const TrainResult r = run_training(e, e.method);
  write_training(e, dir, e.method, r);
  log << "trained " << e.method << " on " << problem_kind_name(e.fc.kind) << ": " << r.log.size() << " epochs, "
      << r.skipped << " skipped\n";
  return 0;
}

int cmd_eval(const Experiment& e, std::ostream& log) {
  const fs::path dir = output_dir(e);
  const Loaded l = load_or_default(e);
  std::size_t files = 0;
  for (std::size_t i = 0; i < e.instances; ++i) {
    const Problem p = test_instance(e, i);
    const Tensor x0 = test_start(e, p, i);
    for (double m : e.multipliers) {
      for (const std::string& method : kMethods) {
        const Trace t = run_method(e, method, l, p, x0, m);
        CsvFile f(dir / (method + "_m" + fmt(m) + "_i" + std::to_string(i) + ".csv"), e);
        write_trace_csv(*f, t, e.train.unroll);
        ++files;
      }
    }
  }
  log << "wrote " << files << " traces\n";
  return 0;
}

int cmd_diagnose(const Experiment& e, std::ostream& log) {
  const fs::path dir = output_dir(e);
  const Loaded l = load_or_default(e);
  const std::size_t steps = e.config.has("iterations") ? e.iterations : e.train.unroll;
  const double sigma = certified_sigma(l.pair.forward, NormKind::l1);
  const std::size_t d = l.pair.forward.dim;
  bool all = true;
  CsvFile summary(dir / "summary.csv", e);
  *summary << "instance,check,holds\n";
  for (std::size_t i = 0; i < e.instances; ++i) {
    const Problem base = test_instance(e, i);
    const Problem p = with_strong_convexity(base, e.mu_f);
    const Tensor x0 = test_start(e, p, i);
    const Tensor ref = reference_point(p, x0);
    ApproxOptions o;
    o.oracle = true;
    const Trace t = approx_md_run(l.pair, p, x0, learned_schedule(l, 1.0, e), steps, o);
    // mu_f is an l2 modulus of the added term; in l1 it becomes mu_f / d.
    const RegretReport r = approx_regret_check(t, l.pair.forward, p, ref, e.mu_f / static_cast<double>(d), sigma);
    {
      CsvFile f(dir / ("regret_i" + std::to_string(i) + ".csv"), e);
      write_regret_csv(*f, r);
    }
    *summary << i << ",approx_regret," << bool_str(r.all_hold()) << '\n';
    all = all && r.all_hold();

    if (l.pair.backward.kind == BackwardKind::exact) {
      const Trace exact = md_run(l.pair, p, x0, learned_schedule(l, 1.0, e), steps);
      const RegretReport c = classical_regret_check(exact, l.pair.forward, p, ref, sigma);
      CsvFile f(dir / ("classical_i" + std::to_string(i) + ".csv"), e);
      write_regret_csv(*f, c);
      *summary << i << ",classical_regret," << bool_str(c.all_hold()) << '\n';
      all = all && c.all_hold();
    }

    if (l.pair.forward.kind == PotentialKind::quadratic && p.kind == ProblemKind::lsq2d) {
      const Tensor wtw = k::matmul(k::transpose(p.matrix), p.matrix);
      const Tensor hf = k::add(k::scale(2.0, wtw), k::scale(e.mu_f, Tensor::identity(p.dim)));
      const Tensor& a = l.pair.forward.params[0];
      const Tensor hpsi = k::scale(0.5, k::add(a, k::transpose(a)));
      const auto [mu, L] = relative_constants(hf, hpsi);
      const Trace exact = md_run(l.pair, p, x0, StepSchedule::fixed(1.0 / L), std::max<std::size_t>(steps, 100));
      const RelativeBoundReport rb = relative_bound_check(exact, l.pair, p, ref, L, mu);
      CsvFile f(dir / ("relative_i" + std::to_string(i) + ".csv"), e);
      write_relative_csv(*f, rb);
      *summary << i << ",relative," << bool_str(rb.all_hold()) << '\n';
      all = all && rb.all_hold();
    }
  }
  log << "all_prefixes_hold=" << bool_str(all) << '\n';
  return all ? 0 : 1;
}

int cmd_sweep(const Experiment& e, std::ostream& log) {
  const fs::path dir = output_dir(e);
  const Loaded l = load_or_default(e);
  using Key = std::tuple<std::string, double, std::size_t>;
  std::map<Key, std::vector<double>> values;
  CsvFile runs(dir / "runs.csv", e);
  *runs << "method,multiplier,instance,diverged\n";
  std::vector<std::string> methods = kMethods;
  std::sort(methods.begin(), methods.end());
  std::vector<double> multipliers = e.multipliers;
  std::sort(multipliers.begin(), multipliers.end());
  for (std::size_t i = 0; i < e.instances; ++i) {
    const Problem p = test_instance(e, i);
    const Tensor x0 = test_start(e, p, i);
    for (const std::string& method : methods) {
      for (double m : multipliers) {
        const Trace t = run_method(e, method, l, p, x0, m);
        *runs << method << ',' << fmt(m) << ',' << i << ',' << bool_str(t.diverged) << '\n';
        if (t.diverged) continue;
        for (std::size_t r = 0; r < t.rows(); ++r) values[{method, m, r}].push_back(t.objectives[r]);
      }
    }
  }
  CsvFile out(dir / "sweep.csv", e);
  *out << "method,multiplier,k,median_objective,runs\n";
  for (const auto& [key, v] : values) {
    *out << std::get<0>(key) << ',' << fmt(std::get<1>(key)) << ',' << std::get<2>(key) << ',' << fmt(median(v)) << ','
         << v.size() << '\n';
  }
  log << "wrote sweep over " << e.instances << " instances\n";
  return 0;
}

int cmd_ablate(const Experiment& e, std::ostream& log) {
  const fs::path dir = output_dir(e);
  CsvFile summary(dir / "summary.csv", e);
  *summary << "method,k,median_objective,mean_fb_inconsistency\n";
  for (const std::string method : {"lmd", "no-consistency", "lgd"}) {
    const TrainResult r = run_training(e, method);
    write_training(e, dir, method, r);
    std::vector<std::vector<double>> per_k(e.train.unroll + 1);
    std::vector<Tensor> points;
    for (std::size_t i = 0; i < e.instances; ++i) {
      const Problem p = test_instance(e, i);
      const Tensor x0 = test_start(e, p, i);
      const Trace t = approx_md_run(r.pair, p, x0, r.schedule, e.train.unroll, approx_options(e));
      for (std::size_t j = 0; j < t.rows(); ++j) per_k[j].push_back(t.objectives[j]);
      points.insert(points.end(), t.iterates.begin() + 1, t.iterates.end());
    }
    const FbStats fb = fb_inconsistency(r.pair, points);
    for (std::size_t j = 0; j < per_k.size(); ++j) {
      if (per_k[j].empty()) continue;
      *summary << method << ',' << j << ',' << fmt(median(per_k[j])) << ',' << fmt(fb.mean) << '\n';
    }
    log << method << ": median objective at k=" << e.train.unroll << " " << fmt(median(per_k.back()))
        << ", mean fb inconsistency " << fmt(fb.mean) << '\n';
  }
  return 0;
}

}  // namespace

Command parse_command(const std::string& name) {
  if (name == "train") return Command::train;
  if (name == "eval") return Command::eval;
  if (name == "diagnose") return Command::diagnose;
  if (name == "sweep") return Command::sweep;
  if (name == "ablate") return Command::ablate;
  throw ConfigError("unknown command '" + name + "'");
}

std::string command_name(Command c) {
  switch (c) {
    case Command::train:
      return "train";
    case Command::eval:
      return "eval";
    case Command::diagnose:
      return "diagnose";
    case Command::sweep:
      return "sweep";
    case Command::ablate:
      return "ablate";
  }
  return "?";
}

Experiment resolve(Command command, Config config, const std::string& out, std::optional<std::uint64_t> seed,
                   std::optional<bool> oracle) {
  Experiment e;
  e.command = command;
  e.out = out;
  if (seed) config.set("seed", std::to_string(*seed));
  if (oracle) config.set("oracle", *oracle ? "on" : "off");
  e.seed = config.get_u64("seed", 0);
  e.oracle = config.get_bool("oracle", false);

  try {
    e.fc.kind = parse_problem_kind(config.require("kind"));
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string("key 'kind': ") + ex.what());
  }
  const ProblemKind kind = e.fc.kind;
  e.fc.seed = e.seed;
  e.fc.dim = config.get_u64("dim", e.fc.dim);
  e.fc.image_side = config.get_u64("image_side", e.fc.image_side);
  e.fc.samples = config.get_u64("samples", e.fc.samples);
  e.fc.lambda = config.get_double("lambda", e.fc.lambda);
  e.fc.C = config.get_double("C", e.fc.C);
  e.fc.noise = config.get_double("noise", e.fc.noise);
  e.fc.mask_zero_fraction = config.get_double("mask_zero_fraction", e.fc.mask_zero_fraction);
  finalize_function_class(e.fc);

  try {
    e.potential = config.has("potential") ? parse_potential_kind(config.get("potential", "")) : default_potential(kind);
    e.net.activation = parse_activation(config.get("activation", "smooth"));
    e.net.backward_activation = parse_activation(config.get("backward_activation", "smooth"));
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  const std::string backward = config.get("backward", e.potential == PotentialKind::icnn ? "network" : "exact");
  if (backward == "network") {
    e.backward = BackwardKind::network;
  } else if (backward == "exact") {
    e.backward = BackwardKind::exact;
  } else {
    throw ConfigError("key 'backward' must be exact or network, got '" + backward + "'");
  }
  if (e.backward == BackwardKind::exact && e.potential == PotentialKind::icnn)
    throw ConfigError("the icnn potential needs backward=network");

  e.net.hidden = config.get_sizes("hidden", e.net.hidden);
  e.net.slope = config.get_double("slope", e.net.slope);
  e.net.mu = config.get_double("mu", 0.5);
  e.net.quad_rank = config.get_u64("quad_rank", 0);
  e.net.output_scale = config.get_double("output_scale", 0.01);
  e.net.quad_scale = config.get_double("quad_scale", e.net.quad_scale);

  TrainConfig& t = e.train;
  t.unroll = config.get_u64("unroll", t.unroll);
  t.r_weights = config.get_doubles("r", {});
  t.s0 = config.get_double("s0", t.s0);
  t.s_factor = config.get_double("s_factor", t.s_factor);
  t.s_period = config.get_u64("s_period", t.s_period);
  t.lr = config.get_double("lr", 1e-3);
  t.beta1 = config.get_double("beta1", t.beta1);
  t.beta2 = config.get_double("beta2", t.beta2);
  t.batch = config.get_u64("batch", is_imaging(kind) ? 8 : 256);
  t.epochs = config.get_u64("epochs", default_epochs(kind));
  t.step_init = config.get_double("step_init", t.step_init);
  t.clip_lo = config.get_double("clip_lo", t.clip_lo);
  t.clip_hi = config.get_double("clip_hi", t.clip_hi);
  t.adaptive = config.get_bool("adaptive", t.adaptive);
  t.seed = e.seed;
  try {
    t.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }

  e.method = config.get("method", "lmd");
  e.checkpoint = config.get("checkpoint", "");
  e.multipliers = config.get_doubles("multipliers", e.multipliers);
  for (double m : e.multipliers) {
    if (!(m > 0.0)) throw ConfigError("key 'multipliers' must be positive");
  }
  e.base_step = config.get_double("base_step", is_simplex(kind) ? 0.1 : e.base_step);
  e.adam_step = config.get_double("adam_step", e.adam_step);
  e.iterations = config.get_u64("iterations", e.iterations);
  e.instances = config.get_u64("instances", e.instances);
  e.mu_f = config.get_double("mu_f", e.mu_f);
  e.config = std::move(config);
  return e;
}

MirrorPair initial_pair(const Experiment& e) {
  const std::size_t dim = sample_instance(e.fc, 0).dim;
  MirrorPotential forward = init_potential(e.potential, dim, e.net, e.seed);
  if (e.backward == BackwardKind::exact) return exact_pair(std::move(forward));
  MirrorPair pair;
  pair.forward = std::move(forward);
  pair.backward = init_backward_network(dim, e.net, e.seed);
  return pair;
}

int run_command(const Experiment& e, std::ostream& log) {
  switch (e.command) {
    case Command::train:
      return cmd_train(e, log);
    case Command::eval:
      return cmd_eval(e, log);
    case Command::diagnose:
      return cmd_diagnose(e, log);
    case Command::sweep:
      return cmd_sweep(e, log);
    case Command::ablate:
      return cmd_ablate(e, log);
  }
  return 2;
}

int main(int argc, char** argv) {
  CLI::App app{"Learned mirror descent experiments"};
  std::string command, config_path, out = "out", oracle;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  app.add_option("command", command, "train | eval | diagnose | sweep | ablate")
      ->required()
      ->check(CLI::IsMember({"train", "eval", "diagnose", "sweep", "ablate"}));
  app.add_option("overrides", overrides, "key=value settings applied after the config file");
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "seed, overrides the config");
  app.add_option("--oracle", oracle, "log exact-oracle discrepancies")->check(CLI::IsMember({"on", "off"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex);
  }

  try {
    Config cfg = config_path.empty() ? Config{} : Config::parse_file(config_path);
    for (const std::string& o : overrides) cfg.set_override(o);
    std::optional<bool> oracle_flag;
    if (!oracle.empty()) oracle_flag = oracle == "on";
    const Experiment e = resolve(parse_command(command), std::move(cfg), out, seed, oracle_flag);
    return run_command(e, std::cout);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
}

}  // namespace lmd::cli
