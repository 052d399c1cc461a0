#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lmd/config.hpp"
#include "lmd/potentials.hpp"
#include "lmd/problems.hpp"
#include "lmd/training.hpp"

namespace lmd::cli {

enum class Command { train, eval, diagnose, sweep, ablate };
Command parse_command(const std::string& name);
std::string command_name(Command c);

/// Everything a command needs, resolved from the config with per-kind defaults.
struct Experiment {
  Command command = Command::train;
  Config config;
  std::string out = "out";
  std::uint64_t seed = 0;
  bool oracle = false;

  FunctionClass fc;
  PotentialKind potential = PotentialKind::euclidean;
  BackwardKind backward = BackwardKind::exact;
  NetConfig net;
  TrainConfig train;
  std::string method = "lmd";  // train: lmd | lgd | no-consistency
  std::string checkpoint;
  std::vector<double> multipliers{0.5, 1.0, 2.0, 4.0};
  double base_step = 1e-2;
  double adam_step = 5e-2;
  std::size_t iterations = 50;
  std::size_t instances = 10;
  double mu_f = 1e-3;
};

/// Applies overrides, the seed and the oracle flag, then resolves defaults.
/// Throws ConfigError naming the offending key.
Experiment resolve(Command command, Config config, const std::string& out, std::optional<std::uint64_t> seed,
                   std::optional<bool> oracle);

/// Fresh (untrained) pair for the experiment's potential and backward kind.
MirrorPair initial_pair(const Experiment& e);

/// Runs a command; returns the process exit code (1 on a failed check).
int run_command(const Experiment& e, std::ostream& log);

/// Full entry point: `lmd <command> [--config p] [--out d] [--seed s] [--oracle on|off] [key=value ...]`.
int main(int argc, char** argv);

}  // namespace lmd::cli
