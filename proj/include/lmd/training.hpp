#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "lmd/potentials.hpp"
#include "lmd/problems.hpp"
#include "lmd/solvers.hpp"
#include "lmd/tensor.hpp"

namespace lmd {

struct TrainConfig {
  std::size_t unroll = 10;
  std::vector<double> r_weights;  // empty means all ones
  double s0 = 1.0;
  double s_factor = 1.05;
  std::size_t s_period = 50;
  bool consistency = true;  // false gives the s = 0 ablation
  NormKind consistency_norm = NormKind::l1;

  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;

  std::size_t batch = 256;
  std::size_t epochs = 2000;
  double step_init = 1e-2;
  double clip_lo = 1e-3;
  double clip_hi = 1e-1;
  bool adaptive = true;
  bool train_maps = true;  // false trains step sizes only (LGD)
  std::uint64_t seed = 0;

  void validate() const;
  double s_at(std::size_t epoch) const;
  double r_at(std::size_t k) const;
};

struct TrainState {
  MirrorPair pair;
  std::vector<double> steps;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t epoch = 0;
  std::size_t adam_t = 0;
  double objective_part = 0.0;
  double consistency_part = 0.0;
};

struct BatchItem {
  Problem problem;
  Tensor x0;
};

struct LossValue {
  double total = 0.0;
  double objective_part = 0.0;
  double consistency_part = 0.0;
  double s = 0.0;
  /// Gradients in parameter order: forward params (when trained), backward
  /// network params (when present), then one scalar per step size.
  std::vector<Tensor> gradients;
};

/// Mean over the batch of sum_k [r_k f(x~_k) + s |(grad M* o grad M - I)(x~_k)|_1],
/// with one tape per batch element and gradients summed in batch order.
LossValue unrolled_loss(const TrainState& state, const std::vector<BatchItem>& batch, const TrainConfig& cfg,
                        std::size_t epoch, bool want_gradients = true);

/// Parameter tensors as unrolled_loss orders them (steps as a single tensor).
std::vector<Tensor> trainable_parameters(const TrainState& state, const TrainConfig& cfg);
void set_trainable_parameters(TrainState& state, const TrainConfig& cfg, const std::vector<Tensor>& params);

struct LogRow {
  std::size_t epoch = 0;
  double total = 0.0;
  double objective_part = 0.0;
  double consistency_part = 0.0;
  double s = 0.0;
};

struct TrainResult {
  MirrorPair pair;
  StepSchedule schedule;
  std::vector<LogRow> log;
  std::size_t skipped = 0;
};

using BatchSampler = std::function<std::vector<BatchItem>(std::size_t epoch)>;

/// Default batch sampler: vector classes draw a fresh instance per element
/// (svm/classifier share one instance per batch), imaging starts from y.
BatchSampler make_batch_sampler(const FunctionClass& fc, const TrainConfig& cfg);

TrainState init_state(MirrorPair pair, const TrainConfig& cfg);
TrainResult train(TrainState state, const BatchSampler& sampler, const TrainConfig& cfg,
                  const std::function<void(const LogRow&)>& on_epoch = {});

TrainResult train_lmd(const FunctionClass& fc, MirrorPair init, const TrainConfig& cfg);
/// Identity maps, only the step sizes are trained.
TrainResult train_lgd(const FunctionClass& fc, const TrainConfig& cfg);
TrainResult ablation_no_consistency(const FunctionClass& fc, MirrorPair init, TrainConfig cfg);

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log);

void save_checkpoint(std::ostream& out, const MirrorPair& pair, const std::vector<double>& schedule);
/// Loads into `pair`, whose kinds and shapes must match the checkpoint.
void load_checkpoint(std::istream& in, MirrorPair& pair, std::vector<double>& schedule);

}  // namespace lmd
