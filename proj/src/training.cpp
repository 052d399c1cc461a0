#include "lmd/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "lmd/backend.hpp"
#include "lmd/io.hpp"
#include "lmd/kernels.hpp"
#include "lmd/tape.hpp"

namespace lmd {
namespace k = kernels;

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool forward_trainable(const MirrorPotential& p) {
  return p.kind == PotentialKind::quadratic || p.kind == PotentialKind::one_layer || p.kind == PotentialKind::icnn;
}

bool trains_forward(const TrainState& s, const TrainConfig& cfg) {
  return cfg.train_maps && forward_trainable(s.pair.forward);
}

bool trains_backward(const TrainState& s, const TrainConfig& cfg) {
  return cfg.train_maps && s.pair.backward.kind == BackwardKind::network;
}

struct ElementLoss {
  double objective = 0.0;
  double consistency = 0.0;
};

ElementLoss element_loss(const TrainState& state, const BatchItem& item, const TrainConfig& cfg, double s,
                         double weight, std::vector<Tensor>* grads) {
  const MirrorPair& pair = state.pair;
  const bool fwd_var = grads && trains_forward(state, cfg);
  const bool bwd_var = grads && trains_backward(state, cfg);
  const bool step_var = grads && cfg.adaptive;
  const bool exact = pair.backward.kind == BackwardKind::exact;

  ad::Tape tape;
  Recorder rec(tape);
  auto bind = [&](const std::vector<Tensor>& ps, bool var) {
    std::vector<ad::NodeId> out;
    out.reserve(ps.size());
    for (const Tensor& t : ps) out.push_back(var ? tape.variable(t) : tape.constant(t));
    return out;
  };
  std::vector<ad::NodeId> fp = bind(pair.forward.params, fwd_var);
  std::vector<ad::NodeId> bp = bind(pair.backward.params, bwd_var);
  std::vector<ad::NodeId> tp;
  for (double t : state.steps) tp.push_back(step_var ? tape.variable(Tensor::scalar(t)) : tape.constant(Tensor::scalar(t)));

  PotentialExpr<Recorder> fwd{rec, pair.forward, fp};
  BackwardExpr<Recorder> bwd{rec, pair.backward, bp};
  ProblemExpr<Recorder> f(rec, item.problem);
  auto back = [&](ad::NodeId y) { return exact ? fwd.inverse(y) : bwd.gradient(y); };

  const bool with_consistency = cfg.consistency && !exact;
  ad::NodeId x = tape.constant(item.x0);
  ad::NodeId obj = tape.constant(Tensor::scalar(0.0));
  ad::NodeId cons = tape.constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < cfg.unroll; ++i) {
    ad::NodeId y = rec.sub(fwd.gradient(x), rec.scale_by(tp[i], f.gradient(x)));
    x = back(y);
    obj = rec.add(obj, rec.scale(cfg.r_at(i), f.objective(x)));
    if (with_consistency) cons = rec.add(cons, rec.sum(rec.abs(rec.sub(back(fwd.gradient(x)), x))));
  }

  ElementLoss out{tape.value(obj).item(), tape.value(cons).item()};
  if (!grads || !std::isfinite(out.objective + s * out.consistency)) return out;

  ad::NodeId root = rec.scale(weight, with_consistency ? rec.add(obj, rec.scale(s, cons)) : obj);
  const ad::Gradients g = tape.backward(root);
  std::size_t slot = 0;
  auto accumulate = [&](const std::vector<ad::NodeId>& ids) {
    for (ad::NodeId id : ids) {
      (*grads)[slot] = k::add((*grads)[slot], g[id]);
      ++slot;
    }
  };
  if (fwd_var) accumulate(fp);
  if (bwd_var) accumulate(bp);
  if (step_var) {
    Tensor& gt = (*grads)[slot];
    for (std::size_t i = 0; i < tp.size(); ++i) gt[i] += g[tp[i]].item();
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (unroll < 1) throw std::invalid_argument("train: unroll must be >= 1");
  if (!r_weights.empty() && r_weights.size() != unroll)
    throw std::invalid_argument("train: r_weights must have one entry per unrolled step");
  if (!(clip_lo < step_init && step_init < clip_hi)) throw std::invalid_argument("train: need clip_lo < step_init < clip_hi");
  if (!(lr > 0.0) || !(s0 > 0.0) || !(s_factor > 0.0)) throw std::invalid_argument("train: rates must be positive");
  if (s_period == 0) throw std::invalid_argument("train: s_period must be positive");
  if (batch == 0) throw std::invalid_argument("train: batch must be nonempty");
  if (consistency_norm != NormKind::l1) throw std::invalid_argument("train: the consistency penalty uses the l1 norm");
}

double TrainConfig::s_at(std::size_t epoch) const {
  if (!consistency) return 0.0;
  return s0 * std::pow(s_factor, static_cast<double>(epoch / s_period));
}

double TrainConfig::r_at(std::size_t k) const { return r_weights.empty() ? 1.0 : r_weights.at(k); }

std::vector<Tensor> trainable_parameters(const TrainState& state, const TrainConfig& cfg) {
  std::vector<Tensor> out;
  if (trains_forward(state, cfg)) out.insert(out.end(), state.pair.forward.params.begin(), state.pair.forward.params.end());
  if (trains_backward(state, cfg))
    out.insert(out.end(), state.pair.backward.params.begin(), state.pair.backward.params.end());
  if (cfg.adaptive) out.push_back(Tensor::vector(state.steps));
  return out;
}

void set_trainable_parameters(TrainState& state, const TrainConfig& cfg, const std::vector<Tensor>& params) {
  std::size_t slot = 0;
  auto take = [&](std::vector<Tensor>& dst) {
    for (Tensor& t : dst) {
      if (slot >= params.size() || params[slot].shape() != t.shape())
        throw std::invalid_argument("set_trainable_parameters: shape mismatch");
      t = params[slot++];
    }
  };
  if (trains_forward(state, cfg)) take(state.pair.forward.params);
  if (trains_backward(state, cfg)) take(state.pair.backward.params);
  if (cfg.adaptive) {
    if (slot >= params.size() || params[slot].size() != state.steps.size())
      throw std::invalid_argument("set_trainable_parameters: step count mismatch");
    state.steps = params[slot++].values();
  }
  if (slot != params.size()) throw std::invalid_argument("set_trainable_parameters: too many tensors");
}

LossValue unrolled_loss(const TrainState& state, const std::vector<BatchItem>& batch, const TrainConfig& cfg,
                        std::size_t epoch, bool want_gradients) {
  if (batch.empty()) throw std::invalid_argument("unrolled_loss: empty batch");
  if (state.steps.size() != cfg.unroll) throw std::invalid_argument("unrolled_loss: one step size per unrolled step");
  if (state.pair.forward.domain == Domain::simplex && state.pair.forward.kind != PotentialKind::entropic)
    throw std::invalid_argument("unrolled_loss: simplex training needs the entropic potential");

  LossValue out;
  out.s = cfg.s_at(epoch);
  std::vector<Tensor> grads;
  if (want_gradients) {
    for (const Tensor& t : trainable_parameters(state, cfg)) grads.push_back(Tensor::filled(t.shape(), 0.0));
  }
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const BatchItem& item : batch) {
    const ElementLoss e = element_loss(state, item, cfg, out.s, w, want_gradients ? &grads : nullptr);
    out.objective_part += w * e.objective;
    out.consistency_part += w * e.consistency;
  }
  out.total = out.objective_part + out.s * out.consistency_part;
  if (std::isfinite(out.total)) out.gradients = std::move(grads);
  return out;
}

BatchSampler make_batch_sampler(const FunctionClass& fc, const TrainConfig& cfg) {
  return [fc, batch = cfg.batch, seed = cfg.seed](std::size_t epoch) {
    Rng rng(mix(seed, epoch));
    std::vector<BatchItem> items;
    items.reserve(batch);
    const bool shared = fc.kind == ProblemKind::svm || fc.kind == ProblemKind::classifier;
    std::optional<Problem> common;
    if (shared) common = sample_instance(fc, rng());
    for (std::size_t i = 0; i < batch; ++i) {
      Problem p = shared ? *common : sample_instance(fc, rng());
      Tensor x0 = sample_start(p, rng);
      items.push_back({std::move(p), std::move(x0)});
    }
    return items;
  };
}

TrainState init_state(MirrorPair pair, const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.pair = std::move(pair);
  s.steps.assign(cfg.unroll, cfg.step_init);
  for (const Tensor& t : trainable_parameters(s, cfg)) {
    s.m.push_back(Tensor::filled(t.shape(), 0.0));
    s.v.push_back(Tensor::filled(t.shape(), 0.0));
  }
  return s;
}

TrainResult train(TrainState state, const BatchSampler& sampler, const TrainConfig& cfg,
                  const std::function<void(const LogRow&)>& on_epoch) {
  cfg.validate();
  TrainResult result;
  std::size_t consecutive = 0;
  const bool icnn = trains_forward(state, cfg) && state.pair.forward.kind == PotentialKind::icnn;
  for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const std::vector<BatchItem> batch = sampler(epoch);
    LossValue loss = unrolled_loss(state, batch, cfg, epoch);
    state.epoch = epoch + 1;
    if (!std::isfinite(loss.total)) {
      ++result.skipped;
      if (++consecutive > 10) throw std::runtime_error("train: more than 10 consecutive non-finite losses");
      continue;
    }
    consecutive = 0;
    state.objective_part = loss.objective_part;
    state.consistency_part = loss.consistency_part;
    LogRow row{epoch, loss.total, loss.objective_part, loss.consistency_part, loss.s};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    std::vector<Tensor> params = trainable_parameters(state, cfg);
    ++state.adam_t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.adam_t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.adam_t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& m = state.m[i];
      Tensor& v = state.v[i];
      const Tensor& g = loss.gradients[i];
      for (std::size_t j = 0; j < g.size(); ++j) {
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
        params[i][j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
      }
    }
    set_trainable_parameters(state, cfg, params);
    if (icnn) clip_icnn_weights_inplace(state.pair.forward);
    for (double& t : state.steps) t = std::clamp(t, cfg.clip_lo, cfg.clip_hi);
  }
  result.pair = std::move(state.pair);
  result.schedule = StepSchedule::from_learned(state.steps, cfg.clip_lo, cfg.clip_hi);
  return result;
}

TrainResult train_lmd(const FunctionClass& fc, MirrorPair init, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.train_maps = true;
  return train(init_state(std::move(init), c), make_batch_sampler(fc, c), c);
}

TrainResult train_lgd(const FunctionClass& fc, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.train_maps = false;
  c.adaptive = true;
  const std::size_t dim = sample_instance(fc, 0).dim;
  return train(init_state(exact_pair(make_euclidean(dim)), c), make_batch_sampler(fc, c), c);
}

TrainResult ablation_no_consistency(const FunctionClass& fc, MirrorPair init, TrainConfig cfg) {
  cfg.consistency = false;
  return train_lmd(fc, std::move(init), cfg);
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
  out << "epoch,total_loss,objective_part,consistency_part,s_value\n";
  for (const LogRow& r : log) {
    out << r.epoch << ',' << io::format_double(r.total) << ',' << io::format_double(r.objective_part) << ','
        << io::format_double(r.consistency_part) << ',' << io::format_double(r.s) << '\n';
  }
}

void save_checkpoint(std::ostream& out, const MirrorPair& pair, const std::vector<double>& schedule) {
  std::vector<io::NamedTensor> tensors;
  const std::string fkind = "forward." + std::string(potential_kind_name(pair.forward.kind));
  for (const Tensor& t : pair.forward.params) tensors.push_back({fkind, t});
  if (pair.backward.kind == BackwardKind::network) {
    for (const Tensor& t : pair.backward.params) tensors.push_back({"backward.network", t});
  }
  io::write_checkpoint(out, tensors, schedule);
}

void load_checkpoint(std::istream& in, MirrorPair& pair, std::vector<double>& schedule) {
  std::vector<io::NamedTensor> tensors;
  io::read_checkpoint(in, tensors, schedule);
  const std::string fkind = "forward." + std::string(potential_kind_name(pair.forward.kind));
  std::size_t i = 0;
  auto fill = [&](std::vector<Tensor>& dst, const std::string& kind) {
    for (Tensor& t : dst) {
      if (i >= tensors.size()) throw std::runtime_error("checkpoint: missing tensors for " + kind);
      if (tensors[i].kind != kind)
        throw std::runtime_error("checkpoint: kind mismatch, expected " + kind + " got " + tensors[i].kind);
      if (tensors[i].value.shape() != t.shape())
        throw std::runtime_error("checkpoint: shape mismatch for " + kind + " (" + shape_string(tensors[i].value.shape()) +
                                 " vs " + shape_string(t.shape()) + ")");
      t = tensors[i++].value;
    }
  };
  fill(pair.forward.params, fkind);
  if (pair.backward.kind == BackwardKind::network) fill(pair.backward.params, "backward.network");
  if (i != tensors.size()) throw std::runtime_error("checkpoint: unexpected tensor of kind " + tensors[i].kind);
}

}  // namespace lmd
