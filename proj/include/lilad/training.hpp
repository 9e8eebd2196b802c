#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lilad/data_pool.hpp"
#include "lilad/model.hpp"
#include "lilad/tensor.hpp"

namespace lilad {

// Alternating-phase schedule: blocks of k_switch steps, dynamics first.
enum class Phase { kDyn, kLyap };

inline Phase phase_of(long step, long k_switch) {
  if (k_switch <= 0) throw ParameterError("k_switch must be positive");
  if (step < 0) throw ContractError("negative training step");
  return ((step / k_switch) % 2 == 0) ? Phase::kDyn : Phase::kLyap;
}

inline const char* phase_name(Phase p) {
  return p == Phase::kDyn ? "dyn" : "lyap";
}

struct LossConfig {
  double lambda = 0.1;   // stability penalty weight in the dynamics loss
  double beta = 0.95;    // required per-step certificate contraction
  bool squared = false;  // |e|^2 instead of |e| for the fit term
};

// Loss terms are written against callables so tests can substitute closed-form
// stand-ins for the transformer heads.
//   gfn(tape, ctx, query_vec, trainable)                  -> 1 x d prediction
//   vfn(tape, ctx, query_row_tensor, trainable, cache*)   -> 1 x 1 value

// mean over the batch of  fit(G(q|C), f(q)) + lambda * relu(V(G(q|C)|C) - beta V(q|C))
// with the certificate frozen.  Decrease margins are exported per item.
// lambda == 0 skips the certificate passes outright (same loss and gradients,
// no margins), which is what the plain in-context ablation runs.
template <typename GFn, typename VFn>
Tensor dynamics_loss(Tape& t, const std::vector<LabeledPrefix>& batch,
                     GFn&& gfn, VFn&& vfn, const LossConfig& lc,
                     std::vector<double>* margins_out = nullptr) {
  if (batch.empty()) throw ContractError("empty training batch");
  Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LabeledPrefix& item = batch[i];
    Tensor gq = gfn(t, item.prefix.context, item.prefix.query, true);
    Tensor err = sub(gq, t.constant_row(item.target));
    Tensor term = lc.squared ? sqnorm(err) : l2norm(err);
    if (lc.lambda != 0.0) {
      LyapCache cache;
      Tensor vg = vfn(t, item.prefix.context, gq, false, &cache);
      Tensor vq = vfn(t, item.prefix.context, t.constant_row(item.prefix.query),
                      false, &cache);
      Tensor margin = sub(vg, scale(vq, lc.beta));
      if (margins_out) margins_out->push_back(margin.scalar());
      term = add(term, scale(hinge(margin), lc.lambda));
    }
    total = (i == 0) ? term : add(total, term);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

// mean over the batch of  relu(V(G(q|C)|C) - beta V(q|C))  with the dynamics
// model frozen.
template <typename GFn, typename VFn>
Tensor lyapunov_loss(Tape& t, const std::vector<LabeledPrefix>& batch,
                     GFn&& gfn, VFn&& vfn, const LossConfig& lc,
                     std::vector<double>* margins_out = nullptr) {
  if (batch.empty()) throw ContractError("empty training batch");
  Tensor total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LabeledPrefix& item = batch[i];
    LyapCache cache;
    Tensor gq = gfn(t, item.prefix.context, item.prefix.query, false);
    Tensor vg = vfn(t, item.prefix.context, gq, true, &cache);
    Tensor vq = vfn(t, item.prefix.context, t.constant_row(item.prefix.query),
                    true, &cache);
    Tensor margin = sub(vg, scale(vq, lc.beta));
    if (margins_out) margins_out->push_back(margin.scalar());
    Tensor term = hinge(margin);
    total = (i == 0) ? term : add(total, term);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

inline double violation_rate(const std::vector<double>& margins) {
  if (margins.empty()) return 0.0;
  long v = 0;
  for (double m : margins)
    if (m > 0) ++v;
  return static_cast<double>(v) / static_cast<double>(margins.size());
}

struct TrainConfig {
  long steps = 2000;
  long k_switch = 250;
  double lr_dyn = 1e-3;
  double lr_lyap = 1e-3;
  LossConfig loss;
  double clip_norm = 1.0;
  int batch_tasks = 0;  // 0 -> every task in the pool each step
  OptimizerState::Rule rule = OptimizerState::Rule::kSgd;
  std::uint64_t seed = 0;
  long checkpoint_every = 0;        // 0 -> periodic checkpoints off
  std::string checkpoint_dir;      // where periodic checkpoints land
  std::string log_path;            // JSONL step log; empty -> no file
  double early_stop_rel = 1e-5;    // relative span threshold
  int early_stop_window = 10;      // consecutive phase-block means per side
};

struct StepInfo {
  long step = 0;
  Phase phase = Phase::kDyn;
  double loss = 0;
  double violation_rate = 0;
  double wall_ms = 0;
};

struct TrainResult {
  long steps_run = 0;
  bool early_stopped = false;
  double final_dyn_loss = -1;   // mean loss of the last completed block per side
  double final_lyap_loss = -1;  // -1 if that side never ran
  std::vector<StepInfo> log;
};

// Alternating optimization of the joint model over a task pool.  On a
// non-finite loss or gradient the model is restored to the last good snapshot
// and TrainingError is thrown (periodic checkpoints already on disk remain).
TrainResult train(JointModel& m, const Pool& pool, const TrainConfig& cfg,
                  const std::function<void(const StepInfo&)>& on_step = {});

}  // namespace lilad
