#include "lilad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "lilad/io.hpp"
#include "lilad/rng.hpp"

namespace lilad {

namespace {

std::vector<Mat> snapshot_params(const JointModel& m) {
  std::vector<Mat> out;
  for (const auto& p : m.dyn.params().items) out.push_back(p->value);
  for (const auto& p : m.lyap.params().items) out.push_back(p->value);
  return out;
}

void restore_params(JointModel& m, const std::vector<Mat>& snap) {
  std::size_t i = 0;
  for (auto& p : m.dyn.params().items) p->value = snap[i++];
  for (auto& p : m.lyap.params().items) p->value = snap[i++];
}

// relative span of a full window: (max - min) / max(|last|, tiny)
bool window_converged(const std::deque<double>& w, int size, double rel) {
  if (static_cast<int>(w.size()) < size) return false;
  double lo = w[0], hi = w[0];
  for (double v : w) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return (hi - lo) <= rel * std::max(std::abs(w.back()), 1e-12);
}

}  // namespace

TrainResult train(JointModel& m, const Pool& pool, const TrainConfig& cfg,
                  const std::function<void(const StepInfo&)>& on_step) {
  if (pool.tasks.empty()) throw DataError("training pool has no tasks");
  if (cfg.steps < 1) throw ParameterError("steps must be positive");
  if (cfg.k_switch < 1) throw ParameterError("k_switch must be positive");
  if (cfg.loss.lambda < 0) throw ParameterError("lambda must be nonnegative");
  for (const auto& task : pool.tasks)
    if (task.pairs.size() < 2)
      throw DataError("every task needs at least 2 pairs to form a prompt");
  if (pool.state_dim != m.arch.state_dim)
    throw DimensionError("pool state_dim does not match model");

  const int num_tasks = static_cast<int>(pool.tasks.size());
  const int batch_tasks =
      (cfg.batch_tasks <= 0 || cfg.batch_tasks > num_tasks) ? num_tasks
                                                            : cfg.batch_tasks;

  m.meta["train_steps"] = std::to_string(cfg.steps);
  m.meta["train_k_switch"] = std::to_string(cfg.k_switch);
  m.meta["train_lambda"] = format_f64(cfg.loss.lambda);
  m.meta["train_beta"] = format_f64(cfg.loss.beta);
  m.meta["train_seed"] = std::to_string(cfg.seed);
  m.meta["train_rule"] =
      cfg.rule == OptimizerState::Rule::kAdam ? "adam" : "sgd";

  OptimizerState dyn_opt;
  dyn_opt.rule = cfg.rule;
  dyn_opt.lr = cfg.lr_dyn;
  OptimizerState lyap_opt;
  lyap_opt.rule = cfg.rule;
  lyap_opt.lr = cfg.lr_lyap;
  auto dyn_params = m.dyn.params().all();
  auto lyap_params = m.lyap.params().all();

  Rng batch_rng(sub_seed(cfg.seed, "batch"));
  std::ofstream log_file;
  if (!cfg.log_path.empty()) {
    log_file.open(cfg.log_path);
    if (!log_file) throw DataError("cannot open train log: " + cfg.log_path);
  }
  if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty())
    std::filesystem::create_directories(cfg.checkpoint_dir);

  auto gfn = [&m](Tape& t, const std::vector<StatePair>& ctx, const Vec& q,
                  bool trainable) {
    return dynamics_predict(t, m.dyn, ctx, q, trainable);
  };
  auto vfn = [&m](Tape& t, const std::vector<StatePair>& ctx, Tensor q,
                  bool trainable, LyapCache* cache) {
    return lyapunov_value(t, m.lyap, m.warp, ctx, q, trainable, cache);
  };

  std::vector<Mat> last_good = snapshot_params(m);
  std::deque<double> dyn_window, lyap_window;
  double block_loss_sum = 0;
  long block_loss_count = 0;

  TrainResult res;
  std::vector<int> task_order(static_cast<std::size_t>(num_tasks));
  for (int i = 0; i < num_tasks; ++i)
    task_order[static_cast<std::size_t>(i)] = i;

  for (long step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const Phase phase = phase_of(step, cfg.k_switch);

    // fresh prompts every step; a strict subset is drawn without replacement
    std::vector<LabeledPrefix> batch;
    batch.reserve(static_cast<std::size_t>(batch_tasks));
    if (batch_tasks < num_tasks) batch_rng.shuffle(task_order);
    for (int bi = 0; bi < batch_tasks; ++bi) {
      const TaskDataset& task =
          pool.tasks[static_cast<std::size_t>(task_order[static_cast<std::size_t>(bi)])];
      const int n_ctx = std::min(
          m.arch.max_context, static_cast<int>(task.pairs.size()) - 1);
      const std::uint64_t prompt_seed = batch_rng.next_u64();
      Prompt prompt = build_prompt(task, n_ctx, prompt_seed);
      const int p =
          n_ctx == 0 ? 0 : static_cast<int>(batch_rng.randint(
                               static_cast<std::uint64_t>(n_ctx)));
      batch.push_back(prefix(prompt, p));
    }

    Tape tape;
    std::vector<double> margins;
    Tensor loss = (phase == Phase::kDyn)
                      ? dynamics_loss(tape, batch, gfn, vfn, cfg.loss, &margins)
                      : lyapunov_loss(tape, batch, gfn, vfn, cfg.loss, &margins);
    const double loss_val = loss.scalar();
    auto& active = (phase == Phase::kDyn) ? dyn_params : lyap_params;
    auto& opt = (phase == Phase::kDyn) ? dyn_opt : lyap_opt;

    if (!std::isfinite(loss_val)) {
      restore_params(m, last_good);
      throw TrainingError("non-finite loss at step " + std::to_string(step) +
                          "; model restored to last good snapshot");
    }
    zero_grads(active);
    tape.backward(loss);
    if (cfg.clip_norm > 0) clip_global_norm(active, cfg.clip_norm);
    try {
      optimizer_step(active, opt);
    } catch (const TrainingError&) {
      restore_params(m, last_good);
      throw TrainingError("non-finite gradient at step " +
                          std::to_string(step) +
                          "; model restored to last good snapshot");
    }

    StepInfo info;
    info.step = step;
    info.phase = phase;
    info.loss = loss_val;
    info.violation_rate = violation_rate(margins);
    info.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    res.log.push_back(info);
    res.steps_run = step + 1;
    if (log_file) {
      nlohmann::json j{{"step", info.step},
                       {"phase", phase_name(info.phase)},
                       {"loss", info.loss},
                       {"violation_rate", info.violation_rate},
                       {"wall_ms", info.wall_ms}};
      log_file << j.dump() << "\n";
    }
    if (on_step) on_step(info);

    block_loss_sum += loss_val;
    ++block_loss_count;
    const bool block_end =
        ((step + 1) % cfg.k_switch == 0) || (step + 1 == cfg.steps);
    if (block_end) {
      const double block_mean =
          block_loss_sum / static_cast<double>(block_loss_count);
      auto& window = (phase == Phase::kDyn) ? dyn_window : lyap_window;
      window.push_back(block_mean);
      while (static_cast<int>(window.size()) > cfg.early_stop_window)
        window.pop_front();
      if (phase == Phase::kDyn)
        res.final_dyn_loss = block_mean;
      else
        res.final_lyap_loss = block_mean;
      block_loss_sum = 0;
      block_loss_count = 0;
      if (window_converged(dyn_window, cfg.early_stop_window,
                           cfg.early_stop_rel) &&
          window_converged(lyap_window, cfg.early_stop_window,
                           cfg.early_stop_rel)) {
        res.early_stopped = true;
      }
    }

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      last_good = snapshot_params(m);
      if (!cfg.checkpoint_dir.empty()) {
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_%08ld.lmc", step + 1);
        save_checkpoint(m, cfg.checkpoint_dir + "/" + name);
      }
    }
    if (res.early_stopped) break;
  }
  return res;
}

}  // namespace lilad
