#pragma once

// The CLI subcommands as plain functions, so tests and reproducibility
// harnesses can drive identical runs in-process.  Every command writes a
// manifest next to its outputs; manifests are the only place wall-clock
// timestamps appear.

#include <cstdint>
#include <string>
#include <vector>

#include "lilad/eval.hpp"
#include "lilad/training.hpp"

namespace lilad {

struct GenDataArgs {
  std::string system = "sp";
  int tasks = 8;
  int pairs = 2000;
  int rollout_len = 500;
  std::uint64_t seed = 0;
  std::string out;  // pool file; manifest lands at <out>.manifest.json
};
void run_gen_data(const GenDataArgs& args);

struct TrainCmdArgs {
  std::string pool;
  std::string out_dir;  // model.lmc, train_log.jsonl, checkpoints/, manifest.json
  int embed_dim = 32;
  int num_blocks = 2;
  int num_heads = 2;
  int max_context = 32;
  int mlp_mult = 4;
  long steps = 2000;
  long k_switch = 250;
  double lr_dyn = 1e-3;
  double lr_lyap = 1e-3;
  double lambda = 0.1;
  double beta = 0.95;
  double clip_norm = 1.0;
  int batch_tasks = 0;
  std::string optimizer = "sgd";  // sgd | adam
  bool squared_loss = false;
  long checkpoint_every = 0;
  std::uint64_t seed = 0;
  bool plain_icl = false;  // ablation: no certificate, single dynamics phase
};
TrainResult run_train(const TrainCmdArgs& args);

struct EvalCmdArgs {
  std::string system = "sp";
  std::vector<std::string> methods{"lilad", "plain-icl", "stable-linear"};
  std::string lilad_model;
  std::string plain_model;
  std::string out_dir;  // metrics.jsonl, table.json, manifest.json
  int num_test_tasks = 5;
  int context_len = 32;
  int rollout_steps = 0;  // 0 -> 300 for the ODE systems, 100 for pde_sm
  int init_per_task = 4;
  double cov_scale = 1.0;
  double min_norm = 0.0;
  int rollout_len = 500;
  double beta = 0.95;
  std::uint64_t seed = 0;
  int threads = 1;
};
std::vector<EvalRecord> run_eval(const EvalCmdArgs& args);

struct StabilityCheckArgs {
  std::string model;
  std::string system = "sp";
  int contexts = 10;
  int context_len = 32;
  int queries_per_context = 100;
  int rollout_len = 500;
  double beta = 0.95;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;  // optional JSON report path
};

struct StabilityReport {
  long contexts = 0;
  long queries = 0;
  long v0_failures = 0;        // V(0|C) not exactly zero
  long sandwich_failures = 0;  // V outside [eps|q|^2, eps|q|^2 + 2c]
  long margin_failures = 0;    // certified decrease margin above tol_enforce
  double max_abs_v0 = 0;
  double worst_margin = 0;     // largest certified margin seen (<= 0 when sound)
  bool passed() const {
    return v0_failures == 0 && sandwich_failures == 0 && margin_failures == 0;
  }
};

// Audits the trained certificate on fresh contexts and random queries.  The
// report is returned and optionally written; the CLI turns a failed report
// into a nonzero exit.
StabilityReport run_stability_check(const StabilityCheckArgs& args);

}  // namespace lilad
