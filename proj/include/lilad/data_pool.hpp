#pragma once

// Multi-task training pool: shuffled state-next-state pairs per parameter
// sample, prompt/prefix construction, and the pool file container.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lilad/dynamics.hpp"
#include "lilad/types.hpp"

namespace lilad {

struct StatePair {
  Vec x;  // state
  Vec y;  // next state, one rk4 step ahead
};

struct TaskDataset {
  int task_id = -1;
  ParameterSample param;
  std::vector<StatePair> pairs;  // shuffled: order carries no temporal adjacency
  // (rollout index, time index) per pair; in-memory instrumentation only,
  // not persisted by save_pool.
  std::vector<std::pair<int, int>> provenance;
};

// A full prompt: n candidate context pairs plus one held-out final query pair.
struct Prompt {
  std::vector<StatePair> pairs;  // size n+1
  int task_id = -1;
  int n() const { return static_cast<int>(pairs.size()) - 1; }
};

struct PromptPrefix {
  std::vector<StatePair> context;  // j pairs; embeds to 2j+1 tokens with the query
  Vec query;
  int task_id = -1;
};

// A prefix plus the supervision target for its query.
struct LabeledPrefix {
  PromptPrefix prefix;
  Vec target;
};

struct Pool {
  SystemId system = SystemId::kSp;
  int state_dim = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;  // generation master seed
  int rollout_len = 0;
  std::vector<TaskDataset> tasks;
};

struct PoolConfig {
  int tasks = 8;
  int pairs_per_task = 2000;
  int rollout_len = 500;  // steps per generating rollout
};

// Rollouts from random initial states, consecutive pairs pooled, shuffled,
// truncated to num_pairs.
TaskDataset generate_task_dataset(const SystemSpec& spec, const ParameterSample& param,
                                  int num_pairs, std::uint64_t seed,
                                  int rollout_len = 500);

// Samples cfg.tasks parameter vectors and generates one TaskDataset per task.
// Sub-streams are derived from the master seed, so the pool is reproducible
// from (system, cfg, seed) alone.
Pool generate_pool(const SystemSpec& spec, const PoolConfig& cfg, std::uint64_t seed);

// n context pairs plus one held-out query pair, drawn without replacement.
Prompt build_prompt(const TaskDataset& dataset, int n, std::uint64_t seed);

// First j pairs as context, the (j+1)-th pair as query/target.  0 <= j <= n.
LabeledPrefix prefix(const Prompt& prompt, int j);

void save_pool(const Pool& pool, const std::string& path);
Pool load_pool(const std::string& path);

// Structural equality over the persisted fields (bit-exact floats).
bool pool_equal(const Pool& a, const Pool& b);

}  // namespace lilad
