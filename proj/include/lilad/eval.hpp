#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "lilad/baselines.hpp"
#include "lilad/data_pool.hpp"
#include "lilad/enforcement.hpp"
#include "lilad/model.hpp"

namespace lilad {

enum class Method { kLilad, kPlainIcl, kStableLinear };

const char* method_name(Method m);
Method method_from_name(const std::string& name);  // UsageError on junk

struct EvalProtocol {
  int num_test_tasks = 5;
  int context_len = 32;
  int rollout_steps = 100;
  int init_per_task = 4;
  double cov_scale = 1.0;  // widens the test-time parameter distribution
  double min_norm = 0.0;   // resample initial states closer than this
  int rollout_len = 500;   // simulator rollout length behind the context pairs
  std::uint64_t seed = 0;
  int threads = 1;         // test tasks evaluate independently
  EnforcementConfig enforce;
};

// A fresh system instance drawn at evaluation time: parameters, a context the
// models condition on, and ground-truth rollouts from each initial state.
struct TestTask {
  ParameterSample param;
  std::vector<StatePair> context;
  std::vector<Vec> inits;
  std::vector<std::vector<Vec>> truth;  // [init][step], rollout_steps + 1 each
};

std::vector<TestTask> instantiate_test_tasks(const SystemSpec& sys,
                                             const EvalProtocol& proto);

struct RolloutResult {
  std::vector<Vec> states;          // rollout_steps + 1, states[0] = x0
  std::vector<GammaResult> gammas;  // per step; only the certified method fills it
};

RolloutResult rollout_lilad(ContextEval& ev, const Vec& x0, int steps,
                            const EnforcementConfig& cfg);
RolloutResult rollout_plain(ContextEval& ev, const Vec& x0, int steps);
RolloutResult rollout_linear(const StableLinear& fit, const Vec& x0, int steps);

struct Metrics {
  double mae = 0;   // mean |err| over all steps (step 0 included) and dims
  double rmse = 0;
};

Metrics mae_rmse(const std::vector<Vec>& pred, const std::vector<Vec>& truth);

// One (task, init, method) outcome, flat for JSONL.
struct EvalRecord {
  std::string system;
  int task = 0;
  int init = 0;
  std::string method;
  double mae = 0;
  double rmse = 0;
  double init_norm = 0;
  double final_norm = 0;        // |x_T| of the model rollout
  double final_norm_truth = 0;  // |x_T| of the simulator
  double mean_gamma = 1;
  long num_attenuated = 0;      // steps that needed gamma < 1
  double max_margin = 0;        // worst certified decrease margin seen
};

nlohmann::json record_json(const EvalRecord& r);

// Paired evaluation: every method sees the same tasks, contexts, and initial
// states.  Models may be null for methods not requested.
std::vector<EvalRecord> evaluate_system(
    const SystemSpec& sys, const std::vector<Method>& methods,
    JointModel* lilad_model, JointModel* plain_model, const EvalProtocol& proto);

// mean and population standard deviation of mae/rmse per method, plus the
// per-record payload count
nlohmann::json build_table(const std::vector<EvalRecord>& records);

}  // namespace lilad
