#include "lilad/eval.hpp"

#include <cmath>

#include "lilad/errors.hpp"
#include "lilad/parallel.hpp"
#include "lilad/rng.hpp"

namespace lilad {

const char* method_name(Method m) {
  switch (m) {
    case Method::kLilad: return "lilad";
    case Method::kPlainIcl: return "plain-icl";
    case Method::kStableLinear: return "stable-linear";
  }
  throw ContractError("unknown Method");
}

Method method_from_name(const std::string& name) {
  if (name == "lilad") return Method::kLilad;
  if (name == "plain-icl") return Method::kPlainIcl;
  if (name == "stable-linear") return Method::kStableLinear;
  throw UsageError("unknown method '" + name +
                   "' (expected lilad|plain-icl|stable-linear)");
}

namespace {

void check_protocol(const EvalProtocol& proto) {
  if (proto.num_test_tasks < 1 || proto.context_len < 1 ||
      proto.rollout_steps < 1 || proto.init_per_task < 1)
    throw ParameterError("evaluation protocol sizes must be positive");
  if (proto.cov_scale < 0) throw ParameterError("cov_scale must be nonnegative");
  if (proto.min_norm < 0) throw ParameterError("min_norm must be nonnegative");
}

}  // namespace

std::vector<TestTask> instantiate_test_tasks(const SystemSpec& sys,
                                             const EvalProtocol& proto) {
  check_protocol(proto);
  SystemSpec scaled = sys;
  scaled.param_cov_diag = sys.param_cov_diag * proto.cov_scale;
  const std::uint64_t eval_seed = sub_seed(proto.seed, "eval");
  auto params = sample_parameters(scaled, proto.num_test_tasks, eval_seed);

  std::vector<TestTask> tasks;
  tasks.reserve(static_cast<std::size_t>(proto.num_test_tasks));
  for (int i = 0; i < proto.num_test_tasks; ++i) {
    TestTask task;
    task.param = params[static_cast<std::size_t>(i)];
    TaskDataset ds = generate_task_dataset(
        sys, task.param, proto.context_len,
        sub_seed(eval_seed, "ctx" + std::to_string(i)), proto.rollout_len);
    task.context = std::move(ds.pairs);

    Rng rng(sub_seed(eval_seed, "init" + std::to_string(i)));
    for (int j = 0; j < proto.init_per_task; ++j) {
      Vec x0;
      int attempts = 0;
      do {
        x0 = sys.sample_initial_state(rng);
        if (++attempts > 1000)
          throw DistributionError(
              "cannot sample an initial state with norm >= " +
              std::to_string(proto.min_norm) + " for " + sys.name);
      } while (x0.norm() < proto.min_norm);
      task.inits.push_back(x0);

      std::vector<Vec> truth;
      truth.reserve(static_cast<std::size_t>(proto.rollout_steps) + 1);
      truth.push_back(x0);
      Vec x = x0;
      for (int k = 0; k < proto.rollout_steps; ++k) {
        x = rk4_step(sys.rhs, x, task.param.values, sys.dt);
        truth.push_back(x);
      }
      task.truth.push_back(std::move(truth));
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

RolloutResult rollout_lilad(ContextEval& ev, const Vec& x0, int steps,
                            const EnforcementConfig& cfg) {
  RolloutResult r;
  r.states.push_back(x0);
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    AttenuatedStep st = ev.step(x, cfg);
    r.states.push_back(st.next);
    r.gammas.push_back(st.gamma);
    x = st.next;
  }
  return r;
}

RolloutResult rollout_plain(ContextEval& ev, const Vec& x0, int steps) {
  RolloutResult r;
  r.states.push_back(x0);
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    // divergence is a legitimate outcome here; non-finite states propagate
    x = ev.predict(x);
    r.states.push_back(x);
  }
  return r;
}

RolloutResult rollout_linear(const StableLinear& fit, const Vec& x0, int steps) {
  RolloutResult r;
  r.states.push_back(x0);
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    x = stable_linear_predict(fit, x);
    r.states.push_back(x);
  }
  return r;
}

Metrics mae_rmse(const std::vector<Vec>& pred, const std::vector<Vec>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw ContractError("prediction/truth length mismatch");
  double abs_sum = 0, sq_sum = 0;
  long count = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (pred[k].size() != truth[k].size())
      throw ContractError("prediction/truth dimension mismatch");
    for (long i = 0; i < pred[k].size(); ++i) {
      const double e = pred[k](i) - truth[k](i);
      abs_sum += std::abs(e);
      sq_sum += e * e;
      ++count;
    }
  }
  Metrics m;
  m.mae = abs_sum / static_cast<double>(count);
  m.rmse = std::sqrt(sq_sum / static_cast<double>(count));
  return m;
}

nlohmann::json record_json(const EvalRecord& r) {
  return nlohmann::json{{"system", r.system},
                        {"task", r.task},
                        {"init", r.init},
                        {"method", r.method},
                        {"mae", r.mae},
                        {"rmse", r.rmse},
                        {"init_norm", r.init_norm},
                        {"final_norm", r.final_norm},
                        {"final_norm_truth", r.final_norm_truth},
                        {"mean_gamma", r.mean_gamma},
                        {"num_attenuated", r.num_attenuated},
                        {"max_margin", r.max_margin}};
}

std::vector<EvalRecord> evaluate_system(const SystemSpec& sys,
                                        const std::vector<Method>& methods,
                                        JointModel* lilad_model,
                                        JointModel* plain_model,
                                        const EvalProtocol& proto) {
  if (methods.empty()) throw UsageError("no evaluation methods requested");
  for (Method m : methods) {
    if (m == Method::kLilad && !lilad_model)
      throw ContractError("lilad evaluation requested without a model");
    if (m == Method::kPlainIcl && !plain_model)
      throw ContractError("plain-icl evaluation requested without a model");
  }
  for (JointModel* m : {lilad_model, plain_model})
    if (m && m->arch.state_dim != sys.state_dim)
      throw DimensionError("model state_dim does not match " + sys.name);

  auto tasks = instantiate_test_tasks(sys, proto);
  std::vector<std::vector<EvalRecord>> slots(tasks.size());
  parallel_for(static_cast<long>(tasks.size()), proto.threads, [&](long tl) {
    const auto ti = static_cast<std::size_t>(tl);
    TestTask& task = tasks[ti];
    std::unique_ptr<ContextEval> ev_lilad, ev_plain;
    StableLinear linear_fit;
    for (Method m : methods) {
      if (m == Method::kLilad)
        ev_lilad = std::make_unique<ContextEval>(
            lilad_model->dyn, lilad_model->lyap, lilad_model->warp,
            task.context);
      else if (m == Method::kPlainIcl)
        ev_plain = std::make_unique<ContextEval>(plain_model->dyn,
                                                 plain_model->lyap,
                                                 plain_model->warp,
                                                 task.context);
      else
        linear_fit = fit_stable_linear(task.context);
    }

    for (std::size_t ij = 0; ij < task.inits.size(); ++ij) {
      const Vec& x0 = task.inits[ij];
      for (Method m : methods) {
        RolloutResult roll;
        if (m == Method::kLilad)
          roll = rollout_lilad(*ev_lilad, x0, proto.rollout_steps,
                               proto.enforce);
        else if (m == Method::kPlainIcl)
          roll = rollout_plain(*ev_plain, x0, proto.rollout_steps);
        else
          roll = rollout_linear(linear_fit, x0, proto.rollout_steps);

        Metrics met = mae_rmse(roll.states, task.truth[ij]);
        EvalRecord rec;
        rec.system = sys.name;
        rec.task = static_cast<int>(ti);
        rec.init = static_cast<int>(ij);
        rec.method = method_name(m);
        rec.mae = met.mae;
        rec.rmse = met.rmse;
        rec.init_norm = x0.norm();
        rec.final_norm = roll.states.back().norm();
        rec.final_norm_truth = task.truth[ij].back().norm();
        if (!roll.gammas.empty()) {
          double gsum = 0, worst = roll.gammas[0].decrease_margin;
          long att = 0;
          for (const auto& g : roll.gammas) {
            gsum += g.gamma;
            worst = std::max(worst, g.decrease_margin);
            if (g.gamma < 1.0) ++att;
          }
          rec.mean_gamma = gsum / static_cast<double>(roll.gammas.size());
          rec.num_attenuated = att;
          rec.max_margin = worst;
        }
        slots[ti].push_back(std::move(rec));
      }
    }
  });
  std::vector<EvalRecord> records;
  for (auto& slot : slots)
    for (auto& rec : slot) records.push_back(std::move(rec));
  return records;
}

nlohmann::json build_table(const std::vector<EvalRecord>& records) {
  // (system, method) -> aggregates; nlohmann objects iterate sorted, so the
  // serialized table is deterministic
  nlohmann::json table;
  std::map<std::pair<std::string, std::string>, std::vector<const EvalRecord*>>
      groups;
  for (const auto& r : records) groups[{r.system, r.method}].push_back(&r);
  for (const auto& [key, recs] : groups) {
    const double n = static_cast<double>(recs.size());
    auto agg = [&](auto field) {
      double mean = 0;
      for (const auto* r : recs) mean += field(*r);
      mean /= n;
      double var = 0;
      for (const auto* r : recs) {
        const double d = field(*r) - mean;
        var += d * d;
      }
      return std::make_pair(mean, std::sqrt(var / n));
    };
    auto [mae_mean, mae_std] = agg([](const EvalRecord& r) { return r.mae; });
    auto [rmse_mean, rmse_std] = agg([](const EvalRecord& r) { return r.rmse; });
    auto [fn_mean, fn_std] =
        agg([](const EvalRecord& r) { return r.final_norm; });
    auto [gam_mean, gam_std] =
        agg([](const EvalRecord& r) { return r.mean_gamma; });
    table[key.first][key.second] = {
        {"count", recs.size()},    {"mae_mean", mae_mean},
        {"mae_std", mae_std},      {"rmse_mean", rmse_mean},
        {"rmse_std", rmse_std},    {"final_norm_mean", fn_mean},
        {"final_norm_std", fn_std}, {"mean_gamma", gam_mean},
        {"mean_gamma_std", gam_std}};
  }
  return table;
}

}  // namespace lilad
