#include "lilad/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "lilad/baselines.hpp"
#include "lilad/enforcement.hpp"
#include "lilad/errors.hpp"
#include "lilad/io.hpp"
#include "lilad/parallel.hpp"
#include "lilad/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lilad {

namespace {

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Manifests are the only outputs allowed to carry wall-clock data; everything
// else a command writes must be byte-reproducible from the seed.
json manifest_base(const std::string& command) {
  json m;
  m["command"] = command;
  m["created_at"] = utc_now();
  return m;
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void ensure_dir(const std::string& dir, const char* what) {
  if (dir.empty()) throw UsageError(std::string(what) + ": output directory required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(std::string(what) + ": cannot create " + dir + ": " + ec.message());
}

JointModel load_model_checked(const std::string& path, const SystemSpec& sys,
                              const char* role) {
  if (path.empty())
    throw UsageError(std::string("eval: ") + role + " model path required for the requested methods");
  JointModel m = load_checkpoint(path);
  if (m.arch.state_dim != sys.state_dim)
    throw DimensionError("eval: model " + path + " has state_dim " +
                         std::to_string(m.arch.state_dim) + " but system " + sys.name +
                         " has " + std::to_string(sys.state_dim));
  return m;
}

}  // namespace

void run_gen_data(const GenDataArgs& args) {
  if (args.out.empty()) throw UsageError("gen-data: --out required");
  if (args.tasks < 1 || args.pairs < 1 || args.rollout_len < 2)
    throw ParameterError("gen-data: tasks/pairs must be >= 1 and rollout-len >= 2");
  SystemSpec sys = make_system(system_from_name(args.system));
  PoolConfig cfg;
  cfg.tasks = args.tasks;
  cfg.pairs_per_task = args.pairs;
  cfg.rollout_len = args.rollout_len;
  Pool pool = generate_pool(sys, cfg, args.seed);

  fs::path out(args.out);
  if (out.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out.parent_path(), ec);
    if (ec) throw DataError("gen-data: cannot create " + out.parent_path().string());
  }
  save_pool(pool, args.out);

  json m = manifest_base("gen-data");
  m["args"] = {{"system", args.system},   {"tasks", args.tasks},
               {"pairs", args.pairs},     {"rollout_len", args.rollout_len},
               {"seed", args.seed},       {"out", args.out}};
  m["pool"] = {{"system", system_name(pool.system)},
               {"state_dim", pool.state_dim},
               {"dt", pool.dt},
               {"tasks", pool.tasks.size()},
               {"pairs_per_task", pool.tasks.empty() ? 0 : pool.tasks[0].pairs.size()}};
  write_json_file(args.out + ".manifest.json", m);
}

TrainResult run_train(const TrainCmdArgs& args) {
  if (args.pool.empty()) throw UsageError("train: --pool required");
  ensure_dir(args.out_dir, "train");
  OptimizerState::Rule rule;
  if (args.optimizer == "sgd") {
    rule = OptimizerState::Rule::kSgd;
  } else if (args.optimizer == "adam") {
    rule = OptimizerState::Rule::kAdam;
  } else {
    throw UsageError("train: unknown optimizer '" + args.optimizer + "' (sgd|adam)");
  }

  Pool pool = load_pool(args.pool);

  ArchConfig arch;
  arch.state_dim = pool.state_dim;
  arch.embed_dim = args.embed_dim;
  arch.num_blocks = args.num_blocks;
  arch.num_heads = args.num_heads;
  arch.max_context = args.max_context;
  arch.mlp_mult = args.mlp_mult;
  JointModel model(arch, WarpConfig{}, sub_seed(args.seed, "init"));
  model.meta["system"] = system_name(pool.system);
  model.meta["mode"] = args.plain_icl ? "plain-icl" : "lilad";

  fs::path dir(args.out_dir);
  TrainConfig cfg;
  cfg.steps = args.steps;
  cfg.k_switch = args.k_switch;
  cfg.lr_dyn = args.lr_dyn;
  cfg.lr_lyap = args.lr_lyap;
  cfg.loss.lambda = args.lambda;
  cfg.loss.beta = args.beta;
  cfg.loss.squared = args.squared_loss;
  cfg.clip_norm = args.clip_norm;
  cfg.batch_tasks = args.batch_tasks;
  cfg.rule = rule;
  cfg.seed = args.seed;
  cfg.checkpoint_every = args.checkpoint_every;
  cfg.checkpoint_dir = (dir / "checkpoints").string();
  cfg.log_path = (dir / "train_log.jsonl").string();
  if (args.plain_icl) cfg = plain_icl_config(cfg);

  TrainResult res = train(model, pool, cfg);
  std::string model_path = (dir / "model.lmc").string();
  save_checkpoint(model, model_path);

  json m = manifest_base("train");
  m["args"] = {{"pool", args.pool},
               {"embed_dim", args.embed_dim},
               {"num_blocks", args.num_blocks},
               {"num_heads", args.num_heads},
               {"max_context", args.max_context},
               {"mlp_mult", args.mlp_mult},
               {"steps", args.steps},
               {"k_switch", args.k_switch},
               {"lr_dyn", args.lr_dyn},
               {"lr_lyap", args.lr_lyap},
               {"lambda", args.lambda},
               {"beta", args.beta},
               {"clip_norm", args.clip_norm},
               {"batch_tasks", args.batch_tasks},
               {"optimizer", args.optimizer},
               {"squared_loss", args.squared_loss},
               {"checkpoint_every", args.checkpoint_every},
               {"seed", args.seed},
               {"plain_icl", args.plain_icl}};
  m["result"] = {{"steps_run", res.steps_run},
                 {"early_stopped", res.early_stopped},
                 {"final_dyn_loss", res.final_dyn_loss},
                 {"final_lyap_loss", res.final_lyap_loss},
                 {"model", model_path}};
  write_json_file((dir / "manifest.json").string(), m);
  return res;
}

std::vector<EvalRecord> run_eval(const EvalCmdArgs& args) {
  ensure_dir(args.out_dir, "eval");
  if (args.methods.empty()) throw UsageError("eval: at least one method required");
  std::vector<Method> methods;
  for (const auto& name : args.methods) methods.push_back(method_from_name(name));

  SystemSpec sys = make_system(system_from_name(args.system));
  bool want_lilad = false;
  bool want_plain = false;
  for (Method m : methods) {
    want_lilad |= m == Method::kLilad;
    want_plain |= m == Method::kPlainIcl;
  }
  JointModel lilad_model = want_lilad
      ? load_model_checked(args.lilad_model, sys, "lilad")
      : JointModel(ArchConfig{sys.state_dim, 8, 1, 1, 2, 2}, WarpConfig{}, 0);
  JointModel plain_model = want_plain
      ? load_model_checked(args.plain_model, sys, "plain-icl")
      : JointModel(ArchConfig{sys.state_dim, 8, 1, 1, 2, 2}, WarpConfig{}, 0);

  EvalProtocol proto;
  proto.num_test_tasks = args.num_test_tasks;
  proto.context_len = args.context_len;
  proto.rollout_steps = args.rollout_steps != 0
      ? args.rollout_steps
      : (sys.id == SystemId::kPdeSm ? 100 : 300);
  proto.init_per_task = args.init_per_task;
  proto.cov_scale = args.cov_scale;
  proto.min_norm = args.min_norm;
  proto.rollout_len = args.rollout_len;
  proto.seed = args.seed;
  proto.threads = args.threads;
  proto.enforce.beta = args.beta;

  std::vector<EvalRecord> records =
      evaluate_system(sys, methods, want_lilad ? &lilad_model : nullptr,
                      want_plain ? &plain_model : nullptr, proto);

  fs::path dir(args.out_dir);
  std::string lines;
  for (const auto& r : records) lines += record_json(r).dump() + "\n";
  write_text_file((dir / "metrics.jsonl").string(), lines);
  write_json_file((dir / "table.json").string(), build_table(records));

  json m = manifest_base("eval");
  m["args"] = {{"system", args.system},
               {"methods", args.methods},
               {"lilad_model", args.lilad_model},
               {"plain_model", args.plain_model},
               {"num_test_tasks", args.num_test_tasks},
               {"context_len", args.context_len},
               {"rollout_steps", args.rollout_steps},
               {"init_per_task", args.init_per_task},
               {"cov_scale", args.cov_scale},
               {"min_norm", args.min_norm},
               {"rollout_len", args.rollout_len},
               {"beta", args.beta},
               {"seed", args.seed},
               {"threads", args.threads}};
  m["result"] = {{"records", records.size()}};
  write_json_file((dir / "manifest.json").string(), m);
  return records;
}

StabilityReport run_stability_check(const StabilityCheckArgs& args) {
  if (args.model.empty()) throw UsageError("stability-check: --model required");
  if (args.contexts < 1 || args.queries_per_context < 1)
    throw ParameterError("stability-check: contexts and queries must be >= 1");
  SystemSpec sys = make_system(system_from_name(args.system));
  JointModel model = load_checkpoint(args.model);
  if (model.arch.state_dim != sys.state_dim)
    throw DimensionError("stability-check: model state_dim " +
                         std::to_string(model.arch.state_dim) + " != system " +
                         std::to_string(sys.state_dim));

  EvalProtocol proto;
  proto.num_test_tasks = args.contexts;
  proto.context_len = args.context_len;
  proto.rollout_steps = 1;  // contexts are all we need from the instancer
  proto.init_per_task = 1;
  proto.rollout_len = args.rollout_len;
  proto.seed = args.seed;
  std::vector<TestTask> tasks = instantiate_test_tasks(sys, proto);

  EnforcementConfig cfg;
  cfg.beta = args.beta;
  const WarpConfig& w = model.warp;
  StabilityReport rep;
  rep.contexts = args.contexts;

  rep.worst_margin = -std::numeric_limits<double>::infinity();
  std::vector<StabilityReport> parts(tasks.size());
  parallel_for(static_cast<long>(tasks.size()), args.threads, [&](long ti) {
    StabilityReport& part = parts[ti];
    part.worst_margin = -std::numeric_limits<double>::infinity();
    ContextEval ev(model.dyn, model.lyap, model.warp, tasks[ti].context);
    double v0 = ev.value(Vec::Zero(sys.state_dim));
    if (v0 != 0.0) {
      part.v0_failures++;
      part.max_abs_v0 = std::abs(v0);
    }
    Rng rng(sub_seed(sub_seed(args.seed, "queries"), "ctx" + std::to_string(ti)));
    for (int qi = 0; qi < args.queries_per_context; ++qi) {
      part.queries++;
      Vec q = sys.sample_initial_state(rng);
      double v = ev.value(q);
      double lo = w.eps * q.squaredNorm();
      if (!(v >= lo - 1e-12 && v <= lo + 2.0 * w.c + 1e-12)) part.sandwich_failures++;
      AttenuatedStep st = ev.step(q, cfg);
      part.worst_margin = std::max(part.worst_margin, st.gamma.decrease_margin);
      if (st.gamma.decrease_margin > cfg.tol_enforce) part.margin_failures++;
    }
  });
  for (const auto& part : parts) {
    rep.queries += part.queries;
    rep.v0_failures += part.v0_failures;
    rep.sandwich_failures += part.sandwich_failures;
    rep.margin_failures += part.margin_failures;
    rep.max_abs_v0 = std::max(rep.max_abs_v0, part.max_abs_v0);
    rep.worst_margin = std::max(rep.worst_margin, part.worst_margin);
  }

  if (!args.out.empty()) {
    json j;
    j["system"] = args.system;
    j["model"] = args.model;
    j["beta"] = args.beta;
    j["contexts"] = rep.contexts;
    j["queries"] = rep.queries;
    j["v0_failures"] = rep.v0_failures;
    j["sandwich_failures"] = rep.sandwich_failures;
    j["margin_failures"] = rep.margin_failures;
    j["max_abs_v0"] = rep.max_abs_v0;
    j["worst_margin"] = rep.worst_margin;
    j["passed"] = rep.passed();
    fs::path out(args.out);
    if (out.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(out.parent_path(), ec);
      if (ec) throw DataError("stability-check: cannot create " + out.parent_path().string());
    }
    write_json_file(args.out, j);
  }
  return rep;
}

}  // namespace lilad
