#include <algorithm>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lilad/commands.hpp"
#include "lilad/errors.hpp"

using namespace lilad;

// exit codes: 0 ok, 1 usage, 2 data/contract failure, 3 numeric/enforcement
// failure (including a failed stability audit)
int main(int argc, char** argv) {
  CLI::App app{"LILAD: in-context learned dynamics with certified stability"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "sample tasks and write a trajectory pool");
  gen->add_option("--system", gd.system, "sp|dp|mg|seir|pde_sm");
  gen->add_option("--tasks", gd.tasks, "tasks in the pool");
  gen->add_option("--pairs", gd.pairs, "state pairs per task");
  gen->add_option("--rollout-len", gd.rollout_len, "steps per generating rollout");
  gen->add_option("--seed", gd.seed, "master seed");
  gen->add_option("--out", gd.out, "pool file path")->required();

  TrainCmdArgs tr;
  auto* train = app.add_subcommand("train", "alternating model/certificate training");
  train->add_option("--pool", tr.pool, "pool file from gen-data")->required();
  train->add_option("--out", tr.out_dir, "output directory")->required();
  train->add_option("--embed-dim", tr.embed_dim, "token embedding width");
  train->add_option("--blocks", tr.num_blocks, "transformer blocks");
  train->add_option("--heads", tr.num_heads, "attention heads");
  train->add_option("--max-context", tr.max_context, "context pairs per prompt");
  train->add_option("--mlp-mult", tr.mlp_mult, "MLP widening factor");
  train->add_option("--steps", tr.steps, "optimization steps");
  train->add_option("--k-switch", tr.k_switch, "steps per phase block");
  train->add_option("--lr-dyn", tr.lr_dyn, "dynamics head learning rate");
  train->add_option("--lr-lyap", tr.lr_lyap, "certificate head learning rate");
  train->add_option("--lambda", tr.lambda, "stability penalty weight");
  train->add_option("--beta", tr.beta, "contraction factor");
  train->add_option("--clip", tr.clip_norm, "global gradient norm clip");
  train->add_option("--batch-tasks", tr.batch_tasks, "tasks per step (0 = all)");
  train->add_option("--optimizer", tr.optimizer, "sgd|adam");
  train->add_flag("--squared-loss", tr.squared_loss, "squared-error fit term");
  train->add_option("--checkpoint-every", tr.checkpoint_every, "periodic checkpoint stride");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_flag("--plain-icl", tr.plain_icl, "ablation: no certificate phase");

  EvalCmdArgs ev;
  auto* eval = app.add_subcommand("eval", "paired rollout evaluation on fresh tasks");
  eval->add_option("--system", ev.system, "sp|dp|mg|seir|pde_sm");
  eval->add_option("--method", ev.methods, "lilad|plain-icl|stable-linear (repeatable)");
  eval->add_option("--lilad-model", ev.lilad_model, "checkpoint for the certified method");
  eval->add_option("--plain-model", ev.plain_model, "checkpoint for the ablation");
  eval->add_option("--out", ev.out_dir, "output directory")->required();
  eval->add_option("--test-tasks", ev.num_test_tasks, "fresh tasks to draw");
  eval->add_option("--context-len", ev.context_len, "context pairs per test task");
  eval->add_option("--rollout-steps", ev.rollout_steps,
                   "prediction horizon (0 = 300 ODE / 100 PDE)");
  eval->add_option("--inits", ev.init_per_task, "initial states per task");
  eval->add_option("--cov-scale", ev.cov_scale, "parameter covariance multiplier");
  eval->add_option("--min-norm", ev.min_norm, "minimum initial state norm");
  eval->add_option("--rollout-len", ev.rollout_len, "context-generation rollout length");
  eval->add_option("--beta", ev.beta, "contraction factor to certify");
  eval->add_option("--seed", ev.seed, "evaluation seed");
  eval->add_option("--threads", ev.threads, "worker threads over test tasks");

  StabilityCheckArgs sc;
  auto* check = app.add_subcommand("stability-check", "audit the trained certificate");
  check->add_option("--model", sc.model, "model checkpoint")->required();
  check->add_option("--system", sc.system, "sp|dp|mg|seir|pde_sm");
  check->add_option("--contexts", sc.contexts, "fresh contexts to draw");
  check->add_option("--context-len", sc.context_len, "pairs per context");
  check->add_option("--queries", sc.queries_per_context, "random queries per context");
  check->add_option("--rollout-len", sc.rollout_len, "context-generation rollout length");
  check->add_option("--beta", sc.beta, "contraction factor to certify");
  check->add_option("--seed", sc.seed, "query seed");
  check->add_option("--threads", sc.threads, "worker threads over contexts");
  check->add_option("--out", sc.out, "optional JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) {
      run_gen_data(gd);
      std::printf("wrote %s\n", gd.out.c_str());
    } else if (train->parsed()) {
      TrainResult res = run_train(tr);
      std::printf("trained %ld steps%s (dyn loss %.6g, lyap loss %.6g) -> %s/model.lmc\n",
                  res.steps_run, res.early_stopped ? " (early stop)" : "",
                  res.final_dyn_loss, res.final_lyap_loss, tr.out_dir.c_str());
    } else if (eval->parsed()) {
      auto records = run_eval(ev);
      std::printf("evaluated %zu rollouts -> %s\n", records.size(), ev.out_dir.c_str());
    } else if (check->parsed()) {
      StabilityReport rep = run_stability_check(sc);
      std::printf("checked %ld contexts x %ld queries: v0 fail %ld, sandwich fail %ld, "
                  "margin fail %ld, worst margin %.3g\n",
                  rep.contexts, rep.queries / std::max(rep.contexts, 1L),
                  rep.v0_failures, rep.sandwich_failures, rep.margin_failures,
                  rep.worst_margin);
      if (!rep.passed()) {
        std::fprintf(stderr, "stability check FAILED\n");
        return 3;
      }
      std::printf("stability check passed\n");
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
