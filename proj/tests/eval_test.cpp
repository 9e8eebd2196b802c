#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lilad/eval.hpp"
#include "lilad/rng.hpp"

using namespace lilad;

namespace {

ArchConfig tiny_arch(int d = 2) {
  ArchConfig a;
  a.state_dim = d;
  a.embed_dim = 16;
  a.num_blocks = 1;
  a.num_heads = 2;
  a.max_context = 8;
  return a;
}

EvalProtocol tiny_proto() {
  EvalProtocol p;
  p.num_test_tasks = 2;
  p.context_len = 8;
  p.rollout_steps = 10;
  p.init_per_task = 2;
  p.rollout_len = 40;
  p.seed = 3;
  return p;
}

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : {Method::kLilad, Method::kPlainIcl, Method::kStableLinear})
    CHECK(method_from_name(method_name(m)) == m);
  CHECK_THROWS_AS(method_from_name("galerkin"), UsageError);
}

TEST_CASE("mae and rmse agree with hand arithmetic") {
  std::vector<Vec> pred(2), truth(2);
  pred[0] = Vec::Zero(2);
  truth[0] = Vec::Zero(2);
  pred[1] = Vec::Ones(2);
  truth[1] = Vec::Zero(2);
  Metrics m = mae_rmse(pred, truth);
  CHECK(m.mae == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));

  pred[1] << 3, -1;
  truth[1] << 1, 1;
  // errors: 0,0,2,-2 -> mae 1, rmse sqrt(8/4)
  m = mae_rmse(pred, truth);
  CHECK(m.mae == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.rmse == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  std::vector<Vec> shorter(1, Vec(Vec::Zero(2)));
  CHECK_THROWS_AS(mae_rmse(pred, shorter), ContractError);
  CHECK_THROWS_AS(mae_rmse({}, {}), ContractError);
  std::vector<Vec> wrong_dim(2, Vec(Vec::Zero(3)));
  CHECK_THROWS_AS(mae_rmse(pred, wrong_dim), ContractError);
}

TEST_CASE("test task instantiation: determinism, scaling, min_norm, replay") {
  SystemSpec sp = make_system(SystemId::kSp);
  EvalProtocol proto = tiny_proto();
  proto.min_norm = 0.75;

  auto tasks = instantiate_test_tasks(sp, proto);
  auto again = instantiate_test_tasks(sp, proto);
  REQUIRE(tasks.size() == 2);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(tasks[i].context.size() == 8);
    CHECK(tasks[i].inits.size() == 2);
    CHECK(tasks[i].truth.size() == 2);
    CHECK((tasks[i].param.values - again[i].param.values).norm() == 0.0);
    for (std::size_t j = 0; j < tasks[i].inits.size(); ++j) {
      CHECK(tasks[i].inits[j].norm() >= 0.75);
      CHECK((tasks[i].inits[j] - again[i].inits[j]).norm() == 0.0);
      REQUIRE(tasks[i].truth[j].size() == 11);
      // ground truth replays the integrator bit for bit
      for (int k = 0; k < 10; ++k) {
        Vec next = rk4_step(sp.rhs, tasks[i].truth[j][static_cast<std::size_t>(k)],
                            tasks[i].param.values, sp.dt);
        CHECK((next - tasks[i].truth[j][static_cast<std::size_t>(k) + 1]).norm() ==
              0.0);
      }
    }
    for (const auto& pr : tasks[i].context) {
      Vec y = rk4_step(sp.rhs, pr.x, tasks[i].param.values, sp.dt);
      CHECK((y - pr.y).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  // zero covariance scale pins every task to the mean parameters
  EvalProtocol frozen = tiny_proto();
  frozen.cov_scale = 0.0;
  for (const auto& task : instantiate_test_tasks(sp, frozen))
    CHECK((task.param.values - sp.param_mean).norm() == 0.0);

  EvalProtocol bad = tiny_proto();
  bad.rollout_steps = 0;
  CHECK_THROWS_AS(instantiate_test_tasks(sp, bad), ParameterError);
  EvalProtocol doomed = tiny_proto();
  doomed.min_norm = 100.0;  // box states can never reach this
  CHECK_THROWS_AS(instantiate_test_tasks(sp, doomed), DistributionError);
}

TEST_CASE("rollouts follow their one-step maps") {
  SystemSpec sp = make_system(SystemId::kSp);
  EvalProtocol proto = tiny_proto();
  auto tasks = instantiate_test_tasks(sp, proto);
  const TestTask& task = tasks[0];

  // linear: x_{k+1} = A x_k
  StableLinear fit = fit_stable_linear(task.context);
  RolloutResult lin = rollout_linear(fit, task.inits[0], 10);
  REQUIRE(lin.states.size() == 11);
  Vec x = task.inits[0];
  for (int k = 0; k < 10; ++k) {
    x = stable_linear_predict(fit, x);
    CHECK((lin.states[static_cast<std::size_t>(k) + 1] - x).norm() == 0.0);
  }
  CHECK(lin.gammas.empty());

  // plain: x_{k+1} = G(x_k | C)
  JointModel m(tiny_arch(), WarpConfig{}, 99);
  ContextEval ev(m.dyn, m.lyap, m.warp, task.context);
  RolloutResult plain = rollout_plain(ev, task.inits[0], 10);
  x = task.inits[0];
  for (int k = 0; k < 10; ++k) {
    x = ev.predict(x);
    CHECK((plain.states[static_cast<std::size_t>(k) + 1] - x).norm() == 0.0);
  }

  // certified: V contracts by beta at every step
  EnforcementConfig cfg;
  RolloutResult cert = rollout_lilad(ev, task.inits[0], 10, cfg);
  REQUIRE(cert.gammas.size() == 10);
  for (int k = 0; k < 10; ++k) {
    const double v_cur = ev.value(cert.states[static_cast<std::size_t>(k)]);
    const double v_next = ev.value(cert.states[static_cast<std::size_t>(k) + 1]);
    CHECK(v_next <= cfg.beta * v_cur);
    CHECK(cert.gammas[static_cast<std::size_t>(k)].gamma >= 0.0);
    CHECK(cert.gammas[static_cast<std::size_t>(k)].gamma <= 1.0);
    CHECK(cert.gammas[static_cast<std::size_t>(k)].decrease_margin <= 0.0);
  }
}

TEST_CASE("paired evaluation produces deterministic records and tables") {
  SystemSpec sp = make_system(SystemId::kSp);
  EvalProtocol proto = tiny_proto();
  JointModel lilad_m(tiny_arch(), WarpConfig{}, 7);
  JointModel plain_m(tiny_arch(), WarpConfig{}, 8);
  std::vector<Method> methods{Method::kLilad, Method::kPlainIcl,
                              Method::kStableLinear};

  auto records = evaluate_system(sp, methods, &lilad_m, &plain_m, proto);
  REQUIRE(records.size() == 2 * 2 * 3);

  nlohmann::json lines = nlohmann::json::array();
  for (const auto& r : records) lines.push_back(record_json(r));
  auto records2 = evaluate_system(sp, methods, &lilad_m, &plain_m, proto);
  nlohmann::json lines2 = nlohmann::json::array();
  for (const auto& r : records2) lines2.push_back(record_json(r));
  CHECK(lines.dump() == lines2.dump());

  for (const auto& r : records) {
    CHECK(r.system == "sp");
    CHECK((r.method == "lilad" || r.method == "plain-icl" ||
           r.method == "stable-linear"));
    CHECK(r.init_norm > 0.0);
    if (r.method == "lilad") {
      CHECK(r.max_margin <= 0.0);
      CHECK(r.mean_gamma >= 0.0);
      CHECK(r.mean_gamma <= 1.0);
    } else {
      CHECK(r.mean_gamma == 1.0);
      CHECK(r.num_attenuated == 0);
    }
  }

  nlohmann::json table = build_table(records);
  REQUIRE(table.contains("sp"));
  REQUIRE(table["sp"].contains("lilad"));
  double mae_sum = 0;
  int n = 0;
  for (const auto& r : records)
    if (r.method == "lilad") {
      mae_sum += r.mae;
      ++n;
    }
  CHECK(n == 4);
  CHECK(table["sp"]["lilad"]["count"] == 4);
  CHECK(table["sp"]["lilad"]["mae_mean"].get<double>() ==
        doctest::Approx(mae_sum / 4).epsilon(1e-15));

  // population standard deviation, hand-checked
  double mean = mae_sum / 4, var = 0;
  for (const auto& r : records)
    if (r.method == "lilad") var += (r.mae - mean) * (r.mae - mean);
  CHECK(table["sp"]["lilad"]["mae_std"].get<double>() ==
        doctest::Approx(std::sqrt(var / 4)).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_system(sp, methods, nullptr, &plain_m, proto),
                  ContractError);
  CHECK_THROWS_AS(evaluate_system(sp, {}, &lilad_m, &plain_m, proto),
                  UsageError);
  JointModel wrong(tiny_arch(4), WarpConfig{}, 7);
  CHECK_THROWS_AS(
      evaluate_system(sp, {Method::kLilad}, &wrong, nullptr, proto),
      DimensionError);
}
