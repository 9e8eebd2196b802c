#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilad/commands.hpp"
#include "lilad/data_pool.hpp"
#include "lilad/errors.hpp"
#include "lilad/io.hpp"
#include "lilad/model.hpp"

using namespace lilad;
using nlohmann::json;

namespace {

std::string make_tmp_dir() {
  char tmpl[] = "/tmp/lilad_cli_XXXXXX";
  REQUIRE(mkdtemp(tmpl) != nullptr);
  return tmpl;
}

std::vector<std::string> jsonl_lines(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

GenDataArgs small_pool_args(const std::string& out, std::uint64_t seed) {
  GenDataArgs a;
  a.system = "sp";
  a.tasks = 2;
  a.pairs = 30;
  a.rollout_len = 15;
  a.seed = seed;
  a.out = out;
  return a;
}

TrainCmdArgs small_train_args(const std::string& pool, const std::string& dir) {
  TrainCmdArgs a;
  a.pool = pool;
  a.out_dir = dir;
  a.embed_dim = 16;
  a.num_blocks = 1;
  a.num_heads = 2;
  a.max_context = 4;
  a.steps = 6;
  a.k_switch = 2;
  a.seed = 11;
  return a;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(LILAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("gen-data writes a reproducible pool plus manifest") {
  std::string dir = make_tmp_dir();
  run_gen_data(small_pool_args(dir + "/a.pool", 5));
  run_gen_data(small_pool_args(dir + "/b.pool", 5));
  CHECK(read_text_file(dir + "/a.pool") == read_text_file(dir + "/b.pool"));

  Pool pool = load_pool(dir + "/a.pool");
  CHECK(pool.system == SystemId::kSp);
  CHECK(pool.tasks.size() == 2);
  CHECK(pool.tasks[0].pairs.size() == 30);
  CHECK(pool.rollout_len == 15);
  CHECK(pool.seed == 5);

  json m = json::parse(read_text_file(dir + "/a.pool.manifest.json"));
  CHECK(m["command"] == "gen-data");
  CHECK(m.contains("created_at"));
  CHECK(m["pool"]["state_dim"] == 2);
  CHECK(m["args"]["seed"] == 5);

  GenDataArgs bad = small_pool_args("", 5);
  CHECK_THROWS_AS(run_gen_data(bad), UsageError);
  bad = small_pool_args(dir + "/c.pool", 5);
  bad.system = "vanderpol";
  CHECK_THROWS_AS(run_gen_data(bad), UsageError);
  bad = small_pool_args(dir + "/c.pool", 5);
  bad.tasks = 0;
  CHECK_THROWS_AS(run_gen_data(bad), ParameterError);
}

TEST_CASE("train command yields loadable model, step log, manifest, and is deterministic") {
  std::string dir = make_tmp_dir();
  run_gen_data(small_pool_args(dir + "/p.pool", 7));

  TrainCmdArgs ta = small_train_args(dir + "/p.pool", dir + "/run1");
  TrainResult res = run_train(ta);
  CHECK(res.steps_run == 6);

  JointModel m = load_checkpoint(dir + "/run1/model.lmc");
  CHECK(m.arch.state_dim == 2);
  CHECK(m.arch.embed_dim == 16);
  CHECK(m.meta.at("mode") == "lilad");
  CHECK(m.meta.at("system") == "sp");

  auto lines = jsonl_lines(dir + "/run1/train_log.jsonl");
  REQUIRE(lines.size() == 6);
  json first = json::parse(lines[0]);
  CHECK(first["step"] == 0);
  CHECK(first["phase"] == "dyn");
  CHECK(first.contains("loss"));
  CHECK(first.contains("violation_rate"));
  CHECK(first.contains("wall_ms"));
  CHECK(json::parse(lines[2])["phase"] == "lyap");

  json man = json::parse(read_text_file(dir + "/run1/manifest.json"));
  CHECK(man["command"] == "train");
  CHECK(man["result"]["steps_run"] == 6);

  ta.out_dir = dir + "/run2";
  run_train(ta);
  CHECK(read_text_file(dir + "/run1/model.lmc") == read_text_file(dir + "/run2/model.lmc"));

  // ablation drops the certificate phase entirely
  TrainCmdArgs pa = small_train_args(dir + "/p.pool", dir + "/plain");
  pa.plain_icl = true;
  run_train(pa);
  JointModel pm = load_checkpoint(dir + "/plain/model.lmc");
  CHECK(pm.meta.at("mode") == "plain-icl");
  for (const auto& line : jsonl_lines(dir + "/plain/train_log.jsonl"))
    CHECK(json::parse(line)["phase"] == "dyn");

  TrainCmdArgs bad = ta;
  bad.optimizer = "lbfgs";
  bad.out_dir = dir + "/bad";
  CHECK_THROWS_AS(run_train(bad), UsageError);
  bad = ta;
  bad.pool = dir + "/nope.pool";
  bad.out_dir = dir + "/bad2";
  CHECK_THROWS_AS(run_train(bad), DataError);
}

TEST_CASE("eval command writes byte-stable metrics and table") {
  std::string dir = make_tmp_dir();
  run_gen_data(small_pool_args(dir + "/p.pool", 9));
  run_train(small_train_args(dir + "/p.pool", dir + "/m"));

  EvalCmdArgs ea;
  ea.system = "sp";
  ea.lilad_model = dir + "/m/model.lmc";
  ea.plain_model = dir + "/m/model.lmc";
  ea.out_dir = dir + "/e1";
  ea.num_test_tasks = 2;
  ea.context_len = 4;
  ea.rollout_steps = 5;
  ea.init_per_task = 2;
  ea.rollout_len = 15;
  ea.seed = 21;
  auto records = run_eval(ea);
  CHECK(records.size() == 2 * 2 * 3);

  ea.out_dir = dir + "/e2";
  run_eval(ea);
  CHECK(read_text_file(dir + "/e1/metrics.jsonl") == read_text_file(dir + "/e2/metrics.jsonl"));
  CHECK(read_text_file(dir + "/e1/table.json") == read_text_file(dir + "/e2/table.json"));

  auto lines = jsonl_lines(dir + "/e1/metrics.jsonl");
  REQUIRE(lines.size() == records.size());
  json rec = json::parse(lines[0]);
  CHECK(rec["system"] == "sp");
  CHECK(rec.contains("mae"));
  json table = json::parse(read_text_file(dir + "/e1/table.json"));
  REQUIRE(table.contains("sp"));
  CHECK(table["sp"].size() == 3);  // one row per method
  CHECK(table["sp"]["lilad"]["count"] == 4);

  EvalCmdArgs bad = ea;
  bad.methods = {"oracle"};
  bad.out_dir = dir + "/bad";
  CHECK_THROWS_AS(run_eval(bad), UsageError);
  bad = ea;
  bad.methods = {"lilad"};
  bad.lilad_model = "";
  bad.out_dir = dir + "/bad2";
  CHECK_THROWS_AS(run_eval(bad), UsageError);
  bad = ea;
  bad.system = "mg";  // state_dim 5 vs the sp model's 2
  bad.out_dir = dir + "/bad3";
  CHECK_THROWS_AS(run_eval(bad), DimensionError);
  bad = ea;
  bad.methods = {"stable-linear"};
  bad.lilad_model = "";
  bad.plain_model = "";
  bad.out_dir = dir + "/nomodels";
  CHECK(run_eval(bad).size() == 2 * 2 * 1);  // baseline needs no checkpoint
}

TEST_CASE("stability-check audits the certificate and reports") {
  std::string dir = make_tmp_dir();
  run_gen_data(small_pool_args(dir + "/p.pool", 13));
  run_train(small_train_args(dir + "/p.pool", dir + "/m"));

  StabilityCheckArgs sa;
  sa.model = dir + "/m/model.lmc";
  sa.system = "sp";
  sa.contexts = 3;
  sa.context_len = 4;
  sa.queries_per_context = 20;
  sa.rollout_len = 15;
  sa.seed = 17;
  sa.out = dir + "/report.json";
  StabilityReport rep = run_stability_check(sa);
  CHECK(rep.passed());
  CHECK(rep.contexts == 3);
  CHECK(rep.queries == 60);
  CHECK(rep.v0_failures == 0);
  CHECK(rep.sandwich_failures == 0);
  CHECK(rep.margin_failures == 0);
  CHECK(rep.worst_margin <= 0.0);

  json rj = json::parse(read_text_file(dir + "/report.json"));
  CHECK(rj["passed"] == true);
  CHECK(rj["queries"] == 60);
  CHECK(rj["worst_margin"].get<double>() <= 0.0);

  StabilityCheckArgs bad = sa;
  bad.model = "";
  CHECK_THROWS_AS(run_stability_check(bad), UsageError);
  bad = sa;
  bad.contexts = 0;
  CHECK_THROWS_AS(run_stability_check(bad), ParameterError);
  bad = sa;
  bad.system = "pde_sm";
  CHECK_THROWS_AS(run_stability_check(bad), DimensionError);
}

TEST_CASE("binary maps outcomes to exit codes") {
  std::string dir = make_tmp_dir();
  CHECK(run_cli("") != 0);  // subcommand required
  CHECK(run_cli("gen-data --system sp --tasks 2 --pairs 20 --rollout-len 10 --seed 5 --out " +
                dir + "/p.pool") == 0);
  CHECK(run_cli("gen-data --system nope --out " + dir + "/x.pool") == 1);
  CHECK(run_cli("train --pool " + dir + "/missing.pool --out " + dir + "/t0") == 2);

  CHECK(run_cli("train --pool " + dir + "/p.pool --out " + dir +
                "/t --embed-dim 16 --blocks 1 --heads 2 --max-context 4 "
                "--steps 2 --k-switch 1 --seed 3") == 0);
  CHECK(run_cli("eval --system sp --lilad-model " + dir + "/t/model.lmc --plain-model " +
                dir + "/t/model.lmc --out " + dir +
                "/e --test-tasks 1 --context-len 4 --rollout-steps 3 --inits 1 "
                "--rollout-len 10 --seed 2") == 0);
  CHECK(run_cli("eval --system sp --method oracle --out " + dir + "/e2") == 1);
  CHECK(run_cli("stability-check --model " + dir + "/t/model.lmc --system sp --contexts 2 "
                "--context-len 4 --queries 5 --rollout-len 10 --seed 4 --out " +
                dir + "/rep.json") == 0);
  CHECK(run_cli("stability-check --model " + dir + "/missing.lmc --system sp") == 2);
}
