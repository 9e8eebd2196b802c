#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "lilad/model.hpp"
#include "lilad/rng.hpp"

using namespace lilad;

namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.state_dim = 2;
  a.embed_dim = 16;
  a.num_blocks = 1;
  a.num_heads = 2;
  a.max_context = 4;
  return a;
}

std::vector<StatePair> random_context(int n, int d, Rng& rng) {
  std::vector<StatePair> ctx;
  for (int i = 0; i < n; ++i) {
    StatePair p;
    p.x = Vec(d);
    p.y = Vec(d);
    for (int k = 0; k < d; ++k) {
      p.x(k) = rng.uniform(-1, 1);
      p.y(k) = rng.uniform(-1, 1);
    }
    ctx.push_back(std::move(p));
  }
  return ctx;
}

bool params_identical(const ParamSet& a, const ParamSet& b) {
  if (a.items.size() != b.items.size()) return false;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    const Parameter& pa = *a.items[i];
    const Parameter& pb = *b.items[i];
    if (pa.name != pb.name || pa.rows() != pb.rows() || pa.cols() != pb.cols())
      return false;
    if (std::memcmp(pa.value.data(), pb.value.data(),
                    sizeof(double) * static_cast<std::size_t>(pa.size())) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("construction, shapes, deterministic init") {
  ArchConfig a = small_arch();
  TransformerCore dyn(a, a.state_dim, "dyn_", 7);
  TransformerCore dyn2(a, a.state_dim, "dyn_", 7);
  CHECK(params_identical(dyn.params(), dyn2.params()));
  TransformerCore dyn3(a, a.state_dim, "dyn_", 8);
  CHECK(!params_identical(dyn.params(), dyn3.params()));

  CHECK(dyn.params().find("dyn_b0_ln1_g")->value(0, 0) == 1.0);
  CHECK(dyn.params().find("dyn_in_b")->value.cwiseAbs().maxCoeff() == 0.0);
  CHECK(dyn.params().find("dyn_pos")->rows() == 2 * a.max_context + 1);

  Rng rng(1);
  auto ctx = random_context(3, 2, rng);
  Vec q(2);
  q << 0.3, -0.2;
  Tape t;
  Tensor out = dyn.forward_last(t, ctx, q);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 2);
  Tape t2;
  Tensor out2 = dyn.forward_last(t2, ctx, q);
  CHECK(std::memcmp(out.value().data(), out2.value().data(), 2 * 8) == 0);

  // empty context works
  Tape t3;
  Tensor out3 = dyn.forward_last(t3, {}, q);
  CHECK(out3.cols() == 2);
}

TEST_CASE("contract violations throw") {
  ArchConfig a = small_arch();
  a.num_heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(TransformerCore(a, 2, "x_", 1), ContractError);

  ArchConfig b = small_arch();
  TransformerCore core(b, 2, "x_", 1);
  Rng rng(1);
  auto long_ctx = random_context(5, 2, rng);  // max_context = 4
  Tape t;
  CHECK_THROWS_AS(core.forward_last(t, long_ctx, Vec(Vec::Zero(2))),
                  ContractError);
  Vec bad_q(3);
  bad_q.setZero();
  Tape t2;
  CHECK_THROWS_AS(core.forward_last(t2, {}, bad_q), DimensionError);
  auto ctx = random_context(2, 2, rng);
  ctx[1].y = Vec::Zero(3);
  Tape t3;
  CHECK_THROWS_AS(core.forward_last(t3, ctx, Vec(Vec::Zero(2))),
                  DimensionError);
}

TEST_CASE("certificate vanishes at the origin exactly") {
  ArchConfig a = small_arch();
  WarpConfig w;
  TransformerCore lyap(a, 1, "lyap_", 13);
  Rng rng(5);
  for (int n : {0, 1, 4}) {
    auto ctx = random_context(n, 2, rng);
    Tape t;
    Tensor v = lyapunov_value(t, lyap, w, ctx, Vec(Vec::Zero(2)));
    CHECK(v.scalar() == 0.0);
    // also exact when the anchor pass is cached from an earlier query
    Tape t2;
    LyapCache cache;
    lyapunov_value(t2, lyap, w, ctx, Vec(Vec::Ones(2)), true, &cache);
    Tensor v2 = lyapunov_value(t2, lyap, w, ctx, Vec(Vec::Zero(2)), true,
                               &cache);
    CHECK(v2.scalar() == 0.0);
  }
}

TEST_CASE("certificate sandwich bounds") {
  ArchConfig a = small_arch();
  WarpConfig w;
  TransformerCore lyap(a, 1, "lyap_", 21);
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    auto ctx = random_context(static_cast<int>(rng.randint(5)), 2, rng);
    Vec q(2);
    q << rng.uniform(-5, 5), rng.uniform(-5, 5);
    Tape t;
    double v = lyapunov_value(t, lyap, w, ctx, q).scalar();
    double lo = w.eps * q.squaredNorm();
    CHECK(v >= lo);
    CHECK(v <= lo + 2 * w.c + 1e-12);
  }
}

TEST_CASE("warp matches manual recompute from raw head values") {
  ArchConfig a = small_arch();
  WarpConfig w;
  TransformerCore lyap(a, 1, "lyap_", 33);
  Rng rng(9);
  auto ctx = random_context(3, 2, rng);
  for (int i = 0; i < 20; ++i) {
    Vec q(2);
    q << rng.uniform(-3, 3), rng.uniform(-3, 3);
    Tape t;
    double raw = lyap.forward_last(t, ctx, q).scalar();
    double raw0 = lyap.forward_last(t, ctx, Vec(Vec::Zero(2))).scalar();
    double inner = w.c * std::tanh(raw) - w.c * std::tanh(raw0);
    double sr;
    if (inner <= 0)
      sr = 0;
    else if (inner < w.delta)
      sr = inner * inner / (2 * w.delta);
    else
      sr = inner - w.delta / 2;
    double expect = sr + w.eps * q.squaredNorm();
    Tape t2;
    double got = lyapunov_value(t2, lyap, w, ctx, q).scalar();
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("per-position predictions are strictly causal") {
  ArchConfig a = small_arch();
  TransformerCore dyn(a, a.state_dim, "dyn_", 51);
  Rng rng(3);
  auto ctx = random_context(4, 2, rng);
  Vec q(2);
  q << 0.1, 0.2;

  Tape t;
  Mat base = dyn.forward_all(t, ctx, q).value();
  REQUIRE(base.rows() == 5);

  for (int k = 0; k < 4; ++k) {
    auto mod = ctx;
    mod[static_cast<std::size_t>(k)].y(0) += 0.5;  // perturb pair k's label
    Tape t2;
    Mat pert = dyn.forward_all(t2, mod, q).value();
    // label k enters at token 2k+1: rows 0..k never see it
    for (int r = 0; r <= k; ++r)
      CHECK(std::memcmp(base.row(r).data(), pert.row(r).data(), 2 * 8) == 0);
    double later = 0;
    for (int r = k + 1; r < 5; ++r)
      later = std::max(later, (base.row(r) - pert.row(r)).cwiseAbs().maxCoeff());
    CHECK(later > 0.0);
  }

  // last row of the all-positions pass agrees with the query-only pass
  Tape t3;
  Mat last = dyn.forward_last(t3, ctx, q).value();
  CHECK((base.row(4) - last.row(0)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("context order sensitivity (positional encoding is live)") {
  ArchConfig a = small_arch();
  TransformerCore dyn(a, a.state_dim, "dyn_", 77);
  Rng rng(4);
  auto ctx = random_context(3, 2, rng);
  auto swapped = ctx;
  std::swap(swapped[0], swapped[2]);
  Vec q(2);
  q << -0.4, 0.3;
  Tape t1, t2;
  Mat o1 = dyn.forward_last(t1, ctx, q).value();
  Mat o2 = dyn.forward_last(t2, swapped, q).value();
  double diff = (o1 - o2).cwiseAbs().maxCoeff();
  CHECK(std::isfinite(diff));
  MESSAGE("prediction shift under context permutation: " << diff);
}

TEST_CASE("gradients match finite differences") {
  ArchConfig a = small_arch();
  a.embed_dim = 8;
  WarpConfig w;
  Rng rng(11);
  auto ctx = random_context(2, 2, rng);
  Vec q(2);
  q << 0.4, -0.3;

  for (std::uint64_t seed : {101u, 202u, 303u}) {
    TransformerCore dyn(a, a.state_dim, "dyn_", seed);
    auto loss_dyn = [&](Tape& t) {
      return sqnorm(dyn.forward_last(t, ctx, q));
    };
    CHECK(finite_diff_check(loss_dyn, dyn.params().all(), 1e-5, 3, seed) <
          1e-4);

    TransformerCore lyap(a, 1, "lyap_", seed + 1);
    auto loss_lyap = [&](Tape& t) {
      return lyapunov_value(t, lyap, w, ctx, q);
    };
    CHECK(finite_diff_check(loss_lyap, lyap.params().all(), 1e-5, 3, seed) <
          1e-4);
  }
}

TEST_CASE("gradient flows through the certificate into the dynamics output") {
  ArchConfig a = small_arch();
  a.embed_dim = 8;
  WarpConfig w;
  Rng rng(12);
  auto ctx = random_context(2, 2, rng);
  Vec q(2);
  q << 0.5, 0.1;

  TransformerCore dyn(a, a.state_dim, "dyn_", 400);
  TransformerCore lyap(a, 1, "lyap_", 401);

  // frozen certificate: V(G(q)) must still move G's parameters
  auto loss = [&](Tape& t) {
    Tensor g = dyn.forward_last(t, ctx, q, true);
    return lyapunov_value(t, lyap, w, ctx, g, false);
  };
  CHECK(finite_diff_check(loss, dyn.params().all(), 1e-5, 3, 9) < 1e-4);

  // and the frozen certificate receives no gradient itself
  for (Parameter* p : lyap.params().all()) p->zero_grad();
  for (Parameter* p : dyn.params().all()) p->zero_grad();
  Tape t;
  Tensor l = loss(t);
  CHECK(l.scalar() > 0.0);  // nonzero query keeps eps|q|^2 > 0
  t.backward(l);
  double lyap_grad = 0, dyn_grad = 0;
  for (Parameter* p : lyap.params().all())
    lyap_grad = std::max(lyap_grad, p->grad.cwiseAbs().maxCoeff());
  for (Parameter* p : dyn.params().all())
    dyn_grad = std::max(dyn_grad, p->grad.cwiseAbs().maxCoeff());
  CHECK(lyap_grad == 0.0);
  CHECK(dyn_grad > 0.0);
}

TEST_CASE("frozen forward equals trainable forward bitwise") {
  ArchConfig a = small_arch();
  TransformerCore dyn(a, a.state_dim, "dyn_", 500);
  Rng rng(6);
  auto ctx = random_context(3, 2, rng);
  Vec q(2);
  q << 0.2, 0.7;
  Tape t1, t2;
  Mat o1 = dyn.forward_last(t1, ctx, q, true).value();
  Mat o2 = dyn.forward_last(t2, ctx, q, false).value();
  CHECK(std::memcmp(o1.data(), o2.data(), 2 * 8) == 0);
}

TEST_CASE("checkpoint round trip preserves everything bitwise") {
  ArchConfig a = small_arch();
  a.state_dim = 4;
  WarpConfig w;
  w.eps = 2e-3;
  JointModel m(a, w, 909);
  m.meta["note"] = "round trip";
  m.meta["steps"] = "120";

  const std::string path = "/tmp/lilad_test_ckpt.lmc";
  save_checkpoint(m, path);
  JointModel back = load_checkpoint(path);
  CHECK(back.arch.state_dim == 4);
  CHECK(back.arch.embed_dim == a.embed_dim);
  CHECK(back.warp.eps == 2e-3);
  CHECK(back.meta.at("note") == "round trip");
  CHECK(back.meta.at("steps") == "120");
  CHECK(params_identical(m.dyn.params(), back.dyn.params()));
  CHECK(params_identical(m.lyap.params(), back.lyap.params()));

  Rng rng(2);
  auto ctx = random_context(2, 4, rng);
  Vec q(4);
  q << 0.1, -0.2, 0.3, -0.4;
  Tape t1, t2;
  Mat o1 = dynamics_predict(t1, m.dyn, ctx, q).value();
  Mat o2 = dynamics_predict(t2, back.dyn, ctx, q).value();
  CHECK(std::memcmp(o1.data(), o2.data(), 4 * 8) == 0);
}

TEST_CASE("checkpoint fault injection") {
  ArchConfig a = small_arch();
  JointModel m(a, WarpConfig{}, 1);
  const std::string path = "/tmp/lilad_test_ckpt2.lmc";
  save_checkpoint(m, path);

  std::ifstream f(path, std::ios::binary);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  f.close();

  auto write_blob = [](const std::string& p, const std::string& b) {
    std::ofstream o(p, std::ios::binary);
    o.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  write_blob("/tmp/lilad_ckpt_trunc.lmc", blob.substr(0, blob.size() / 2));
  CHECK_THROWS_AS(load_checkpoint("/tmp/lilad_ckpt_trunc.lmc"), FormatError);

  std::string bad = blob;
  bad[0] = 'Z';
  write_blob("/tmp/lilad_ckpt_badmagic.lmc", bad);
  CHECK_THROWS_AS(load_checkpoint("/tmp/lilad_ckpt_badmagic.lmc"), FormatError);

  std::string v9 = blob;
  v9[std::string("LILADCKPT ").size()] = '9';
  write_blob("/tmp/lilad_ckpt_badver.lmc", v9);
  CHECK_THROWS_AS(load_checkpoint("/tmp/lilad_ckpt_badver.lmc"), FormatError);

  CHECK_THROWS_AS(load_checkpoint("/tmp/no_such_ckpt.lmc"), DataError);
}
