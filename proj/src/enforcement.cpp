#include "lilad/enforcement.hpp"

#include <cmath>

#include "lilad/errors.hpp"

namespace lilad {

namespace {

void check_config(const EnforcementConfig& cfg) {
  if (cfg.beta <= 0 || cfg.beta >= 1)
    throw ParameterError("beta must lie in (0, 1)");
  if (cfg.tol_root <= 0) throw ParameterError("tol_root must be positive");
  if (cfg.max_iter < 1) throw ParameterError("max_iter must be positive");
  if (cfg.grid_cells < 1) throw ParameterError("grid_cells must be positive");
  if (cfg.origin_tol < 0) throw ParameterError("origin_tol must be nonnegative");
}

}  // namespace

GammaResult compute_gamma_core(const Vec& x, const Vec& gx, double vx,
                               const std::function<double(const Vec&)>& lyap,
                               const EnforcementConfig& cfg) {
  check_config(cfg);
  if (x.size() != gx.size())
    throw DimensionError("state and prediction dimensions differ");

  auto h = [&](double s) -> double {
    double hv = lyap(s * gx) - cfg.beta * vx;
    if (!std::isfinite(hv))
      throw EnforcementError("non-finite certificate value during attenuation");
    return hv;
  };

  GammaResult r;
  if (x.norm() < cfg.origin_tol) {
    r.gamma = 0;
    r.branch = GammaBranch::kOrigin;
    r.decrease_margin = h(0.0);
    return r;
  }
  if (vx <= 0)
    throw ContractError("certificate must be positive away from the origin");

  const double h1 = h(1.0);
  if (h1 <= 0) {
    r.gamma = 1;
    r.branch = GammaBranch::kPassthrough;
    r.decrease_margin = h1;
    return r;
  }

  // coarse scan downward from 1 for the first nonpositive cell edge
  double hi = 1.0;
  double lo = 0.0;
  double h_lo = 0.0;
  bool bracketed = false;
  for (int k = 1; k <= cfg.grid_cells; ++k) {
    const double s = 1.0 - static_cast<double>(k) / cfg.grid_cells;
    const double hs = h(s);
    if (hs <= 0) {
      lo = s;
      h_lo = hs;
      bracketed = true;
      break;
    }
    hi = s;
  }
  if (!bracketed) {
    // H(0) = V(0|C) - beta vx; with a certificate vanishing at 0 this is
    // negative, so failure here means the callable is not a certificate
    throw EnforcementError(
        "no nonpositive certificate margin found on [0, 1]");
  }

  int iters = 0;
  while (hi - lo > cfg.tol_root && iters < cfg.max_iter) {
    const double mid = 0.5 * (lo + hi);
    const double hm = h(mid);
    if (hm <= 0) {
      lo = mid;
      h_lo = hm;
    } else {
      hi = mid;
    }
    ++iters;
  }
  r.gamma = lo;
  r.decrease_margin = h_lo;
  r.iterations = iters;
  r.branch = GammaBranch::kBisected;
  return r;
}

AttenuatedStep attenuated_predict(const Vec& x, const Vec& gx, double vx,
                                  const std::function<double(const Vec&)>& lyap,
                                  const EnforcementConfig& cfg) {
  AttenuatedStep out;
  out.gamma = compute_gamma_core(x, gx, vx, lyap, cfg);
  out.next = out.gamma.gamma * gx;
  return out;
}

ContextEval::ContextEval(TransformerCore& dyn, TransformerCore& lyap,
                         const WarpConfig& warp, std::vector<StatePair> ctx)
    : dyn_(dyn), lyap_(lyap), warp_(warp), ctx_(std::move(ctx)) {
  if (lyap_.out_dim() != 1)
    throw ContractError("certificate core must have out_dim 1");
  Tape t;
  const double raw0 =
      lyap_.forward_last(t, ctx_, Vec(Vec::Zero(lyap_.arch().state_dim)), false)
          .scalar();
  t0_ = std::tanh(raw0);
}

Vec ContextEval::predict(const Vec& x) {
  Tape t;
  return dyn_.forward_last(t, ctx_, x, false).value().row(0).transpose();
}

double ContextEval::value(const Vec& q) {
  Tape t;
  const double raw = lyap_.forward_last(t, ctx_, q, false).scalar();
  // mirror the autodiff warp exactly, reusing the cached anchor
  const double inner = warp_.c * std::tanh(raw) - warp_.c * t0_;
  double sr;
  if (inner <= 0)
    sr = 0;
  else if (inner < warp_.delta)
    sr = inner * inner / (2 * warp_.delta);
  else
    sr = inner - warp_.delta / 2;
  return sr + warp_.eps * q.squaredNorm();
}

std::function<double(const Vec&)> ContextEval::lyap_fn() {
  return [this](const Vec& q) { return value(q); };
}

AttenuatedStep ContextEval::step(const Vec& x, const EnforcementConfig& cfg) {
  return attenuated_predict(x, predict(x), value(x), lyap_fn(), cfg);
}

}  // namespace lilad
