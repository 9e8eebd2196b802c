#pragma once

#include <functional>
#include <vector>

#include "lilad/model.hpp"
#include "lilad/types.hpp"

namespace lilad {

struct EnforcementConfig {
  double beta = 0.95;        // required contraction per step
  double tol_root = 1e-9;    // bisection bracket width
  int max_iter = 60;         // bisection iteration cap
  int grid_cells = 32;       // coarse scan resolution on [0, 1]
  double origin_tol = 1e-12; // |x| below this is treated as the equilibrium
  double tol_enforce = 1e-8; // slack callers grant when auditing margins
};

enum class GammaBranch { kOrigin, kPassthrough, kBisected };

struct GammaResult {
  double gamma = 0;
  double decrease_margin = 0;  // H(gamma) = V(gamma G(x)|C) - beta V(x|C)
  int iterations = 0;          // bisection steps (0 outside the bisected branch)
  GammaBranch branch = GammaBranch::kOrigin;
};

// State-dependent attenuation for one predicted step.  Given gx = G(x|C) and
// vx = V(x|C), finds gamma in [0, 1] with V(gamma gx|C) <= beta vx:
//   - |x| < origin_tol          -> gamma = 0 (stay at the equilibrium)
//   - H(1) <= 0                 -> gamma = 1 (prediction already contracts)
//   - otherwise scan grid_cells points downward from 1 for the first sign
//     change and bisect; the returned gamma is the bracket's left end, where
//     H is nonpositive, so the guarantee holds exactly by construction.
// lyap evaluates V(.|C) for the frozen context.
GammaResult compute_gamma_core(const Vec& x, const Vec& gx, double vx,
                               const std::function<double(const Vec&)>& lyap,
                               const EnforcementConfig& cfg);

struct AttenuatedStep {
  Vec next;
  GammaResult gamma;
};

AttenuatedStep attenuated_predict(const Vec& x, const Vec& gx, double vx,
                                  const std::function<double(const Vec&)>& lyap,
                                  const EnforcementConfig& cfg);

// Forward-only adapter binding the trained heads to one frozen context.
// The anchor tanh(V_raw(0|C)) is computed once and reused, so each V
// evaluation costs a single transformer pass; values match the training-path
// lyapunov_value bit for bit.
class ContextEval {
 public:
  ContextEval(TransformerCore& dyn, TransformerCore& lyap,
              const WarpConfig& warp, std::vector<StatePair> ctx);

  Vec predict(const Vec& x);    // G(x|C)
  double value(const Vec& q);   // V(q|C)
  std::function<double(const Vec&)> lyap_fn();
  AttenuatedStep step(const Vec& x, const EnforcementConfig& cfg);
  const std::vector<StatePair>& context() const { return ctx_; }

 private:
  TransformerCore& dyn_;
  TransformerCore& lyap_;
  WarpConfig warp_;
  std::vector<StatePair> ctx_;
  double t0_;  // tanh of the raw anchor value
};

}  // namespace lilad
