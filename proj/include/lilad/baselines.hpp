#pragma once

#include <vector>

#include "lilad/data_pool.hpp"
#include "lilad/training.hpp"
#include "lilad/types.hpp"

namespace lilad {

struct StableLinearConfig {
  double margin = 1e-3;  // spectral norm is kept at or below 1 - margin
  int max_iters = 5000;
  double tol = 1e-12;    // Frobenius movement per iterate
};

struct StableLinear {
  Mat a;           // x_{k+1} = a x_k
  int iters = 0;   // projected-gradient iterations after the warm start
  double loss = 0; // mean squared residual on the fitting pairs
};

// Least-squares linear dynamics constrained to the spectral-norm ball of
// radius 1 - margin: minimum-norm solve, singular-value clamp, then projected
// gradient descent to the constrained optimum.  The bound makes every
// trajectory of the fitted map contract by at least (1 - margin) per step.
StableLinear fit_stable_linear(const std::vector<StatePair>& pairs,
                               const StableLinearConfig& cfg = {});

Vec stable_linear_predict(const StableLinear& m, const Vec& x);

double spectral_norm(const Mat& a);

// The ablation: the same dynamics transformer with the stability penalty off
// and the schedule collapsed to a single dynamics phase.
TrainConfig plain_icl_config(TrainConfig cfg);

}  // namespace lilad
