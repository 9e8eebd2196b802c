#pragma once

// The five benchmark systems (continuous-time right-hand sides with
// stochastic parameters, equilibrium at the origin) and RK4 simulation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lilad/errors.hpp"
#include "lilad/rng.hpp"
#include "lilad/types.hpp"

namespace lilad {

enum class SystemId { kSp, kDp, kMg, kSeir, kPdeSm };

std::string system_name(SystemId id);
SystemId system_from_name(const std::string& name);  // UsageError on unknown

// Synthetic admittance configuration for the microgrid network.
struct MicrogridNetwork {
  Mat y_mag;       // |Y_ik|, zero diagonal
  Mat gamma_ang;   // admittance angles gamma_ik
  Vec g_diag;      // self conductances G_ii
  Vec e_star;      // nominal voltage magnitudes (p.u.)
  Vec delta_star;  // nominal angles
  Vec inertia;     // tracking time constants J_i, all > 0

  // Default shipped config: 5-bus ring, |Y|=1.0 on ring edges, lossless
  // angles gamma=pi/2, G_ii=0.1, E*=1.0, delta*=0, J=1.
  static MicrogridNetwork ring5();
};

// SEIR constants that are not part of the stochastic parameter vector.
struct SeirFixed {
  double beta12 = 0.01;
  double beta21 = 0.01;
  double sigma = 0.2;  // incubation rate, shared by both populations
  double v1 = 0.05;    // vaccination rates
  double v2 = 0.05;
};

// ---- right-hand sides ----

// state (theta, dtheta); params g, l, b; point mass m.
Vec rhs_simple_pendulum(const Vec& state, double g, double l, double b, double m);
// state (theta1, dtheta1, theta2, dtheta2); params (g, l1, l2, m1, m2, b1, b2).
Vec rhs_double_pendulum(const Vec& state, const Vec& params);
// state = angle deviations from delta*; params = droop coefficients.
Vec rhs_microgrid(const Vec& delta_dev, const Vec& droop, const MicrogridNetwork& net);
// state (S1,E1,I1,Rt1,S2,E2,I2,Rt2) with Rt = R - 1; params (b11,b22,g1,g2).
Vec rhs_seir_shifted(const Vec& state, const Vec& params, const SeirFixed& fixed);
// state = 100 nodal temperatures on the 10x10 grid; reaction -u(1+u^2).
Vec rhs_pde_rd(const Vec& u, double alpha_diff);

// 5-point graph Laplacian on the 10x10 grid (zero-flux boundary), cached.
const Mat& pde_laplacian();

// ---- system catalog ----

struct SystemSpec {
  SystemId id;
  std::string name;
  int state_dim = 0;
  Vec param_mean;
  Vec param_cov_diag;
  double dt = 0.01;
  Vec equilibrium;
  std::function<Vec(const Vec& state, const Vec& params)> rhs;
  std::function<bool(const Vec& params)> physical;
  std::function<Vec(Rng& rng)> sample_initial_state;

  int param_dim() const { return static_cast<int>(param_mean.size()); }
};

SystemSpec make_system(SystemId id);

struct ParameterSample {
  Vec values;
  int sample_id = -1;
};

// i.i.d. diagonal-Gaussian draws; non-physical draws rejected and resampled.
// More than 1000 consecutive rejections -> DistributionError.
std::vector<ParameterSample> sample_parameters(const SystemSpec& spec, int count,
                                               std::uint64_t seed);

// ---- simulation ----

struct Trajectory {
  std::vector<Vec> states;  // num_steps + 1 entries
  double dt = 0.0;
  int param_ref = -1;
};

Vec rk4_step(const std::function<Vec(const Vec&, const Vec&)>& rhs, const Vec& state,
             const Vec& params, double dt);

Trajectory rollout(const SystemSpec& spec, const Vec& params, const Vec& x0,
                   int num_steps, int param_ref = -1);

}  // namespace lilad
