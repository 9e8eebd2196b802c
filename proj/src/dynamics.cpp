#include "lilad/dynamics.hpp"

#include <cmath>

namespace lilad {

std::string system_name(SystemId id) {
  switch (id) {
    case SystemId::kSp: return "sp";
    case SystemId::kDp: return "dp";
    case SystemId::kMg: return "mg";
    case SystemId::kSeir: return "seir";
    case SystemId::kPdeSm: return "pde_sm";
  }
  throw ContractError("unknown SystemId");
}

SystemId system_from_name(const std::string& name) {
  if (name == "sp") return SystemId::kSp;
  if (name == "dp") return SystemId::kDp;
  if (name == "mg") return SystemId::kMg;
  if (name == "seir") return SystemId::kSeir;
  if (name == "pde_sm") return SystemId::kPdeSm;
  throw UsageError("unknown system '" + name + "' (expected sp|dp|mg|seir|pde_sm)");
}

MicrogridNetwork MicrogridNetwork::ring5() {
  MicrogridNetwork net;
  const int n = 5;
  net.y_mag = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    net.y_mag(i, j) = net.y_mag(j, i) = 1.0;
  }
  net.gamma_ang = Mat::Constant(n, n, M_PI / 2.0);
  net.g_diag = Vec::Constant(n, 0.1);
  net.e_star = Vec::Ones(n);
  net.delta_star = Vec::Zero(n);
  net.inertia = Vec::Ones(n);
  return net;
}

Vec rhs_simple_pendulum(const Vec& state, double g, double l, double b, double m) {
  if (!(l > 0.0) || !(m > 0.0))
    throw ParameterError("simple pendulum: l and m must be positive");
  Vec d(2);
  d(0) = state(1);
  d(1) = -(g / l) * std::sin(state(0)) - (b / (m * l * l)) * state(1);
  return d;
}

Vec rhs_double_pendulum(const Vec& state, const Vec& p) {
  const double g = p(0), l1 = p(1), l2 = p(2), m1 = p(3), m2 = p(4), b1 = p(5), b2 = p(6);
  if (!(l1 > 0.0) || !(l2 > 0.0) || !(m1 > 0.0) || !(m2 > 0.0))
    throw ParameterError("double pendulum: lengths and masses must be positive");
  const double x1 = state(0), x2 = state(1), x3 = state(2), x4 = state(3);
  const double den = 2.0 * m1 + m2 - m2 * std::cos(2.0 * x1 - 2.0 * x3);
  if (std::abs(den) < 1e-12) {
    throw SingularityError("double pendulum: vanishing denominator at state (" +
                           std::to_string(x1) + ", " + std::to_string(x2) + ", " +
                           std::to_string(x3) + ", " + std::to_string(x4) + ")");
  }
  Vec d(4);
  d(0) = x2;
  d(1) = (-g * (2.0 * m1 + m2) * std::sin(x1) - m2 * g * std::sin(x1 - 2.0 * x3) -
          2.0 * std::sin(x1 - x3) * m2 *
              (x4 * x4 * l2 + x2 * x2 * l1 * std::cos(x1 - x3))) /
             (l1 * den) -
         b1 * x2;
  d(2) = x4;
  d(3) = (2.0 * std::sin(x1 - x3) *
          (x2 * x2 * l1 * (m1 + m2) + g * (m1 + m2) * std::cos(x1) +
           x4 * x4 * l2 * m2 * std::cos(x1 - x3))) /
             (l2 * den) -
         b2 * x4;
  return d;
}

namespace {

// Active power injections at absolute angles delta.
Vec mg_power(const Vec& delta, const MicrogridNetwork& net) {
  const int n = static_cast<int>(delta.size());
  Vec p(n);
  for (int i = 0; i < n; ++i) {
    double s = net.e_star(i) * net.e_star(i) * net.g_diag(i);
    for (int k = 0; k < n; ++k) {
      if (k == i || net.y_mag(i, k) == 0.0) continue;
      s += net.e_star(i) * net.e_star(k) * net.y_mag(i, k) *
           std::cos(delta(i) - delta(k) - net.gamma_ang(i, k));
    }
    p(i) = s;
  }
  return p;
}

}  // namespace

Vec rhs_microgrid(const Vec& delta_dev, const Vec& droop, const MicrogridNetwork& net) {
  const int n = static_cast<int>(delta_dev.size());
  for (int i = 0; i < n; ++i)
    if (!(net.inertia(i) > 0.0))
      throw ParameterError("microgrid: tracking time constants must be positive");
  Vec p_star = mg_power(net.delta_star, net);
  Vec p = mg_power(net.delta_star + delta_dev, net);
  Vec d(n);
  for (int i = 0; i < n; ++i)
    d(i) = (-droop(i) * delta_dev(i) - (p(i) - p_star(i))) / net.inertia(i);
  return d;
}

Vec rhs_seir_shifted(const Vec& s, const Vec& p, const SeirFixed& f) {
  const double b11 = p(0), b22 = p(1), g1 = p(2), g2 = p(3);
  const double S1 = s(0), E1 = s(1), I1 = s(2);
  const double S2 = s(4), E2 = s(5), I2 = s(6);
  Vec d(8);
  d(0) = -b11 * S1 * I1 - f.beta12 * S1 * I2 - f.v1 * S1;
  d(1) = b11 * S1 * I1 + f.beta12 * S1 * I2 - f.sigma * E1;
  d(2) = f.sigma * E1 - g1 * I1;
  d(3) = g1 * I1 + f.v1 * S1;
  d(4) = -b22 * S2 * I2 - f.beta21 * S2 * I1 - f.v2 * S2;
  d(5) = b22 * S2 * I2 + f.beta21 * S2 * I1 - f.sigma * E2;
  d(6) = f.sigma * E2 - g2 * I2;
  d(7) = g2 * I2 + f.v2 * S2;
  return d;
}

const Mat& pde_laplacian() {
  static const Mat lap = [] {
    const int n = 10;
    Mat l = Mat::Zero(n * n, n * n);
    auto at = [n](int r, int c) { return r * n + c; };
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        int i = at(r, c);
        const int dr[] = {-1, 1, 0, 0};
        const int dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          int rr = r + dr[k], cc = c + dc[k];
          if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;  // zero-flux edge
          l(i, at(rr, cc)) = 1.0;
          l(i, i) -= 1.0;
        }
      }
    }
    return l;
  }();
  return lap;
}

Vec rhs_pde_rd(const Vec& u, double alpha_diff) {
  if (!(alpha_diff > 0.0)) throw ParameterError("pde_sm: diffusion coefficient must be positive");
  Vec d = alpha_diff * (pde_laplacian() * u);
  d.array() -= u.array() * (1.0 + u.array().square());
  return d;
}

namespace {

Vec sample_box(Rng& rng, const std::vector<std::pair<double, double>>& box) {
  Vec x(static_cast<long>(box.size()));
  for (std::size_t i = 0; i < box.size(); ++i)
    x(static_cast<long>(i)) = rng.uniform(box[i].first, box[i].second);
  return x;
}

Vec sample_seir_state(Rng& rng) {
  Vec x(8);
  for (int p = 0; p < 2; ++p) {
    double S = rng.uniform(0.5, 0.99);
    double E = rng.uniform(0.0, 0.1);
    double I = rng.uniform(0.0, 0.1);
    x(4 * p + 0) = S;
    x(4 * p + 1) = E;
    x(4 * p + 2) = I;
    x(4 * p + 3) = -(S + E + I);  // R - 1 under total mass 1
  }
  return x;
}

// Smooth random field: superposition of three Gaussian bumps, rescaled into
// [-2, 2] if any bump stack exceeds it.
Vec sample_pde_state(Rng& rng) {
  const int n = 10;
  Vec u = Vec::Zero(n * n);
  for (int b = 0; b < 3; ++b) {
    double amp = rng.uniform(-2.0, 2.0);
    double cr = rng.uniform(0.0, 9.0);
    double cc = rng.uniform(0.0, 9.0);
    double w = rng.uniform(1.5, 3.0);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        u(r * n + c) += amp * std::exp(-((r - cr) * (r - cr) + (c - cc) * (c - cc)) /
                                       (2.0 * w * w));
  }
  double m = u.cwiseAbs().maxCoeff();
  if (m > 2.0) u *= 2.0 / m;
  return u;
}

Vec vec_of(std::initializer_list<double> v) {
  Vec x(static_cast<long>(v.size()));
  long i = 0;
  for (double e : v) x(i++) = e;
  return x;
}

bool all_positive(const Vec& p) {
  return (p.array() > 0.0).all();
}

}  // namespace

SystemSpec make_system(SystemId id) {
  SystemSpec s;
  s.id = id;
  s.name = system_name(id);
  switch (id) {
    case SystemId::kSp: {
      s.state_dim = 2;
      s.param_mean = vec_of({9.8, 3.0, 0.5});  // (g, l, b); m = 1
      s.param_cov_diag = vec_of({1.0, 1.0, 0.01});
      s.dt = 0.01;
      s.rhs = [](const Vec& x, const Vec& p) {
        return rhs_simple_pendulum(x, p(0), p(1), p(2), 1.0);
      };
      s.physical = all_positive;
      s.sample_initial_state = [](Rng& rng) {
        return sample_box(rng, {{-M_PI / 2, M_PI / 2}, {-1.0, 1.0}});
      };
      break;
    }
    case SystemId::kDp: {
      s.state_dim = 4;
      s.param_mean = vec_of({9.8, 3.0, 3.0, 1.0, 1.0, 0.5, 0.5});  // (g,l1,l2,m1,m2,b1,b2)
      s.param_cov_diag = vec_of({0.5, 0.5, 0.5, 0.2, 0.2, 0.01, 0.01});
      s.dt = 0.01;
      s.rhs = [](const Vec& x, const Vec& p) { return rhs_double_pendulum(x, p); };
      s.physical = all_positive;
      s.sample_initial_state = [](Rng& rng) {
        // angles in +-pi/4, velocities in +-0.5 (state is interleaved)
        return sample_box(rng, {{-M_PI / 4, M_PI / 4},
                                {-0.5, 0.5},
                                {-M_PI / 4, M_PI / 4},
                                {-0.5, 0.5}});
      };
      break;
    }
    case SystemId::kMg: {
      s.state_dim = 5;
      s.param_mean = Vec::Constant(5, 2.0);  // droop coefficients
      s.param_cov_diag = Vec::Constant(5, 0.2);
      s.dt = 0.01;
      s.rhs = [net = MicrogridNetwork::ring5()](const Vec& x, const Vec& p) {
        return rhs_microgrid(x, p, net);
      };
      s.physical = all_positive;
      s.sample_initial_state = [](Rng& rng) {
        return sample_box(rng, std::vector<std::pair<double, double>>(5, {-0.3, 0.3}));
      };
      break;
    }
    case SystemId::kSeir: {
      s.state_dim = 8;
      s.param_mean = vec_of({0.2, 0.2, 0.75, 0.75});  // (beta11, beta22, gamma1, gamma2)
      s.param_cov_diag = Vec::Constant(4, 0.007);
      s.dt = 0.01;
      s.rhs = [fixed = SeirFixed{}](const Vec& x, const Vec& p) {
        return rhs_seir_shifted(x, p, fixed);
      };
      s.physical = all_positive;
      s.sample_initial_state = sample_seir_state;
      break;
    }
    case SystemId::kPdeSm: {
      s.state_dim = 100;
      s.param_mean = vec_of({1.2});  // diffusion coefficient
      s.param_cov_diag = vec_of({0.3});
      s.dt = 0.001;
      s.rhs = [](const Vec& x, const Vec& p) { return rhs_pde_rd(x, p(0)); };
      s.physical = all_positive;
      s.sample_initial_state = sample_pde_state;
      break;
    }
  }
  s.equilibrium = Vec::Zero(s.state_dim);
  return s;
}

std::vector<ParameterSample> sample_parameters(const SystemSpec& spec, int count,
                                               std::uint64_t seed) {
  if (count < 1) throw ContractError("sample_parameters: count must be >= 1");
  Rng rng(seed);
  std::vector<ParameterSample> out;
  out.reserve(static_cast<std::size_t>(count));
  Vec stdev = spec.param_cov_diag.cwiseSqrt();
  for (int i = 0; i < count; ++i) {
    int rejections = 0;
    for (;;) {
      Vec v(spec.param_dim());
      for (long j = 0; j < v.size(); ++j)
        v(j) = spec.param_mean(j) + stdev(j) * rng.gauss();
      if (spec.physical(v)) {
        out.push_back(ParameterSample{std::move(v), i});
        break;
      }
      if (++rejections > 1000)
        throw DistributionError("sample_parameters: over 1000 consecutive non-physical draws for " +
                                spec.name);
    }
  }
  return out;
}

Vec rk4_step(const std::function<Vec(const Vec&, const Vec&)>& rhs, const Vec& state,
             const Vec& params, double dt) {
  if (!(dt > 0.0)) throw ParameterError("rk4_step: dt must be positive");
  Vec k1 = rhs(state, params);
  Vec k2 = rhs(state + (0.5 * dt) * k1, params);
  Vec k3 = rhs(state + (0.5 * dt) * k2, params);
  Vec k4 = rhs(state + dt * k3, params);
  Vec next = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite())
    throw IntegrationError("rk4_step: non-finite stage (dt=" + std::to_string(dt) + ")");
  return next;
}

Trajectory rollout(const SystemSpec& spec, const Vec& params, const Vec& x0, int num_steps,
                   int param_ref) {
  if (!x0.allFinite()) throw ContractError("rollout: non-finite initial state");
  Trajectory tr;
  tr.dt = spec.dt;
  tr.param_ref = param_ref;
  tr.states.reserve(static_cast<std::size_t>(num_steps) + 1);
  tr.states.push_back(x0);
  for (int k = 0; k < num_steps; ++k)
    tr.states.push_back(rk4_step(spec.rhs, tr.states.back(), params, spec.dt));
  return tr;
}

}  // namespace lilad
