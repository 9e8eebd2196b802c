#include "lilad/baselines.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "lilad/errors.hpp"

namespace lilad {

namespace {

Eigen::MatrixXd clamp_spectrum(const Eigen::MatrixXd& a, double cap) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd sv = svd.singularValues();
  bool touched = false;
  for (long i = 0; i < sv.size(); ++i)
    if (sv(i) > cap) {
      sv(i) = cap;
      touched = true;
    }
  if (!touched) return a;
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace

double spectral_norm(const Mat& a) {
  Eigen::MatrixXd m = a;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

StableLinear fit_stable_linear(const std::vector<StatePair>& pairs,
                               const StableLinearConfig& cfg) {
  if (pairs.empty()) throw DataError("stable-linear fit needs at least one pair");
  if (cfg.margin <= 0 || cfg.margin >= 1)
    throw ParameterError("margin must lie in (0, 1)");
  if (cfg.max_iters < 0) throw ParameterError("max_iters must be nonnegative");
  const long d = pairs[0].x.size();
  for (const auto& p : pairs)
    if (p.x.size() != d || p.y.size() != d)
      throw DimensionError("inconsistent pair dimensions in stable-linear fit");

  const long n = static_cast<long>(pairs.size());
  Eigen::MatrixXd x(d, n), y(d, n);
  for (long i = 0; i < n; ++i) {
    x.col(i) = pairs[static_cast<std::size_t>(i)].x;
    y.col(i) = pairs[static_cast<std::size_t>(i)].y;
  }
  const double cap = 1.0 - cfg.margin;

  // warm start: minimum-norm least squares, projected into the ball
  Eigen::BDCSVD<Eigen::MatrixXd> ls(x.transpose(),
                                    Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd a = clamp_spectrum(ls.solve(y.transpose()).transpose(), cap);

  const Eigen::MatrixXd cov = (x * x.transpose()) / static_cast<double>(n);
  const double lip =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov).eigenvalues().maxCoeff();

  StableLinear out;
  if (lip > 0) {
    const double step = 1.0 / lip;
    for (int it = 0; it < cfg.max_iters; ++it) {
      Eigen::MatrixXd grad = (a * x - y) * x.transpose() / static_cast<double>(n);
      Eigen::MatrixXd next = clamp_spectrum(a - step * grad, cap);
      const double move = (next - a).norm();
      a = next;
      out.iters = it + 1;
      if (move <= cfg.tol * std::max(1.0, a.norm())) break;
    }
  }
  out.a = a;
  out.loss = (a * x - y).squaredNorm() / static_cast<double>(n);
  return out;
}

Vec stable_linear_predict(const StableLinear& m, const Vec& x) {
  if (x.size() != m.a.cols())
    throw DimensionError("state dimension does not match the fitted map");
  return m.a * x;
}

TrainConfig plain_icl_config(TrainConfig cfg) {
  cfg.loss.lambda = 0.0;
  cfg.k_switch = cfg.steps;  // one long dynamics phase, certificate untouched
  return cfg;
}

}  // namespace lilad
