#include "lilad/tensor.hpp"

#include <cassert>
#include <cmath>
#include <cstdio>

#include "lilad/rng.hpp"

namespace lilad {

namespace {

std::string shape_str(const Mat& m) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "(%ld,%ld)", static_cast<long>(m.rows()),
                static_cast<long>(m.cols()));
  return buf;
}

void check_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape())
    throw ContractError("tensor op across different tapes");
}

#ifndef NDEBUG
void debug_check_finite(const Mat& m) { assert(m.allFinite()); }
#else
void debug_check_finite(const Mat&) {}
#endif

}  // namespace

const Mat& Tensor::value() const { return tape_->node(index_).value; }
bool Tensor::requires_grad() const { return tape_->node(index_).requires_grad; }

double Tensor::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw ContractError("scalar() on tensor of shape " + shape_str(v));
  return v(0, 0);
}

int Tape::emplace(Mat value, bool requires_grad, std::function<void(Tape&)> backprop) {
  debug_check_finite(value);
  nodes_.push_back(TapeNode{std::move(value), Mat(), std::move(backprop), nullptr, requires_grad});
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::grad(int i) {
  TapeNode& n = nodes_[static_cast<std::size_t>(i)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Tensor Tape::constant(Mat m) { return Tensor(this, emplace(std::move(m), false, nullptr)); }

Tensor Tape::constant_row(const Vec& v) {
  Mat m(1, v.size());
  m.row(0) = v.transpose();
  return constant(std::move(m));
}

Tensor Tape::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tape::leaf(Parameter& p, bool trainable) {
  Parameter* pp = &p;
  int idx = emplace(p.value, trainable, nullptr);
  if (trainable) {
    node(idx).backprop = [idx, pp](Tape& t) { pp->grad += t.node(idx).grad; };
    node(idx).param = pp;
  }
  return Tensor(this, idx);
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("tape already consumed by a backward pass; reset() first");
  if (loss.tape() != this) throw ContractError("backward: loss lives on another tape");
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got shape " +
                                            shape_str(loss.value()));
  consumed_ = true;
  grad(loss.index()).setConstant(1.0);
  for (int i = loss.index(); i >= 0; --i) {
    TapeNode& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backprop) continue;
    n.backprop(*this);
  }
}

// ---- ops ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Mat out;
  enum { kSame, kRow, kScalar } mode;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    mode = kSame;
    out = av + bv;
  } else if (bv.rows() == 1 && bv.cols() == av.cols()) {
    mode = kRow;
    out = av.rowwise() + bv.row(0);
  } else if (bv.size() == 1) {
    mode = kScalar;
    out = av.array() + bv(0, 0);
  } else {
    throw DimensionError("add: incompatible shapes " + shape_str(av) + " and " + shape_str(bv));
  }
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.index(), ib = b.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    int m = mode;
    t.node(idx).backprop = [idx, ia, ib, m](Tape& tp) {
      const Mat& g = tp.node(idx).grad;
      if (tp.node(ia).requires_grad) tp.grad(ia) += g;
      if (tp.node(ib).requires_grad) {
        if (m == kSame) tp.grad(ib) += g;
        else if (m == kRow) tp.grad(ib).row(0) += g.colwise().sum();
        else tp.grad(ib)(0, 0) += g.sum();
      }
    };
  }
  return Tensor(&t, idx);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw DimensionError("sub: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.index(), ib = b.index();
  int idx = t.emplace(av - bv, rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, ib](Tape& tp) {
      const Mat& g = tp.node(idx).grad;
      if (tp.node(ia).requires_grad) tp.grad(ia) += g;
      if (tp.node(ib).requires_grad) tp.grad(ib) -= g;
    };
  }
  return Tensor(&t, idx);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw DimensionError("mul: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.index(), ib = b.index();
  int idx = t.emplace(av.cwiseProduct(bv), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, ib](Tape& tp) {
      const Mat& g = tp.node(idx).grad;
      if (tp.node(ia).requires_grad) tp.grad(ia) += g.cwiseProduct(tp.node(ib).value);
      if (tp.node(ib).requires_grad) tp.grad(ib) += g.cwiseProduct(tp.node(ia).value);
    };
  }
  return Tensor(&t, idx);
}

Tensor scale(const Tensor& a, double s) {
  Tape& t = *a.tape();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(a.value() * s, rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, s](Tape& tp) {
      if (tp.node(ia).requires_grad) tp.grad(ia) += s * tp.node(idx).grad;
    };
  }
  return Tensor(&t, idx);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: inner dimensions " + shape_str(av) + " x " + shape_str(bv));
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.index(), ib = b.index();
  int idx = t.emplace(av * bv, rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, ib](Tape& tp) {
      const Mat& g = tp.node(idx).grad;
      if (tp.node(ia).requires_grad) tp.grad(ia) += g * tp.node(ib).value.transpose();
      if (tp.node(ib).requires_grad) tp.grad(ib) += tp.node(ia).value.transpose() * g;
    };
  }
  return Tensor(&t, idx);
}

Tensor transpose(const Tensor& a) {
  Tape& t = *a.tape();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(a.value().transpose(), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia](Tape& tp) {
      if (tp.node(ia).requires_grad) tp.grad(ia) += tp.node(idx).grad.transpose();
    };
  }
  return Tensor(&t, idx);
}

Tensor slice_rows(const Tensor& a, int r0, int n) {
  Tape& t = *a.tape();
  const Mat& av = a.value();
  if (r0 < 0 || n < 1 || r0 + n > av.rows())
    throw DimensionError("slice_rows out of range on " + shape_str(av));
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(av.middleRows(r0, n), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, r0, n](Tape& tp) {
      if (tp.node(ia).requires_grad)
        tp.grad(ia).middleRows(r0, n) += tp.node(idx).grad;
    };
  }
  return Tensor(&t, idx);
}

Tensor slice_cols(const Tensor& a, int c0, int n) {
  Tape& t = *a.tape();
  const Mat& av = a.value();
  if (c0 < 0 || n < 1 || c0 + n > av.cols())
    throw DimensionError("slice_cols out of range on " + shape_str(av));
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(av.middleCols(c0, n), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, c0, n](Tape& tp) {
      if (tp.node(ia).requires_grad)
        tp.grad(ia).middleCols(c0, n) += tp.node(idx).grad;
    };
  }
  return Tensor(&t, idx);
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.cols())
    throw DimensionError("concat_rows: column mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Mat out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  bool rg = a.requires_grad() || b.requires_grad();
  int ia = a.index(), ib = b.index();
  int ra = static_cast<int>(av.rows()), rb = static_cast<int>(bv.rows());
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, ib, ra, rb](Tape& tp) {
      const Mat& g = tp.node(idx).grad;
      if (tp.node(ia).requires_grad) tp.grad(ia) += g.topRows(ra);
      if (tp.node(ib).requires_grad) tp.grad(ib) += g.bottomRows(rb);
    };
  }
  return Tensor(&t, idx);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty list");
  Tape& t = *parts[0].tape();
  long rows = parts[0].value().rows();
  long cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p);
    if (p.value().rows() != rows)
      throw DimensionError("concat_cols: row mismatch");
    cols += p.value().cols();
    rg = rg || p.requires_grad();
  }
  Mat out(rows, cols);
  std::vector<int> idxs;
  std::vector<int> offs;
  long c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.value().cols()) = p.value();
    idxs.push_back(p.index());
    offs.push_back(static_cast<int>(c));
    c += p.value().cols();
  }
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, idxs, offs](Tape& tp) {
      const Mat& g = tp.node(idx).grad;
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        if (!tp.node(idxs[k]).requires_grad) continue;
        long w = tp.node(idxs[k]).value.cols();
        tp.grad(idxs[k]) += g.middleCols(offs[k], w);
      }
    };
  }
  return Tensor(&t, idx);
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  Tape& t = *table.tape();
  const Mat& tv = table.value();
  Mat out(static_cast<long>(idx.size()), tv.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= tv.rows())
      throw DimensionError("gather_rows: index out of range");
    out.row(static_cast<long>(k)) = tv.row(idx[k]);
  }
  bool rg = table.requires_grad();
  int it = table.index();
  int nidx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    std::vector<int> ix = idx;
    t.node(nidx).backprop = [nidx, it, ix](Tape& tp) {
      if (!tp.node(it).requires_grad) return;
      const Mat& g = tp.node(nidx).grad;
      Mat& tg = tp.grad(it);
      for (std::size_t k = 0; k < ix.size(); ++k)
        tg.row(ix[k]) += g.row(static_cast<long>(k));
    };
  }
  return Tensor(&t, nidx);
}

Tensor tanh(const Tensor& a) {
  Tape& t = *a.tape();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(a.value().array().tanh().matrix(), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia](Tape& tp) {
      if (!tp.node(ia).requires_grad) return;
      const Mat& y = tp.node(idx).value;
      tp.grad(ia).array() += tp.node(idx).grad.array() * (1.0 - y.array().square());
    };
  }
  return Tensor(&t, idx);
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  Tape& t = *a.tape();
  const Mat& x = a.value();
  Mat u = (kGeluC * (x.array() + kGeluA * x.array().cube())).matrix();
  Mat th = u.array().tanh().matrix();
  Mat out = (0.5 * x.array() * (1.0 + th.array())).matrix();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, th = std::move(th)](Tape& tp) {
      if (!tp.node(ia).requires_grad) return;
      const Mat& x = tp.node(ia).value;
      auto sech2 = 1.0 - th.array().square();
      auto du = kGeluC * (1.0 + 3.0 * kGeluA * x.array().square());
      auto dy = 0.5 * (1.0 + th.array()) + 0.5 * x.array() * sech2 * du;
      tp.grad(ia).array() += tp.node(idx).grad.array() * dy;
    };
  }
  return Tensor(&t, idx);
}

Tensor smoothed_relu(const Tensor& a, double delta) {
  if (!(delta > 0.0)) throw ParameterError("smoothed_relu: delta must be positive");
  Tape& t = *a.tape();
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (long i = 0; i < x.size(); ++i) {
    double v = x.reshaped()(i);
    out.reshaped()(i) = v <= 0.0 ? 0.0 : (v < delta ? v * v / (2.0 * delta) : v - delta / 2.0);
  }
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, delta](Tape& tp) {
      if (!tp.node(ia).requires_grad) return;
      const Mat& x = tp.node(ia).value;
      const Mat& g = tp.node(idx).grad;
      Mat& ag = tp.grad(ia);
      for (long i = 0; i < x.size(); ++i) {
        double v = x.reshaped()(i);
        double d = v <= 0.0 ? 0.0 : (v < delta ? v / delta : 1.0);
        ag.reshaped()(i) += g.reshaped()(i) * d;
      }
    };
  }
  return Tensor(&t, idx);
}

Tensor hinge(const Tensor& a) {
  Tape& t = *a.tape();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(a.value().cwiseMax(0.0), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia](Tape& tp) {
      if (!tp.node(ia).requires_grad) return;
      const Mat& x = tp.node(ia).value;
      tp.grad(ia).array() +=
          tp.node(idx).grad.array() * (x.array() > 0.0).cast<double>();
    };
  }
  return Tensor(&t, idx);
}

Tensor softmax_lastdim(const Tensor& a) {
  Tape& t = *a.tape();
  const Mat& x = a.value();
  Mat out(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double m = x.row(r).maxCoeff();
    double s = 0.0;
    for (long c = 0; c < x.cols(); ++c) {
      // scalar std::exp so masked scores underflow to exactly zero
      double e = std::exp(x(r, c) - m);
      out(r, c) = e;
      s += e;
    }
    out.row(r) /= s;
  }
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia](Tape& tp) {
      if (!tp.node(ia).requires_grad) return;
      const Mat& y = tp.node(idx).value;
      const Mat& g = tp.node(idx).grad;
      Mat& ag = tp.grad(ia);
      for (long r = 0; r < y.rows(); ++r) {
        double dot = y.row(r).dot(g.row(r));
        ag.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
      }
    };
  }
  return Tensor(&t, idx);
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  check_same_tape(a, gain);
  check_same_tape(a, bias);
  Tape& t = *a.tape();
  const Mat& x = a.value();
  const Mat& g = gain.value();
  const Mat& b = bias.value();
  if (g.rows() != 1 || g.cols() != x.cols() || b.rows() != 1 || b.cols() != x.cols())
    throw DimensionError("layer_norm: gain/bias must be (1," + std::to_string(x.cols()) + ")");
  long R = x.rows(), C = x.cols();
  Mat xhat(R, C);
  Vec inv_s(R);
  for (long r = 0; r < R; ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(C);
    double is = 1.0 / std::sqrt(var + eps);
    inv_s(r) = is;
    xhat.row(r) = ((x.row(r).array() - mu) * is).matrix();
  }
  Mat out(R, C);
  for (long r = 0; r < R; ++r)
    out.row(r) = (xhat.row(r).array() * g.row(0).array() + b.row(0).array()).matrix();
  bool rg = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  int ia = a.index(), ig = gain.index(), ib = bias.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, ig, ib, xhat = std::move(xhat),
                            inv_s = std::move(inv_s)](Tape& tp) {
      const Mat& dy = tp.node(idx).grad;
      const Mat& g = tp.node(ig).value;
      long R = dy.rows(), C = dy.cols();
      if (tp.node(ig).requires_grad)
        tp.grad(ig).row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
      if (tp.node(ib).requires_grad) tp.grad(ib).row(0) += dy.colwise().sum();
      if (tp.node(ia).requires_grad) {
        Mat& ag = tp.grad(ia);
        for (long r = 0; r < R; ++r) {
          Eigen::Array<double, 1, Eigen::Dynamic> gy =
              dy.row(r).array() * g.row(0).array();
          double m1 = gy.sum() / static_cast<double>(C);
          double m2 = (gy * xhat.row(r).array()).sum() / static_cast<double>(C);
          ag.row(r).array() += (gy - m1 - xhat.row(r).array() * m2) * inv_s(r);
        }
      }
    };
  }
  return Tensor(&t, idx);
}

Tensor sum(const Tensor& a) {
  Tape& t = *a.tape();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia](Tape& tp) {
      if (tp.node(ia).requires_grad)
        tp.grad(ia).array() += tp.node(idx).grad(0, 0);
    };
  }
  return Tensor(&t, idx);
}

Tensor mean_all(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sqnorm(const Tensor& a) {
  Tape& t = *a.tape();
  Mat out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia](Tape& tp) {
      if (tp.node(ia).requires_grad)
        tp.grad(ia) += 2.0 * tp.node(idx).grad(0, 0) * tp.node(ia).value;
    };
  }
  return Tensor(&t, idx);
}

Tensor l2norm(const Tensor& a) {
  Tape& t = *a.tape();
  double nrm = a.value().norm();
  Mat out(1, 1);
  out(0, 0) = nrm;
  bool rg = a.requires_grad();
  int ia = a.index();
  int idx = t.emplace(std::move(out), rg, nullptr);
  if (rg) {
    t.node(idx).backprop = [idx, ia, nrm](Tape& tp) {
      if (!tp.node(ia).requires_grad || nrm == 0.0) return;
      tp.grad(ia) += (tp.node(idx).grad(0, 0) / nrm) * tp.node(ia).value;
    };
  }
  return Tensor(&t, idx);
}

Vec row_vector(const Tensor& a) {
  const Mat& v = a.value();
  if (v.rows() != 1) throw ContractError("row_vector: tensor has " +
                                         std::to_string(v.rows()) + " rows");
  return v.row(0).transpose();
}

// ---- optimizer ----

void zero_grads(const std::vector<Parameter*>& params) {
  for (auto* p : params) p->zero_grad();
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (auto* p : params) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

void clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  double n = global_grad_norm(params);
  if (n > max_norm && n > 0.0) {
    double f = max_norm / n;
    for (auto* p : params) p->grad *= f;
  }
}

void optimizer_step(const std::vector<Parameter*>& params, OptimizerState& st) {
  for (auto* p : params) {
    if (!p->grad.allFinite())
      throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  }
  st.step += 1;
  if (st.rule == OptimizerState::Rule::kSgd) {
    for (auto* p : params) p->value -= st.lr * p->grad;
    return;
  }
  // Adam with bias correction.
  double b1t = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  double b2t = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (auto* p : params) {
    auto it = st.moments.find(p);
    if (it == st.moments.end()) {
      it = st.moments
               .emplace(p, std::make_pair(Mat::Zero(p->rows(), p->cols()),
                                          Mat::Zero(p->rows(), p->cols())))
               .first;
    }
    Mat& m = it->second.first;
    Mat& v = it->second.second;
    m = st.beta1 * m + (1.0 - st.beta1) * p->grad;
    v = st.beta2 * v + (1.0 - st.beta2) * p->grad.cwiseProduct(p->grad);
    Mat mhat = m / b1t;
    Mat vhat = v / b2t;
    p->value.array() -= st.lr * mhat.array() / (vhat.array().sqrt() + st.eps);
  }
}

// ---- gradient checking ----

double finite_diff_check(const std::function<Tensor(Tape&)>& build_loss,
                         const std::vector<Parameter*>& params, double h,
                         int coords_per_param, std::uint64_t seed) {
  zero_grads(params);
  {
    Tape tape;
    Tensor loss = build_loss(tape);
    tape.backward(loss);
  }
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape tape;
    return build_loss(tape).scalar();
  };

  Rng rng(seed);
  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    long n = p->size();
    int reps = static_cast<int>(std::min<long>(coords_per_param, n));
    for (int k = 0; k < reps; ++k) {
      long c = static_cast<long>(rng.randint(static_cast<std::uint64_t>(n)));
      double saved = p->value.reshaped()(c);
      p->value.reshaped()(c) = saved + h;
      double fp = eval();
      p->value.reshaped()(c) = saved - h;
      double fm = eval();
      p->value.reshaped()(c) = saved;
      double fd = (fp - fm) / (2.0 * h);
      double a = analytic[pi].reshaped()(c);
      double rel = std::abs(a - fd) / (std::abs(a) + 1e-8);
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace lilad
