#pragma once

// Reverse-mode autodiff over dense float64 matrices.  Define-by-run: every
// forward op appends a node to a Tape; nodes are created in topological order
// so the backward pass is a single reverse sweep.  Rank <= 2 throughout
// (scalars are 1x1, vectors are 1xN rows); buffers are row-major.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lilad/errors.hpp"
#include "lilad/types.hpp"

namespace lilad {

class Tape;

// Persistent trainable weight.  Lives outside any tape; gradients accumulate
// here during Tape::backward through leaf nodes.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter(std::string n, int rows, int cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
  long size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

// Owning container for a model's parameters, iterable in insertion order
// (checkpoint blocks are written in this order).
struct ParamSet {
  std::vector<std::unique_ptr<Parameter>> items;

  Parameter& add(std::string name, int rows, int cols) {
    items.push_back(std::make_unique<Parameter>(std::move(name), rows, cols));
    return *items.back();
  }
  Parameter* find(std::string_view name) const {
    for (const auto& p : items)
      if (p->name == name) return p.get();
    return nullptr;
  }
  std::vector<Parameter*> all() const {
    std::vector<Parameter*> out;
    out.reserve(items.size());
    for (const auto& p : items) out.push_back(p.get());
    return out;
  }
  long total_size() const {
    long n = 0;
    for (const auto& p : items) n += p->size();
    return n;
  }
};

// Lightweight handle into a tape.  Valid until the tape is reset/destroyed.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int index) : tape_(tape), index_(index) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int index() const { return index_; }

  const Mat& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
  long size() const { return value().size(); }
  std::vector<int> shape() const { return {rows(), cols()}; }
  bool requires_grad() const;

  // Scalar read; contract error unless the tensor is 1x1.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
};

struct TapeNode {
  Mat value;
  Mat grad;  // allocated lazily during backward
  std::function<void(Tape&)> backprop;
  Parameter* param = nullptr;  // set for leaves bound to a Parameter
  bool requires_grad = false;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Mat m);
  Tensor constant_row(const Vec& v);  // 1xN
  Tensor scalar(double v);
  // Leaf bound to a Parameter.  trainable=false freezes it: the value is
  // still read, but no gradient flows into the Parameter and downstream
  // nodes do not mark it as an ancestor needing grad.
  Tensor leaf(Parameter& p, bool trainable = true);

  // Differentiating twice through one graph is a bug; the tape locks after
  // its first backward pass until reset().
  void backward(const Tensor& loss);

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }
  int size() const { return static_cast<int>(nodes_.size()); }
  bool consumed() const { return consumed_; }

  TapeNode& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  const TapeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  // Gradient buffer of node i, allocated (zero) on first touch.
  Mat& grad(int i);

  int emplace(Mat value, bool requires_grad, std::function<void(Tape&)> backprop);

 private:
  std::vector<TapeNode> nodes_;
  bool consumed_ = false;
};

// ---- forward ops (each records its backward rule) ----

// Elementwise add.  Also accepts b of shape (1,c) against a of shape (r,c)
// (row broadcast, for biases) and b of shape (1,1) (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);   // same-shape only
Tensor mul(const Tensor& a, const Tensor& b);   // same-shape elementwise
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor slice_rows(const Tensor& a, int r0, int n);
Tensor slice_cols(const Tensor& a, int c0, int n);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Rows of `table` at `idx` (duplicates allowed); backward scatter-adds.
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);

Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
// Smoothed rectifier: 0 for x<=0, x^2/(2*delta) on (0,delta), x-delta/2 above.
Tensor smoothed_relu(const Tensor& a, double delta);
Tensor hinge(const Tensor& a);  // max(x, 0), subgradient 0 at 0

// Row-wise softmax with max-subtraction stabilization.
Tensor softmax_lastdim(const Tensor& a);
// Row-wise layer norm; gain/bias are (1,c).
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps);

Tensor sum(const Tensor& a);     // 1x1
Tensor mean_all(const Tensor& a);
Tensor sqnorm(const Tensor& a);  // sum of squares, 1x1
Tensor l2norm(const Tensor& a);  // sqrt(sqnorm), subgradient 0 at 0

// Value of a (1,n) tensor as a plain vector.
Vec row_vector(const Tensor& a);

// ---- optimizer ----

struct OptimizerState {
  enum class Rule { kSgd, kAdam };
  Rule rule = Rule::kSgd;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  // First/second moment buffers, same shape as their parameter.
  std::unordered_map<const Parameter*, std::pair<Mat, Mat>> moments;
};

void zero_grads(const std::vector<Parameter*>& params);
double global_grad_norm(const std::vector<Parameter*>& params);
// Rescales gradients in place so the global L2 norm is at most max_norm.
void clip_global_norm(const std::vector<Parameter*>& params, double max_norm);
// In-place update from Parameter::grad.  NaN/Inf gradient -> TrainingError
// naming the offending parameter.
void optimizer_step(const std::vector<Parameter*>& params, OptimizerState& state);

// ---- gradient checking ----

// Compares backward-pass gradients of build_loss against central differences
// with step h on up to coords_per_param coordinates of each parameter
// (sampled with the given seed).  Returns the max over sampled coordinates of
// |analytic - fd| / (|analytic| + 1e-8).
double finite_diff_check(const std::function<Tensor(Tape&)>& build_loss,
                         const std::vector<Parameter*>& params, double h,
                         int coords_per_param, std::uint64_t seed);

}  // namespace lilad
