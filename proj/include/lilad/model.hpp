#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lilad/data_pool.hpp"
#include "lilad/tensor.hpp"

namespace lilad {

struct ArchConfig {
  int state_dim = 2;
  int embed_dim = 32;
  int num_blocks = 2;
  int num_heads = 2;
  int max_context = 32;
  int mlp_mult = 4;
};

// output warping constants for the certificate head
struct WarpConfig {
  double c = 10.0;
  double delta = 0.1;
  double eps = 1e-3;
};

// decoder-only transformer over interleaved (x, f(x)) token sequences
class TransformerCore {
 public:
  TransformerCore(const ArchConfig& arch, int out_dim, std::string prefix,
                  std::uint64_t seed);

  // predict at the query position only -> 1 x out_dim
  Tensor forward_last(Tape& t, const std::vector<StatePair>& ctx,
                      Tensor query_row, bool trainable = true);
  Tensor forward_last(Tape& t, const std::vector<StatePair>& ctx,
                      const Vec& query, bool trainable = true);

  // predictions at every x-token position -> (|ctx|+1) x out_dim;
  // row i is the prediction for pair i given pairs 0..i-1
  Tensor forward_all(Tape& t, const std::vector<StatePair>& ctx,
                     const Vec& query, bool trainable = true);

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const ArchConfig& arch() const { return arch_; }
  int out_dim() const { return out_dim_; }
  const std::string& prefix() const { return prefix_; }

 private:
  Tensor tokens(Tape& t, const std::vector<StatePair>& ctx, Tensor query_row,
               bool trainable);
  Tensor encode(Tape& t, const std::vector<StatePair>& ctx, Tensor query_row,
                bool trainable);  // blocks + final LN -> T x E
  Tensor lf(Tape& t, const std::string& name, bool trainable);

  ArchConfig arch_;
  int out_dim_;
  std::string prefix_;
  ParamSet params_;
};

// caches the anchor pass V_raw(0 | ctx) within one tape + context
struct LyapCache {
  Tensor raw0;  // invalid until first use
};

Tensor dynamics_predict(Tape& t, TransformerCore& dyn,
                        const std::vector<StatePair>& ctx, Tensor query_row,
                        bool trainable = true);
Tensor dynamics_predict(Tape& t, TransformerCore& dyn,
                        const std::vector<StatePair>& ctx, const Vec& query,
                        bool trainable = true);

// V(q|ctx) = smoothed_relu(c tanh(raw(q)) - c tanh(raw(0)), delta) + eps |q|^2
Tensor lyapunov_value(Tape& t, TransformerCore& lyap, const WarpConfig& w,
                      const std::vector<StatePair>& ctx, Tensor query_row,
                      bool trainable = true, LyapCache* cache = nullptr);
Tensor lyapunov_value(Tape& t, TransformerCore& lyap, const WarpConfig& w,
                      const std::vector<StatePair>& ctx, const Vec& query,
                      bool trainable = true, LyapCache* cache = nullptr);

// dynamics model G and certificate V trained jointly over one task pool
struct JointModel {
  ArchConfig arch;
  WarpConfig warp;
  TransformerCore dyn;
  TransformerCore lyap;
  std::map<std::string, std::string> meta;  // config snapshot, free-form

  JointModel(const ArchConfig& a, const WarpConfig& w, std::uint64_t seed);
};

void save_checkpoint(const JointModel& m, const std::string& path);
JointModel load_checkpoint(const std::string& path);

}  // namespace lilad
