#include "lilad/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lilad/errors.hpp"
#include "lilad/io.hpp"
#include "lilad/rng.hpp"

namespace lilad {

namespace {

constexpr double kMaskVal = -1e30;
constexpr double kLnEps = 1e-5;

Mat causal_mask(int t) {
  Mat m = Mat::Zero(t, t);
  for (int r = 0; r < t; ++r)
    for (int c = r + 1; c < t; ++c) m(r, c) = kMaskVal;
  return m;
}

void check_pair_dims(const std::vector<StatePair>& ctx, int d) {
  for (const auto& p : ctx)
    if (p.x.size() != d || p.y.size() != d)
      throw DimensionError("context pair dimension does not match model state_dim");
}

}  // namespace

TransformerCore::TransformerCore(const ArchConfig& arch, int out_dim,
                                 std::string prefix, std::uint64_t seed)
    : arch_(arch), out_dim_(out_dim), prefix_(std::move(prefix)) {
  if (arch_.embed_dim % arch_.num_heads != 0)
    throw ContractError("embed_dim must be divisible by num_heads");
  if (arch_.state_dim < 1 || arch_.embed_dim < 1 || arch_.num_blocks < 1 ||
      arch_.num_heads < 1 || arch_.max_context < 1 || arch_.mlp_mult < 1)
    throw ContractError("architecture dimensions must be positive");
  if (out_dim_ < 1) throw ContractError("out_dim must be positive");

  const int d = arch_.state_dim;
  const int e = arch_.embed_dim;
  const int h = arch_.mlp_mult * e;
  Rng rng(seed);
  auto w = [&](const std::string& name, int r, int c) -> Parameter& {
    Parameter& p = params_.add(prefix_ + name, r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) p.value(i, j) = 0.02 * rng.gauss();
    return p;
  };
  auto b = [&](const std::string& name, int c) -> Parameter& {
    return params_.add(prefix_ + name, 1, c);  // zero
  };
  auto g = [&](const std::string& name, int c) -> Parameter& {
    Parameter& p = params_.add(prefix_ + name, 1, c);
    p.value.setOnes();
    return p;
  };

  w("in_w", d, e);
  b("in_b", e);
  w("type", 2, e);
  w("pos", 2 * arch_.max_context + 1, e);
  for (int blk = 0; blk < arch_.num_blocks; ++blk) {
    const std::string s = "b" + std::to_string(blk) + "_";
    g(s + "ln1_g", e);
    b(s + "ln1_b", e);
    w(s + "wq", e, e);
    b(s + "bq", e);
    w(s + "wk", e, e);
    b(s + "bk", e);
    w(s + "wv", e, e);
    b(s + "bv", e);
    w(s + "wo", e, e);
    b(s + "bo", e);
    g(s + "ln2_g", e);
    b(s + "ln2_b", e);
    w(s + "mlp_w1", e, h);
    b(s + "mlp_b1", h);
    w(s + "mlp_w2", h, e);
    b(s + "mlp_b2", e);
  }
  g("lnf_g", e);
  b("lnf_b", e);
  w("out_w", e, out_dim_);
  b("out_b", out_dim_);
}

Tensor TransformerCore::lf(Tape& t, const std::string& name, bool trainable) {
  Parameter* p = params_.find(prefix_ + name);
  if (!p) throw ContractError("missing parameter " + prefix_ + name);
  return t.leaf(*p, trainable);
}

Tensor TransformerCore::tokens(Tape& t, const std::vector<StatePair>& ctx,
                              Tensor query_row, bool trainable) {
  const int d = arch_.state_dim;
  const int j = static_cast<int>(ctx.size());
  if (j > arch_.max_context)
    throw ContractError("context length " + std::to_string(j) +
                        " exceeds max_context " +
                        std::to_string(arch_.max_context));
  check_pair_dims(ctx, d);
  if (query_row.rows() != 1 || query_row.cols() != d)
    throw DimensionError("query must be a 1 x state_dim row");

  Tensor in = query_row;
  if (j > 0) {
    Mat cm(2 * j, d);
    for (int i = 0; i < j; ++i) {
      cm.row(2 * i) = ctx[static_cast<std::size_t>(i)].x.transpose();
      cm.row(2 * i + 1) = ctx[static_cast<std::size_t>(i)].y.transpose();
    }
    in = concat_rows(t.constant(std::move(cm)), query_row);
  }
  const int tt = 2 * j + 1;

  Tensor emb = add(matmul(in, lf(t, "in_w", trainable)), lf(t, "in_b", trainable));
  std::vector<int> type_idx(static_cast<std::size_t>(tt), 0);
  for (int i = 1; i < tt; i += 2) type_idx[static_cast<std::size_t>(i)] = 1;
  std::vector<int> pos_idx(static_cast<std::size_t>(tt));
  for (int i = 0; i < tt; ++i) pos_idx[static_cast<std::size_t>(i)] = i;
  emb = add(emb, gather_rows(lf(t, "type", trainable), type_idx));
  emb = add(emb, gather_rows(lf(t, "pos", trainable), pos_idx));
  return emb;
}

Tensor TransformerCore::encode(Tape& t, const std::vector<StatePair>& ctx,
                               Tensor query_row, bool trainable) {
  Tensor h = tokens(t, ctx, query_row, trainable);
  const int tt = h.rows();
  const int e = arch_.embed_dim;
  const int nh = arch_.num_heads;
  const int dh = e / nh;
  Tensor mask = t.constant(causal_mask(tt));
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int blk = 0; blk < arch_.num_blocks; ++blk) {
    const std::string s = "b" + std::to_string(blk) + "_";
    Tensor n1 = layer_norm(h, lf(t, s + "ln1_g", trainable),
                           lf(t, s + "ln1_b", trainable), kLnEps);
    Tensor q = add(matmul(n1, lf(t, s + "wq", trainable)), lf(t, s + "bq", trainable));
    Tensor k = add(matmul(n1, lf(t, s + "wk", trainable)), lf(t, s + "bk", trainable));
    Tensor v = add(matmul(n1, lf(t, s + "wv", trainable)), lf(t, s + "bv", trainable));
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(nh));
    for (int hd = 0; hd < nh; ++hd) {
      Tensor qh = slice_cols(q, hd * dh, dh);
      Tensor kh = slice_cols(k, hd * dh, dh);
      Tensor vh = slice_cols(v, hd * dh, dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
      Tensor att = softmax_lastdim(add(scores, mask));
      heads.push_back(matmul(att, vh));
    }
    Tensor att_out = add(matmul(concat_cols(heads), lf(t, s + "wo", trainable)),
                         lf(t, s + "bo", trainable));
    h = add(h, att_out);

    Tensor n2 = layer_norm(h, lf(t, s + "ln2_g", trainable),
                           lf(t, s + "ln2_b", trainable), kLnEps);
    Tensor m1 = gelu(add(matmul(n2, lf(t, s + "mlp_w1", trainable)),
                         lf(t, s + "mlp_b1", trainable)));
    Tensor m2 = add(matmul(m1, lf(t, s + "mlp_w2", trainable)),
                    lf(t, s + "mlp_b2", trainable));
    h = add(h, m2);
  }
  return layer_norm(h, lf(t, "lnf_g", trainable), lf(t, "lnf_b", trainable),
                    kLnEps);
}

Tensor TransformerCore::forward_last(Tape& t, const std::vector<StatePair>& ctx,
                                     Tensor query_row, bool trainable) {
  Tensor h = encode(t, ctx, query_row, trainable);
  Tensor last = slice_rows(h, h.rows() - 1, 1);
  return add(matmul(last, lf(t, "out_w", trainable)), lf(t, "out_b", trainable));
}

Tensor TransformerCore::forward_last(Tape& t, const std::vector<StatePair>& ctx,
                                     const Vec& query, bool trainable) {
  return forward_last(t, ctx, t.constant_row(query), trainable);
}

Tensor TransformerCore::forward_all(Tape& t, const std::vector<StatePair>& ctx,
                                    const Vec& query, bool trainable) {
  Tensor h = encode(t, ctx, t.constant_row(query), trainable);
  std::vector<int> evens;
  evens.reserve(ctx.size() + 1);
  for (int i = 0; i < h.rows(); i += 2) evens.push_back(i);
  Tensor xs = gather_rows(h, evens);
  return add(matmul(xs, lf(t, "out_w", trainable)), lf(t, "out_b", trainable));
}

Tensor dynamics_predict(Tape& t, TransformerCore& dyn,
                        const std::vector<StatePair>& ctx, Tensor query_row,
                        bool trainable) {
  return dyn.forward_last(t, ctx, query_row, trainable);
}

Tensor dynamics_predict(Tape& t, TransformerCore& dyn,
                        const std::vector<StatePair>& ctx, const Vec& query,
                        bool trainable) {
  return dyn.forward_last(t, ctx, query, trainable);
}

Tensor lyapunov_value(Tape& t, TransformerCore& lyap, const WarpConfig& w,
                      const std::vector<StatePair>& ctx, Tensor query_row,
                      bool trainable, LyapCache* cache) {
  if (lyap.out_dim() != 1)
    throw ContractError("certificate core must have out_dim 1");
  Tensor raw = lyap.forward_last(t, ctx, query_row, trainable);
  Tensor raw0;
  if (cache && cache->raw0.valid() && cache->raw0.tape() == &t) {
    raw0 = cache->raw0;
  } else {
    raw0 = lyap.forward_last(t, ctx, Vec(Vec::Zero(lyap.arch().state_dim)),
                             trainable);
    if (cache) cache->raw0 = raw0;
  }
  Tensor inner = sub(scale(tanh(raw), w.c), scale(tanh(raw0), w.c));
  return add(smoothed_relu(inner, w.delta), scale(sqnorm(query_row), w.eps));
}

Tensor lyapunov_value(Tape& t, TransformerCore& lyap, const WarpConfig& w,
                      const std::vector<StatePair>& ctx, const Vec& query,
                      bool trainable, LyapCache* cache) {
  return lyapunov_value(t, lyap, w, ctx, t.constant_row(query), trainable,
                        cache);
}

JointModel::JointModel(const ArchConfig& a, const WarpConfig& w,
                       std::uint64_t seed)
    : arch(a),
      warp(w),
      dyn(a, a.state_dim, "dyn_", sub_seed(seed, "dyn")),
      lyap(a, 1, "lyap_", sub_seed(seed, "lyap")) {
  if (w.c <= 0 || w.delta <= 0 || w.eps <= 0)
    throw ParameterError("warp constants must be positive");
}

void save_checkpoint(const JointModel& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f << "LILADCKPT 1\n";
  f << "state_dim " << m.arch.state_dim << "\n";
  f << "embed_dim " << m.arch.embed_dim << "\n";
  f << "num_blocks " << m.arch.num_blocks << "\n";
  f << "num_heads " << m.arch.num_heads << "\n";
  f << "max_context " << m.arch.max_context << "\n";
  f << "mlp_mult " << m.arch.mlp_mult << "\n";
  f << "warp_c " << format_f64(m.warp.c) << "\n";
  f << "warp_delta " << format_f64(m.warp.delta) << "\n";
  f << "warp_eps " << format_f64(m.warp.eps) << "\n";
  f << "meta " << m.meta.size() << "\n";
  for (const auto& [k, v] : m.meta) f << k << " " << v << "\n";
  const long n_params = static_cast<long>(m.dyn.params().items.size() +
                                          m.lyap.params().items.size());
  f << "params " << n_params << "\n";
  f << "DATA\n";
  auto dump = [&](const ParamSet& ps) {
    for (const auto& p : ps.items) {
      f << p->name << " " << p->rows() << " " << p->cols() << "\n";
      for (int i = 0; i < p->rows(); ++i)
        for (int j = 0; j < p->cols(); ++j) write_f64(f, p->value(i, j));
    }
  };
  dump(m.dyn.params());
  dump(m.lyap.params());
  if (!f) throw DataError("checkpoint write failed: " + path);
}

JointModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "LILADCKPT 1")
    throw FormatError("not a LILADCKPT 1 checkpoint: " + path);

  auto kv_line = [&](const std::string& key) -> std::string {
    if (!std::getline(f, line))
      throw FormatError("truncated checkpoint header: " + path);
    std::istringstream ss(line);
    std::string k, v;
    ss >> k >> v;
    if (k != key || v.empty())
      throw FormatError("bad checkpoint field, expected " + key + ": " + line);
    return v;
  };
  ArchConfig a;
  a.state_dim = static_cast<int>(std::stol(kv_line("state_dim")));
  a.embed_dim = static_cast<int>(std::stol(kv_line("embed_dim")));
  a.num_blocks = static_cast<int>(std::stol(kv_line("num_blocks")));
  a.num_heads = static_cast<int>(std::stol(kv_line("num_heads")));
  a.max_context = static_cast<int>(std::stol(kv_line("max_context")));
  a.mlp_mult = static_cast<int>(std::stol(kv_line("mlp_mult")));
  WarpConfig w;
  w.c = parse_f64(kv_line("warp_c"));
  w.delta = parse_f64(kv_line("warp_delta"));
  w.eps = parse_f64(kv_line("warp_eps"));
  const long n_meta = std::stol(kv_line("meta"));
  std::map<std::string, std::string> meta;
  for (long i = 0; i < n_meta; ++i) {
    if (!std::getline(f, line)) throw FormatError("truncated meta: " + path);
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError("bad meta line: " + line);
    meta[line.substr(0, sp)] = line.substr(sp + 1);
  }
  const long n_params = std::stol(kv_line("params"));
  if (!std::getline(f, line) || line != "DATA")
    throw FormatError("missing DATA section: " + path);

  JointModel m(a, w, 0);
  m.meta = std::move(meta);
  long filled = 0;
  for (long i = 0; i < n_params; ++i) {
    if (!std::getline(f, line))
      throw FormatError("truncated checkpoint block header: " + path);
    std::istringstream ss(line);
    std::string name;
    long r = -1, c = -1;
    ss >> name >> r >> c;
    Parameter* p = m.dyn.params().find(name);
    if (!p) p = m.lyap.params().find(name);
    if (!p) throw FormatError("unknown parameter in checkpoint: " + name);
    if (r != p->rows() || c != p->cols())
      throw FormatError("shape mismatch for " + name + " in " + path);
    for (int ri = 0; ri < p->rows(); ++ri)
      for (int ci = 0; ci < p->cols(); ++ci) p->value(ri, ci) = read_f64(f);
    ++filled;
  }
  if (!f) throw FormatError("truncated checkpoint data: " + path);
  const long expect = static_cast<long>(m.dyn.params().items.size() +
                                        m.lyap.params().items.size());
  if (filled != expect)
    throw FormatError("checkpoint is missing parameter blocks: " + path);
  return m;
}

}  // namespace lilad
