#include "lilad/data_pool.hpp"

#include <fstream>
#include <sstream>

#include "lilad/io.hpp"
#include "lilad/rng.hpp"

namespace lilad {

TaskDataset generate_task_dataset(const SystemSpec& spec, const ParameterSample& param,
                                  int num_pairs, std::uint64_t seed, int rollout_len) {
  if (num_pairs < 1) throw ContractError("generate_task_dataset: num_pairs must be >= 1");
  if (rollout_len < 1) throw ContractError("generate_task_dataset: rollout_len must be >= 1");
  Rng rng(seed);
  TaskDataset ds;
  ds.task_id = param.sample_id;
  ds.param = param;
  int rollout_idx = 0;
  while (static_cast<int>(ds.pairs.size()) < num_pairs) {
    Vec x0 = spec.sample_initial_state(rng);
    Trajectory tr = rollout(spec, param.values, x0, rollout_len, param.sample_id);
    for (int k = 0; k < rollout_len; ++k) {
      ds.pairs.push_back(StatePair{tr.states[static_cast<std::size_t>(k)],
                                   tr.states[static_cast<std::size_t>(k) + 1]});
      ds.provenance.emplace_back(rollout_idx, k);
    }
    ++rollout_idx;
  }
  // shuffle pairs and provenance through one permutation
  std::vector<int> order(ds.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  std::vector<StatePair> pairs;
  std::vector<std::pair<int, int>> prov;
  pairs.reserve(static_cast<std::size_t>(num_pairs));
  prov.reserve(static_cast<std::size_t>(num_pairs));
  for (int i = 0; i < num_pairs; ++i) {
    pairs.push_back(std::move(ds.pairs[static_cast<std::size_t>(order[i])]));
    prov.push_back(ds.provenance[static_cast<std::size_t>(order[i])]);
  }
  ds.pairs = std::move(pairs);
  ds.provenance = std::move(prov);
  return ds;
}

Pool generate_pool(const SystemSpec& spec, const PoolConfig& cfg, std::uint64_t seed) {
  Pool pool;
  pool.system = spec.id;
  pool.state_dim = spec.state_dim;
  pool.dt = spec.dt;
  pool.seed = seed;
  pool.rollout_len = cfg.rollout_len;
  auto params = sample_parameters(spec, cfg.tasks, sub_seed(seed, "params"));
  pool.tasks.reserve(static_cast<std::size_t>(cfg.tasks));
  for (int i = 0; i < cfg.tasks; ++i) {
    pool.tasks.push_back(generate_task_dataset(
        spec, params[static_cast<std::size_t>(i)], cfg.pairs_per_task,
        sub_seed(seed, "task" + std::to_string(i)), cfg.rollout_len));
  }
  return pool;
}

Prompt build_prompt(const TaskDataset& dataset, int n, std::uint64_t seed) {
  if (n < 0) throw ContractError("build_prompt: n must be >= 0");
  const int size = static_cast<int>(dataset.pairs.size());
  if (n + 1 > size)
    throw DataError("build_prompt: need n+1=" + std::to_string(n + 1) + " pairs, task " +
                    std::to_string(dataset.task_id) + " has " + std::to_string(size));
  Rng rng(seed);
  std::vector<int> idx(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
  // partial Fisher-Yates: first n+1 slots become a without-replacement draw
  for (int i = 0; i <= n; ++i) {
    int j = i + static_cast<int>(rng.randint(static_cast<std::uint64_t>(size - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Prompt p;
  p.task_id = dataset.task_id;
  p.pairs.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i)
    p.pairs.push_back(dataset.pairs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  return p;
}

LabeledPrefix prefix(const Prompt& prompt, int j) {
  if (j < 0 || j > prompt.n())
    throw ContractError("prefix: index j=" + std::to_string(j) + " out of range [0, " +
                        std::to_string(prompt.n()) + "]");
  LabeledPrefix lp;
  lp.prefix.task_id = prompt.task_id;
  lp.prefix.context.assign(prompt.pairs.begin(), prompt.pairs.begin() + j);
  lp.prefix.query = prompt.pairs[static_cast<std::size_t>(j)].x;
  lp.target = prompt.pairs[static_cast<std::size_t>(j)].y;
  return lp;
}

namespace {
constexpr const char* kPoolMagic = "LILADPOOL";
constexpr int kPoolVersion = 1;

std::string expect_line(std::istream& is, const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("pool header truncated before " + what);
  return line;
}
}  // namespace

void save_pool(const Pool& pool, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << kPoolMagic << ' ' << kPoolVersion << '\n';
  os << "system " << system_name(pool.system) << '\n';
  os << "state_dim " << pool.state_dim << '\n';
  os << "dt " << format_f64(pool.dt) << '\n';
  os << "seed " << pool.seed << '\n';
  os << "rollout_len " << pool.rollout_len << '\n';
  os << "tasks " << pool.tasks.size() << '\n';
  for (const auto& t : pool.tasks) {
    os << "task " << t.task_id << " sample " << t.param.sample_id << " params";
    for (long i = 0; i < t.param.values.size(); ++i)
      os << ' ' << format_f64(t.param.values(i));
    os << '\n';
  }
  os << "DATA\n";
  for (const auto& t : pool.tasks) {
    write_u64(os, t.pairs.size());
    for (const auto& pr : t.pairs) {
      write_f64_block(os, pr.x.data(), static_cast<std::size_t>(pr.x.size()));
      write_f64_block(os, pr.y.data(), static_cast<std::size_t>(pr.y.size()));
    }
  }
  if (!os) throw DataError("short write to '" + path + "'");
}

Pool load_pool(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  Pool pool;
  {
    std::istringstream hd(expect_line(is, "magic"));
    std::string magic;
    int version = -1;
    hd >> magic >> version;
    if (magic != kPoolMagic) throw FormatError("not a pool file (bad magic)");
    if (version != kPoolVersion)
      throw FormatError("unsupported pool version " + std::to_string(version));
  }
  auto field = [&](const std::string& key) {
    std::istringstream ls(expect_line(is, key));
    std::string k, v;
    ls >> k;
    std::getline(ls, v);
    if (k != key) throw FormatError("pool header: expected '" + key + "', got '" + k + "'");
    return v.empty() ? v : v.substr(1);
  };
  pool.system = system_from_name(field("system"));
  pool.state_dim = std::stoi(field("state_dim"));
  pool.dt = parse_f64(field("dt"));
  pool.seed = std::stoull(field("seed"));
  pool.rollout_len = std::stoi(field("rollout_len"));
  int ntasks = std::stoi(field("tasks"));
  if (ntasks < 0 || pool.state_dim < 1) throw FormatError("pool header: bad counts");
  pool.tasks.resize(static_cast<std::size_t>(ntasks));
  for (auto& t : pool.tasks) {
    std::istringstream ls(expect_line(is, "task line"));
    std::string kw_task, kw_sample, kw_params;
    int sid = -1;
    ls >> kw_task >> t.task_id >> kw_sample >> sid >> kw_params;
    if (kw_task != "task" || kw_sample != "sample" || kw_params != "params")
      throw FormatError("pool header: malformed task line");
    t.param.sample_id = sid;
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) vals.push_back(parse_f64(tok));
    t.param.values = Eigen::Map<Vec>(vals.data(), static_cast<long>(vals.size()));
  }
  if (expect_line(is, "DATA") != "DATA") throw FormatError("pool header: missing DATA marker");
  for (auto& t : pool.tasks) {
    std::uint64_t npairs = read_u64(is);
    if (npairs > (1ull << 32)) throw FormatError("pool data: implausible pair count");
    t.pairs.resize(npairs);
    for (auto& pr : t.pairs) {
      pr.x.resize(pool.state_dim);
      pr.y.resize(pool.state_dim);
      read_f64_block(is, pr.x.data(), static_cast<std::size_t>(pool.state_dim));
      read_f64_block(is, pr.y.data(), static_cast<std::size_t>(pool.state_dim));
    }
  }
  return pool;
}

bool pool_equal(const Pool& a, const Pool& b) {
  auto bits = [](double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    return u;
  };
  if (a.system != b.system || a.state_dim != b.state_dim || bits(a.dt) != bits(b.dt) ||
      a.seed != b.seed || a.rollout_len != b.rollout_len ||
      a.tasks.size() != b.tasks.size())
    return false;
  for (std::size_t i = 0; i < a.tasks.size(); ++i) {
    const auto& ta = a.tasks[i];
    const auto& tb = b.tasks[i];
    if (ta.task_id != tb.task_id || ta.param.sample_id != tb.param.sample_id) return false;
    if (ta.param.values.size() != tb.param.values.size()) return false;
    for (long j = 0; j < ta.param.values.size(); ++j)
      if (bits(ta.param.values(j)) != bits(tb.param.values(j))) return false;
    if (ta.pairs.size() != tb.pairs.size()) return false;
    for (std::size_t p = 0; p < ta.pairs.size(); ++p) {
      for (long j = 0; j < a.state_dim; ++j) {
        if (bits(ta.pairs[p].x(j)) != bits(tb.pairs[p].x(j))) return false;
        if (bits(ta.pairs[p].y(j)) != bits(tb.pairs[p].y(j))) return false;
      }
    }
  }
  return true;
}

}  // namespace lilad
