#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vrank/config.hpp"
#include "vrank/core.hpp"
#include "vrank/learners.hpp"
#include "vrank/metrics.hpp"
#include "vrank/models.hpp"
#include "vrank/sim.hpp"

namespace vrank {

/// Shortest round-trip decimal form of a double.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size()));
  }
  return out;
}

/// Everything a run needs, resolved from a key-value config file.
struct ExperimentConfig {
  SimConfig world;
  BehaviorPolicy::Kind behavior_kind = BehaviorPolicy::Kind::Random;
  int behavior_top_k = 10;
  RewardSpec reward;
  int num_sessions = 2000;
  int max_len = 20;
  std::string data_path;  // defaults to <out>/sessions.log
  double split_train = 0.8, split_valid = 0.1, split_test = 0.1;
  std::uint64_t split_seed = 17;
  Algo algo = Algo::VR;
  VRConfig vr;
  int epochs = 12;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<int> ks{5, 20};
  bool breakdown = false;
  int online_steps = 10000;
  int online_top_k = 3;
  std::uint64_t online_world_seed = 777;
  std::string out_dir = "out";
  std::string sweep_param = "gamma";
  std::vector<double> sweep_values;  // empty: use the per-parameter default grid

  static ExperimentConfig from_config(const Config& c) {
    ExperimentConfig e;
    e.world.catalog_size = c.get_int("world.catalog_size", e.world.catalog_size);
    e.world.num_categories = c.get_int("world.num_categories", e.world.num_categories);
    e.world.click_base = c.get_double("world.click_base", e.world.click_base);
    e.world.purchase_threshold = c.get_double("world.purchase_threshold", e.world.purchase_threshold);
    e.world.interest_drift = c.get_double("world.interest_drift", e.world.interest_drift);
    e.world.seed = c.get_u64("world.seed", e.world.seed);
    e.behavior_kind = parse_behavior(c.get_string("behavior.kind", "random"));
    e.behavior_top_k = c.get_int("behavior.top_k", e.behavior_top_k);
    e.reward.click_reward = c.get_double("reward.click", e.reward.click_reward);
    e.reward.purchase_reward = c.get_double("reward.purchase", e.reward.purchase_reward);
    e.reward.shift = c.get_double("reward.shift", e.reward.shift);
    e.num_sessions = c.get_int("data.num_sessions", e.num_sessions);
    e.max_len = c.get_int("data.max_len", e.max_len);
    e.out_dir = c.get_string("out", e.out_dir);
    e.data_path = c.get_string("data.path", e.out_dir + "/sessions.log");
    e.split_train = c.get_double("split.train", e.split_train);
    e.split_valid = c.get_double("split.valid", e.split_valid);
    e.split_test = c.get_double("split.test", e.split_test);
    e.split_seed = c.get_u64("split.seed", e.split_seed);
    e.algo = parse_algo(c.get_string("train.algo", "VR"));
    e.epochs = c.get_int("train.epochs", e.epochs);
    e.vr.batch_size = c.get_int("train.batch_size", e.vr.batch_size);
    e.vr.pretrain_epochs = c.get_int("train.pretrain_epochs", e.vr.pretrain_epochs);
    e.vr.alpha = c.get_double("vr.alpha", e.vr.alpha);
    e.vr.beta = c.get_double("vr.beta", e.vr.beta);
    e.vr.gamma = c.get_double("vr.gamma", e.vr.gamma);
    e.vr.cap = c.get_double("vr.cap", e.vr.cap);
    e.vr.is_floor = c.get_double("vr.is_floor", e.vr.is_floor);
    e.vr.sync_interval = c.get_int("vr.sync_interval", e.vr.sync_interval);
    e.vr.lr_policy = c.get_double("vr.lr_policy", e.vr.lr_policy);
    e.vr.lr_q = c.get_double("vr.lr_q", e.vr.lr_q);
    e.vr.lr_logging = c.get_double("vr.lr_logging", e.vr.lr_logging);
    e.vr.exact_expectation_threshold =
        c.get_int("vr.exact_expectation_threshold", e.vr.exact_expectation_threshold);
    e.vr.decay = c.get_double("features.decay", e.vr.decay);
    e.vr.q_init_scale = c.get_double("vr.q_init_scale", e.vr.q_init_scale);
    e.seeds = c.get_u64s("seeds", e.seeds);
    e.ks = c.get_ints("eval.ks", e.ks);
    e.breakdown = c.get_int("eval.breakdown", 0) != 0;
    e.online_steps = c.get_int("online.steps", e.online_steps);
    e.online_top_k = c.get_int("online.top_k", e.online_top_k);
    e.online_world_seed = c.get_u64("online.world_seed", e.online_world_seed);
    e.sweep_param = c.get_string("sweep.param", e.sweep_param);
    e.sweep_values = c.get_doubles("sweep.values", e.sweep_values);
    e.validate();
    return e;
  }

  void validate() const {
    vr.validate();
    reward.validate();
    if (std::abs(split_train + split_valid + split_test - 1.0) > 1e-9) {
      throw std::invalid_argument("config: split fractions must sum to 1");
    }
    if (epochs < 1) throw std::invalid_argument("config: train.epochs < 1");
    if (seeds.empty()) throw std::invalid_argument("config: empty seed list");
    for (int k : ks) {
      if (k < 1 || k > world.catalog_size) {
        throw std::invalid_argument("config: eval k outside [1, catalog_size]");
      }
    }
    if (sweep_param != "gamma" && sweep_param != "alpha" && sweep_param != "beta") {
      throw std::invalid_argument("config: sweep.param must be gamma, alpha or beta");
    }
  }

  std::vector<double> effective_sweep_values() const {
    if (!sweep_values.empty()) return sweep_values;
    if (sweep_param == "gamma") return {0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
    if (sweep_param == "alpha") return {0.1, 0.5, 1.0, 2.0, 5.0};
    return {0.2, 0.4, 0.6, 0.8};
  }

  /// Fully resolved dump, loadable again by Config::parse.
  void serialize(std::ostream& os) const {
    os << "world.catalog_size=" << world.catalog_size << '\n'
       << "world.num_categories=" << world.num_categories << '\n'
       << "world.click_base=" << fmt_g17(world.click_base) << '\n'
       << "world.purchase_threshold=" << fmt_g17(world.purchase_threshold) << '\n'
       << "world.interest_drift=" << fmt_g17(world.interest_drift) << '\n'
       << "world.seed=" << world.seed << '\n'
       << "behavior.kind=" << behavior_name(behavior_kind) << '\n'
       << "behavior.top_k=" << behavior_top_k << '\n'
       << "reward.click=" << fmt_g17(reward.click_reward) << '\n'
       << "reward.purchase=" << fmt_g17(reward.purchase_reward) << '\n'
       << "reward.shift=" << fmt_g17(reward.shift) << '\n'
       << "data.num_sessions=" << num_sessions << '\n'
       << "data.max_len=" << max_len << '\n'
       << "data.path=" << data_path << '\n'
       << "split.train=" << fmt_g17(split_train) << '\n'
       << "split.valid=" << fmt_g17(split_valid) << '\n'
       << "split.test=" << fmt_g17(split_test) << '\n'
       << "split.seed=" << split_seed << '\n'
       << "train.algo=" << algo_name(algo) << '\n'
       << "train.epochs=" << epochs << '\n'
       << "train.batch_size=" << vr.batch_size << '\n'
       << "train.pretrain_epochs=" << vr.pretrain_epochs << '\n'
       << "vr.alpha=" << fmt_g17(vr.alpha) << '\n'
       << "vr.beta=" << fmt_g17(vr.beta) << '\n'
       << "vr.gamma=" << fmt_g17(vr.gamma) << '\n'
       << "vr.cap=" << fmt_g17(vr.cap) << '\n'
       << "vr.is_floor=" << fmt_g17(vr.is_floor) << '\n'
       << "vr.sync_interval=" << vr.sync_interval << '\n'
       << "vr.lr_policy=" << fmt_g17(vr.lr_policy) << '\n'
       << "vr.lr_q=" << fmt_g17(vr.lr_q) << '\n'
       << "vr.lr_logging=" << fmt_g17(vr.lr_logging) << '\n'
       << "vr.exact_expectation_threshold=" << vr.exact_expectation_threshold << '\n'
       << "vr.q_init_scale=" << fmt_g17(vr.q_init_scale) << '\n'
       << "features.decay=" << fmt_g17(vr.decay) << '\n';
    os << "seeds=";
    for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
    os << '\n' << "eval.ks=";
    for (std::size_t i = 0; i < ks.size(); ++i) os << (i ? "," : "") << ks[i];
    os << '\n'
       << "eval.breakdown=" << (breakdown ? 1 : 0) << '\n'
       << "online.steps=" << online_steps << '\n'
       << "online.top_k=" << online_top_k << '\n'
       << "online.world_seed=" << online_world_seed << '\n'
       << "out=" << out_dir << '\n'
       << "sweep.param=" << sweep_param << '\n';
    const auto sv = effective_sweep_values();
    os << "sweep.values=";
    for (std::size_t i = 0; i < sv.size(); ++i) os << (i ? "," : "") << fmt_g17(sv[i]);
    os << '\n';
  }
};

namespace harness {

namespace fs = std::filesystem;

/// One self-describing record per line: space-separated key=value pairs.
using Record = std::vector<std::pair<std::string, std::string>>;

inline std::string record_line(const Record& rec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (i) os << ' ';
    os << rec[i].first << '=' << rec[i].second;
  }
  return os.str();
}

inline void append_line(const std::string& path, const std::string& line) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open for append: " + path);
  f << line << '\n';
}

inline void ensure_out_dir(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::ofstream f(cfg.out_dir + "/config.txt");
  if (!f) throw std::runtime_error("cannot write config to " + cfg.out_dir);
  cfg.serialize(f);
}

inline std::string run_dir(const ExperimentConfig& cfg, Algo algo, std::uint64_t seed) {
  std::ostringstream os;
  os << cfg.out_dir << '/' << algo_name(algo) << "_seed" << seed;
  return os.str();
}

inline BehaviorPolicy make_behavior(const ExperimentConfig& cfg) {
  switch (cfg.behavior_kind) {
    case BehaviorPolicy::Kind::Random: return BehaviorPolicy::random();
    case BehaviorPolicy::Kind::MaximumReward:
      return BehaviorPolicy::maximum_reward(cfg.behavior_top_k);
    case BehaviorPolicy::Kind::Popularity:
      throw std::invalid_argument("popularity cannot be used as the logging policy");
  }
  throw std::logic_error("make_behavior: unreachable");
}

// -- simulate ---------------------------------------------------------------

struct SimulateResult {
  std::string log_path;
  std::string manifest_path;
  std::size_t sessions = 0;
  std::size_t transitions = 0;
};

inline SimulateResult cmd_simulate(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  SimWorld world(cfg.world);
  const BehaviorPolicy behavior = make_behavior(cfg);
  const LoggedDataset data =
      generate_logged(world, behavior, cfg.num_sessions, cfg.max_len, cfg.reward);
  data.validate();

  SimulateResult res;
  res.log_path = cfg.data_path;
  res.manifest_path = cfg.out_dir + "/manifest.txt";
  res.sessions = data.trajectories.size();
  res.transitions = data.num_transitions();

  fs::create_directories(fs::path(res.log_path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(res.log_path).parent_path());
  std::ofstream log(res.log_path);
  if (!log) throw std::runtime_error("cannot write session log: " + res.log_path);
  write_session_log(log, data);

  std::ofstream man(res.manifest_path);
  if (!man) throw std::runtime_error("cannot write manifest: " + res.manifest_path);
  man << "sessions=" << res.sessions << '\n'
      << "transitions=" << res.transitions << '\n'
      << "catalog_size=" << cfg.world.catalog_size << '\n'
      << "behavior=" << behavior_name(cfg.behavior_kind) << '\n'
      << "behavior_top_k=" << cfg.behavior_top_k << '\n'
      << "world_seed=" << cfg.world.seed << '\n'
      << "num_categories=" << cfg.world.num_categories << '\n'
      << "click_base=" << fmt_g17(cfg.world.click_base) << '\n'
      << "purchase_threshold=" << fmt_g17(cfg.world.purchase_threshold) << '\n'
      << "interest_drift=" << fmt_g17(cfg.world.interest_drift) << '\n'
      << "reward_click=" << fmt_g17(cfg.reward.click_reward) << '\n'
      << "reward_purchase=" << fmt_g17(cfg.reward.purchase_reward) << '\n'
      << "reward_shift=" << fmt_g17(cfg.reward.shift) << '\n'
      << "max_len=" << cfg.max_len << '\n'
      << "requested_sessions=" << cfg.num_sessions << '\n';
  return res;
}

inline LoggedDataset load_dataset(const ExperimentConfig& cfg) {
  std::ifstream f(cfg.data_path);
  if (!f) throw std::runtime_error("dataset not found: " + cfg.data_path);
  return read_session_log(f, cfg.world.catalog_size, cfg.reward);
}

inline std::array<LoggedDataset, 3> make_splits(const ExperimentConfig& cfg,
                                                const LoggedDataset& data) {
  return split_dataset(data, cfg.split_train, cfg.split_valid, cfg.split_test, cfg.split_seed);
}

// -- train ------------------------------------------------------------------

inline Record epoch_to_record(Algo algo, std::uint64_t seed, const EpochRecord& rec) {
  Record r{{"record", "epoch"}, {"algo", algo_name(algo)}, {"seed", std::to_string(seed)},
           {"epoch", std::to_string(rec.epoch)}};
  if (rec.loss_policy) r.emplace_back("loss_policy", fmt_g17(*rec.loss_policy));
  if (rec.loss_q) r.emplace_back("loss_q", fmt_g17(*rec.loss_q));
  for (const auto& [k, v] : rec.hr) r.emplace_back("hr" + std::to_string(k), fmt_g17(v));
  for (const auto& [k, v] : rec.ndcg) r.emplace_back("ndcg" + std::to_string(k), fmt_g17(v));
  if (rec.bias) r.emplace_back("bias", fmt_g17(*rec.bias));
  return r;
}

struct TrainArtifacts {
  std::string checkpoint_path;
  std::string trace_path;
  TrainResult result;
};

/**
 * Trains one (algo, seed) run. With `resume` the checkpoint in the run
 * directory is loaded and training continues from its epoch; trace lines for
 * the new epochs are appended.
 */
inline TrainArtifacts cmd_train(const ExperimentConfig& cfg, std::uint64_t seed,
                                bool resume = false) {
  ensure_out_dir(cfg);
  const LoggedDataset data = load_dataset(cfg);
  const auto splits = make_splits(cfg, data);

  const std::string dir = run_dir(cfg, cfg.algo, seed);
  fs::create_directories(dir);
  TrainArtifacts art;
  art.checkpoint_path = dir + "/checkpoint.txt";
  art.trace_path = dir + "/trace.txt";

  Checkpoint resumed;
  const Checkpoint* resume_ptr = nullptr;
  if (resume) {
    std::ifstream ck(art.checkpoint_path);
    if (!ck) throw std::runtime_error("resume: checkpoint not found: " + art.checkpoint_path);
    resumed = load_checkpoint(ck);
    if (resumed.algo != algo_name(cfg.algo)) {
      throw std::invalid_argument("resume: checkpoint algorithm mismatch");
    }
    resume_ptr = &resumed;
  } else {
    std::ofstream clear(art.trace_path);  // fresh run truncates the trace
  }

  art.result = train(cfg.algo, splits[0], splits[1], cfg.vr, cfg.epochs, seed, resume_ptr, cfg.ks);

  for (const auto& rec : art.result.trace) {
    append_line(art.trace_path, record_line(epoch_to_record(cfg.algo, seed, rec)));
  }
  std::ofstream ck(art.checkpoint_path);
  if (!ck) throw std::runtime_error("cannot write checkpoint: " + art.checkpoint_path);
  save_checkpoint(ck, to_checkpoint(art.result.state, cfg.algo, data.catalog_size, cfg.vr.decay,
                                    cfg.epochs));
  return art;
}

// -- eval / online / bias ---------------------------------------------------

inline Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("checkpoint not found: " + path);
  return load_checkpoint(f);
}

inline StateScorer checkpoint_scorer(const Checkpoint& ck) {
  const Algo algo = parse_algo(ck.algo);
  const int catalog = ck.catalog_size;
  const double decay = ck.decay;
  if (algo_ranks_by_q(algo)) {
    LinearQFunction q = ck.q;
    return [q, catalog, decay](const SessionState& s) {
      return q.values(featurize(s, catalog, decay));
    };
  }
  LinearSoftmaxPolicy p = ck.policy;
  return [p, catalog, decay](const SessionState& s) {
    return policy_probs(p, featurize(s, catalog, decay));
  };
}

using MetricMap = std::map<std::string, double>;

inline MetricMap eval_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ck,
                                 const LoggedDataset& test) {
  if (test.trajectories.empty()) throw std::invalid_argument("eval: empty test split");
  const RankingReport report = evaluate_ranking(checkpoint_scorer(ck), test, cfg.ks, cfg.breakdown);
  MetricMap m;
  for (const auto& [k, e] : report.all) {
    m["hr" + std::to_string(k)] = e.hr;
    m["ndcg" + std::to_string(k)] = e.ndcg;
  }
  if (cfg.breakdown) {
    for (const auto& [k, e] : report.click) {
      m["hr" + std::to_string(k) + "_click"] = e.hr;
      m["ndcg" + std::to_string(k) + "_click"] = e.ndcg;
    }
    for (const auto& [k, e] : report.purchase) {
      m["hr" + std::to_string(k) + "_purchase"] = e.hr;
      m["ndcg" + std::to_string(k) + "_purchase"] = e.ndcg;
    }
  }
  return m;
}

inline Record metric_record(const std::string& kind, Algo algo, const std::string& seed_label,
                            const MetricMap& m) {
  Record r{{"record", kind}, {"algo", algo_name(algo)}, {"seed", seed_label}};
  for (const auto& [k, v] : m) r.emplace_back(k, fmt_g17(v));
  return r;
}

/// Per-seed records followed by a mean/std aggregate across the seed list.
struct AggregatedMetrics {
  std::vector<MetricMap> per_seed;
  MetricMap mean;
  MetricMap std;
};

inline AggregatedMetrics aggregate(const std::vector<MetricMap>& per_seed) {
  AggregatedMetrics agg;
  agg.per_seed = per_seed;
  if (per_seed.empty()) return agg;
  for (const auto& [key, _] : per_seed.front()) {
    std::vector<double> xs;
    xs.reserve(per_seed.size());
    for (const auto& m : per_seed) xs.push_back(m.at(key));
    const MeanStd ms = mean_std(xs);
    agg.mean[key] = ms.mean;
    agg.std[key] = ms.std;
  }
  return agg;
}

inline void write_aggregate_records(const ExperimentConfig& cfg, const std::string& kind,
                                    const AggregatedMetrics& agg) {
  const std::string path = cfg.out_dir + "/records.txt";
  for (std::size_t i = 0; i < agg.per_seed.size(); ++i) {
    append_line(path, record_line(metric_record(kind, cfg.algo, std::to_string(cfg.seeds[i]),
                                                agg.per_seed[i])));
  }
  MetricMap flat;
  for (const auto& [k, v] : agg.mean) {
    flat[k + "_mean"] = v;
    flat[k + "_std"] = agg.std.at(k);
  }
  append_line(path, record_line(metric_record(kind + "_agg", cfg.algo, "all", flat)));
}

inline AggregatedMetrics cmd_eval(const ExperimentConfig& cfg,
                                  const std::string& checkpoint_override = "") {
  ensure_out_dir(cfg);
  const LoggedDataset data = load_dataset(cfg);
  const auto splits = make_splits(cfg, data);
  std::vector<MetricMap> per_seed;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string path = checkpoint_override.empty()
                                 ? run_dir(cfg, cfg.algo, seed) + "/checkpoint.txt"
                                 : checkpoint_override;
    per_seed.push_back(eval_checkpoint(cfg, load_checkpoint_file(path), splits[2]));
  }
  const AggregatedMetrics agg = aggregate(per_seed);
  write_aggregate_records(cfg, "eval", agg);
  return agg;
}

inline MetricMap online_metrics(const ExperimentConfig& cfg, const Checkpoint& ck,
                                std::uint64_t seed) {
  SimConfig wc = cfg.world;
  wc.seed = mix_seed(cfg.online_world_seed, seed);
  SimWorld world(wc);
  const RolloutResult r = online_rollout(world, checkpoint_scorer(ck), cfg.online_steps,
                                         cfg.online_top_k, cfg.max_len);
  return MetricMap{{"ctr", r.ctr},
                   {"coverage" + std::to_string(cfg.online_top_k), r.coverage_at_k}};
}

inline AggregatedMetrics cmd_online(const ExperimentConfig& cfg,
                                    const std::string& checkpoint_override = "") {
  ensure_out_dir(cfg);
  std::vector<MetricMap> per_seed;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string path = checkpoint_override.empty()
                                 ? run_dir(cfg, cfg.algo, seed) + "/checkpoint.txt"
                                 : checkpoint_override;
    per_seed.push_back(online_metrics(cfg, load_checkpoint_file(path), seed));
  }
  const AggregatedMetrics agg = aggregate(per_seed);
  write_aggregate_records(cfg, "online", agg);
  return agg;
}

inline AggregatedMetrics cmd_bias(const ExperimentConfig& cfg,
                                  const std::string& checkpoint_override = "") {
  ensure_out_dir(cfg);
  const LoggedDataset data = load_dataset(cfg);
  const auto splits = make_splits(cfg, data);
  std::vector<MetricMap> per_seed;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string path = checkpoint_override.empty()
                                 ? run_dir(cfg, cfg.algo, seed) + "/checkpoint.txt"
                                 : checkpoint_override;
    const Checkpoint ck = load_checkpoint_file(path);
    LinearQFunction q = ck.q;
    const int catalog = ck.catalog_size;
    const double decay = ck.decay;
    const double b = overestimation_bias(
        [&q, catalog, decay](const SessionState& s, ItemId a) {
          return q.value(featurize(s, catalog, decay), a);
        },
        splits[2], cfg.vr.gamma);
    per_seed.push_back(MetricMap{{"bias", b}});
  }
  const AggregatedMetrics agg = aggregate(per_seed);
  write_aggregate_records(cfg, "bias", agg);
  return agg;
}

// -- sweep ------------------------------------------------------------------

inline VRConfig with_sweep_value(VRConfig vr, const std::string& param, double value) {
  if (param == "gamma") {
    vr.gamma = value;
  } else if (param == "alpha") {
    vr.alpha = value;
  } else {
    vr.beta = value;
  }
  return vr;
}

/// Trains and evaluates the configured algorithm over the parameter grid,
/// one run per (value, seed); writes per-run and aggregated curve CSVs.
inline std::string cmd_sweep(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  const LoggedDataset data = load_dataset(cfg);
  const auto splits = make_splits(cfg, data);
  const auto values = cfg.effective_sweep_values();

  const std::string csv_path = cfg.out_dir + "/sweep_" + cfg.sweep_param + ".csv";
  const std::string agg_path = cfg.out_dir + "/sweep_" + cfg.sweep_param + "_agg.csv";
  std::ofstream csv(csv_path);
  std::ofstream agg(agg_path);
  if (!csv || !agg) throw std::runtime_error("cannot write sweep csv in " + cfg.out_dir);

  std::vector<std::string> metric_keys;
  for (int k : cfg.ks) {
    metric_keys.push_back("hr" + std::to_string(k));
    metric_keys.push_back("ndcg" + std::to_string(k));
  }
  metric_keys.push_back("bias");

  csv << cfg.sweep_param << ",seed";
  for (const auto& mk : metric_keys) csv << ',' << mk;
  csv << '\n';
  agg << cfg.sweep_param;
  for (const auto& mk : metric_keys) agg << ',' << mk << "_mean," << mk << "_std";
  agg << '\n';

  for (double value : values) {
    const VRConfig vr = with_sweep_value(cfg.vr, cfg.sweep_param, value);
    std::map<std::string, std::vector<double>> column;
    for (std::uint64_t seed : cfg.seeds) {
      const TrainResult res = train(cfg.algo, splits[0], splits[1], vr, cfg.epochs, seed,
                                    nullptr, cfg.ks);
      // final-model metrics on the held-out test split
      const FlatData test_flat = flatten(splits[2], vr.decay, vr.gamma);
      EpochRecord rec;
      eval_epoch_metrics(res.state, cfg.algo, test_flat, cfg.ks, rec);
      csv << fmt_g17(value) << ',' << seed;
      for (const auto& mk : metric_keys) {
        double v = 0.0;
        if (mk == "bias") {
          v = rec.bias.value_or(0.0);
        } else if (mk.rfind("hr", 0) == 0) {
          v = rec.hr.at(std::stoi(mk.substr(2)));
        } else {
          v = rec.ndcg.at(std::stoi(mk.substr(4)));
        }
        csv << ',' << fmt_g17(v);
        column[mk].push_back(v);
      }
      csv << '\n';
    }
    agg << fmt_g17(value);
    for (const auto& mk : metric_keys) {
      const MeanStd ms = mean_std(column[mk]);
      agg << ',' << fmt_g17(ms.mean) << ',' << fmt_g17(ms.std);
    }
    agg << '\n';
  }
  return csv_path;
}

}  // namespace harness
}  // namespace vrank
