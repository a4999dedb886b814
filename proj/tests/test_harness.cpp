#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vrank/config.hpp"
#include "vrank/harness.hpp"

using namespace vrank;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Small, fast experiment setup writing into a scratch directory.
struct ScratchRun {
  fs::path dir;
  ExperimentConfig cfg;

  explicit ScratchRun(const std::string& name) {
    dir = fs::temp_directory_path() / ("vrank_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    cfg.out_dir = (dir / "out").string();
    cfg.data_path = cfg.out_dir + "/sessions.log";
    cfg.world.catalog_size = 20;
    cfg.world.num_categories = 5;
    cfg.world.seed = 7;
    cfg.num_sessions = 120;
    cfg.max_len = 10;
    cfg.epochs = 2;
    cfg.seeds = {1};
    cfg.ks = {5, 20};
    cfg.vr.batch_size = 16;
    cfg.vr.pretrain_epochs = 1;
    cfg.online_steps = 200;
  }
  ~ScratchRun() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("config parsing") {
  std::stringstream ss;
  ss << "# comment\n"
     << "world.catalog_size = 42\n"
     << "vr.alpha=0.5\n"
     << "seeds=3,4,5\n"
     << "eval.ks=5, 20\n"
     << "train.algo=DQN-NS\n"
     << "\n";
  const Config c = Config::parse(ss);
  CHECK(c.get_int("world.catalog_size", 0) == 42);
  CHECK(c.get_double("vr.alpha", 0.0) == 0.5);
  CHECK(c.get_u64s("seeds", {}) == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(c.get_ints("eval.ks", {}) == std::vector<int>{5, 20});
  CHECK(c.get_string("missing", "fallback") == "fallback");

  const auto ec = ExperimentConfig::from_config(c);
  CHECK(ec.world.catalog_size == 42);
  CHECK(ec.algo == Algo::DQN_NS);

  std::stringstream bad;
  bad << "key_without_value\n";
  CHECK_THROWS_AS(Config::parse(bad), std::invalid_argument);

  std::stringstream bad_int;
  bad_int << "world.catalog_size=abc\n";
  CHECK_THROWS_AS(ExperimentConfig::from_config(Config::parse(bad_int)), std::invalid_argument);
}

TEST_CASE("experiment config serialization round-trips") {
  ExperimentConfig cfg;
  cfg.algo = Algo::PG;
  cfg.vr.beta = 0.25;
  cfg.seeds = {9, 10};
  std::stringstream first;
  cfg.serialize(first);
  const auto back = ExperimentConfig::from_config(Config::parse(first));
  std::stringstream second;
  back.serialize(second);
  first.seekg(0);
  CHECK(second.str() == first.str());
}

TEST_CASE("simulate writes a parseable log and a consistent manifest") {
  ScratchRun run("simulate");
  const auto res = harness::cmd_simulate(run.cfg);

  const auto data = harness::load_dataset(run.cfg);
  CHECK(data.trajectories.size() == res.sessions);
  CHECK(data.num_transitions() == res.transitions);

  const Config manifest = Config::parse_file(res.manifest_path);
  CHECK(manifest.get_int("sessions", -1) == static_cast<int>(res.sessions));
  CHECK(manifest.get_int("transitions", -1) == static_cast<int>(res.transitions));
  CHECK(manifest.get_int("catalog_size", -1) == run.cfg.world.catalog_size);

  SECTION("same seed gives identical files, another seed differs") {
    const std::string original = slurp(res.log_path);
    harness::cmd_simulate(run.cfg);
    CHECK(slurp(res.log_path) == original);

    ExperimentConfig other = run.cfg;
    other.world.seed = 8;
    harness::cmd_simulate(other);
    CHECK(slurp(res.log_path) != original);
  }

  SECTION("re-ingested dataset round-trips through the log format") {
    std::stringstream rewritten;
    write_session_log(rewritten, data);
    CHECK(rewritten.str() == slurp(res.log_path));
  }
}

TEST_CASE("train smoke run produces trace lines and a checkpoint") {
  ScratchRun run("train");
  run.cfg.algo = Algo::MLE;
  harness::cmd_simulate(run.cfg);
  const auto art = harness::cmd_train(run.cfg, 1);

  REQUIRE(art.result.trace.size() == 2);
  for (const auto& rec : art.result.trace) {
    REQUIRE(rec.loss_policy.has_value());
    CHECK(std::isfinite(*rec.loss_policy));
    CHECK(std::isfinite(rec.ndcg.at(5)));
  }
  const std::string trace = slurp(art.trace_path);
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 2);
  CHECK(trace.find("record=epoch") != std::string::npos);
  CHECK(trace.find("algo=MLE") != std::string::npos);

  const Checkpoint ck = harness::load_checkpoint_file(art.checkpoint_path);
  CHECK(ck.algo == "MLE");
  CHECK(ck.epoch == 2);
}

TEST_CASE("value-ranking trace reports the value-head loss and bias") {
  ScratchRun run("vrtrace");
  run.cfg.algo = Algo::VR;
  harness::cmd_simulate(run.cfg);
  const auto art = harness::cmd_train(run.cfg, 1);
  const std::string trace = slurp(art.trace_path);
  CHECK(trace.find("loss_q=") != std::string::npos);
  CHECK(trace.find("bias=") != std::string::npos);
  CHECK(trace.find("loss_policy=") != std::string::npos);
}

TEST_CASE("resumed training reproduces the uninterrupted run bitwise") {
  ScratchRun run("resume");
  run.cfg.algo = Algo::VR;
  run.cfg.epochs = 4;
  harness::cmd_simulate(run.cfg);
  const auto full = harness::cmd_train(run.cfg, 1);
  const std::string full_ck = slurp(full.checkpoint_path);
  const std::string full_trace = slurp(full.trace_path);

  ExperimentConfig half = run.cfg;
  half.epochs = 2;
  harness::cmd_train(half, 1);
  const auto resumed = harness::cmd_train(run.cfg, 1, /*resume=*/true);

  CHECK(slurp(resumed.checkpoint_path) == full_ck);
  CHECK(slurp(resumed.trace_path) == full_trace);
}

TEST_CASE("fresh identically-seeded runs write identical artifacts") {
  ScratchRun run("deterministic");
  run.cfg.algo = Algo::VR;
  harness::cmd_simulate(run.cfg);
  const auto first = harness::cmd_train(run.cfg, 3);
  const std::string ck1 = slurp(first.checkpoint_path);
  const std::string tr1 = slurp(first.trace_path);
  const auto second = harness::cmd_train(run.cfg, 3);
  CHECK(slurp(second.checkpoint_path) == ck1);
  CHECK(slurp(second.trace_path) == tr1);
}

TEST_CASE("eval of a uniform checkpoint matches the exact tie-break value") {
  ScratchRun run("evaluniform");
  harness::cmd_simulate(run.cfg);
  const auto data = harness::load_dataset(run.cfg);
  const auto splits = harness::make_splits(run.cfg, data);

  Checkpoint uniform;
  uniform.catalog_size = run.cfg.world.catalog_size;
  uniform.decay = run.cfg.vr.decay;
  uniform.algo = "MLE";
  const int dim = feature_dim(uniform.catalog_size);
  uniform.policy = LinearSoftmaxPolicy::zeros(dim, uniform.catalog_size);
  uniform.logging = LinearSoftmaxPolicy::zeros(dim, uniform.catalog_size);
  uniform.q = LinearQFunction{Eigen::MatrixXd::Zero(dim, uniform.catalog_size)};
  uniform.target = TargetSnapshot{uniform.q.weights, 100};

  const auto metrics = harness::eval_checkpoint(run.cfg, uniform, splits[2]);

  // equal scores rank by ascending id, so a hit at k=5 happens exactly when
  // the logged action id is below 5
  std::size_t hits = 0, total = 0;
  for (const auto& traj : splits[2].trajectories) {
    for (const auto& t : traj.transitions) {
      if (t.action < 5) ++hits;
      ++total;
    }
  }
  CHECK(metrics.at("hr5") == static_cast<double>(hits) / static_cast<double>(total));
}

TEST_CASE("eval records aggregate across seeds") {
  ScratchRun run("evalagg");
  run.cfg.algo = Algo::MLE;
  run.cfg.seeds = {1, 2};
  harness::cmd_simulate(run.cfg);
  for (auto seed : run.cfg.seeds) harness::cmd_train(run.cfg, seed);
  const auto agg = harness::cmd_eval(run.cfg);
  REQUIRE(agg.per_seed.size() == 2);
  CHECK(agg.mean.count("ndcg5") == 1);
  CHECK(agg.std.at("ndcg5") >= 0.0);

  const std::string records = slurp(run.cfg.out_dir + "/records.txt");
  CHECK(records.find("record=eval ") != std::string::npos);
  CHECK(records.find("record=eval_agg") != std::string::npos);

  SECTION("missing checkpoint surfaces a file error") {
    ExperimentConfig missing = run.cfg;
    missing.algo = Algo::DQN;  // never trained above
    CHECK_THROWS_AS(harness::cmd_eval(missing), std::runtime_error);
  }
}

TEST_CASE("online and bias records") {
  ScratchRun run("online");
  run.cfg.algo = Algo::MLE;
  harness::cmd_simulate(run.cfg);
  harness::cmd_train(run.cfg, 1);
  const auto online = harness::cmd_online(run.cfg);
  CHECK(online.mean.at("ctr") >= 0.0);
  CHECK(online.mean.at("ctr") <= 1.0);
  CHECK(online.mean.at("coverage3") > 0.0);

  const auto bias = harness::cmd_bias(run.cfg);
  CHECK(bias.mean.at("bias") >= 0.0);
}

TEST_CASE("sweep emits one row per value and seed plus aggregates") {
  ScratchRun run("sweep");
  run.cfg.algo = Algo::VR_BANDIT;
  run.cfg.seeds = {1, 2};
  run.cfg.sweep_param = "gamma";
  run.cfg.sweep_values = {0.0, 0.5};
  run.cfg.epochs = 1;
  harness::cmd_simulate(run.cfg);
  const std::string csv_path = harness::cmd_sweep(run.cfg);

  const std::string csv = slurp(csv_path);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2);
  CHECK(csv.rfind("gamma,seed,", 0) == 0);

  const std::string agg = slurp(run.cfg.out_dir + "/sweep_gamma_agg.csv");
  CHECK(std::count(agg.begin(), agg.end(), '\n') == 1 + 2);
  CHECK(agg.find("ndcg5_mean") != std::string::npos);
}
