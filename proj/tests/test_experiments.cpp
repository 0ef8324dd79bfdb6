#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tactnet/experiments.hpp"

using tactnet::Dataset;
using tactnet::Index;
using tactnet::ModelGraph;
using tactnet::Rng;
using tactnet::TactileFrame;
using tactnet::TrainConfig;
using tactnet::Variant;

namespace {

// two trivially separable 8x9 frames: all-low vs all-high pressure
std::vector<TactileFrame> two_frame_set() {
  TactileFrame a, b;
  a.values = Eigen::MatrixXd::Constant(8, 9, 0.1);
  a.label = 0;
  a.source_id = "low_0";
  b.values = Eigen::MatrixXd::Constant(8, 9, 0.9);
  b.label = 1;
  b.source_id = "high_0";
  return {a, b};
}

TrainConfig quick_config(int max_epochs, double lr = 0.05) {
  TrainConfig cfg;
  cfg.lr = lr;
  cfg.batch_size = 2;
  cfg.max_epochs = max_epochs;
  cfg.lr_drop_epoch = max_epochs + 1;  // no drop in short runs
  cfg.patience = max_epochs;           // no early stop either
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TEST_CASE("two separable frames are memorized within ten epochs") {
  auto frames = two_frame_set();
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 1);
  tactnet::TrainResult r = tactnet::train_model(graph, frames, frames, quick_config(10));
  REQUIRE(!r.history.empty());
  CHECK(r.history.back().train_acc == 1.0);
  CHECK(r.best_val_acc == 1.0);
  CHECK(r.epochs_run <= 10);
}

TEST_CASE("identical seeds give identical histories") {
  auto frames = two_frame_set();
  const TrainConfig cfg = quick_config(5);
  auto g1 = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 3);
  auto g2 = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 3);
  tactnet::TrainResult a = tactnet::train_model(g1, frames, frames, cfg);
  tactnet::TrainResult b = tactnet::train_model(g2, frames, frames, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].train_acc == b.history[i].train_acc);
    CHECK(a.history[i].val_acc == b.history[i].val_acc);
  }
}

TEST_CASE("non-finite loss aborts with the epoch index") {
  auto frames = two_frame_set();
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 1);
  CHECK_THROWS_WITH_AS(tactnet::train_model(graph, frames, frames, quick_config(5, 1e12)),
                       doctest::Contains("diverged at epoch"), std::runtime_error);
}

TEST_CASE("training rejects empty inputs and bad configs") {
  auto frames = two_frame_set();
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 1);
  CHECK_THROWS_AS(tactnet::train_model(graph, frames, {}, quick_config(3)),
                  std::invalid_argument);
  TrainConfig bad = quick_config(3);
  bad.batch_size = 1;
  CHECK_THROWS_WITH_AS(tactnet::train_model(graph, frames, frames, bad),
                       doctest::Contains("batch_size"), std::invalid_argument);
}

TEST_CASE("the history CSV has a header and one line per epoch") {
  oracles::TempDir dir;
  const std::string path = dir.file("history.csv");
  auto frames = two_frame_set();
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 1);
  tactnet::TrainResult r = tactnet::train_model(graph, frames, frames, quick_config(4));
  tactnet::write_history_csv(r.history, path);

  std::ifstream is(path);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "epoch,train_acc,val_acc,loss");
  int lines = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines == static_cast<int>(r.history.size()));
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

TEST_CASE("a constant-class model scores exactly chance on a balanced set") {
  Dataset ds = tactnet::synthesize_dataset(2, 2, 8, 9);  // 44 frames, 2 per class
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 22, 1);
  // zero head: all logits equal, argmax resolves to class 0
  graph.layers.back().params.weights.value.array() = 0.0f;
  graph.layers.back().params.bias.value.array() = 0.0f;

  tactnet::EvalReport r = tactnet::evaluate(graph, ds.frames, ds.class_names);
  CHECK(r.accuracy == doctest::Approx(1.0 / 22.0).epsilon(1e-12));
  CHECK(r.n_test == 44);

  // trace/total equals accuracy; row sums match per-class counts
  CHECK(static_cast<double>(r.confusion.trace()) / static_cast<double>(r.n_test) == r.accuracy);
  for (Index c = 0; c < 22; ++c) CHECK(r.confusion.row(c).sum() == 2);
  CHECK(r.recall[0] == 1.0);
  for (std::size_t c = 1; c < 22; ++c) CHECK(r.recall[c] == 0.0);
  CHECK(r.precision[0] == doctest::Approx(1.0 / 22.0));
}

TEST_CASE("evaluation refuses an empty test set") {
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 22, 1);
  CHECK_THROWS_WITH_AS(tactnet::evaluate(graph, {}, tactnet::default_class_names()),
                       doctest::Contains("empty test set"), std::invalid_argument);
}

TEST_CASE("confusion trace over total equals accuracy on a trained model") {
  auto frames = two_frame_set();
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 1);
  tactnet::train_model(graph, frames, frames, quick_config(10));
  tactnet::EvalReport r = tactnet::evaluate(graph, frames, {"low", "high"});
  CHECK(static_cast<double>(r.confusion.trace()) / static_cast<double>(r.n_test) == r.accuracy);
  CHECK(r.param_count == tactnet::parameter_count(graph));
}

TEST_CASE("the latency benchmark echoes its run counts and measures something") {
  auto frames = two_frame_set();
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 2, 1);
  tactnet::TimingStats t = tactnet::time_inference(graph, frames, 25, 5);
  CHECK(t.timed_runs == 25);
  CHECK(t.warmup_runs == 5);
  CHECK(t.per_image_mean_ms > 0.0);
  CHECK(t.per_image_std_ms >= 0.0);
  CHECK(t.batch_total_ms > 0.0);
  CHECK_THROWS_AS(tactnet::time_inference(graph, {}, 10, 2), std::invalid_argument);
  CHECK_THROWS_AS(tactnet::time_inference(graph, frames, 0, 2), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// trial aggregation
// ---------------------------------------------------------------------------

TEST_CASE("aggregating one result twice gives its value with zero spread") {
  tactnet::TrialResult r;
  r.seed = 4;
  r.test_acc = 0.75;
  r.val_acc = 0.8;
  r.param_count = 123;
  r.timing.per_image_mean_ms = 2.0;

  tactnet::TrialsSummary s;
  s.results = {r, r};
  tactnet::aggregate_trials(s);
  CHECK(s.mean_test_acc == 0.75);
  CHECK(s.std_test_acc == 0.0);
  CHECK(s.mean_time_ms == 2.0);
  CHECK(s.std_time_ms == 0.0);
  CHECK(s.param_count == 123);
}

TEST_CASE("summary mean equals the mean of per-trial accuracies") {
  tactnet::TrialsSummary s;
  const std::vector<double> accs = {0.91, 0.88, 0.95, 0.9, 0.93};
  double mean = 0.0;
  for (std::size_t i = 0; i < accs.size(); ++i) {
    tactnet::TrialResult r;
    r.seed = i;
    r.test_acc = accs[i];
    s.results.push_back(r);
    mean += accs[i];
  }
  mean /= static_cast<double>(accs.size());
  tactnet::aggregate_trials(s);
  CHECK(std::abs(s.mean_test_acc - mean) <= 1e-12);
}

TEST_CASE("failed trials are recorded without disturbing the rest") {
  tactnet::TrialsSummary s;
  tactnet::TrialResult a, b;
  a.seed = 1;
  a.test_acc = 0.9;
  b.seed = 3;
  b.test_acc = 0.8;
  s.results = {b, a};  // deliberately unsorted
  s.failures = {{2, "training diverged at epoch 1: non-finite loss"}};
  tactnet::aggregate_trials(s);
  CHECK(s.mean_test_acc == doctest::Approx(0.85));
  CHECK(s.results.front().seed == 1);  // sorted by seed
  CHECK(s.failures.size() == 1);
}

TEST_CASE("a summary where every trial failed is an error naming the first cause") {
  tactnet::TrialsSummary s;
  s.failures = {{1, "boom"}, {2, "bang"}};
  CHECK_THROWS_WITH_AS(tactnet::aggregate_trials(s), doctest::Contains("every trial failed"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(tactnet::aggregate_trials(s), doctest::Contains("boom"),
                       std::runtime_error);
}

TEST_CASE("parallel and serial trial execution produce identical reports") {
  Dataset ds = tactnet::synthesize_dataset(3, 50, 7, 13);  // coarse grid: fast
  TrainConfig cfg = quick_config(1);
  cfg.batch_size = 32;
  auto serial = tactnet::repeated_trials(Variant::kTactNet4, ds, 10, 2, cfg, 1, true, 1);
  auto threaded = tactnet::repeated_trials(Variant::kTactNet4, ds, 10, 2, cfg, 2, true, 1);
  CHECK(tactnet::trials_to_json(serial).dump() == tactnet::trials_to_json(threaded).dump());
}

// ---------------------------------------------------------------------------
// full trial on the native dataset
// ---------------------------------------------------------------------------

TEST_CASE("a short native trial trains into the high-nineties regime") {
  Dataset ds = tactnet::synthesize_dataset(7);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.lr_drop_epoch = 4;
  tactnet::TrialResult r = tactnet::run_trial(Variant::kTactNet4, ds, 1, cfg, true, 5);
  INFO("train ", r.train_acc, " val ", r.val_acc, " test ", r.test_acc);
  CHECK(r.train_acc > 0.95);
  CHECK(r.test_acc > 0.85);
  CHECK(r.param_count == 25'862);
  CHECK(r.history.size() == 3);
  CHECK(static_cast<double>(r.report.confusion.trace()) /
            static_cast<double>(r.report.n_test) ==
        r.test_acc);
}

// ---------------------------------------------------------------------------
// resolution sweep
// ---------------------------------------------------------------------------

TEST_CASE("the native rung of the sweep equals plain trials with the same seeds") {
  Dataset ds = tactnet::synthesize_dataset(5);
  TrainConfig cfg = quick_config(1);
  cfg.batch_size = 32;

  auto direct = tactnet::repeated_trials(Variant::kTactNet4, ds, 20, 2, cfg, 1, true, 1);
  auto sweep = tactnet::resolution_sweep(Variant::kTactNet4, ds, 20, 2, cfg, 1, 1,
                                         {tactnet::ResolutionLevel::kFull});
  REQUIRE(sweep.levels.size() == 1);
  CHECK(sweep.levels[0].error.empty());
  CHECK(sweep.levels[0].rows == 28);
  CHECK(sweep.levels[0].cols == 50);
  CHECK(tactnet::trials_to_json(sweep.levels[0].trials).dump() ==
        tactnet::trials_to_json(direct).dump());
}

TEST_CASE("a sweep over an undersized dataset reports the failure on every rung") {
  Dataset ds = tactnet::synthesize_dataset(9, 20);  // 20 per class: splits impossible
  TrainConfig cfg = quick_config(1);
  cfg.batch_size = 32;
  auto sweep = tactnet::resolution_sweep(Variant::kTactNet4, ds, 1, 2, cfg, 1, 1);
  REQUIRE(sweep.levels.size() == 5);
  for (const auto& level : sweep.levels) {
    CHECK(!level.error.empty());
    CHECK(level.error.find("every trial failed") != std::string::npos);
  }
  // errored rungs carry their message in the report and are skipped in timing
  auto j = tactnet::sweep_to_json(sweep);
  for (const auto& e : j.at("levels")) CHECK(e.contains("error"));
  CHECK(tactnet::sweep_timing_to_json(sweep).at("levels").empty());
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

TEST_CASE("an fc-only graph passes the finite-difference check at 1e-6") {
  ModelGraph<double> g;
  g.input_rows = 3;
  g.input_cols = 4;
  g.input_channels = 1;
  g.n_classes = 5;
  g.layers.push_back(tactnet::detail::make_layer<double>(tactnet::detail::fc_spec(12, 5)));
  tactnet::initialize_params(g, 2);

  Rng rng(3);
  tactnet::Tensor<double> x({4, 3, 4, 1});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  tactnet::GradCheckReport r = tactnet::gradient_check(g, std::move(x), {0, 1, 2, 3}, 16, 0, 1e-6);
  INFO("max rel err ", r.max_rel_err);
  CHECK(r.passed);
}

TEST_CASE("a corrupted conv backward pass is caught and localized") {
  tactnet::GradCheckReport r =
      tactnet::gradient_check_variant(Variant::kTactNet4, 0, 4, 1e-3, "conv.weights");
  CHECK_FALSE(r.passed);
  bool corrupted_failed = false;
  for (const auto& e : r.entries) {
    if (e.max_rel_err > r.tolerance) {
      // only the tampered tensors may fail
      CHECK(e.name.find("conv.weights") != std::string::npos);
      corrupted_failed = true;
    }
  }
  CHECK(corrupted_failed);
  CHECK_THROWS_AS(
      tactnet::gradient_check_variant(Variant::kTactNet4, 0, 4, 1e-3, "no_such_param"),
      std::invalid_argument);
}

// ---------------------------------------------------------------------------
// config and report plumbing
// ---------------------------------------------------------------------------

TEST_CASE("train configs survive the JSON round-trip") {
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.momentum = 0.85;
  cfg.weight_decay = 5e-4;
  cfg.batch_size = 16;
  cfg.max_epochs = 7;
  cfg.lr_drop_epoch = 5;
  cfg.lr_drop_factor = 0.2;
  cfg.patience = 3;
  TrainConfig back = tactnet::config_from_json(tactnet::config_to_json(cfg));
  CHECK(back.lr == cfg.lr);
  CHECK(back.momentum == cfg.momentum);
  CHECK(back.weight_decay == cfg.weight_decay);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.max_epochs == cfg.max_epochs);
  CHECK(back.lr_drop_epoch == cfg.lr_drop_epoch);
  CHECK(back.lr_drop_factor == cfg.lr_drop_factor);
  CHECK(back.patience == cfg.patience);
}

TEST_CASE("partial configs override only their keys; unknown keys are rejected") {
  tactnet::ordered_json j = {{"max_epochs", 9}};
  TrainConfig base;
  base.lr = 0.5;
  TrainConfig merged = tactnet::config_from_json(j, base);
  CHECK(merged.max_epochs == 9);
  CHECK(merged.lr == 0.5);

  tactnet::ordered_json bad = {{"learning_rate", 0.1}};
  CHECK_THROWS_WITH_AS(tactnet::config_from_json(bad), doctest::Contains("unknown key"),
                       std::invalid_argument);

  tactnet::ordered_json invalid = {{"max_epochs", 0}};
  CHECK_THROWS_AS(tactnet::config_from_json(invalid), std::invalid_argument);
}

TEST_CASE("feature sets extracted from frames carry counts, labels and names") {
  Dataset ds = tactnet::synthesize_dataset(4, 2, 8, 9);
  auto graph = tactnet::build_tactnet(Variant::kTactNet4, 8, 9, 22, 5);
  tactnet::FeatureSet fs =
      tactnet::make_feature_set(graph, ds.frames, ds.class_names, "unit-test");
  CHECK(fs.size() == 44);
  CHECK(fs.dim() == tactnet::feature_dimension(graph));
  CHECK(fs.labels == tactnet::labels_of(ds.frames));
  CHECK(fs.class_names == ds.class_names);
  CHECK(fs.source == "unit-test");
}
