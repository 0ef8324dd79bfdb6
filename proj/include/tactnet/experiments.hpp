#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tactnet/classifiers.hpp"
#include "tactnet/dataset.hpp"
#include "tactnet/image_ops.hpp"
#include "tactnet/model.hpp"
#include "tactnet/rng.hpp"

namespace tactnet {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Index batch_size = 32;
  int max_epochs = 60;
  int lr_drop_epoch = 40;   // learning rate multiplies by lr_drop_factor here
  double lr_drop_factor = 0.1;
  int patience = 10;        // early stop after this many epochs without val improvement
  std::uint64_t seed = 0;
};

inline void validate_config(const TrainConfig& cfg) {
  require(cfg.lr > 0.0, "train config: lr must be positive");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "train config: momentum must be in [0,1)");
  require(cfg.weight_decay >= 0.0, "train config: weight_decay must be non-negative");
  require(cfg.batch_size >= 2, "train config: batch_size must be at least 2");
  require(cfg.max_epochs > 0, "train config: max_epochs must be positive");
  require(cfg.lr_drop_factor > 0.0 && cfg.lr_drop_factor <= 1.0,
          "train config: lr_drop_factor must be in (0,1]");
  require(cfg.patience > 0, "train config: patience must be positive");
}

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_acc = 0.0;
  double val_acc = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;   // 1-based epoch whose weights the model carries
  double best_val_acc = 0.0;
  int epochs_run = 0;
};

template <typename S>
std::vector<int> predict_batched(ModelGraph<S>& graph, const Tensor<S>& x,
                                 Index batch = Index(256)) {
  const Index n = x.dim(0);
  const Index frame = x.size() / n;
  std::vector<int> pred(static_cast<std::size_t>(n));
  for (Index start = 0; start < n; start += batch) {
    const Index count = std::min(batch, n - start);
    Tensor<S> xb({count, x.dim(1), x.dim(2), x.dim(3)});
    std::copy_n(x.data() + start * frame, count * frame, xb.data());
    Tensor<S> logits = forward(graph, xb, Mode::kInfer);
    auto lm = logits.matrix(count, logits.size() / count);
    for (Index i = 0; i < count; ++i) {
      Index best = 0;
      for (Index k = 1; k < lm.cols(); ++k)
        if (lm(i, k) > lm(i, best)) best = k;
      pred[static_cast<std::size_t>(start + i)] = static_cast<int>(best);
    }
  }
  return pred;
}

inline double accuracy_of(const std::vector<int>& pred, const std::vector<int>& labels) {
  require(pred.size() == labels.size() && !pred.empty(), "accuracy_of: size mismatch");
  Index hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Minibatch SGD with momentum, step learning-rate drop, early stopping on
// validation accuracy; the graph keeps the best-validation weights on exit.
template <typename S>
TrainResult train_model(ModelGraph<S>& graph, const std::vector<TactileFrame>& train_frames,
                        const std::vector<TactileFrame>& val_frames, const TrainConfig& cfg) {
  validate_config(cfg);
  require(train_frames.size() >= 2, "train_model: need at least two training frames");
  require(!val_frames.empty(), "train_model: empty validation set");

  const Tensor<S> x_train = frames_to_batch<S>(train_frames);
  const std::vector<int> y_train = labels_of(train_frames);
  const Tensor<S> x_val = frames_to_batch<S>(val_frames);
  const std::vector<int> y_val = labels_of(val_frames);
  for (int y : y_train)
    require(y >= 0 && y < graph.n_classes, "train_model: label outside model classes");

  const Index n = x_train.dim(0);
  const Index frame = x_train.size() / n;
  Rng rng(Rng::mix(cfg.seed, 0xED0C));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));

  TrainResult result;
  std::vector<Tensor<S>> best = snapshot_params(graph);
  double best_val = -1.0;
  int stale = 0;

  ForwardCache<S> cache;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = epoch > cfg.lr_drop_epoch ? cfg.lr * cfg.lr_drop_factor : cfg.lr;
    rng.shuffle(order);
    double loss_sum = 0.0;
    Index loss_batches = 0, train_hits = 0, train_seen = 0;
    for (Index start = 0; start + 2 <= n; start += cfg.batch_size) {
      Index count = std::min(cfg.batch_size, n - start);
      if (count < 2) break;  // batch statistics need at least two samples
      Tensor<S> xb({count, x_train.dim(1), x_train.dim(2), x_train.dim(3)});
      std::vector<int> yb(static_cast<std::size_t>(count));
      for (Index i = 0; i < count; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        std::copy_n(x_train.data() + src * frame, frame, xb.data() + i * frame);
        yb[static_cast<std::size_t>(i)] = y_train[static_cast<std::size_t>(src)];
      }
      Tensor<S> logits = forward(graph, xb, Mode::kTrain, &cache);
      SoftmaxLoss<S> sl = softmax_cross_entropy(logits, std::span<const int>(yb));
      if (!std::isfinite(static_cast<double>(sl.loss)))
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                 ": non-finite loss");
      loss_sum += static_cast<double>(sl.loss);
      ++loss_batches;
      auto lm = logits.matrix(count, logits.size() / count);
      for (Index i = 0; i < count; ++i) {
        Index bestk = 0;
        for (Index k = 1; k < lm.cols(); ++k)
          if (lm(i, k) > lm(i, bestk)) bestk = k;
        if (static_cast<int>(bestk) == yb[static_cast<std::size_t>(i)]) ++train_hits;
      }
      train_seen += count;
      zero_grads(graph);
      backward(graph, sl.grad, cache);
      for (ParamRef<S>& ref : parameters(graph))
        sgd_step(ref.param->value, ref.param->grad, ref.param->velocity, static_cast<S>(lr),
                 static_cast<S>(cfg.momentum), static_cast<S>(cfg.weight_decay));
    }
    const std::vector<int> val_pred = predict_batched(graph, x_val);
    EpochStats es;
    es.epoch = epoch;
    es.loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
    es.train_acc = train_seen ? static_cast<double>(train_hits) / static_cast<double>(train_seen)
                              : 0.0;
    es.val_acc = accuracy_of(val_pred, y_val);
    result.history.push_back(es);
    result.epochs_run = epoch;

    if (es.val_acc > best_val) {
      best_val = es.val_acc;
      best = snapshot_params(graph);
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  restore_params(graph, best);
  result.best_val_acc = best_val;
  return result;
}

inline void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_history_csv: cannot open '" + path + "'");
  os << "epoch,train_acc,val_acc,loss\n";
  char buf[64];
  auto put = [&](double v) {
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("write_history_csv: formatting failed");
    os.write(buf, end - buf);
  };
  for (const EpochStats& e : history) {
    os << e.epoch;
    os.put(',');
    put(e.train_acc);
    os.put(',');
    put(e.val_acc);
    os.put(',');
    put(e.loss);
    os.put('\n');
  }
  if (!os) throw std::runtime_error("write_history_csv: write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string variant;
  std::uint64_t seed = 0;
  Index n_test = 0;
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;          // rows: true class, cols: predicted
  std::vector<double> precision, recall;  // per class; empty denominators give 0
  std::int64_t param_count = 0;
  std::vector<std::string> class_names;
};

struct TimingStats {
  double batch_total_ms = 0.0;      // one pass over the evaluation set
  double per_image_mean_ms = 0.0;   // single-frame forward passes
  double per_image_std_ms = 0.0;
  int timed_runs = 0;
  int warmup_runs = 0;
};

template <typename S>
EvalReport evaluate(ModelGraph<S>& graph, const std::vector<TactileFrame>& test_frames,
                    const std::vector<std::string>& class_names) {
  require(!test_frames.empty(), "evaluate: empty test set");
  const Index k = graph.n_classes;
  require(static_cast<Index>(class_names.size()) == k, "evaluate: class table size mismatch");
  const Tensor<S> x = frames_to_batch<S>(test_frames);
  const std::vector<int> labels = labels_of(test_frames);
  for (int y : labels) require(y >= 0 && y < k, "evaluate: label outside model classes");
  const std::vector<int> pred = predict_batched(graph, x);

  EvalReport report;
  report.variant = graph.variant;
  report.n_test = static_cast<Index>(test_frames.size());
  report.accuracy = accuracy_of(pred, labels);
  report.confusion = Eigen::MatrixXi::Zero(k, k);
  for (std::size_t i = 0; i < pred.size(); ++i) report.confusion(labels[i], pred[i])++;
  report.precision.assign(static_cast<std::size_t>(k), 0.0);
  report.recall.assign(static_cast<std::size_t>(k), 0.0);
  for (Index c = 0; c < k; ++c) {
    const double col_sum = report.confusion.col(c).sum();
    const double row_sum = report.confusion.row(c).sum();
    const double tp = report.confusion(c, c);
    if (col_sum > 0) report.precision[static_cast<std::size_t>(c)] = tp / col_sum;
    if (row_sum > 0) report.recall[static_cast<std::size_t>(c)] = tp / row_sum;
  }
  report.param_count = parameter_count(graph);
  report.class_names = class_names;
  return report;
}

// Per-image latency: warm up, then time single-frame forward passes cycling
// through the given frames.
template <typename S>
TimingStats time_inference(ModelGraph<S>& graph, const std::vector<TactileFrame>& frames,
                           int timed_runs = 200, int warmup_runs = 10) {
  require(!frames.empty(), "time_inference: no frames");
  require(timed_runs > 0 && warmup_runs >= 0, "time_inference: invalid run counts");
  using clock = std::chrono::steady_clock;

  TimingStats stats;
  stats.timed_runs = timed_runs;
  stats.warmup_runs = warmup_runs;

  const Tensor<S> all = frames_to_batch<S>(frames);
  const auto batch_start = clock::now();
  (void)predict_batched(graph, all);
  stats.batch_total_ms =
      std::chrono::duration<double, std::milli>(clock::now() - batch_start).count();

  const Index frame = all.size() / all.dim(0);
  Tensor<S> one({Index(1), all.dim(1), all.dim(2), all.dim(3)});
  volatile S sink = S(0);  // keep the forward pass observable
  auto run_one = [&](Index i) {
    std::copy_n(all.data() + (i % all.dim(0)) * frame, frame, one.data());
    Tensor<S> logits = forward(graph, one, Mode::kInfer);
    sink = sink + logits[0];
  };
  for (int i = 0; i < warmup_runs; ++i) run_one(static_cast<Index>(i));
  std::vector<double> samples(static_cast<std::size_t>(timed_runs));
  for (int i = 0; i < timed_runs; ++i) {
    const auto t0 = clock::now();
    run_one(static_cast<Index>(i));
    samples[static_cast<std::size_t>(i)] =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  }
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
                      static_cast<double>(timed_runs);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(timed_runs);
  stats.per_image_mean_ms = mean;
  stats.per_image_std_ms = std::sqrt(var);
  return stats;
}

// ---------------------------------------------------------------------------
// frozen-feature extraction over whole frame sets
// ---------------------------------------------------------------------------

template <typename S>
FeatureSet make_feature_set(ModelGraph<S>& graph, const std::vector<TactileFrame>& frames,
                            const std::vector<std::string>& class_names,
                            const std::string& source, Index batch = Index(256)) {
  require(!frames.empty(), "make_feature_set: no frames");
  const Index dim = feature_dimension(graph);
  FeatureSet fs;
  fs.features.resize(static_cast<Index>(frames.size()), dim);
  fs.labels = labels_of(frames);
  fs.class_names = class_names;
  fs.source = source;
  for (Index start = 0; start < static_cast<Index>(frames.size()); start += batch) {
    const Index count = std::min(batch, static_cast<Index>(frames.size()) - start);
    const std::vector<TactileFrame> chunk(frames.begin() + start, frames.begin() + start + count);
    Tensor<S> feats = extract_features(graph, frames_to_batch<S>(chunk));
    auto fm = feats.matrix(count, dim);
    for (Index i = 0; i < count; ++i)
      for (Index d = 0; d < dim; ++d)
        fs.features(start + i, d) = static_cast<float>(fm(i, d));
  }
  return fs;
}

// ---------------------------------------------------------------------------
// trials: split -> augment -> train -> evaluate, repeated across seeds
// ---------------------------------------------------------------------------

inline constexpr Index kAugmentationFactor = 6;

struct TrialData {
  std::vector<TactileFrame> train, val, test;
};

// Frames are split per class and only then expanded, so no augmented copy of
// a frame can cross between splits.
inline TrialData prepare_trial_data(const Dataset& ds, std::uint64_t seed,
                                    bool augment_splits = true) {
  const SplitPlan plan = make_splits(ds, seed);
  TrialData data;
  data.train = gather(ds, plan.train);
  data.val = gather(ds, plan.val);
  data.test = gather(ds, plan.test);
  if (augment_splits) {
    data.train = expand_set(data.train, kAugmentationFactor, Rng::mix(seed, 0xA001));
    data.val = expand_set(data.val, kAugmentationFactor, Rng::mix(seed, 0xA002));
    data.test = expand_set(data.test, kAugmentationFactor, Rng::mix(seed, 0xA003));
  }
  return data;
}

struct TrialResult {
  std::uint64_t seed = 0;
  double train_acc = 0.0;  // final accuracy on the (augmented) training split
  double val_acc = 0.0;    // best validation accuracy reached
  double test_acc = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::int64_t param_count = 0;
  EvalReport report;
  TimingStats timing;
  std::vector<EpochStats> history;
};

template <typename S = float>
TrialResult run_trial(Variant variant, const Dataset& ds, std::uint64_t seed,
                      const TrainConfig& cfg, bool augment_splits = true,
                      int timed_runs = 200) {
  TrialData data = prepare_trial_data(ds, seed, augment_splits);
  const Index rows = data.train.front().rows();
  const Index cols = data.train.front().cols();
  ModelGraph<S> graph =
      build_tactnet<S>(variant, rows, cols, ds.n_classes(), Rng::mix(seed, 0xB001));

  TrainConfig trial_cfg = cfg;
  trial_cfg.seed = Rng::mix(seed, 0xB002);
  TrainResult tr = train_model(graph, data.train, data.val, trial_cfg);

  TrialResult out;
  out.seed = seed;
  out.val_acc = tr.best_val_acc;
  out.epochs_run = tr.epochs_run;
  out.best_epoch = tr.best_epoch;
  out.history = tr.history;
  out.train_acc = accuracy_of(predict_batched(graph, frames_to_batch<S>(data.train)),
                              labels_of(data.train));
  out.report = evaluate(graph, data.test, ds.class_names);
  out.report.seed = seed;
  out.test_acc = out.report.accuracy;
  out.param_count = out.report.param_count;
  out.timing = time_inference(graph, data.test, timed_runs);
  return out;
}

struct TrialFailure {
  std::uint64_t seed = 0;
  std::string error;
};

struct TrialsSummary {
  std::string variant;
  std::uint64_t base_seed = 0;
  int requested = 0;
  std::vector<TrialResult> results;    // ordered by seed
  std::vector<TrialFailure> failures;  // trials that threw; the rest continue
  std::int64_t param_count = 0;
  double mean_test_acc = 0.0, std_test_acc = 0.0;
  double mean_train_acc = 0.0, mean_val_acc = 0.0;
  double mean_time_ms = 0.0, std_time_ms = 0.0;
};

inline void aggregate_trials(TrialsSummary& s) {
  if (s.results.empty()) {
    std::string detail = s.failures.empty() ? "" : (": first error: " + s.failures.front().error);
    throw std::runtime_error("trials: every trial failed" + detail);
  }
  std::sort(s.results.begin(), s.results.end(),
            [](const TrialResult& a, const TrialResult& b) { return a.seed < b.seed; });
  const double n = static_cast<double>(s.results.size());
  double acc_sum = 0.0, train_sum = 0.0, val_sum = 0.0, time_sum = 0.0;
  for (const TrialResult& r : s.results) {
    acc_sum += r.test_acc;
    train_sum += r.train_acc;
    val_sum += r.val_acc;
    time_sum += r.timing.per_image_mean_ms;
  }
  s.mean_test_acc = acc_sum / n;
  s.mean_train_acc = train_sum / n;
  s.mean_val_acc = val_sum / n;
  s.mean_time_ms = time_sum / n;
  double acc_var = 0.0, time_var = 0.0;
  for (const TrialResult& r : s.results) {
    acc_var += (r.test_acc - s.mean_test_acc) * (r.test_acc - s.mean_test_acc);
    time_var += (r.timing.per_image_mean_ms - s.mean_time_ms) *
                (r.timing.per_image_mean_ms - s.mean_time_ms);
  }
  // sample standard deviation across trials
  const double denom = s.results.size() > 1 ? n - 1.0 : 1.0;
  s.std_test_acc = std::sqrt(acc_var / denom);
  s.std_time_ms = std::sqrt(time_var / denom);
  s.param_count = s.results.front().param_count;
}

// Each trial reshuffles the splits with seed base_seed + t.  A failed trial
// is recorded and skipped; aggregation happens in seed order so the summary
// does not depend on scheduling.
template <typename S = float>
TrialsSummary repeated_trials(Variant variant, const Dataset& ds, std::uint64_t base_seed,
                              int n_trials, const TrainConfig& cfg, int parallel = 1,
                              bool augment_splits = true, int timed_runs = 200) {
  require(n_trials > 0, "repeated_trials: n_trials must be positive");
  require(parallel >= 1, "repeated_trials: parallel must be at least 1");
  TrialsSummary summary;
  summary.variant = variant_name(variant);
  summary.base_seed = base_seed;
  summary.requested = n_trials;

  std::vector<TrialResult> results(static_cast<std::size_t>(n_trials));
  std::vector<std::string> errors(static_cast<std::size_t>(n_trials));
  // char, not bool: workers write distinct elements concurrently
  std::vector<char> ok(static_cast<std::size_t>(n_trials), 0);

  auto work = [&](int t) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(t);
    try {
      results[static_cast<std::size_t>(t)] =
          run_trial<S>(variant, ds, seed, cfg, augment_splits, timed_runs);
      ok[static_cast<std::size_t>(t)] = 1;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(t)] = e.what();
    }
  };

  if (parallel == 1) {
    for (int t = 0; t < n_trials; ++t) work(t);
  } else {
    std::atomic<int> next{0};
    auto runner = [&] {
      for (int t = next.fetch_add(1); t < n_trials; t = next.fetch_add(1)) work(t);
    };
    std::vector<std::thread> pool;
    const int workers = std::min(parallel, n_trials);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(runner);
    for (std::thread& th : pool) th.join();
  }

  for (int t = 0; t < n_trials; ++t) {
    if (ok[static_cast<std::size_t>(t)])
      summary.results.push_back(std::move(results[static_cast<std::size_t>(t)]));
    else
      summary.failures.push_back({base_seed + static_cast<std::uint64_t>(t),
                                  errors[static_cast<std::size_t>(t)]});
  }
  aggregate_trials(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// resolution sweep: degrade every frame, rebuild the model for the smaller
// grid, rerun the trial protocol per rung
// ---------------------------------------------------------------------------

struct SweepLevel {
  std::string name;
  Index rows = 0, cols = 0;
  TrialsSummary trials;
  std::string error;  // non-empty when this rung could not run; others continue
};

struct SweepResult {
  std::string variant;
  std::uint64_t base_seed = 0;
  std::vector<SweepLevel> levels;  // coarsest first
};

inline std::vector<ResolutionLevel> full_ladder() {
  return {kResolutionLadder.begin(), kResolutionLadder.end()};
}

template <typename S = float>
SweepResult resolution_sweep(Variant variant, const Dataset& ds, std::uint64_t base_seed,
                             int n_trials, const TrainConfig& cfg, int parallel = 1,
                             int timed_runs = 200,
                             const std::vector<ResolutionLevel>& levels = full_ladder()) {
  require(!levels.empty(), "resolution_sweep: no levels requested");
  SweepResult result;
  result.variant = variant_name(variant);
  result.base_seed = base_seed;
  for (ResolutionLevel level : levels) {
    Dataset degraded;
    degraded.class_names = ds.class_names;
    degraded.frames.reserve(ds.frames.size());
    for (const TactileFrame& f : ds.frames) degraded.frames.push_back(degrade_resolution(f, level));
    SweepLevel entry;
    entry.name = resolution_name(level);
    const auto [rows, cols] = resolution_grid(level);
    entry.rows = rows;
    entry.cols = cols;
    try {
      entry.trials = repeated_trials<S>(variant, degraded, base_seed, n_trials, cfg, parallel,
                                        /*augment_splits=*/true, timed_runs);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    result.levels.push_back(std::move(entry));
  }
  return result;
}

// ---------------------------------------------------------------------------
// gradient checking on full graphs (double precision, central differences)
// ---------------------------------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  Index checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline double relative_error(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor);
}

// Compares backward-pass gradients against central differences on sampled
// entries of every parameter tensor (and the input).  `corrupt_substring`
// intentionally damages matching parameter gradients so the check's ability
// to catch a broken backward pass can itself be tested.
inline GradCheckReport gradient_check(ModelGraph<double>& graph, Tensor<double> x,
                                      const std::vector<int>& labels,
                                      Index samples_per_tensor = 16, std::uint64_t seed = 0,
                                      double tolerance = 1e-3,
                                      const std::string& corrupt_substring = "") {
  require(x.dim(0) >= 2, "gradient_check: need a batch of at least two samples");
  require(samples_per_tensor > 0, "gradient_check: samples_per_tensor must be positive");

  auto loss_of = [&]() {
    Tensor<double> logits = forward(graph, x, Mode::kTrain);
    return softmax_cross_entropy(logits, std::span<const int>(labels)).loss;
  };

  // analytic gradients
  zero_grads(graph);
  ForwardCache<double> cache;
  Tensor<double> logits = forward(graph, x, Mode::kTrain, &cache);
  SoftmaxLoss<double> sl = softmax_cross_entropy(logits, std::span<const int>(labels));
  Tensor<double> dx = backward(graph, sl.grad, cache);

  auto refs = parameters(graph);
  if (!corrupt_substring.empty()) {
    bool hit = false;
    for (ParamRef<double>& ref : refs)
      if (ref.name.find(corrupt_substring) != std::string::npos && ref.param->grad.size()) {
        ref.param->grad.array() += 1.0;
        hit = true;
      }
    require(hit, "gradient_check: no parameter matches '" + corrupt_substring + "'");
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(Rng::mix(seed, 0xFD01));
  const double h = 1e-5;

  auto check_tensor = [&](const std::string& name, Tensor<double>& values,
                          const Tensor<double>& grads) {
    GradCheckEntry entry;
    entry.name = name;
    const Index total = values.size();
    std::vector<Index> picks;
    if (total <= samples_per_tensor) {
      picks.resize(static_cast<std::size_t>(total));
      std::iota(picks.begin(), picks.end(), Index(0));
    } else {
      for (Index i = 0; i < samples_per_tensor; ++i)
        picks.push_back(static_cast<Index>(
            rng.uniform_int(std::int64_t(0), static_cast<std::int64_t>(total - 1))));
      std::sort(picks.begin(), picks.end());
      picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
    }
    for (Index i : picks) {
      const double keep = values[i];
      values[i] = keep + h;
      const double up = loss_of();
      values[i] = keep - h;
      const double down = loss_of();
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      entry.max_rel_err = std::max(entry.max_rel_err, relative_error(grads[i], numeric));
    }
    entry.checked = static_cast<Index>(picks.size());
    report.entries.push_back(entry);
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
  };

  for (ParamRef<double>& ref : refs)
    check_tensor(ref.name, ref.param->value, ref.param->grad);
  check_tensor("input", x, dx);

  report.passed = report.max_rel_err <= tolerance;
  return report;
}

// Small double-precision graph + batch for checking a full architecture.
inline GradCheckReport gradient_check_variant(Variant variant, std::uint64_t seed = 0,
                                              Index samples_per_tensor = 16,
                                              double tolerance = 1e-3,
                                              const std::string& corrupt_substring = "") {
  const Index rows = 8, cols = 9, n = 4, classes = 5;
  ModelGraph<double> graph = build_tactnet<double>(variant, rows, cols, classes,
                                                   Rng::mix(seed, 0xFD02));
  Rng rng(Rng::mix(seed, 0xFD03));
  Tensor<double> x({n, rows, cols, Index(1)});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& y : labels)
    y = static_cast<int>(rng.uniform_int(std::int64_t(0), std::int64_t(classes - 1)));
  return gradient_check(graph, std::move(x), labels, samples_per_tensor, seed, tolerance,
                        corrupt_substring);
}

// ---------------------------------------------------------------------------
// JSON report writers.  Reports hold only deterministic quantities; timing
// goes to a sibling document so reruns of the same seed are byte-identical.
// ---------------------------------------------------------------------------

inline ordered_json config_to_json(const TrainConfig& cfg) {
  return ordered_json{{"lr", cfg.lr},
                      {"momentum", cfg.momentum},
                      {"weight_decay", cfg.weight_decay},
                      {"batch_size", cfg.batch_size},
                      {"max_epochs", cfg.max_epochs},
                      {"lr_drop_epoch", cfg.lr_drop_epoch},
                      {"lr_drop_factor", cfg.lr_drop_factor},
                      {"patience", cfg.patience}};
}

inline TrainConfig config_from_json(const ordered_json& j, TrainConfig base = {}) {
  TrainConfig cfg = base;
  if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
  if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
  if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<Index>();
  if (j.contains("max_epochs")) cfg.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("lr_drop_epoch")) cfg.lr_drop_epoch = j.at("lr_drop_epoch").get<int>();
  if (j.contains("lr_drop_factor")) cfg.lr_drop_factor = j.at("lr_drop_factor").get<double>();
  if (j.contains("patience")) cfg.patience = j.at("patience").get<int>();
  for (const auto& [key, value] : j.items()) {
    (void)value;
    static const std::vector<std::string> known = {"lr",         "momentum",     "weight_decay",
                                                   "batch_size", "max_epochs",   "lr_drop_epoch",
                                                   "lr_drop_factor", "patience"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  validate_config(cfg);
  return cfg;
}

inline ordered_json eval_report_to_json(const EvalReport& r) {
  ordered_json j;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["n_test"] = r.n_test;
  j["accuracy"] = r.accuracy;
  j["param_count"] = r.param_count;
  j["class_names"] = r.class_names;
  ordered_json confusion = ordered_json::array();
  for (Index row = 0; row < r.confusion.rows(); ++row) {
    ordered_json line = ordered_json::array();
    for (Index col = 0; col < r.confusion.cols(); ++col) line.push_back(r.confusion(row, col));
    confusion.push_back(std::move(line));
  }
  j["confusion"] = std::move(confusion);
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  return j;
}

inline ordered_json timing_to_json(const TimingStats& t) {
  return ordered_json{{"batch_total_ms", t.batch_total_ms},
                      {"per_image_mean_ms", t.per_image_mean_ms},
                      {"per_image_std_ms", t.per_image_std_ms},
                      {"timed_runs", t.timed_runs},
                      {"warmup_runs", t.warmup_runs}};
}

inline ordered_json history_to_json(const std::vector<EpochStats>& history) {
  ordered_json arr = ordered_json::array();
  for (const EpochStats& e : history)
    arr.push_back(ordered_json{{"epoch", e.epoch},
                               {"train_acc", e.train_acc},
                               {"val_acc", e.val_acc},
                               {"loss", e.loss}});
  return arr;
}

inline ordered_json trial_to_json(const TrialResult& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["train_acc"] = r.train_acc;
  j["val_acc"] = r.val_acc;
  j["test_acc"] = r.test_acc;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["param_count"] = r.param_count;
  return j;
}

inline ordered_json trials_to_json(const TrialsSummary& s) {
  ordered_json j;
  j["variant"] = s.variant;
  j["base_seed"] = s.base_seed;
  j["requested"] = s.requested;
  j["completed"] = s.results.size();
  j["param_count"] = s.param_count;
  j["mean_test_acc"] = s.mean_test_acc;
  j["std_test_acc"] = s.std_test_acc;
  j["mean_train_acc"] = s.mean_train_acc;
  j["mean_val_acc"] = s.mean_val_acc;
  ordered_json trials = ordered_json::array();
  for (const TrialResult& r : s.results) trials.push_back(trial_to_json(r));
  j["trials"] = std::move(trials);
  ordered_json failures = ordered_json::array();
  for (const TrialFailure& f : s.failures)
    failures.push_back(ordered_json{{"seed", f.seed}, {"error", f.error}});
  j["failures"] = std::move(failures);
  return j;
}

inline ordered_json trials_timing_to_json(const TrialsSummary& s) {
  ordered_json j;
  j["variant"] = s.variant;
  j["mean_per_image_ms"] = s.mean_time_ms;
  j["std_per_image_ms"] = s.std_time_ms;
  ordered_json per_trial = ordered_json::array();
  for (const TrialResult& r : s.results) {
    ordered_json t = timing_to_json(r.timing);
    t["seed"] = r.seed;
    per_trial.push_back(std::move(t));
  }
  j["trials"] = std::move(per_trial);
  return j;
}

inline ordered_json sweep_to_json(const SweepResult& s) {
  ordered_json j;
  j["variant"] = s.variant;
  j["base_seed"] = s.base_seed;
  ordered_json levels = ordered_json::array();
  for (const SweepLevel& level : s.levels) {
    ordered_json e;
    e["resolution"] = level.name;
    e["rows"] = level.rows;
    e["cols"] = level.cols;
    if (!level.error.empty()) {
      e["error"] = level.error;
    } else {
      e["mean_test_acc"] = level.trials.mean_test_acc;
      e["std_test_acc"] = level.trials.std_test_acc;
      e["param_count"] = level.trials.param_count;
      e["completed"] = level.trials.results.size();
    }
    levels.push_back(std::move(e));
  }
  j["levels"] = std::move(levels);
  return j;
}

inline ordered_json sweep_timing_to_json(const SweepResult& s) {
  ordered_json j;
  j["variant"] = s.variant;
  ordered_json levels = ordered_json::array();
  for (const SweepLevel& level : s.levels) {
    if (!level.error.empty()) continue;
    levels.push_back(ordered_json{{"resolution", level.name},
                                  {"rows", level.rows},
                                  {"cols", level.cols},
                                  {"mean_per_image_ms", level.trials.mean_time_ms},
                                  {"std_per_image_ms", level.trials.std_time_ms}});
  }
  j["levels"] = std::move(levels);
  return j;
}

inline ordered_json gradcheck_to_json(const GradCheckReport& r) {
  ordered_json j;
  j["tolerance"] = r.tolerance;
  j["max_rel_err"] = r.max_rel_err;
  j["passed"] = r.passed;
  ordered_json entries = ordered_json::array();
  for (const GradCheckEntry& e : r.entries)
    entries.push_back(ordered_json{{"name", e.name},
                                   {"max_rel_err", e.max_rel_err},
                                   {"checked", e.checked}});
  j["layers"] = std::move(entries);
  return j;
}

inline void write_json(const ordered_json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_json: cannot open '" + path + "'");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("write_json: write failed for '" + path + "'");
}

}  // namespace tactnet
