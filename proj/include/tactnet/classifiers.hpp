#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tactnet/rng.hpp"
#include "tactnet/tensor.hpp"

namespace tactnet {

// Fixed-length descriptors with their labels, e.g. penultimate-layer
// activations of a trained network.
struct FeatureSet {
  Eigen::MatrixXf features;  // N x D
  std::vector<int> labels;   // N
  std::vector<std::string> class_names;
  std::string source;  // free-form provenance (model file, extraction cut, ...)

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
};

inline void validate_features(const FeatureSet& fs) {
  require(fs.features.rows() == static_cast<Index>(fs.labels.size()),
          "feature set: row/label count mismatch");
  require(fs.features.rows() > 0 && fs.features.cols() > 0, "feature set: empty");
  require(fs.features.allFinite(), "feature set: non-finite values");
  for (int y : fs.labels) require(y >= 0, "feature set: negative label");
}

// ---------------------------------------------------------------------------
// one-vs-rest linear SVM trained with Pegasos (stochastic subgradient on the
// regularized hinge objective, averaged iterates)
// ---------------------------------------------------------------------------

struct SvmConfig {
  double lambda = 1e-4;
  int epochs = 20;
  std::uint64_t seed = 0;
};

struct SvmModel {
  Eigen::MatrixXd weights;   // K x D, in standardized feature space
  Eigen::VectorXd bias;      // K
  Eigen::VectorXd feat_mean; // D, train-split statistics baked into the model
  Eigen::VectorXd feat_std;  // D
  std::vector<std::string> class_names;
  double lambda = 1e-4;
  int epochs = 20;
  std::uint64_t seed = 0;

  Index n_classes() const { return weights.rows(); }
  Index dim() const { return weights.cols(); }
};

namespace detail {

inline void standardization_stats(const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
                                  Eigen::VectorXd& stddev) {
  mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  stddev = (centered.array().square().colwise().mean()).sqrt();
  // constant features standardize to zero instead of blowing up
  for (Index d = 0; d < stddev.size(); ++d)
    if (stddev[d] < 1e-12) stddev[d] = 1.0;
}

}  // namespace detail

// regularized hinge objective for one binary subproblem, standardized space.
// The bias is optimized as a constant-one feature, so it is regularized too.
inline double svm_binary_objective(const Eigen::VectorXd& w, double b, const Eigen::MatrixXd& x,
                                   const std::vector<double>& y, double lambda) {
  double hinge = 0.0;
  for (Index i = 0; i < x.rows(); ++i)
    hinge += std::max(0.0, 1.0 - y[static_cast<std::size_t>(i)] * (x.row(i).dot(w) + b));
  return 0.5 * lambda * (w.squaredNorm() + b * b) + hinge / static_cast<double>(x.rows());
}

// `objective_history`, when given, receives the mean one-vs-rest objective of
// the running averaged iterate at each epoch boundary.
inline SvmModel train_svm(const FeatureSet& train, Index n_classes, const SvmConfig& cfg = {},
                          std::vector<double>* objective_history = nullptr) {
  validate_features(train);
  require(cfg.lambda > 0.0, "train_svm: lambda must be positive");
  require(cfg.epochs > 0, "train_svm: epochs must be positive");
  require(n_classes >= 2, "train_svm: need at least two classes");
  for (int y : train.labels)
    require(y < n_classes, "train_svm: label " + std::to_string(y) + " >= n_classes");
  const auto distinct = [&] {
    std::vector<int> ys = train.labels;
    std::sort(ys.begin(), ys.end());
    return std::unique(ys.begin(), ys.end()) - ys.begin();
  }();
  require(distinct >= 2, "train_svm: training set contains a single class");

  const Index n = train.size(), dim = train.dim();
  Eigen::MatrixXd x = train.features.cast<double>();
  SvmModel model;
  detail::standardization_stats(x, model.feat_mean, model.feat_std);
  x = (x.rowwise() - model.feat_mean.transpose()).array().rowwise() /
      model.feat_std.transpose().array();

  model.weights.setZero(n_classes, dim);
  model.bias.setZero(n_classes);
  model.class_names = train.class_names;
  model.lambda = cfg.lambda;
  model.epochs = cfg.epochs;
  model.seed = cfg.seed;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));

  // per-class binary labels computed once
  std::vector<std::vector<double>> y_all(static_cast<std::size_t>(n_classes));
  for (Index k = 0; k < n_classes; ++k) {
    auto& yk = y_all[static_cast<std::size_t>(k)];
    yk.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
      yk[static_cast<std::size_t>(i)] =
          train.labels[static_cast<std::size_t>(i)] == static_cast<int>(k) ? 1.0 : -1.0;
  }

  std::vector<double> epoch_objective(static_cast<std::size_t>(cfg.epochs), 0.0);
  for (Index k = 0; k < n_classes; ++k) {
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(k)));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    double b = 0.0;
    Eigen::VectorXd w_sum = Eigen::VectorXd::Zero(dim);
    double b_sum = 0.0;
    std::int64_t t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      for (Index i : order) {
        ++t;
        const double eta = 1.0 / (cfg.lambda * static_cast<double>(t));
        const double y = y_all[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
        const double margin = y * (x.row(i).dot(w) + b);
        // shrink the bias with the weights (constant-one feature trick);
        // an unregularized bias blows up under the 1/(lambda*t) step sizes
        w *= (1.0 - eta * cfg.lambda);
        b *= (1.0 - eta * cfg.lambda);
        if (margin < 1.0) {
          w += eta * y * x.row(i).transpose();
          b += eta * y;
        }
        w_sum += w;
        b_sum += b;
      }
      if (objective_history)
        epoch_objective[static_cast<std::size_t>(epoch)] += svm_binary_objective(
            w_sum / static_cast<double>(t), b_sum / static_cast<double>(t), x,
            y_all[static_cast<std::size_t>(k)], cfg.lambda);
    }
    model.weights.row(k) = (w_sum / static_cast<double>(t)).transpose();
    model.bias[k] = b_sum / static_cast<double>(t);
  }
  if (objective_history) {
    objective_history->clear();
    for (double o : epoch_objective)
      objective_history->push_back(o / static_cast<double>(n_classes));
  }
  return model;
}

// The validation set plays no role in fitting (standardization and weights
// come from the training split alone); it is only shape-checked here.
inline SvmModel train_svm(const FeatureSet& train, const FeatureSet& val, Index n_classes,
                          const SvmConfig& cfg = {},
                          std::vector<double>* objective_history = nullptr) {
  validate_features(val);
  require(val.dim() == train.dim(), "train_svm: train/val feature dimensions differ");
  return train_svm(train, n_classes, cfg, objective_history);
}

inline Eigen::MatrixXd svm_scores(const SvmModel& model, const Eigen::MatrixXf& features) {
  require(features.cols() == model.dim(),
          "svm_scores: feature dimension " + std::to_string(features.cols()) +
              " does not match model dimension " + std::to_string(model.dim()));
  Eigen::MatrixXd x = features.cast<double>();
  x = (x.rowwise() - model.feat_mean.transpose()).array().rowwise() /
      model.feat_std.transpose().array();
  Eigen::MatrixXd scores = x * model.weights.transpose();
  scores.rowwise() += model.bias.transpose();
  return scores;  // N x K
}

// argmax over class scores; ties resolve to the lowest class index
inline std::vector<int> svm_predict(const SvmModel& model, const Eigen::MatrixXf& features) {
  const Eigen::MatrixXd scores = svm_scores(model, features);
  std::vector<int> pred(static_cast<std::size_t>(scores.rows()));
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < scores.cols(); ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return pred;
}

// mean one-vs-rest objective across classes (for optimization sanity checks)
inline double svm_objective(const SvmModel& model, const FeatureSet& fs) {
  validate_features(fs);
  Eigen::MatrixXd x = fs.features.cast<double>();
  x = (x.rowwise() - model.feat_mean.transpose()).array().rowwise() /
      model.feat_std.transpose().array();
  double total = 0.0;
  for (Index k = 0; k < model.n_classes(); ++k) {
    std::vector<double> y(fs.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = fs.labels[i] == static_cast<int>(k) ? 1.0 : -1.0;
    total += svm_binary_objective(model.weights.row(k).transpose(), model.bias[k], x, y,
                                  model.lambda);
  }
  return total / static_cast<double>(model.n_classes());
}

// ---------------------------------------------------------------------------
// softmax head fine-tuned on frozen features
// ---------------------------------------------------------------------------

struct HeadConfig {
  double lr = 0.05;
  int max_epochs = 200;
  int patience = 5;
  Index batch_size = 64;
  std::uint64_t seed = 0;
};

struct HeadModel {
  Eigen::MatrixXd weights;   // D x K, standardized space
  Eigen::VectorXd bias;      // K
  Eigen::VectorXd feat_mean; // D
  Eigen::VectorXd feat_std;  // D
  std::vector<std::string> class_names;
  int epochs_run = 0;

  Index n_classes() const { return weights.cols(); }
  Index dim() const { return weights.rows(); }
};

inline Eigen::MatrixXd head_logits(const HeadModel& model, const Eigen::MatrixXf& features) {
  require(features.cols() == model.dim(), "head_logits: feature dimension mismatch");
  Eigen::MatrixXd x = features.cast<double>();
  x = (x.rowwise() - model.feat_mean.transpose()).array().rowwise() /
      model.feat_std.transpose().array();
  Eigen::MatrixXd logits = x * model.weights;
  logits.rowwise() += model.bias.transpose();
  return logits;
}

inline std::vector<int> head_predict(const HeadModel& model, const Eigen::MatrixXf& features) {
  const Eigen::MatrixXd logits = head_logits(model, features);
  std::vector<int> pred(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return pred;
}

namespace detail {

inline double head_accuracy(const HeadModel& model, const FeatureSet& fs) {
  const std::vector<int> pred = head_predict(model, fs.features);
  Index hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == fs.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace detail

inline HeadModel finetune_head(const FeatureSet& train, const FeatureSet& val, Index n_classes,
                               const HeadConfig& cfg = {}) {
  validate_features(train);
  validate_features(val);
  require(val.size() > 0, "finetune_head: empty validation set");
  require(train.dim() == val.dim(), "finetune_head: train/val feature dimensions differ");
  require(n_classes >= 2, "finetune_head: need at least two classes");
  require(cfg.lr > 0.0 && cfg.max_epochs >= 0 && cfg.patience > 0 && cfg.batch_size > 0,
          "finetune_head: invalid config");
  for (int y : train.labels)
    require(y < n_classes, "finetune_head: label " + std::to_string(y) + " >= n_classes");

  const Index n = train.size(), dim = train.dim();
  HeadModel model;
  {
    const Eigen::MatrixXd xd = train.features.cast<double>();
    detail::standardization_stats(xd, model.feat_mean, model.feat_std);
  }
  Eigen::MatrixXd x = train.features.cast<double>();
  x = (x.rowwise() - model.feat_mean.transpose()).array().rowwise() /
      model.feat_std.transpose().array();
  model.weights.setZero(dim, n_classes);
  model.bias.setZero(n_classes);
  model.class_names = train.class_names;

  Rng rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));

  Eigen::MatrixXd best_w = model.weights;
  Eigen::VectorXd best_b = model.bias;
  double best_val = -1.0;
  int stale = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index count = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(count, dim);
      for (Index i = 0; i < count; ++i) xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
      Eigen::MatrixXd logits = xb * model.weights;
      logits.rowwise() += model.bias.transpose();
      // softmax cross-entropy gradient: probs - onehot, averaged over batch
      Eigen::MatrixXd probs = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
      probs.array().colwise() /= probs.rowwise().sum().array();
      for (Index i = 0; i < count; ++i)
        probs(i, train.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])]) -=
            1.0;
      probs /= static_cast<double>(count);
      model.weights -= cfg.lr * (xb.transpose() * probs);
      model.bias -= cfg.lr * probs.colwise().sum().transpose();
    }
    model.epochs_run = epoch + 1;
    const double val_acc = detail::head_accuracy(model, val);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_w = model.weights;
      best_b = model.bias;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  model.weights = best_w;
  model.bias = best_b;
  return model;
}

// ---------------------------------------------------------------------------
// feature CSV: header "label,f0,f1,...", one row per sample
// ---------------------------------------------------------------------------

inline void export_features(const FeatureSet& fs, const std::string& path) {
  validate_features(fs);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_features: cannot open '" + path + "'");
  os << "label";
  for (Index d = 0; d < fs.dim(); ++d) os << ",f" << d;
  os.put('\n');
  char buf[64];
  for (Index i = 0; i < fs.size(); ++i) {
    os << fs.labels[static_cast<std::size_t>(i)];
    for (Index d = 0; d < fs.dim(); ++d) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), fs.features(i, d));
      if (ec != std::errc{}) throw std::runtime_error("export_features: formatting failed");
      os.put(',');
      os.write(buf, end - buf);
    }
    os.put('\n');
  }
  if (!os) throw std::runtime_error("export_features: write failed for '" + path + "'");
}

inline FeatureSet import_features(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("import_features: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line.rfind("label", 0) != 0)
    throw std::runtime_error(path + ":1: expected header starting with 'label'");
  // count feature columns from the header
  Index dim = static_cast<Index>(std::count(line.begin(), line.end(), ','));
  require(dim > 0, path + ":1: header declares no feature columns");

  std::vector<float> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const char* ptr = line.data();
    const char* end = line.data() + line.size();
    int label;
    auto [p1, ec1] = std::from_chars(ptr, end, label);
    if (ec1 != std::errc{} || label < 0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected a non-negative integer label");
    ptr = p1;
    Index got = 0;
    while (ptr < end && *ptr == ',') {
      ++ptr;
      float v;
      auto [p2, ec2] = std::from_chars(ptr, end, v);
      if (ec2 != std::errc{})
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad feature value");
      values.push_back(v);
      ptr = p2;
      ++got;
      while (ptr < end && *ptr == '\r') ++ptr;
    }
    if (got != dim)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(dim) + " features, got " + std::to_string(got));
    labels.push_back(label);
  }
  require(!labels.empty(), path + ": no data rows");
  FeatureSet fs;
  fs.labels = std::move(labels);
  fs.features.resize(static_cast<Index>(fs.labels.size()), dim);
  for (Index i = 0; i < fs.features.rows(); ++i)
    for (Index d = 0; d < dim; ++d)
      fs.features(i, d) = values[static_cast<std::size_t>(i * dim + d)];
  fs.source = path;
  return fs;
}

}  // namespace tactnet
