#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tactnet/classifiers.hpp"
#include "tactnet/experiments.hpp"
#include "tactnet/model.hpp"
#include "tactnet/rng.hpp"

using tactnet::FeatureSet;
using tactnet::HeadConfig;
using tactnet::Index;
using tactnet::Rng;
using tactnet::SvmConfig;
using tactnet::SvmModel;

namespace {

// Gaussian clusters around orthogonal centers 6*e_k; sigma controls overlap.
FeatureSet make_blobs(Index n_per_class, Index k, double sigma, std::uint64_t seed) {
  FeatureSet fs;
  fs.features.resize(n_per_class * k, k);
  fs.labels.resize(static_cast<std::size_t>(n_per_class * k));
  Rng rng(seed);
  Index row = 0;
  for (Index c = 0; c < k; ++c)
    for (Index i = 0; i < n_per_class; ++i, ++row) {
      for (Index d = 0; d < k; ++d)
        fs.features(row, d) =
            static_cast<float>((d == c ? 6.0 : 0.0) + rng.normal(0.0, sigma));
      fs.labels[static_cast<std::size_t>(row)] = static_cast<int>(c);
    }
  return fs;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  REQUIRE(pred.size() == labels.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// one-vs-rest linear svm
// ---------------------------------------------------------------------------

TEST_CASE("two separable clusters are classified perfectly") {
  FeatureSet train = make_blobs(40, 2, 0.3, 1);
  SvmModel m = tactnet::train_svm(train, 2);
  CHECK(accuracy(tactnet::svm_predict(m, train.features), train.labels) == 1.0);
}

TEST_CASE("an absurd regularizer shrinks the weights toward zero") {
  FeatureSet train = make_blobs(40, 2, 0.3, 2);
  SvmConfig strong;
  strong.lambda = 1e3;
  SvmModel heavy = tactnet::train_svm(train, 2, strong);
  SvmModel light = tactnet::train_svm(train, 2);
  CHECK(heavy.weights.norm() < 1e-2);
  CHECK(heavy.weights.norm() < light.weights.norm() * 1e-2);
}

TEST_CASE("22 well-separated blobs reach at least 99 percent") {
  FeatureSet train = make_blobs(30, 22, 0.8, 3);
  FeatureSet test = make_blobs(10, 22, 0.8, 4);
  SvmModel m = tactnet::train_svm(train, 22);
  CHECK(accuracy(tactnet::svm_predict(m, test.features), test.labels) >= 0.99);
}

TEST_CASE("the averaged-iterate objective never increases across epochs") {
  FeatureSet train = make_blobs(25, 6, 1.5, 5);
  std::vector<double> objective;
  tactnet::train_svm(train, 6, SvmConfig{}, &objective);
  REQUIRE(objective.size() == 20);
  for (std::size_t e = 1; e < objective.size(); ++e)
    CHECK(objective[e] <= objective[e - 1] + 1e-12);
}

TEST_CASE("zero input scores reduce to the per-class bias") {
  SvmModel m;
  m.weights.setRandom(4, 3);
  m.bias.resize(4);
  m.bias << 0.1, -0.2, 0.7, 0.3;
  m.feat_mean = Eigen::VectorXd::Zero(3);
  m.feat_std = Eigen::VectorXd::Ones(3);
  Eigen::MatrixXf x = Eigen::MatrixXf::Zero(5, 3);
  std::vector<int> pred = tactnet::svm_predict(m, x);
  for (int p : pred) CHECK(p == 2);
}

TEST_CASE("uniform feature scaling does not change predictions") {
  FeatureSet train = make_blobs(30, 5, 1.0, 6);
  FeatureSet test = make_blobs(12, 5, 1.0, 7);
  SvmModel base = tactnet::train_svm(train, 5);

  FeatureSet scaled_train = train;
  scaled_train.features *= 3.0f;
  FeatureSet scaled_test = test;
  scaled_test.features *= 3.0f;
  SvmModel scaled = tactnet::train_svm(scaled_train, 5);

  CHECK(tactnet::svm_predict(base, test.features) ==
        tactnet::svm_predict(scaled, scaled_test.features));
}

TEST_CASE("svm training is deterministic per seed") {
  FeatureSet train = make_blobs(20, 4, 1.0, 8);
  SvmConfig cfg;
  cfg.seed = 11;
  SvmModel a = tactnet::train_svm(train, 4, cfg);
  SvmModel b = tactnet::train_svm(train, 4, cfg);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  cfg.seed = 12;
  SvmModel c = tactnet::train_svm(train, 4, cfg);
  CHECK(a.weights != c.weights);
}

TEST_CASE("the validation set cannot leak into svm fitting") {
  FeatureSet train = make_blobs(20, 3, 1.0, 9);
  FeatureSet val_a = make_blobs(5, 3, 1.0, 10);
  FeatureSet val_b = make_blobs(5, 3, 5.0, 11);  // totally different noise
  SvmModel a = tactnet::train_svm(train, val_a, 3);
  SvmModel b = tactnet::train_svm(train, val_b, 3);
  CHECK(a.weights == b.weights);  // bitwise: val is shape-checked only
  CHECK(a.bias == b.bias);
}

TEST_CASE("degenerate svm inputs are rejected") {
  FeatureSet train = make_blobs(10, 2, 0.5, 12);
  for (auto& y : train.labels) y = 0;
  CHECK_THROWS_WITH_AS(tactnet::train_svm(train, 2), doctest::Contains("single class"),
                       std::invalid_argument);

  FeatureSet ok = make_blobs(10, 2, 0.5, 13);
  FeatureSet narrow;
  narrow.features.setZero(4, 1);
  narrow.features.col(0) << 1.f, 2.f, 3.f, 4.f;
  narrow.labels = {0, 1, 0, 1};
  CHECK_THROWS_WITH_AS(tactnet::train_svm(ok, narrow, 2), doctest::Contains("dimensions differ"),
                       std::invalid_argument);

  SvmModel m = tactnet::train_svm(ok, 2);
  Eigen::MatrixXf wrong = Eigen::MatrixXf::Zero(3, 7);
  CHECK_THROWS_AS(tactnet::svm_predict(m, wrong), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// fine-tuned softmax head
// ---------------------------------------------------------------------------

TEST_CASE("the head separates one-hot features immediately") {
  FeatureSet train;
  const Index k = 22, reps = 10;
  train.features.setZero(k * reps, k);
  train.labels.resize(static_cast<std::size_t>(k * reps));
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < reps; ++r) {
      train.features(c * reps + r, c) = 1.0f;
      train.labels[static_cast<std::size_t>(c * reps + r)] = static_cast<int>(c);
    }
  tactnet::HeadModel m = tactnet::finetune_head(train, train, k);
  CHECK(accuracy(tactnet::head_predict(m, train.features), train.labels) >= 0.99);
}

TEST_CASE("a zero-epoch head predicts class zero, scoring exactly 1/22 when balanced") {
  FeatureSet train = make_blobs(10, 22, 1.0, 14);
  HeadConfig cfg;
  cfg.max_epochs = 0;
  tactnet::HeadModel m = tactnet::finetune_head(train, train, 22, cfg);
  CHECK(m.epochs_run == 0);
  CHECK(accuracy(tactnet::head_predict(m, train.features), train.labels) ==
        doctest::Approx(1.0 / 22.0).epsilon(1e-12));
}

TEST_CASE("head training stops early once validation goes stale") {
  FeatureSet train = make_blobs(30, 4, 0.5, 15);
  FeatureSet val = make_blobs(8, 4, 0.5, 16);
  HeadConfig cfg;
  cfg.max_epochs = 500;
  tactnet::HeadModel m = tactnet::finetune_head(train, val, 4, cfg);
  CHECK(m.epochs_run < 500);  // separable blobs saturate long before the cap
  CHECK(accuracy(tactnet::head_predict(m, val.features), val.labels) >= 0.99);
}

TEST_CASE("head rejects an empty or mismatched validation set") {
  FeatureSet train = make_blobs(10, 3, 0.5, 17);
  FeatureSet empty;
  empty.features.resize(0, 3);
  CHECK_THROWS_AS(tactnet::finetune_head(train, empty, 3), std::invalid_argument);

  FeatureSet narrow;
  narrow.features.setOnes(4, 2);
  narrow.labels = {0, 1, 2, 0};
  CHECK_THROWS_WITH_AS(tactnet::finetune_head(train, narrow, 3),
                       doctest::Contains("dimensions differ"), std::invalid_argument);
}

TEST_CASE("the fine-tuned head keeps pace with the svm on 5-seed means") {
  double svm_mean = 0.0, head_mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FeatureSet train = make_blobs(30, 8, 1.5, 100 + seed);
    FeatureSet val = make_blobs(8, 8, 1.5, 200 + seed);
    FeatureSet test = make_blobs(12, 8, 1.5, 300 + seed);

    SvmConfig scfg;
    scfg.seed = seed;
    SvmModel svm = tactnet::train_svm(train, val, 8, scfg);
    HeadConfig hcfg;
    hcfg.seed = seed;
    tactnet::HeadModel head = tactnet::finetune_head(train, val, 8, hcfg);

    svm_mean += accuracy(tactnet::svm_predict(svm, test.features), test.labels) / 5.0;
    head_mean += accuracy(tactnet::head_predict(head, test.features), test.labels) / 5.0;
  }
  INFO("svm mean ", svm_mean, " head mean ", head_mean);
  CHECK(head_mean >= svm_mean - 0.01);
  CHECK(svm_mean >= 0.9);  // the blobs really are separable
}

// ---------------------------------------------------------------------------
// feature CSV round-trip
// ---------------------------------------------------------------------------

TEST_CASE("export/import reproduces features and labels") {
  oracles::TempDir dir;
  const std::string path = dir.file("features.csv");
  FeatureSet fs = make_blobs(7, 3, 1.0, 18);
  tactnet::export_features(fs, path);
  FeatureSet back = tactnet::import_features(path);
  REQUIRE(back.size() == fs.size());
  REQUIRE(back.dim() == fs.dim());
  CHECK(back.labels == fs.labels);
  // shortest-round-trip float formatting makes the trip exact
  CHECK((back.features - fs.features).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((back.features - fs.features).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("a hand-written three-row file imports as written") {
  oracles::TempDir dir;
  const std::string path = dir.file("tiny.csv");
  std::ofstream(path) << "label,f0,f1,f2,f3\n"
                         "0,0.5,1,-2,0.25\n"
                         "2,1e-3,0,3.5,4\n"
                         "1,-1,-0.125,8,0.0\n";
  FeatureSet fs = tactnet::import_features(path);
  REQUIRE(fs.size() == 3);
  REQUIRE(fs.dim() == 4);
  CHECK(fs.labels == std::vector<int>{0, 2, 1});
  CHECK(fs.features(0, 0) == 0.5f);
  CHECK(fs.features(1, 0) == 1e-3f);
  CHECK(fs.features(2, 1) == -0.125f);
  CHECK(fs.features(2, 3) == 0.0f);
}

TEST_CASE("import errors carry the offending line number") {
  oracles::TempDir dir;

  const std::string ragged = dir.file("ragged.csv");
  std::ofstream(ragged) << "label,f0,f1\n0,1,2\n1,3\n";
  CHECK_THROWS_WITH_AS(tactnet::import_features(ragged), doctest::Contains(":3:"),
                       std::runtime_error);

  const std::string badlabel = dir.file("badlabel.csv");
  std::ofstream(badlabel) << "label,f0\nx,1\n";
  CHECK_THROWS_WITH_AS(tactnet::import_features(badlabel), doctest::Contains(":2:"),
                       std::runtime_error);

  const std::string noheader = dir.file("noheader.csv");
  std::ofstream(noheader) << "0,1,2\n";
  CHECK_THROWS_WITH_AS(tactnet::import_features(noheader), doctest::Contains(":1:"),
                       std::runtime_error);

  CHECK_THROWS_AS(tactnet::import_features(dir.file("absent.csv")), std::runtime_error);
}

// ---------------------------------------------------------------------------
// frozen extractor
// ---------------------------------------------------------------------------

TEST_CASE("feature extraction and head training leave the backbone untouched") {
  oracles::TempDir dir;
  auto g = tactnet::build_tactnet(tactnet::Variant::kTactNet6, 14, 25, 22, 21);
  const std::string before = dir.file("before.tnet");
  tactnet::save_model(g, before);

  Rng rng(22);
  std::vector<tactnet::TactileFrame> frames;
  for (int i = 0; i < 44; ++i) frames.push_back(oracles::random_frame(rng, 14, 25, i % 22));

  FeatureSet fs = tactnet::make_feature_set(g, frames, {}, "test");
  CHECK(fs.size() == 44);
  CHECK(fs.dim() == tactnet::feature_dimension(g));
  tactnet::finetune_head(fs, fs, 22);

  const std::string after = dir.file("after.tnet");
  tactnet::save_model(g, after);
  CHECK(oracles::slurp(before) == oracles::slurp(after));
}
