// tactnet command-line front end: synthetic data generation, training,
// evaluation, the repeated-trial and resolution-sweep protocols, frozen-
// feature classifiers, benchmarking and gradient checking.  Every run writes
// a manifest.json into --out before doing any work, and all artifacts land
// under --out.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tactnet/classifiers.hpp"
#include "tactnet/dataset.hpp"
#include "tactnet/experiments.hpp"
#include "tactnet/image_ops.hpp"
#include "tactnet/model.hpp"
#include "tactnet/version.hpp"

namespace fs = std::filesystem;
using tactnet::Index;
using tactnet::ordered_json;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = "out";
};

std::string join_argv(int argc, char** argv) {
  std::ostringstream os;
  for (int i = 0; i < argc; ++i) {
    if (i) os << ' ';
    const std::string arg = argv[i];
    if (arg.find(' ') != std::string::npos)
      os << '"' << arg << '"';
    else
      os << arg;
  }
  return os.str();
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// TDAT file or a directory of <class>_<id>.csv frames
tactnet::Dataset load_any_dataset(const std::string& path) {
  if (fs::is_directory(path)) return tactnet::import_frames_csv(path);
  return tactnet::load_dataset(path);
}

tactnet::TrainConfig layer_config(const tactnet::TrainConfig& flag_cfg,
                                  const std::string& config_path) {
  if (config_path.empty()) {
    tactnet::validate_config(flag_cfg);
    return flag_cfg;
  }
  std::ifstream is(config_path);
  if (!is) throw std::runtime_error("cannot open config '" + config_path + "'");
  ordered_json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config '" + config_path + "': " + e.what());
  }
  return tactnet::config_from_json(j, flag_cfg);
}

void write_manifest(const GlobalOpts& g, const std::string& subcommand,
                    const std::string& command, const std::vector<std::uint64_t>& seeds,
                    ordered_json extra, const std::vector<std::string>& outputs) {
  fs::create_directories(g.out_dir);
  ordered_json m;
  m["tool"] = "tactnet";
  m["version"] = tactnet::kVersion;
  m["subcommand"] = subcommand;
  m["command"] = command;
  m["seeds"] = seeds;
  m["out"] = g.out_dir;
  for (auto& [key, value] : extra.items()) m[key] = value;
  m["outputs"] = outputs;
  tactnet::write_json(m, (fs::path(g.out_dir) / "manifest.json").string());
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
  return (fs::path(g.out_dir) / name).string();
}

void add_train_flags(CLI::App* cmd, tactnet::TrainConfig& cfg) {
  cmd->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
  cmd->add_option("--momentum", cfg.momentum, "SGD momentum")->capture_default_str();
  cmd->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay")->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size, "minibatch size")->capture_default_str();
  cmd->add_option("--max-epochs", cfg.max_epochs, "epoch cap")->capture_default_str();
  cmd->add_option("--lr-drop-epoch", cfg.lr_drop_epoch,
                  "epoch after which lr is multiplied by --lr-drop-factor")
      ->capture_default_str();
  cmd->add_option("--lr-drop-factor", cfg.lr_drop_factor, "lr multiplier at the drop epoch")
      ->capture_default_str();
  cmd->add_option("--patience", cfg.patience,
                  "early-stop after this many epochs without val improvement")
      ->capture_default_str();
}

std::vector<tactnet::TactileFrame> select_split(const tactnet::Dataset& ds,
                                                const std::string& split, std::uint64_t seed,
                                                bool augment) {
  if (split == "all") return ds.frames;
  const tactnet::TrialData data = tactnet::prepare_trial_data(ds, seed, augment);
  if (split == "train") return data.train;
  if (split == "val") return data.val;
  if (split == "test") return data.test;
  throw std::invalid_argument("unknown split '" + split +
                              "' (expected train, val, test or all)");
}

ordered_json classifier_report(const std::vector<int>& pred, const std::vector<int>& labels,
                               Index n_classes) {
  Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  Index hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    confusion(labels[i], pred[i])++;
    if (pred[i] == labels[i]) ++hits;
  }
  ordered_json j;
  j["n_test"] = pred.size();
  j["accuracy"] = static_cast<double>(hits) / static_cast<double>(pred.size());
  ordered_json rows = ordered_json::array();
  for (Index r = 0; r < n_classes; ++r) {
    ordered_json line = ordered_json::array();
    for (Index c = 0; c < n_classes; ++c) line.push_back(confusion(r, c));
    rows.push_back(std::move(line));
  }
  j["confusion"] = std::move(rows);
  return j;
}

Index label_span(std::initializer_list<const tactnet::FeatureSet*> sets) {
  int max_label = 0;
  for (const tactnet::FeatureSet* fs : sets)
    for (int y : fs->labels) max_label = std::max(max_label, y);
  return static_cast<Index>(max_label) + 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
  const std::string command = join_argv(argc, argv);
  GlobalOpts g;

  CLI::App app{"tactile pressure-image classification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", g.seed, "base random seed");
  app.add_option("--config", g.config_path, "JSON training-config file (overrides flags)");
  app.add_option("--out", g.out_dir, "output directory for all artifacts");

  std::function<void()> action;

  // ---- synth -------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("synth", "generate the synthetic tactile dataset");
    cmd->fallthrough();
    auto n_per_class = std::make_shared<Index>(50);
    cmd->add_option("--n-per-class", *n_per_class, "frames per class");
    cmd->callback([&, n_per_class] {
      action = [&, n_per_class] {
        write_manifest(g, "synth", command, {g.seed},
                       ordered_json{{"n_per_class", *n_per_class}}, {"synth.tdat"});
        const tactnet::Dataset ds = tactnet::synthesize_dataset(g.seed, *n_per_class);
        const std::string path = out_path(g, "synth.tdat");
        tactnet::save_dataset(ds, path);
        std::cout << "synth: " << ds.size() << " frames, " << ds.n_classes() << " classes -> "
                  << path << "\n";
      };
    });
  }

  // ---- train ---------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("train", "train one variant on one split plan");
    cmd->fallthrough();
    struct Opts {
      std::string variant = "tactnet4", data;
      tactnet::TrainConfig cfg;
      bool no_augment = false;
      int timed_runs = 200;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--variant", o->variant, "tactnet4|tactnet6|tactresnet");
    cmd->add_option("--data", o->data, "TDAT file or directory of frame CSVs")->required();
    add_train_flags(cmd, o->cfg);
    cmd->add_flag("--no-augment", o->no_augment, "train on raw splits without x6 expansion");
    cmd->add_option("--timed-runs", o->timed_runs, "single-image timing samples");
    cmd->callback([&, o] {
      action = [&, o] {
        const tactnet::Variant variant = tactnet::variant_from_name(o->variant);
        const tactnet::TrainConfig cfg = layer_config(o->cfg, g.config_path);
        const tactnet::Dataset ds = load_any_dataset(o->data);
        write_manifest(g, "train", command, {g.seed},
                       ordered_json{{"variant", o->variant},
                                    {"data", o->data},
                                    {"dataset_checksum", hex64(tactnet::dataset_checksum(ds))},
                                    {"augment", !o->no_augment},
                                    {"config", tactnet::config_to_json(cfg)}},
                       {"model.tnet", "history.csv", "report.json", "timing.json"});

        tactnet::TrialData data = tactnet::prepare_trial_data(ds, g.seed, !o->no_augment);
        tactnet::ModelGraph<float> graph = tactnet::build_tactnet<float>(
            variant, data.train.front().rows(), data.train.front().cols(), ds.n_classes(),
            tactnet::Rng::mix(g.seed, 0xB001));
        tactnet::TrainConfig run_cfg = cfg;
        run_cfg.seed = tactnet::Rng::mix(g.seed, 0xB002);
        const tactnet::TrainResult tr = tactnet::train_model(graph, data.train, data.val, run_cfg);
        tactnet::write_history_csv(tr.history, out_path(g, "history.csv"));
        tactnet::save_model(graph, out_path(g, "model.tnet"));
        tactnet::EvalReport report = tactnet::evaluate(graph, data.test, ds.class_names);
        report.seed = g.seed;
        tactnet::write_json(tactnet::eval_report_to_json(report), out_path(g, "report.json"));
        const tactnet::TimingStats timing = tactnet::time_inference(graph, data.test,
                                                                    o->timed_runs);
        tactnet::write_json(tactnet::timing_to_json(timing), out_path(g, "timing.json"));
        std::cout << "train: " << o->variant << " best val acc " << tr.best_val_acc
                  << " (epoch " << tr.best_epoch << "/" << tr.epochs_run << "), test acc "
                  << report.accuracy << " -> " << g.out_dir << "\n";
      };
    });
  }

  // ---- eval ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("eval", "evaluate a saved model on a dataset split");
    cmd->fallthrough();
    struct Opts {
      std::string model, data, split = "test";
      bool no_augment = false;
      int timed_runs = 200, warmup = 10;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model", o->model, "TNET checkpoint")->required();
    cmd->add_option("--data", o->data, "TDAT file or directory of frame CSVs")->required();
    cmd->add_option("--split", o->split, "train|val|test|all");
    cmd->add_flag("--no-augment", o->no_augment, "evaluate raw splits without x6 expansion");
    cmd->add_option("--timed-runs", o->timed_runs, "single-image timing samples");
    cmd->add_option("--warmup", o->warmup, "warmup inferences excluded from timing");
    cmd->callback([&, o] {
      action = [&, o] {
        const tactnet::Dataset ds = load_any_dataset(o->data);
        write_manifest(g, "eval", command, {g.seed},
                       ordered_json{{"model", o->model},
                                    {"data", o->data},
                                    {"dataset_checksum", hex64(tactnet::dataset_checksum(ds))},
                                    {"split", o->split},
                                    {"augment", !o->no_augment}},
                       {"report.json", "timing.json"});
        tactnet::ModelGraph<float> graph = tactnet::load_model<float>(o->model);
        const std::vector<tactnet::TactileFrame> frames =
            select_split(ds, o->split, g.seed, !o->no_augment);
        tactnet::EvalReport report = tactnet::evaluate(graph, frames, ds.class_names);
        report.seed = g.seed;
        tactnet::write_json(tactnet::eval_report_to_json(report), out_path(g, "report.json"));
        const tactnet::TimingStats timing =
            tactnet::time_inference(graph, frames, o->timed_runs, o->warmup);
        tactnet::write_json(tactnet::timing_to_json(timing), out_path(g, "timing.json"));
        std::cout << "eval: " << report.variant << " on " << o->split << " acc "
                  << report.accuracy << " (" << report.n_test << " frames) -> " << g.out_dir
                  << "\n";
      };
    });
  }

  // ---- trials ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("trials", "repeated randomized-split training protocol");
    cmd->fallthrough();
    struct Opts {
      std::string variant = "tactnet6", data;
      tactnet::TrainConfig cfg;
      int n = 20, parallel = 1, timed_runs = 200;
      bool no_augment = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--variant", o->variant, "tactnet4|tactnet6|tactresnet");
    cmd->add_option("--data", o->data, "TDAT file or directory of frame CSVs")->required();
    cmd->add_option("--n", o->n, "number of trials (seeds seed..seed+n-1)");
    cmd->add_option("--parallel", o->parallel, "worker threads across trials");
    cmd->add_option("--timed-runs", o->timed_runs, "single-image timing samples per trial");
    cmd->add_flag("--no-augment", o->no_augment, "skip the x6 split expansion");
    add_train_flags(cmd, o->cfg);
    cmd->callback([&, o] {
      action = [&, o] {
        const tactnet::Variant variant = tactnet::variant_from_name(o->variant);
        const tactnet::TrainConfig cfg = layer_config(o->cfg, g.config_path);
        const tactnet::Dataset ds = load_any_dataset(o->data);
        std::vector<std::uint64_t> seeds;
        for (int t = 0; t < o->n; ++t) seeds.push_back(g.seed + static_cast<std::uint64_t>(t));
        write_manifest(g, "trials", command, seeds,
                       ordered_json{{"variant", o->variant},
                                    {"data", o->data},
                                    {"dataset_checksum", hex64(tactnet::dataset_checksum(ds))},
                                    {"n", o->n},
                                    {"parallel", o->parallel},
                                    {"augment", !o->no_augment},
                                    {"config", tactnet::config_to_json(cfg)}},
                       {"trials.json", "timing.json"});
        const tactnet::TrialsSummary summary = tactnet::repeated_trials<float>(
            variant, ds, g.seed, o->n, cfg, o->parallel, !o->no_augment, o->timed_runs);
        for (const tactnet::TrialResult& r : summary.results) {
          const std::string dir = out_path(g, "trial_" + std::to_string(r.seed));
          fs::create_directories(dir);
          tactnet::write_json(tactnet::eval_report_to_json(r.report),
                              (fs::path(dir) / "report.json").string());
          tactnet::write_history_csv(r.history, (fs::path(dir) / "history.csv").string());
        }
        tactnet::write_json(tactnet::trials_to_json(summary), out_path(g, "trials.json"));
        tactnet::write_json(tactnet::trials_timing_to_json(summary), out_path(g, "timing.json"));
        std::cout << "trials: " << o->variant << " mean test acc " << summary.mean_test_acc
                  << " +/- " << summary.std_test_acc << " (" << summary.results.size() << "/"
                  << o->n << " trials) -> " << out_path(g, "trials.json") << "\n";
      };
    });
  }

  // ---- sweep ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("sweep", "trial protocol across the resolution ladder");
    cmd->fallthrough();
    struct Opts {
      std::string variant = "tactnet6", data;
      std::vector<std::string> level_names = {"1/16", "1/8", "1/4", "1/2", "1"};
      tactnet::TrainConfig cfg;
      int n = 5, parallel = 1, timed_runs = 200;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--variant", o->variant, "tactnet4|tactnet6|tactresnet");
    cmd->add_option("--data", o->data, "TDAT file or directory of frame CSVs")->required();
    cmd->add_option("--n", o->n, "trials per resolution level");
    cmd->add_option("--parallel", o->parallel, "worker threads across trials");
    cmd->add_option("--timed-runs", o->timed_runs, "single-image timing samples per trial");
    cmd->add_option("--levels", o->level_names, "ladder rungs to run (subset of 1/16 1/8 1/4 1/2 1)");
    add_train_flags(cmd, o->cfg);
    cmd->callback([&, o] {
      action = [&, o] {
        const tactnet::Variant variant = tactnet::variant_from_name(o->variant);
        std::vector<tactnet::ResolutionLevel> levels;
        for (const std::string& name : o->level_names)
          levels.push_back(tactnet::resolution_from_name(name));
        const tactnet::TrainConfig cfg = layer_config(o->cfg, g.config_path);
        const tactnet::Dataset ds = load_any_dataset(o->data);
        std::vector<std::uint64_t> seeds;
        for (int t = 0; t < o->n; ++t) seeds.push_back(g.seed + static_cast<std::uint64_t>(t));
        write_manifest(g, "sweep", command, seeds,
                       ordered_json{{"variant", o->variant},
                                    {"data", o->data},
                                    {"dataset_checksum", hex64(tactnet::dataset_checksum(ds))},
                                    {"n", o->n},
                                    {"levels", o->level_names},
                                    {"parallel", o->parallel},
                                    {"config", tactnet::config_to_json(cfg)}},
                       {"sweep.json", "sweep_timing.json"});
        const tactnet::SweepResult sweep = tactnet::resolution_sweep<float>(
            variant, ds, g.seed, o->n, cfg, o->parallel, o->timed_runs, levels);
        for (const tactnet::SweepLevel& level : sweep.levels) {
          if (!level.error.empty()) continue;  // reported in sweep.json instead
          const std::string dir = out_path(g, "level_" + std::to_string(level.rows) + "x" +
                                                  std::to_string(level.cols));
          fs::create_directories(dir);
          tactnet::write_json(tactnet::trials_to_json(level.trials),
                              (fs::path(dir) / "trials.json").string());
          tactnet::write_json(tactnet::trials_timing_to_json(level.trials),
                              (fs::path(dir) / "timing.json").string());
        }
        tactnet::write_json(tactnet::sweep_to_json(sweep), out_path(g, "sweep.json"));
        tactnet::write_json(tactnet::sweep_timing_to_json(sweep),
                            out_path(g, "sweep_timing.json"));
        std::cout << "sweep: " << o->variant << " across " << sweep.levels.size()
                  << " levels -> " << out_path(g, "sweep.json") << "\n";
      };
    });
  }

  // ---- features extract|import ------------------------------------------------
  {
    auto* cmd = app.add_subcommand("features", "frozen-feature utilities");
    cmd->require_subcommand(1);
    cmd->fallthrough();
    {
      auto* sub = cmd->add_subcommand("extract", "extract penultimate-layer features");
      sub->fallthrough();
      struct Opts {
        std::string model, data, split = "all";
        bool no_augment = false;
      };
      auto o = std::make_shared<Opts>();
      sub->add_option("--model", o->model, "TNET checkpoint")->required();
      sub->add_option("--data", o->data, "TDAT file or directory of frame CSVs")->required();
      sub->add_option("--split", o->split, "train|val|test|all");
      sub->add_flag("--no-augment", o->no_augment, "use raw splits without x6 expansion");
      sub->callback([&, o] {
        action = [&, o] {
          const tactnet::Dataset ds = load_any_dataset(o->data);
          const std::string out_name = "features_" + o->split + ".csv";
          write_manifest(g, "features extract", command, {g.seed},
                         ordered_json{{"model", o->model},
                                      {"data", o->data},
                                      {"dataset_checksum", hex64(tactnet::dataset_checksum(ds))},
                                      {"split", o->split},
                                      {"augment", !o->no_augment}},
                         {out_name});
          tactnet::ModelGraph<float> graph = tactnet::load_model<float>(o->model);
          const std::vector<tactnet::TactileFrame> frames =
              select_split(ds, o->split, g.seed, !o->no_augment);
          const tactnet::FeatureSet fs = tactnet::make_feature_set(
              graph, frames, ds.class_names, o->model + ":" + o->split);
          tactnet::export_features(fs, out_path(g, out_name));
          std::cout << "features extract: " << fs.size() << " x " << fs.dim() << " -> "
                    << out_path(g, out_name) << "\n";
        };
      });
    }
    {
      auto* sub = cmd->add_subcommand("import", "validate and summarize a feature CSV");
      sub->fallthrough();
      auto in_path = std::make_shared<std::string>();
      sub->add_option("--in", *in_path, "feature CSV (label,f0,...)")->required();
      sub->callback([&, in_path] {
        action = [&, in_path] {
          write_manifest(g, "features import", command, {g.seed},
                         ordered_json{{"in", *in_path}}, {"features_summary.json"});
          const tactnet::FeatureSet fs = tactnet::import_features(*in_path);
          std::vector<int> distinct = fs.labels;
          std::sort(distinct.begin(), distinct.end());
          distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
          ordered_json j{{"path", *in_path},
                         {"rows", fs.size()},
                         {"dim", fs.dim()},
                         {"distinct_labels", distinct.size()}};
          tactnet::write_json(j, out_path(g, "features_summary.json"));
          std::cout << "features import: " << fs.size() << " x " << fs.dim() << ", "
                    << distinct.size() << " labels -> " << out_path(g, "features_summary.json")
                    << "\n";
        };
      });
    }
  }

  // ---- svm ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("svm", "one-vs-rest linear SVM on frozen features");
    cmd->fallthrough();
    struct Opts {
      std::string train, val, test;
      double lambda = 1e-4;
      int epochs = 20;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--train", o->train, "training feature CSV")->required();
    cmd->add_option("--val", o->val, "validation feature CSV (shape-checked only)");
    cmd->add_option("--test", o->test, "test feature CSV")->required();
    cmd->add_option("--lambda", o->lambda, "regularization strength");
    cmd->add_option("--epochs", o->epochs, "training epochs");
    cmd->callback([&, o] {
      action = [&, o] {
        write_manifest(g, "svm", command, {g.seed},
                       ordered_json{{"train", o->train},
                                    {"val", o->val},
                                    {"test", o->test},
                                    {"lambda", o->lambda},
                                    {"epochs", o->epochs}},
                       {"svm_report.json"});
        const tactnet::FeatureSet train = tactnet::import_features(o->train);
        const tactnet::FeatureSet test = tactnet::import_features(o->test);
        const Index k = label_span({&train, &test});
        tactnet::SvmConfig cfg;
        cfg.lambda = o->lambda;
        cfg.epochs = o->epochs;
        cfg.seed = g.seed;
        std::vector<double> objective;
        tactnet::SvmModel model;
        if (o->val.empty()) {
          model = tactnet::train_svm(train, k, cfg, &objective);
        } else {
          const tactnet::FeatureSet val = tactnet::import_features(o->val);
          model = tactnet::train_svm(train, val, k, cfg, &objective);
        }
        const std::vector<int> pred = tactnet::svm_predict(model, test.features);
        ordered_json j = classifier_report(pred, test.labels, k);
        j["classifier"] = "svm";
        j["lambda"] = o->lambda;
        j["epochs"] = o->epochs;
        j["seed"] = g.seed;
        j["objective_by_epoch"] = objective;
        tactnet::write_json(j, out_path(g, "svm_report.json"));
        std::cout << "svm: test acc " << j["accuracy"].get<double>() << " -> "
                  << out_path(g, "svm_report.json") << "\n";
      };
    });
  }

  // ---- head ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("head", "fine-tuned softmax head on frozen features");
    cmd->fallthrough();
    struct Opts {
      std::string train, val, test;
      tactnet::HeadConfig cfg;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--train", o->train, "training feature CSV")->required();
    cmd->add_option("--val", o->val, "validation feature CSV")->required();
    cmd->add_option("--test", o->test, "test feature CSV")->required();
    cmd->add_option("--lr", o->cfg.lr, "learning rate");
    cmd->add_option("--max-epochs", o->cfg.max_epochs, "epoch cap");
    cmd->add_option("--patience", o->cfg.patience, "early-stop patience (epochs)");
    cmd->add_option("--batch-size", o->cfg.batch_size, "minibatch size");
    cmd->callback([&, o] {
      action = [&, o] {
        write_manifest(g, "head", command, {g.seed},
                       ordered_json{{"train", o->train},
                                    {"val", o->val},
                                    {"test", o->test},
                                    {"lr", o->cfg.lr},
                                    {"max_epochs", o->cfg.max_epochs},
                                    {"patience", o->cfg.patience},
                                    {"batch_size", o->cfg.batch_size}},
                       {"head_report.json"});
        const tactnet::FeatureSet train = tactnet::import_features(o->train);
        const tactnet::FeatureSet val = tactnet::import_features(o->val);
        const tactnet::FeatureSet test = tactnet::import_features(o->test);
        const Index k = label_span({&train, &val, &test});
        tactnet::HeadConfig cfg = o->cfg;
        cfg.seed = g.seed;
        const tactnet::HeadModel model = tactnet::finetune_head(train, val, k, cfg);
        const std::vector<int> pred = tactnet::head_predict(model, test.features);
        ordered_json j = classifier_report(pred, test.labels, k);
        j["classifier"] = "head";
        j["epochs_run"] = model.epochs_run;
        j["seed"] = g.seed;
        tactnet::write_json(j, out_path(g, "head_report.json"));
        std::cout << "head: test acc " << j["accuracy"].get<double>() << " (" << model.epochs_run
                  << " epochs) -> " << out_path(g, "head_report.json") << "\n";
      };
    });
  }

  // ---- bench ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("bench", "single-image inference benchmark");
    cmd->fallthrough();
    struct Opts {
      std::string model, data;
      int runs = 200, warmup = 10;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--model", o->model, "TNET checkpoint")->required();
    cmd->add_option("--data", o->data, "TDAT file or directory of frame CSVs")->required();
    cmd->add_option("--runs", o->runs, "timed single-image inferences");
    cmd->add_option("--warmup", o->warmup, "warmup inferences excluded from timing");
    cmd->callback([&, o] {
      action = [&, o] {
        const tactnet::Dataset ds = load_any_dataset(o->data);
        write_manifest(g, "bench", command, {g.seed},
                       ordered_json{{"model", o->model},
                                    {"data", o->data},
                                    {"dataset_checksum", hex64(tactnet::dataset_checksum(ds))},
                                    {"runs", o->runs},
                                    {"warmup", o->warmup}},
                       {"timing.json"});
        tactnet::ModelGraph<float> graph = tactnet::load_model<float>(o->model);
        const tactnet::TimingStats timing =
            tactnet::time_inference(graph, ds.frames, o->runs, o->warmup);
        tactnet::write_json(tactnet::timing_to_json(timing), out_path(g, "timing.json"));
        std::cout << "bench: " << graph.variant << " per-image "
                  << timing.per_image_mean_ms << " +/- " << timing.per_image_std_ms << " ms -> "
                  << out_path(g, "timing.json") << "\n";
      };
    });
  }

  // ---- gradcheck -------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("gradcheck",
                                   "finite-difference gradient audit (64-bit mode)");
    cmd->fallthrough();
    struct Opts {
      std::string variant = "all", corrupt;
      Index samples = 16;
      double tolerance = 1e-3;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--variant", o->variant, "tactnet4|tactnet6|tactresnet|all");
    cmd->add_option("--samples", o->samples, "sampled entries per parameter tensor");
    cmd->add_option("--tolerance", o->tolerance, "max relative error allowed");
    cmd->add_option("--corrupt", o->corrupt,
                    "deliberately damage gradients of matching parameters (fault injection)");
    cmd->callback([&, o] {
      action = [&, o] {
        write_manifest(g, "gradcheck", command, {g.seed},
                       ordered_json{{"variant", o->variant},
                                    {"samples", o->samples},
                                    {"tolerance", o->tolerance},
                                    {"corrupt", o->corrupt}},
                       {"gradcheck.json"});
        std::vector<std::string> names;
        if (o->variant == "all")
          names = {"tactnet4", "tactnet6", "tactresnet"};
        else
          names = {tactnet::variant_name(tactnet::variant_from_name(o->variant))};
        ordered_json j = ordered_json::array();
        bool all_passed = true;
        for (const std::string& name : names) {
          const tactnet::GradCheckReport report = tactnet::gradient_check_variant(
              tactnet::variant_from_name(name), g.seed, o->samples, o->tolerance, o->corrupt);
          ordered_json e = tactnet::gradcheck_to_json(report);
          e["variant"] = name;
          j.push_back(std::move(e));
          all_passed = all_passed && report.passed;
          std::cout << "gradcheck: " << name << (report.passed ? " PASS" : " FAIL")
                    << " (max rel err " << report.max_rel_err << ")\n";
        }
        tactnet::write_json(j, out_path(g, "gradcheck.json"));
        std::cout << "gradcheck: report -> " << out_path(g, "gradcheck.json") << "\n";
      };
    });
  }

  // ---- resize ----------------------------------------------------------------
  {
    auto* cmd = app.add_subcommand("resize", "bicubic-resample one frame CSV");
    cmd->fallthrough();
    struct Opts {
      std::string in;
      Index rows = 0, cols = 0;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--in", o->in, "input frame CSV")->required();
    cmd->add_option("--rows", o->rows, "target rows")->required();
    cmd->add_option("--cols", o->cols, "target cols")->required();
    cmd->callback([&, o] {
      action = [&, o] {
        const std::string stem = fs::path(o->in).stem().string();
        const std::string out_name =
            stem + "_" + std::to_string(o->rows) + "x" + std::to_string(o->cols) + ".csv";
        write_manifest(g, "resize", command, {g.seed},
                       ordered_json{{"in", o->in}, {"rows", o->rows}, {"cols", o->cols}},
                       {out_name});
        tactnet::TactileFrame frame;
        frame.values = tactnet::read_frame_csv(o->in);
        tactnet::require((frame.values.array() >= 0.0).all() &&
                             (frame.values.array() <= 1.0).all(),
                         "resize: input values outside [0,1]");
        frame.source_id = stem;
        const tactnet::TactileFrame resized = tactnet::bicubic_resize(frame, o->rows, o->cols);
        tactnet::write_frame_csv(resized, out_path(g, out_name));
        std::cout << "resize: " << frame.rows() << "x" << frame.cols() << " -> " << o->rows
                  << "x" << o->cols << " -> " << out_path(g, out_name) << "\n";
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // prints the right help text (per subcommand) or the parse error + usage hint
    (void)app.exit(e);
    const bool help_requested =
        dynamic_cast<const CLI::CallForHelp*>(&e) || dynamic_cast<const CLI::CallForAllHelp*>(&e);
    return help_requested ? 0 : 1;
  }

  try {
    action();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int main(int argc, char** argv) { return run_cli(argc, argv); }
