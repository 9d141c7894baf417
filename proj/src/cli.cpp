// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "cucn/gradsuite.hpp"
#include "cucn/keyvalue.hpp"
#include "cucn/metrics.hpp"

namespace cucn::cli {

namespace {

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string percent(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << 100.0 * v;
  return s.str();
}

std::string predictions_csv(std::span<const std::int64_t> labels,
                            std::span<const std::int64_t> preds) {
  std::string out = "index,label,pred\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(labels[i]) + "," + std::to_string(preds[i]) +
           "\n";
  return out;
}

void print_report(std::ostream& out, const metrics::EvalReport& r) {
  out << "accuracy " << percent(r.overall_acc) << "%  max " << percent(r.max_class_acc)
      << "%  min " << percent(r.min_class_acc) << "%  gap " << percent(r.acc_gap) << " points\n";
  out << "per-class";
  for (std::size_t c = 0; c < r.per_class_acc.size(); ++c)
    out << "  " << c << ":" << percent(r.per_class_acc[c]) << "%";
  out << "\n";
}

// Flags shared by subcommands that read a config file.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
};

}  // namespace

RunConfig::RunConfig() = default;

void apply_weights_scheme(train::TrainConfig& config, std::string_view text) {
  const std::string_view manual_prefix = "manual:";
  if (text.substr(0, manual_prefix.size()) == manual_prefix) {
    config.weights_scheme = loss::WeightScheme::manual;
    config.manual_weights = parse_double_list(text.substr(manual_prefix.size()));
    return;
  }
  config.weights_scheme = loss::parse_weight_scheme(text);
  if (config.weights_scheme == loss::WeightScheme::manual)
    throw Error("weights scheme 'manual' needs a list, e.g. manual:1,2,4");
  config.manual_weights.clear();
}

void RunConfig::apply(std::string_view key, std::string_view value) {
  const std::string k(key);
  auto& t = train;
  if (k == "preset") {
    if (value == "affectnet") {
      t = train::TrainConfig::affectnet_preset();
    } else if (value == "desk") {
      t = train::TrainConfig{};
    } else {
      throw Error("unknown preset '" + std::string(value) + "' (desk or affectnet)");
    }
  } else if (k == "seed") {
    t.seed = static_cast<std::uint64_t>(parse_int(value));
    synth.seed = t.seed;
  } else if (k == "epochs") {
    t.epochs = parse_int(value);
  } else if (k == "batch_size") {
    t.batch_size = parse_int(value);
  } else if (k == "lr_backbone") {
    t.lr_backbone = parse_double(value);
  } else if (k == "lr_classifier") {
    t.lr_classifier = parse_double(value);
  } else if (k == "weight_decay") {
    t.weight_decay = parse_double(value);
  } else if (k == "gamma") {
    t.gamma = parse_double(value);
  } else if (k == "loss_mode") {
    t.loss_mode = loss::parse_loss_mode(value);
  } else if (k == "weights_scheme") {
    apply_weights_scheme(t, value);
  } else if (k == "cbam_on" || k == "cbam") {
    t.cbam_on = parse_bool(value);
  } else if (k == "flip_prob") {
    t.flip_prob = parse_double(value);
  } else if (k == "stage_blocks") {
    arch.stage_blocks = parse_int_list(value);
  } else if (k == "base_channels") {
    arch.base_channels = parse_int(value);
  } else if (k == "feature_dim") {
    arch.feature_dim = parse_int(value);
  } else if (k == "head_bias") {
    arch.head_bias = parse_bool(value);
  } else if (k == "reduction_ratio") {
    arch.cbam.reduction_ratio = static_cast<int>(parse_int(value));
  } else if (k == "spatial_kernel") {
    arch.cbam.spatial_kernel = static_cast<int>(parse_int(value));
  } else if (k == "class_counts" || k == "counts") {
    synth.class_counts = parse_int_list(value);
  } else if (k == "image_size" || k == "size") {
    synth.image_size = parse_int(value);
  } else if (k == "channels") {
    synth.channels = parse_int(value);
  } else if (k == "noise_std" || k == "noise") {
    synth.noise_std = parse_double(value);
  } else if (k == "in_channels" || k == "input_size" || k == "num_classes") {
    throw Error("config key '" + k + "' is taken from the dataset and cannot be set");
  } else {
    throw Error("unknown config key '" + k + "'");
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  for (const auto& [key, value] : parse_key_values(read_text(path))) apply(key, value);
}

std::string RunConfig::describe() const {
  std::ostringstream s;
  std::string weights = loss::to_string(train.weights_scheme);
  if (train.weights_scheme == loss::WeightScheme::manual) {
    weights += ":";
    for (std::size_t i = 0; i < train.manual_weights.size(); ++i)
      weights += (i ? "," : "") + format_double(train.manual_weights[i]);
  }
  s << "seed = " << train.seed << "\n"
    << "epochs = " << train.epochs << "\n"
    << "batch_size = " << train.batch_size << "\n"
    << "lr_backbone = " << format_double(train.lr_backbone) << "\n"
    << "lr_classifier = " << format_double(train.lr_classifier) << "\n"
    << "weight_decay = " << format_double(train.weight_decay) << "\n"
    << "gamma = " << format_double(train.gamma) << "\n"
    << "loss_mode = " << loss::to_string(train.loss_mode) << "\n"
    << "weights_scheme = " << weights << "\n"
    << "cbam_on = " << (train.cbam_on ? "true" : "false") << "\n"
    << "flip_prob = " << format_double(train.flip_prob) << "\n"
    << "stage_blocks = " << join_ints(arch.stage_blocks) << "\n"
    << "base_channels = " << arch.base_channels << "\n"
    << "feature_dim = " << arch.feature_dim << "\n"
    << "head_bias = " << (arch.head_bias ? "true" : "false") << "\n"
    << "reduction_ratio = " << arch.cbam.reduction_ratio << "\n"
    << "spatial_kernel = " << arch.cbam.spatial_kernel << "\n";
  return s.str();
}

std::filesystem::path resolve_manifest(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return path / "manifest.csv";
  return path;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-imbalance and uncertainty-aware expression classifier toolkit", "cucn"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic imbalanced dataset");
  Overrides synth_common;
  std::optional<std::string> counts;
  std::optional<std::int64_t> size, channels;
  std::optional<double> noise;
  std::string synth_out;
  synth->add_option("--config", synth_common.config, "key = value config file");
  synth->add_option("--counts", counts, "Per-class sample counts, e.g. 200,100,40,20");
  synth->add_option("--size", size, "Image height and width");
  synth->add_option("--channels", channels, "Image channels");
  synth->add_option("--noise", noise, "Gaussian noise standard deviation");
  synth->add_option("--seed", synth_common.seed, "Random seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train a network");
  Overrides train_common;
  std::string train_data, train_out;
  std::optional<std::string> eval_data, loss_mode, weights, cbam, preset, stage_blocks;
  std::optional<std::int64_t> epochs, batch_size, base_channels, feature_dim;
  std::optional<double> lr_b, lr_c, wd, gamma, flip;
  trn->add_option("--config", train_common.config, "key = value config file");
  trn->add_option("--data", train_data, "Training manifest or dataset directory")->required();
  trn->add_option("--eval-data", eval_data, "Evaluation manifest (defaults to the training set)");
  trn->add_option("--preset", preset, "desk or affectnet");
  trn->add_option("--seed", train_common.seed, "Random seed");
  trn->add_option("--loss-mode", loss_mode, "ce, wce, mix or cucn");
  trn->add_option("--weights-scheme", weights, "none, inv-freq or manual:<w1,w2,...>");
  trn->add_option("--cbam", cbam, "on or off");
  trn->add_option("--epochs", epochs, "Training epochs");
  trn->add_option("--batch-size", batch_size, "Batch size");
  trn->add_option("--lr-backbone", lr_b, "Backbone learning rate");
  trn->add_option("--lr-classifier", lr_c, "Classifier learning rate");
  trn->add_option("--weight-decay", wd, "L2 weight decay");
  trn->add_option("--gamma", gamma, "Per-epoch learning-rate decay");
  trn->add_option("--flip-prob", flip, "Horizontal flip probability");
  trn->add_option("--stage-blocks", stage_blocks, "Blocks per stage, e.g. 1,1,1");
  trn->add_option("--base-channels", base_channels, "Width of the first stage");
  trn->add_option("--feature-dim", feature_dim, "Width of the mu and sigma features");
  trn->add_option("--out", train_out, "Output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_manifest;
  std::optional<std::string> eval_out;
  ev->add_option("--checkpoint", eval_ckpt, "CUCK checkpoint")->required();
  ev->add_option("--data", eval_manifest, "Manifest or dataset directory")->required();
  ev->add_option("--out", eval_out, "Directory for metrics.json, confusion.csv, predictions.csv");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Run the gradient verification suite");
  int gc_seeds = 10;
  gc->add_option("--seeds", gc_seeds, "Random draws per op case");

  // report
  auto* rep = app.add_subcommand("report", "Render metrics from a history and predictions");
  std::string rep_history, rep_preds;
  std::optional<std::string> rep_out;
  rep->add_option("--history", rep_history, "history.csv from train")->required();
  rep->add_option("--predictions", rep_preds, "predictions.csv from eval")->required();
  rep->add_option("--out", rep_out, "Directory for metrics.json and confusion.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      RunConfig rc;
      if (synth_common.config) rc.apply_file(*synth_common.config);
      if (counts) rc.synth.class_counts = parse_int_list(*counts);
      if (size) rc.synth.image_size = *size;
      if (channels) rc.synth.channels = *channels;
      if (noise) rc.synth.noise_std = *noise;
      if (synth_common.seed) rc.synth.seed = *synth_common.seed;
      if (rc.synth.class_counts.empty()) throw Error("synth: --counts is required");
      const auto ds = data::synth_generate(rc.synth);
      data::save_dataset(ds, synth_out);
      out << "wrote " << ds.size() << " samples in " << ds.num_classes() << " classes to "
          << synth_out << "\n";
      return 0;
    }

    if (trn->parsed()) {
      RunConfig rc;
      if (train_common.config) rc.apply_file(*train_common.config);
      if (preset) rc.apply("preset", *preset);
      if (train_common.seed) rc.train.seed = *train_common.seed;
      if (loss_mode) rc.train.loss_mode = loss::parse_loss_mode(*loss_mode);
      if (weights) apply_weights_scheme(rc.train, *weights);
      if (cbam) {
        if (*cbam != "on" && *cbam != "off") throw Error("--cbam expects on or off");
        rc.train.cbam_on = *cbam == "on";
      }
      if (epochs) rc.train.epochs = *epochs;
      if (batch_size) rc.train.batch_size = *batch_size;
      if (lr_b) rc.train.lr_backbone = *lr_b;
      if (lr_c) rc.train.lr_classifier = *lr_c;
      if (wd) rc.train.weight_decay = *wd;
      if (gamma) rc.train.gamma = *gamma;
      if (flip) rc.train.flip_prob = *flip;
      if (stage_blocks) rc.arch.stage_blocks = parse_int_list(*stage_blocks);
      if (base_channels) rc.arch.base_channels = *base_channels;
      if (feature_dim) rc.arch.feature_dim = *feature_dim;

      const auto train_set = data::load_dataset(resolve_manifest(train_data));
      const auto eval_set = eval_data
                                ? data::load_dataset(resolve_manifest(*eval_data),
                                                     train_set.num_classes())
                                : train_set;
      const auto result = train::train(rc.train, rc.arch, train_set, eval_set, train_out);
      write_text(std::filesystem::path(train_out) / "config.txt", rc.describe());
      for (const auto& r : result.history)
        out << "epoch " << r.epoch << "  lr " << format_double(r.lr) << "  loss "
            << format_double(r.train_loss) << "  acc " << percent(r.eval_acc) << "%  min "
            << percent(r.eval_min_class_acc) << "%  max " << percent(r.eval_max_class_acc)
            << "%\n";
      out << "best epoch " << result.best_epoch << "\n";
      print_report(out, result.final_report);
      return 0;
    }

    if (ev->parsed()) {
      auto net = model::from_checkpoint(decode_cuck(read_file(eval_ckpt)));
      const auto ds =
          data::load_dataset(resolve_manifest(eval_manifest), net.config().num_classes);
      const auto preds = train::predict(net, ds);
      const auto report =
          metrics::summarize(metrics::confusion_matrix(preds, ds.labels, ds.num_classes()));
      if (eval_out) {
        const std::filesystem::path dir(*eval_out);
        write_text(dir / "metrics.json", metrics::to_json(report));
        write_text(dir / "confusion.csv", metrics::confusion_csv(report.confusion));
        write_text(dir / "predictions.csv", predictions_csv(ds.labels, preds));
      }
      print_report(out, report);
      return 0;
    }

    if (gc->parsed()) {
      const auto results = verify::run_gradient_suite(gc_seeds);
      bool ok = true;
      for (const auto& c : results) {
        out << (c.passed ? "ok   " : "FAIL ") << c.name << "  max_rel_err "
            << format_double(c.max_relative_error) << "  tol " << format_double(c.tolerance)
            << "  coords " << c.coordinates << "\n";
        ok = ok && c.passed;
      }
      out << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
      return ok ? 0 : 1;
    }

    if (rep->parsed()) {
      const auto history = train::parse_history_csv(read_text(rep_history));
      const auto lines = split(read_text(rep_preds), '\n');
      if (lines.empty() || trim(lines[0]) != "index,label,pred")
        throw FormatError(rep_preds + ": header 'index,label,pred' required");
      std::vector<std::int64_t> labels, preds;
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = parse_int_list(lines[i]);
        if (f.size() != 3) throw FormatError(rep_preds + ": expected index,label,pred");
        labels.push_back(f[1]);
        preds.push_back(f[2]);
      }
      if (labels.empty()) throw Error(rep_preds + ": no predictions");
      std::int64_t classes = 0;
      for (std::size_t i = 0; i < labels.size(); ++i)
        classes = std::max({classes, labels[i] + 1, preds[i] + 1});
      const auto report = metrics::summarize(metrics::confusion_matrix(preds, labels, classes));
      if (rep_out) {
        const std::filesystem::path dir(*rep_out);
        write_text(dir / "metrics.json", metrics::to_json(report));
        write_text(dir / "confusion.csv", metrics::confusion_csv(report.confusion));
      }
      if (!history.empty()) {
        const auto& last = history.back();
        auto best = history.front();
        for (const auto& r : history)
          if (r.eval_acc > best.eval_acc) best = r;
        out << "epochs " << history.size() << "  final acc " << percent(last.eval_acc)
            << "%  best acc " << percent(best.eval_acc) << "% (epoch " << best.epoch << ")\n";
      }
      out << "Max Accu (%)  Min Accu (%)  Accuracy (%)\n"
          << percent(report.max_class_acc) << "  " << percent(report.min_class_acc) << "  "
          << percent(report.overall_acc) << "\n";
      out << metrics::confusion_csv(report.confusion);
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(a.c_str());
  argv.push_back(nullptr);
  return cli_main(static_cast<int>(args.size()), argv.data(), out, err);
}

}  // namespace cucn::cli
