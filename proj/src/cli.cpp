#include "aeanet/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "aeanet/checkpoint.hpp"
#include "aeanet/dataset.hpp"
#include "aeanet/error.hpp"
#include "aeanet/metrics.hpp"
#include "aeanet/model.hpp"
#include "aeanet/parallel.hpp"
#include "aeanet/property_suite.hpp"
#include "aeanet/trainer.hpp"

namespace aeanet {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string ckpt;
  std::string out;
  std::optional<std::size_t> patch_size;
  std::optional<std::string> variant;
  std::optional<std::string> strategy;
  std::optional<std::size_t> refs;
};

KeyValues load_config(const Common& c) {
  return c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
}

TrainConfig train_config(const Common& c, std::optional<std::uint64_t> steps) {
  KeyValues kv = load_config(c);
  if (c.seed) kv.set("train.seed", std::to_string(*c.seed));
  if (c.strategy) kv.set("train.strategy", *c.strategy);
  if (c.variant) kv.set("model.variant", *c.variant);
  if (c.refs) kv.set("model.ref_size", std::to_string(*c.refs));
  if (steps) kv.set("train.steps", std::to_string(*steps));
  return TrainConfig::from_key_values(kv);
}

std::function<void(const std::string&)> logger(std::ostream& out) {
  return [&out](const std::string& msg) { out << msg << std::endl; };
}

void require_dir(const std::string& flag, const std::string& value) {
  if (value.empty()) throw UsageError(flag + " is required");
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    try {
      sizes.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw UsageError("invalid size '" + item + "'");
    }
  }
  return sizes;
}

CommandOutcome cmd_gen_data(const Common& c, std::size_t count, std::size_t size, double noise,
                            double blur, std::ostream& out) {
  require_dir("--out", c.out);
  const KeyValues kv = load_config(c);
  SynthOptions o;
  o.count = kv.get_u64("data.count", count);
  o.size = kv.get_u64("data.size", size);
  o.noise_sigma = kv.get_double("data.noise_sigma", noise);
  o.blur_sigma = kv.get_double("data.blur_sigma", blur);
  o.seed = c.seed ? *c.seed : kv.get_u64("data.seed", 0);
  const auto pairs = synth_generate(o);
  write_dataset(pairs, c.out);
  double base = 0;
  for (const ImagePair& p : pairs) base += psnr(p.lr_up, p.hr);
  std::ostringstream ss;
  ss << "wrote " << pairs.size() << " pairs (" << o.size << "x" << o.size << ") to " << c.out
     << "; mean bicubic PSNR " << std::fixed << std::setprecision(2)
     << base / static_cast<double>(pairs.size()) << " dB";
  out << ss.str() << '\n';
  return {0, ss.str(), {(fs::path(c.out) / "manifest.txt").string()}};
}

CommandOutcome cmd_train(const Common& c, std::optional<std::uint64_t> steps, bool resume,
                         std::ostream& out) {
  require_dir("--data", c.data);
  const TrainConfig config = train_config(c, steps);
  const auto pairs = read_dataset(c.data);
  const fs::path dir = c.out.empty() ? fs::path("run") : fs::path(c.out);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "train_config.txt");
    cfg << config.to_key_values().to_text();
  }
  CommandOutcome outcome;
  if (config.strategy == Strategy::self) {
    const auto results = train_self(pairs, config, dir, logger(out));
    for (std::size_t i = 0; i < results.size(); ++i) {
      outcome.artifacts.push_back((dir / (pairs[i].id + ".ckpt")).string());
    }
    outcome.summary = "trained " + std::to_string(results.size()) + " self-trained models";
  } else {
    TrainOptions o;
    o.checkpoint_path = c.ckpt.empty() ? dir / "model.ckpt" : fs::path(c.ckpt);
    o.curve_path = dir / "loss.csv";
    o.log = logger(out);
    if (resume) {
      if (!fs::exists(o.checkpoint_path)) throw IoError("no checkpoint to resume at " + o.checkpoint_path.string());
      o.resume = load_checkpoint(o.checkpoint_path);
    }
    const TrainResult r = train(pairs, config, o);
    std::ostringstream ss;
    ss << "trained " << r.checkpoint.step << " steps in " << std::fixed << std::setprecision(1)
       << r.seconds << " s";
    if (!r.validation.empty()) {
      ss << "; held-out dPSNR " << format_metric(r.validation.back().delta_psnr) << " dB, dSSIM "
         << format_metric(r.validation.back().delta_ssim);
    }
    outcome.summary = ss.str();
    outcome.artifacts = {o.checkpoint_path.string(), o.curve_path.string()};
  }
  out << outcome.summary << '\n';
  return outcome;
}

CommandOutcome cmd_predict(const Common& c, const std::string& input, std::ostream& out) {
  if (c.ckpt.empty() || input.empty() || c.out.empty()) {
    throw UsageError("predict needs --ckpt, --input and --out");
  }
  const Model<float> model = model_from_checkpoint(load_checkpoint(c.ckpt));
  const Image pred = predict_image(model, load_image(input), c.patch_size.value_or(0));
  save_image(pred, c.out);
  out << "wrote " << c.out << '\n';
  return {0, "wrote " + c.out, {c.out}};
}

CommandOutcome cmd_eval(const Common& c, std::ostream& out) {
  require_dir("--data", c.data);
  if (c.ckpt.empty()) throw UsageError("--ckpt is required");
  const Model<float> model = model_from_checkpoint(load_checkpoint(c.ckpt));
  const TrainingData data = build_training_data(read_dataset(c.data));
  const MetricsReport report = evaluate(model, data.test_patches, c.patch_size.value_or(0));
  report.write_table(out);
  CommandOutcome outcome{0, "evaluated " + std::to_string(report.patches.size()) + " held-out patches", {}};
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    const fs::path csv = fs::path(c.out) / "metrics.csv";
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv.string());
    report.write_csv(f);
    outcome.artifacts.push_back(csv.string());
  }
  return outcome;
}

CommandOutcome cmd_check(const Common& c, const std::string& op_name, std::size_t trials,
                         std::string expect, const std::string& norm, double tol,
                         std::ostream& out) {
  std::vector<AttentionOp> ops;
  if (op_name == "all") {
    ops = {AttentionOp::self_attention, AttentionOp::learned_query, AttentionOp::shared_reference,
           AttentionOp::batch_aware};
    if (!expect.empty()) throw UsageError("--expect cannot be combined with --op all");
  } else {
    ops = {parse_attention_op(op_name)};
  }
  if (!expect.empty() && expect != "equivariant" && expect != "invariant") {
    throw UsageError("--expect must be equivariant or invariant");
  }
  PropertySuiteOptions o;
  o.trials = trials;
  o.seed = c.seed.value_or(0);
  o.norm = parse_norm_mode(norm);
  if (c.refs) o.ref_sizes = {*c.refs};

  bool ok = true;
  std::ostringstream summary;
  for (AttentionOp op : ops) {
    const PropertySuiteReport r = run_property_suite(op, o);
    const std::string want =
        !expect.empty() ? expect : (op == AttentionOp::learned_query ? "invariant" : "equivariant");
    bool pass;
    std::ostringstream line;
    line << std::scientific << std::setprecision(3);
    line << to_string(op) << " (" << r.trials << " trials, " << to_string(o.norm) << "): ";
    if (want == "equivariant") {
      pass = r.equivariance_max_err <= tol;
      line << "equivariance max err " << r.equivariance_max_err;
    } else {
      pass = r.invariance_max_err <= tol && r.positive_control_min_diff > 1e-8;
      line << "invariance max err " << r.invariance_max_err << ", positive control min diff "
           << r.positive_control_min_diff;
    }
    line << " (tol " << tol << ")";
    if (op == AttentionOp::batch_aware) {
      const bool batch_ok = r.batch_reorder_max_err <= tol && r.singleton_max_err <= 1e-12;
      line << "; batch reorder max err " << r.batch_reorder_max_err << ", N=1 vs self "
           << r.singleton_max_err;
      pass = pass && batch_ok;
    }
    line << " -> " << (pass ? "PASS" : "FAIL");
    out << line.str() << '\n';
    summary << line.str() << '\n';
    ok = ok && pass;
  }
  return {ok ? 0 : 1, summary.str(), {}};
}

CommandOutcome cmd_ablate(const Common& c, std::optional<std::uint64_t> steps, std::ostream& out) {
  require_dir("--data", c.data);
  const TrainConfig config = train_config(c, steps);
  const auto pairs = read_dataset(c.data);
  const auto rows =
      run_ablation(pairs, config, standard_ablation_variants(config.model), logger(out));
  write_ablation_table(rows, out);
  CommandOutcome outcome{0, "ablation over " + std::to_string(rows.size()) + " variants", {}};
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    const fs::path csv = fs::path(c.out) / "ablation.csv";
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv.string());
    f << "variant,delta_psnr,delta_ssim\n";
    for (const AblationRow& r : rows) {
      f << r.name << ',' << format_metric(r.delta_psnr) << ',' << format_metric(r.delta_ssim) << '\n';
    }
    outcome.artifacts.push_back(csv.string());
  }
  return outcome;
}

CommandOutcome cmd_sweep(const Common& c, const std::string& sizes_text, std::ostream& out) {
  require_dir("--data", c.data);
  if (c.ckpt.empty()) throw UsageError("--ckpt is required");
  std::vector<std::size_t> sizes = parse_sizes(sizes_text);
  if (c.patch_size) sizes.push_back(*c.patch_size);
  if (sizes.empty()) throw UsageError("give --sizes or --patch-size");
  const Model<float> model = model_from_checkpoint(load_checkpoint(c.ckpt));
  const SweepResult r = run_patch_sweep(read_dataset(c.data), model, sizes);
  write_sweep_table(r, out);
  CommandOutcome outcome{0, "patch sweep over " + std::to_string(sizes.size()) + " sizes", {}};
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    const fs::path csv = fs::path(c.out) / "sweep.csv";
    std::ofstream f(csv);
    if (!f) throw IoError("cannot write " + csv.string());
    f << "patch_size,tiles,delta_psnr,delta_ssim\n";
    for (const SweepRow& row : r.rows) {
      f << row.patch_size << ',' << row.tiles << ',' << format_metric(row.delta_psnr) << ','
        << format_metric(row.delta_ssim) << '\n';
    }
    outcome.artifacts.push_back(csv.string());
  }
  return outcome;
}

CommandOutcome cmd_heatmap(const Common& c, const std::vector<std::string>& inputs,
                           const std::string& indices_text, std::ostream& out) {
  if (c.ckpt.empty() || inputs.empty() || c.out.empty()) {
    throw UsageError("heatmap needs --ckpt, --input and --out");
  }
  const std::vector<std::size_t> indices = parse_sizes(indices_text);
  if (indices.empty()) throw UsageError("--ref-index lists no reference rows");
  const Model<float> model = model_from_checkpoint(load_checkpoint(c.ckpt));
  fs::create_directories(c.out);
  CommandOutcome outcome;

  // One montage row per input: the input followed by its maps.
  std::vector<std::vector<Image>> rows;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Image img = load_image(inputs[i]);
    std::vector<Image> row{img};
    const auto maps = relevance_heatmap(img, model, indices);
    for (std::size_t k = 0; k < maps.size(); ++k) {
      const fs::path p = fs::path(c.out) / ("heatmap_" + std::to_string(i) + "_ref" +
                                            std::to_string(indices[k]) + ".png");
      save_image(maps[k], p);
      outcome.artifacts.push_back(p.string());
      row.push_back(maps[k]);
    }
    rows.push_back(std::move(row));
  }
  const std::size_t gap = 2;
  std::size_t height = 0, width = 0;
  for (const auto& row : rows) {
    std::size_t w = 0;
    for (const Image& im : row) w += im.width + gap;
    width = std::max(width, w - gap);
    height += row.front().height + gap;
  }
  Image montage(height - gap, width, 1.0);
  std::size_t top = 0;
  for (const auto& row : rows) {
    std::size_t left = 0;
    for (const Image& im : row) {
      for (std::size_t y = 0; y < im.height; ++y) {
        for (std::size_t x = 0; x < im.width; ++x) montage.at(top + y, left + x) = im.at(y, x);
      }
      left += im.width + gap;
    }
    top += row.front().height + gap;
  }
  const fs::path mp = fs::path(c.out) / "montage.png";
  save_image(montage, mp);
  outcome.artifacts.push_back(mp.string());
  outcome.summary = "wrote " + std::to_string(outcome.artifacts.size()) + " images to " + c.out;
  out << outcome.summary << '\n';
  return outcome;
}

void add_common(CLI::App* app, Common& c, bool data, bool ckpt, bool model_flags) {
  app->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory (or file for predict)");
  if (data) app->add_option("--data", c.data, "dataset directory");
  if (ckpt) app->add_option("--ckpt", c.ckpt, "checkpoint path");
  if (model_flags) {
    app->add_option("--variant", c.variant, "attention variant")
        ->check(CLI::IsMember({"aea", "self_only", "learned_query", "none"}));
    app->add_option("--strategy", c.strategy, "training strategy")
        ->check(CLI::IsMember({"pooled", "self"}));
    app->add_option("--refs", c.refs, "number of shared references")
        ->check(CLI::IsMember({0, 16, 32, 64}));
  }
}

}  // namespace

CommandOutcome dispatch(const std::vector<std::string>& args, std::ostream& out,
                        std::ostream& err) {
  CLI::App app{"Paired grayscale super-resolution with shared-reference attention",
               "aeanet"};
  app.require_subcommand(1);
  Common c;

  std::size_t count = 32, size = 96;
  double noise = 0.02, blur = 1.0;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset");
  add_common(gen, c, false, false, false);
  gen->add_option("--count", count, "number of pairs");
  gen->add_option("--size", size, "image edge (multiple of 4)");
  gen->add_option("--noise", noise, "Gaussian noise sigma");
  gen->add_option("--blur", blur, "blur sigma before downsampling");

  std::optional<std::uint64_t> steps;
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train a model (pooled or self strategy)");
  add_common(train_cmd, c, true, true, true);
  train_cmd->get_option("--data")->required();
  train_cmd->add_option("--steps", steps, "optimiser steps");
  train_cmd->add_flag("--resume", resume, "continue from --ckpt (or <out>/model.ckpt)");

  std::string input;
  auto* predict_cmd = app.add_subcommand("predict", "super-resolve one image");
  add_common(predict_cmd, c, false, true, false);
  predict_cmd->add_option("--input", input, "bicubic-upsampled input image")->required();
  predict_cmd->add_option("--patch-size", c.patch_size, "tile edge (multiple of 4)");

  auto* eval_cmd = app.add_subcommand("eval", "metrics on the held-out patches");
  add_common(eval_cmd, c, true, true, false);
  eval_cmd->add_option("--patch-size", c.patch_size, "tile edge (multiple of 4)");

  std::string op_name = "all", expect, norm = "division";
  std::size_t trials = 100;
  double tol = 1e-10;
  auto* check_cmd = app.add_subcommand("check", "randomised equivariance/invariance checks");
  add_common(check_cmd, c, false, false, false);
  check_cmd->add_option("--op", op_name,
                        "self-attention|learned-query|shared-reference|batch-aware|all");
  check_cmd->add_option("--trials", trials, "random trials per operator");
  check_cmd->add_option("--expect", expect, "equivariant|invariant");
  check_cmd->add_option("--norm", norm, "division|softmax");
  check_cmd->add_option("--tol", tol, "max abs error tolerance");
  check_cmd->add_option("--refs", c.refs, "reference rows for shared-reference trials");

  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the ablation variants");
  add_common(ablate_cmd, c, true, false, false);
  ablate_cmd->get_option("--data")->required();
  ablate_cmd->add_option("--steps", steps, "optimiser steps per variant");

  std::string sizes_text;
  auto* sweep_cmd = app.add_subcommand("sweep", "held-out dPSNR across input patch sizes");
  add_common(sweep_cmd, c, true, true, false);
  sweep_cmd->add_option("--sizes", sizes_text, "comma-separated patch sizes");
  sweep_cmd->add_option("--patch-size", c.patch_size, "a single patch size");

  std::vector<std::string> inputs;
  std::string indices = "0";
  auto* heat_cmd = app.add_subcommand("heatmap", "relevance maps for shared-reference rows");
  add_common(heat_cmd, c, false, true, false);
  heat_cmd->add_option("--input", inputs, "input image(s)")->required();
  heat_cmd->add_option("--ref-index", indices, "comma-separated reference rows");

  std::vector<const char*> argv{"aeanet"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return {code == 0 ? 0 : 2, e.what(), {}};
  }

  try {
    configure_threads();
    if (gen->parsed()) return cmd_gen_data(c, count, size, noise, blur, out);
    if (train_cmd->parsed()) return cmd_train(c, steps, resume, out);
    if (predict_cmd->parsed()) return cmd_predict(c, input, out);
    if (eval_cmd->parsed()) return cmd_eval(c, out);
    if (check_cmd->parsed()) return cmd_check(c, op_name, trials, expect, norm, tol, out);
    if (ablate_cmd->parsed()) return cmd_ablate(c, steps, out);
    if (sweep_cmd->parsed()) return cmd_sweep(c, sizes_text, out);
    if (heat_cmd->parsed()) return cmd_heatmap(c, inputs, indices, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return {2, e.what(), {}};
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return {2, e.what(), {}};
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return {3, e.what(), {}};
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return {3, e.what(), {}};
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return {1, e.what(), {}};
  }
  err << app.help();
  return {2, "no subcommand", {}};
}

}  // namespace aeanet
