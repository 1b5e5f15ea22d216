#include "aeanet/trainer.hpp"

#include <chrono>
#include <exception>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "aeanet/error.hpp"
#include "aeanet/parallel.hpp"
#include "aeanet/random.hpp"
#include "aeanet/tiling.hpp"

namespace aeanet {

Strategy parse_strategy(const std::string& text) {
  if (text == "pooled") return Strategy::pooled;
  if (text == "self") return Strategy::self;
  throw ConfigError("unknown strategy '" + text + "' (expected pooled|self)");
}

std::string to_string(Strategy strategy) {
  return strategy == Strategy::pooled ? "pooled" : "self";
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (batch_size == 1 && model.variant == AttentionVariant::aea && model.batch_aware &&
      !allow_single_instance) {
    throw ConfigError(
        "train.batch_size = 1 leaves the batch-aware branch empty; set "
        "train.allow_single_instance = true to train the shared-reference branch alone");
  }
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be finite and >= 0");
  }
  if (crop < 4) throw ConfigError("train.crop must be at least 4");
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("train.strategy", to_string(strategy));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.steps", std::to_string(steps));
  std::ostringstream lr;
  lr << std::setprecision(17) << learning_rate;
  kv.set("train.learning_rate", lr.str());
  kv.set("train.crop", std::to_string(crop));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.validate_every", std::to_string(validate_every));
  kv.set("train.validation_patches", std::to_string(validation_patches));
  kv.set("train.allow_single_instance", allow_single_instance ? "true" : "false");
  const KeyValues model_kv = model.to_key_values();
  for (const auto& [k, v] : model_kv.entries()) kv.set(k, v);
  return kv;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.strategy = parse_strategy(kv.get_string("train.strategy", to_string(c.strategy)));
  c.batch_size = kv.get_u64("train.batch_size", c.batch_size);
  c.steps = kv.get_u64("train.steps", c.steps);
  c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
  c.crop = kv.get_u64("train.crop", c.crop);
  c.seed = kv.get_u64("train.seed", c.seed);
  c.validate_every = kv.get_u64("train.validate_every", c.validate_every);
  c.validation_patches = kv.get_u64("train.validation_patches", c.validation_patches);
  c.allow_single_instance = kv.get_bool("train.allow_single_instance", c.allow_single_instance);
  c.model = ModelConfig::from_key_values(kv);
  c.validate();
  return c;
}

std::string TrainConfig::identity_text() const {
  KeyValues kv;
  const KeyValues full = to_key_values();
  for (const auto& [k, v] : full.entries()) {
    if (k != "train.steps") kv.set(k, v);
  }
  return kv.to_text();
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss: " + shape_to_string(pred.shape()) + " vs " +
                         shape_to_string(target.shape()));
  }
  const Tensor<T> d = ops::sub(pred, target);
  return ops::mean(ops::mul(d, d));
}

template <typename T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state,
               double lr, const AdamOptions& o) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("adam_step: gradient for unknown parameter '" + name + "'");
    if (g.shape() != it->second.shape()) {
      throw DimensionError("adam_step: gradient shape mismatch for '" + name + "'");
    }
    if (!g.all_finite()) {
      std::size_t bad = 0;
      for (T v : g.data()) bad += !std::isfinite(static_cast<double>(v));
      throw NumericError("adam_step: " + std::to_string(bad) + " non-finite gradient values in '" +
                         name + "' at step " + std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const auto g = git->second.data();
    const std::size_t n = p.numel();
    auto m_it = state.m.try_emplace(name, Tensor<T>::zeros(p.shape())).first;
    auto v_it = state.v.try_emplace(name, Tensor<T>::zeros(p.shape())).first;
    std::vector<T> w = p.to_vector(), m = m_it->second.to_vector(), v = v_it->second.to_vector();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = o.beta1 * static_cast<double>(m[i]) + (1 - o.beta1) * gi;
      const double vi = o.beta2 * static_cast<double>(v[i]) + (1 - o.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1, vhat = vi / c2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + o.epsilon));
    }
    p = Tensor<T>(p.shape(), std::move(w));
    m_it->second = Tensor<T>(p.shape(), std::move(m));
    v_it->second = Tensor<T>(p.shape(), std::move(v));
  }
}

TrainingData build_training_data(const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw UsageError("dataset is empty");
  TrainingData data;
  for (const ImagePair& p : pairs) {
    PatchSplit s = split_3x4(p);
    for (ImagePair& q : s.train_patches) data.train_patches.push_back(std::move(q));
    for (ImagePair& q : s.test_patches) data.test_patches.push_back(std::move(q));
  }
  return data;
}

namespace {

std::size_t crop_extent(std::size_t crop, std::size_t extent) {
  return std::min(crop, extent) / 4 * 4;
}

Tensor<float> crop_tensor(const Image& img, std::size_t top, std::size_t left, std::size_t h,
                          std::size_t w) {
  return image_to_tensor<float>(crop(img, top, left, h, w));
}

void emit(const std::function<void(const std::string&)>& log, const std::string& msg) {
  if (log) log(msg);
}

}  // namespace

Batch sample_batch(const std::vector<ImagePair>& patches, const TrainConfig& config,
                   std::uint64_t step) {
  if (patches.empty()) throw UsageError("no training patches");
  Rng rng(mix_seed(config.seed, 0x10000 + step));
  Batch b;
  b.step = step;
  for (std::size_t i = 0; i < config.batch_size; ++i) {
    const ImagePair& p = patches[rng.index(patches.size())];
    const std::size_t ch = crop_extent(config.crop, p.hr.height);
    const std::size_t cw = crop_extent(config.crop, p.hr.width);
    if (ch == 0 || cw == 0) {
      throw ConfigError("patch '" + p.id + "' is smaller than 4 pixels; cannot crop");
    }
    const std::size_t top = rng.index(p.hr.height - ch + 1);
    const std::size_t left = rng.index(p.hr.width - cw + 1);
    b.inputs.push_back(crop_tensor(p.lr_up, top, left, ch, cw));
    b.targets.push_back(crop_tensor(p.hr, top, left, ch, cw));
  }
  return b;
}

void TrainResult::write_curve(std::ostream& out) const {
  out << "step,loss,val_delta_psnr,val_delta_ssim\n";
  std::size_t v = 0;
  for (const LossPoint& l : losses) {
    out << l.step << ',' << std::setprecision(9) << l.loss << ',';
    while (v < validation.size() && validation[v].step < l.step) ++v;
    if (v < validation.size() && validation[v].step == l.step) {
      out << format_metric(validation[v].delta_psnr) << ',' << format_metric(validation[v].delta_ssim);
    } else {
      out << ',';
    }
    out << '\n';
  }
}

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  Checkpoint c;
  c.model = config.model;
  c.params = Model<float>(config.model, mix_seed(config.seed, 0x1417)).parameters();
  c.config_text = config.identity_text();
  return c;
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  return Model<float>(ckpt.model, ckpt.params);
}

Image predict_image(const Model<float>& model, const Image& image, std::size_t patch_size) {
  if (patch_size != 0) {
    return tile_and_stitch(image, [&](const Image& t) { return model.predict(t); }, patch_size);
  }
  const std::size_t h = (image.height + 3) / 4 * 4, w = (image.width + 3) / 4 * 4;
  if (h == image.height && w == image.width) return model.predict(image);
  return crop(model.predict(reflect_pad(image, h, w)), 0, 0, image.height, image.width);
}

MetricsReport evaluate(const Model<float>& model, const std::vector<ImagePair>& patches,
                       std::size_t patch_size) {
  MetricsReport report;
  report.patches.resize(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const ImagePair& p = patches[i];
    const Image pred = clamp_unit(predict_image(model, p.lr_up, patch_size));
    report.patches[i] = evaluate_patch(p.id, pred, p.hr, p.lr_up);
  }
  return report;
}

TrainResult train_on(const TrainingData& data, const TrainConfig& config,
                     const TrainOptions& options) {
  config.validate();
  configure_threads();
  if (data.train_patches.empty()) throw UsageError("no training patches");
  const auto started = std::chrono::steady_clock::now();

  Checkpoint ckpt = options.resume ? *options.resume : initial_checkpoint(config);
  if (options.resume) {
    if (ckpt.config_hash() != fnv1a64(config.identity_text())) {
      throw ConfigError("checkpoint was produced by a different configuration; cannot resume");
    }
  }
  ParameterSet<float> params = ckpt.params;
  AdamState<float> adam{ckpt.adam_m, ckpt.adam_v, ckpt.step};
  const Model<float> shape_model(config.model, params);

  const std::vector<ImagePair> held_out(
      data.test_patches.begin(),
      data.test_patches.begin() +
          static_cast<std::ptrdiff_t>(std::min(config.validation_patches, data.test_patches.size())));

  TrainResult result;
  auto snapshot = [&]() {
    Checkpoint c;
    c.model = config.model;
    c.params = params;
    c.adam_m = adam.m;
    c.adam_v = adam.v;
    c.step = adam.step;
    c.config_text = config.identity_text();
    return c;
  };
  auto validate_now = [&](std::uint64_t step) {
    if (held_out.empty()) return;
    const PatchMetrics m = evaluate(Model<float>(config.model, params), held_out).aggregate();
    result.validation.push_back({step, m.delta_psnr, m.delta_ssim});
    std::ostringstream ss;
    ss << "step " << step << ": validation dPSNR " << format_metric(m.delta_psnr) << " dB, dSSIM "
       << format_metric(m.delta_ssim);
    emit(options.log, ss.str());
  };

  // Crop sampling runs ahead of the optimiser on a producer thread.
  BoundedQueue<Batch> queue(4);
  const std::uint64_t first = ckpt.step;
  std::exception_ptr producer_error;
  std::jthread producer([&, first](std::stop_token stop) {
    try {
      for (std::uint64_t s = first; s < config.steps && !stop.stop_requested(); ++s) {
        if (!queue.push(sample_batch(data.train_patches, config, s))) break;
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct CloseOnExit {
    BoundedQueue<Batch>& q;
    ~CloseOnExit() { q.close(); }
  } closer{queue};

  for (std::uint64_t s = first; s < config.steps; ++s) {
    std::optional<Batch> batch = queue.pop();
    if (!batch) {
      if (producer_error) std::rethrow_exception(producer_error);
      throw Error("training data producer stopped early");
    }

    GradTape<float> tape;
    ParameterSet<float> watched;
    for (const auto& [name, p] : params) watched.emplace(name, tape.watch(p));
    const auto preds = shape_model.forward(watched, batch->inputs, BlockMode::train);
    Tensor<float> loss = mse_loss(preds[0], batch->targets[0]);
    for (std::size_t i = 1; i < preds.size(); ++i) {
      loss = ops::add(loss, mse_loss(preds[i], batch->targets[i]));
    }
    loss = ops::scale(loss, 1.0f / static_cast<float>(preds.size()));
    const double loss_value = static_cast<double>(loss.item());
    if (!std::isfinite(loss_value)) {
      if (!options.checkpoint_path.empty()) save_checkpoint(snapshot(), options.checkpoint_path);
      throw NumericError("loss diverged (" + format_metric(loss_value) + ") at step " +
                         std::to_string(s + 1) + "; last good state saved at step " +
                         std::to_string(adam.step));
    }
    tape.backward(loss);
    ParameterSet<float> grads;
    for (const auto& [name, w] : watched) grads.emplace(name, tape.grad(w));
    // Tensors share immutable buffers, so keeping the pre-step state is cheap.
    const ParameterSet<float> prev_params = params;
    const AdamState<float> prev_adam = adam;
    try {
      adam_step(params, grads, adam, config.learning_rate);
      for (const auto& [name, p] : params) {
        if (!p.all_finite()) {
          throw NumericError("parameter '" + name + "' became non-finite at step " +
                             std::to_string(s + 1));
        }
      }
    } catch (const NumericError&) {
      params = prev_params;
      adam = prev_adam;
      if (!options.checkpoint_path.empty()) save_checkpoint(snapshot(), options.checkpoint_path);
      throw;
    }
    result.losses.push_back({s + 1, loss_value});
    if (config.validate_every && (s + 1) % config.validate_every == 0) {
      validate_now(s + 1);
      std::ostringstream ss;
      ss << "step " << s + 1 << ": loss " << std::setprecision(6) << loss_value;
      emit(options.log, ss.str());
    }
  }
  if (result.validation.empty() || result.validation.back().step != adam.step) validate_now(adam.step);

  result.checkpoint = snapshot();
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!options.checkpoint_path.empty()) save_checkpoint(result.checkpoint, options.checkpoint_path);
  if (!options.curve_path.empty()) {
    if (options.curve_path.has_parent_path()) {
      std::filesystem::create_directories(options.curve_path.parent_path());
    }
    std::ofstream out(options.curve_path);
    if (!out) throw IoError("cannot write loss curve " + options.curve_path.string());
    result.write_curve(out);
  }
  return result;
}

TrainResult train(const std::vector<ImagePair>& pairs, const TrainConfig& config,
                  const TrainOptions& options) {
  return train_on(build_training_data(pairs), config, options);
}

std::vector<TrainResult> train_self(const std::vector<ImagePair>& pairs, const TrainConfig& config,
                                    const std::filesystem::path& checkpoint_dir,
                                    const std::function<void(const std::string&)>& log) {
  if (pairs.empty()) throw UsageError("dataset is empty");
  std::vector<TrainResult> results;
  for (const ImagePair& p : pairs) {
    emit(log, "self-training on " + p.id);
    TrainOptions o;
    o.log = log;
    if (!checkpoint_dir.empty()) {
      o.checkpoint_path = checkpoint_dir / (p.id + ".ckpt");
      o.curve_path = checkpoint_dir / (p.id + "_loss.csv");
    }
    results.push_back(train_on(build_training_data({p}), config, o));
  }
  return results;
}

std::vector<AblationVariant> standard_ablation_variants(const ModelConfig& base) {
  auto with = [&](AttentionVariant v, std::size_t r, bool ba) {
    ModelConfig c = base;
    c.variant = v;
    c.ref_size = r;
    c.batch_aware = ba;
    return c;
  };
  return {
      {"SR only", with(AttentionVariant::aea, 64, false)},
      {"BA only", with(AttentionVariant::aea, 0, true)},
      {"BA+SR(16)", with(AttentionVariant::aea, 16, true)},
      {"BA+SR(32)", with(AttentionVariant::aea, 32, true)},
      {"BA+SR(64)", with(AttentionVariant::aea, 64, true)},
      {"none", with(AttentionVariant::none, 0, false)},
      {"self_only", with(AttentionVariant::self_only, 0, false)},
  };
}

std::vector<AblationRow> run_ablation(const std::vector<ImagePair>& pairs, const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const std::function<void(const std::string&)>& log) {
  const TrainingData data = build_training_data(pairs);
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : variants) {
    emit(log, "ablation variant " + v.name);
    TrainConfig c = base;
    c.model = v.model;
    TrainOptions o;
    o.log = log;
    const TrainResult r = train_on(data, c, o);
    const PatchMetrics m =
        evaluate(model_from_checkpoint(r.checkpoint), data.test_patches).aggregate();
    rows.push_back({v.name, m.delta_psnr, m.delta_ssim});
  }
  return rows;
}

void write_ablation_table(const std::vector<AblationRow>& rows, std::ostream& out) {
  out << std::left << std::setw(12) << "variant" << std::right << std::setw(12) << "dPSNR"
      << std::setw(12) << "dSSIM" << '\n';
  for (const AblationRow& r : rows) {
    out << std::left << std::setw(12) << r.name << std::right << std::fixed << std::setprecision(4)
        << std::setw(12) << r.delta_psnr << std::setw(12) << r.delta_ssim << '\n';
  }
  out.unsetf(std::ios::fixed);
}

SweepResult run_patch_sweep(const std::vector<ImagePair>& pairs, const Model<float>& model,
                            const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw UsageError("patch sweep needs at least one size");
  for (std::size_t s : sizes) {
    if (s == 0 || s % 4 != 0) throw ConfigError("sweep size " + std::to_string(s) + " is not a multiple of 4");
  }
  const TrainingData data = build_training_data(pairs);
  SweepResult result;
  for (std::size_t s : sizes) {
    SweepRow row;
    row.patch_size = s;
    for (const ImagePair& p : data.test_patches) {
      row.tiles += ((p.hr.height + s - 1) / s) * ((p.hr.width + s - 1) / s);
    }
    const PatchMetrics m = evaluate(model, data.test_patches, s).aggregate();
    row.delta_psnr = m.delta_psnr;
    row.delta_ssim = m.delta_ssim;
    result.rows.push_back(row);
  }
  result.monotone_non_decreasing = true;
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (result.rows[i].patch_size >= result.rows[i - 1].patch_size &&
        result.rows[i].delta_psnr < result.rows[i - 1].delta_psnr) {
      result.monotone_non_decreasing = false;
    }
  }
  return result;
}

void write_sweep_table(const SweepResult& result, std::ostream& out) {
  out << std::setw(10) << "patch" << std::setw(8) << "tiles" << std::setw(12) << "dPSNR"
      << std::setw(12) << "dSSIM" << '\n';
  for (const SweepRow& r : result.rows) {
    out << std::setw(10) << r.patch_size << std::setw(8) << r.tiles << std::fixed
        << std::setprecision(4) << std::setw(12) << r.delta_psnr << std::setw(12) << r.delta_ssim
        << '\n';
  }
  out.unsetf(std::ios::fixed);
  out << "dPSNR non-decreasing with patch size: "
      << (result.monotone_non_decreasing ? "yes" : "no") << '\n';
}

template Tensor<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template void adam_step(ParameterSet<float>&, const ParameterSet<float>&, AdamState<float>&,
                        double, const AdamOptions&);
template void adam_step(ParameterSet<double>&, const ParameterSet<double>&, AdamState<double>&,
                        double, const AdamOptions&);

}  // namespace aeanet
