#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "aeanet/checkpoint.hpp"
#include "aeanet/dataset.hpp"
#include "aeanet/metrics.hpp"
#include "aeanet/model.hpp"

namespace aeanet {

enum class Strategy { pooled, self };
Strategy parse_strategy(const std::string& text);
std::string to_string(Strategy strategy);

struct TrainConfig {
  Strategy strategy = Strategy::pooled;
  std::size_t batch_size = 8;
  std::uint64_t steps = 2000;
  double learning_rate = 1e-4;
  // Square crop edge; clipped to the patch extents and floored to a multiple of 4.
  std::size_t crop = 96;
  std::uint64_t seed = 0;
  std::uint64_t validate_every = 100;
  std::size_t validation_patches = 8;
  bool allow_single_instance = false;
  ModelConfig model;

  void validate() const;
  KeyValues to_key_values() const;
  // Reads `train.*` and `model.*` keys over the defaults.
  static TrainConfig from_key_values(const KeyValues& kv);
  // Configuration text stored in checkpoints; excludes the step budget so a
  // run can be resumed with a larger one.
  std::string identity_text() const;
};

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
struct AdamState {
  ParameterSet<T> m;
  ParameterSet<T> v;
  std::uint64_t step = 0;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update in place. Missing moments start at zero.
// Non-finite gradients raise NumericError naming the parameter.
template <typename T>
void adam_step(ParameterSet<T>& params, const ParameterSet<T>& grads, AdamState<T>& state,
               double lr, const AdamOptions& options = {});

// Fixed-capacity FIFO between one producer and one consumer. close() wakes
// both sides; pop() returns nullopt once the queue is closed and drained.
template <typename V>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  bool push(V value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }
  std::optional<V> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    V v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }
  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
  std::deque<V> items_;
  bool closed_ = false;
};

struct TrainingData {
  std::vector<ImagePair> train_patches;
  std::vector<ImagePair> test_patches;
};
// Applies split_3x4 to each pair and pools the patches.
TrainingData build_training_data(const std::vector<ImagePair>& pairs);

struct Batch {
  std::uint64_t step = 0;
  std::vector<Tensor<float>> inputs;
  std::vector<Tensor<float>> targets;
};
// Step-seeded crop sampling: the batch for a step depends only on (seed, step).
Batch sample_batch(const std::vector<ImagePair>& patches, const TrainConfig& config,
                   std::uint64_t step);

struct LossPoint {
  std::uint64_t step = 0;
  double loss = 0.0;
};
struct ValidationPoint {
  std::uint64_t step = 0;
  double delta_psnr = 0.0;
  double delta_ssim = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossPoint> losses;
  std::vector<ValidationPoint> validation;
  double seconds = 0.0;

  void write_curve(std::ostream& out) const;
};

struct TrainOptions {
  std::optional<Checkpoint> resume;
  // Final (or last good, on divergence) checkpoint location; empty = none.
  std::filesystem::path checkpoint_path;
  std::filesystem::path curve_path;
  std::function<void(const std::string&)> log;
};

Checkpoint initial_checkpoint(const TrainConfig& config);
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

// Trains one model on the given patch pool. Validation runs every
// validate_every steps and at the end on the first validation_patches
// held-out patches.
TrainResult train_on(const TrainingData& data, const TrainConfig& config,
                     const TrainOptions& options = {});

// Pooled strategy: one model over all pairs.
TrainResult train(const std::vector<ImagePair>& pairs, const TrainConfig& config,
                  const TrainOptions& options = {});

// Self strategy: one model per pair, checkpoints written as <dir>/<id>.ckpt.
std::vector<TrainResult> train_self(const std::vector<ImagePair>& pairs, const TrainConfig& config,
                                    const std::filesystem::path& checkpoint_dir,
                                    const std::function<void(const std::string&)>& log = {});

// Predict-mode output for an image of any size. patch_size 0 evaluates the
// whole image in one reflect-padded tile.
Image predict_image(const Model<float>& model, const Image& image, std::size_t patch_size = 0);
MetricsReport evaluate(const Model<float>& model, const std::vector<ImagePair>& patches,
                       std::size_t patch_size = 0);

struct AblationVariant {
  std::string name;
  ModelConfig model;
};
// Rows: SR only, BA only, BA+SR(16), BA+SR(32), BA+SR(64), none, self_only.
std::vector<AblationVariant> standard_ablation_variants(const ModelConfig& base);

struct AblationRow {
  std::string name;
  double delta_psnr = 0.0;
  double delta_ssim = 0.0;
};
std::vector<AblationRow> run_ablation(const std::vector<ImagePair>& pairs, const TrainConfig& base,
                                      const std::vector<AblationVariant>& variants,
                                      const std::function<void(const std::string&)>& log = {});
void write_ablation_table(const std::vector<AblationRow>& rows, std::ostream& out);

struct SweepRow {
  std::size_t patch_size = 0;
  std::size_t tiles = 0;
  double delta_psnr = 0.0;
  double delta_ssim = 0.0;
};
struct SweepResult {
  std::vector<SweepRow> rows;
  bool monotone_non_decreasing = false;
};
// Tiled evaluation of the held-out patches at each size.
SweepResult run_patch_sweep(const std::vector<ImagePair>& pairs, const Model<float>& model,
                            const std::vector<std::size_t>& sizes);
void write_sweep_table(const SweepResult& result, std::ostream& out);

}  // namespace aeanet
