#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "key_values.hpp"
#include "rng.hpp"
#include "viewnet.hpp"

namespace viewgen {

struct TrainConfig {
  std::string cls = "can";
  std::string model = "desk";  // ViewNetConfig preset
  double learning_rate = 0.0005;
  std::int64_t iterations = 5000;  // one iteration = one batch update
  int batch_size = 16;
  double clip_min = -1.0;
  double clip_max = 1.0;
  double rgb_weight = 1.0;
  double depth_weight = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;
  double holdout_fraction = 0.2;
  std::int64_t checkpoint_every = 1000;  // 0 disables intermediate checkpoints
  std::int64_t log_every = 100;
  // "random" pairs any two poses of an instance; "identity" only Δ = 0.
  std::string pairing = "random";

  void validate() const;  // ErrorCode::kConfig
  // Consumes the train.* keys.
  static TrainConfig from_kv(KeyValues& kv);
  std::string to_text() const;
};

// Splits ascending instance seeds into (train, holdout); the holdout is the
// last round(n * fraction) seeds, leaving at least one for training.
std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> split_instances(
    const std::vector<std::uint64_t>& seeds, double holdout_fraction);

struct TrainingView {
  std::uint64_t instance_seed = 0;
  GridPose pose;
  Tensor<float> input;  // [4,S,S] crop-normalized RGB + mask
  Tensor<float> rgb;    // [3,S,S] full-frame target
  Tensor<float> depth;  // [1,S,S]
};

struct TrainingInstance {
  std::uint64_t seed = 0;
  std::vector<TrainingView> views;
};

struct TrainingSet {
  std::string cls;
  int size = 0;
  std::vector<TrainingInstance> instances;
  std::vector<std::uint64_t> holdout;

  // kEmptyClass when the class has no training instance.
  static TrainingSet load(const DatasetManifest& manifest, const std::string& cls,
                          double holdout_fraction, int threads = 1);
};

TrainingView make_training_view(const RenderedView& view, std::uint64_t seed, GridPose pose,
                                int size);

struct PairBatch {
  Tensor<float> inputs;         // [B,4,S,S]
  Tensor<float> targets_rgb;    // [B,3,S,S]
  Tensor<float> targets_depth;  // [B,1,S,S]
  std::vector<AngleQuery> queries;
  std::vector<std::uint64_t> input_instances;
  std::vector<std::uint64_t> target_instances;
  std::vector<GridPose> input_poses;
  std::vector<GridPose> target_poses;
};

// Draws an instance uniformly, then two poses of it (possibly equal). The
// query is target pose minus input pose.
class PairSampler {
 public:
  PairSampler(const TrainingSet& set, std::uint64_t seed, bool identity_only = false);

  PairBatch next(std::size_t batch_size);
  // Instance indices only; used by statistical checks without copying images.
  std::size_t next_instance() { return static_cast<std::size_t>(rng_.below(set_->instances.size())); }

 private:
  const TrainingSet* set_;
  Rng rng_;
  bool identity_only_;
};

// Clamps every gradient element into [lo, hi].
template <typename T>
void clip_gradients(std::span<Tensor<T>> params, double lo, double hi);

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam on the gradient buffers of `params`; a parameter with
// no gradient is treated as having a zero gradient.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamConfig& config);

struct LossRecord {
  std::int64_t iteration = 0;
  double rgb = 0.0;
  double depth = 0.0;
  double total = 0.0;
};

struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_iteration;
  std::function<void(std::int64_t, const ViewNet<float>&)> on_checkpoint;
};

// Trains in place. A non-finite loss raises ErrorCode::kDivergence and leaves
// `net` as it was after the last good update.
std::vector<LossRecord> train(ViewNet<float>& net, const TrainingSet& set, const TrainConfig& config,
                              const TrainCallbacks& callbacks = {});

std::string loss_csv(const std::vector<LossRecord>& trace, const TrainConfig& config);

}  // namespace viewgen
