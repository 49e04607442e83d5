#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "angles.hpp"
#include "extractor.hpp"
#include "parallel.hpp"

namespace viewgen {

void TrainConfig::validate() const {
  require(!cls.empty(), ErrorCode::kConfig, "train.class is empty");
  require(std::isfinite(learning_rate) && learning_rate > 0, ErrorCode::kConfig,
          "train.learning_rate must be > 0");
  require(iterations >= 0, ErrorCode::kConfig, "train.iterations must be >= 0");
  require(batch_size >= 2, ErrorCode::kConfig, "train.batch_size must be >= 2 for batch norm");
  require(clip_min < clip_max, ErrorCode::kConfig, "train.clip_min must be below train.clip_max");
  require(rgb_weight >= 0 && depth_weight >= 0, ErrorCode::kConfig, "loss weights must be >= 0");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorCode::kConfig,
          "adam betas must lie in [0, 1)");
  require(adam_epsilon > 0, ErrorCode::kConfig, "train.adam_epsilon must be > 0");
  require(holdout_fraction >= 0 && holdout_fraction < 1, ErrorCode::kConfig,
          "train.holdout_fraction must lie in [0, 1)");
  require(checkpoint_every >= 0 && log_every >= 0, ErrorCode::kConfig,
          "checkpoint/log intervals must be >= 0");
  require(pairing == "random" || pairing == "identity", ErrorCode::kConfig,
          "train.pairing must be 'random' or 'identity'");
  ViewNetConfig::preset(model);
}

TrainConfig TrainConfig::from_kv(KeyValues& kv) {
  TrainConfig c;
  c.cls = kv.take_string("train.class", c.cls);
  c.model = kv.take_string("train.model", c.model);
  c.learning_rate = kv.take_double("train.learning_rate", c.learning_rate);
  c.iterations = kv.take_int("train.iterations", c.iterations);
  c.batch_size = static_cast<int>(kv.take_int("train.batch_size", c.batch_size));
  c.clip_min = kv.take_double("train.clip_min", c.clip_min);
  c.clip_max = kv.take_double("train.clip_max", c.clip_max);
  c.rgb_weight = kv.take_double("train.rgb_weight", c.rgb_weight);
  c.depth_weight = kv.take_double("train.depth_weight", c.depth_weight);
  c.beta1 = kv.take_double("train.adam_beta1", c.beta1);
  c.beta2 = kv.take_double("train.adam_beta2", c.beta2);
  c.adam_epsilon = kv.take_double("train.adam_epsilon", c.adam_epsilon);
  c.seed = kv.take_u64("train.seed", c.seed);
  c.holdout_fraction = kv.take_double("train.holdout_fraction", c.holdout_fraction);
  c.checkpoint_every = kv.take_int("train.checkpoint_every", c.checkpoint_every);
  c.log_every = kv.take_int("train.log_every", c.log_every);
  c.pairing = kv.take_string("train.pairing", c.pairing);
  c.validate();
  return c;
}

std::string TrainConfig::to_text() const {
  std::string out;
  out += "train.class=" + cls + "\n";
  out += "train.model=" + model + "\n";
  out += "train.learning_rate=" + format_double(learning_rate) + "\n";
  out += "train.iterations=" + std::to_string(iterations) + "\n";
  out += "train.batch_size=" + std::to_string(batch_size) + "\n";
  out += "train.clip_min=" + format_double(clip_min) + "\n";
  out += "train.clip_max=" + format_double(clip_max) + "\n";
  out += "train.rgb_weight=" + format_double(rgb_weight) + "\n";
  out += "train.depth_weight=" + format_double(depth_weight) + "\n";
  out += "train.adam_beta1=" + format_double(beta1) + "\n";
  out += "train.adam_beta2=" + format_double(beta2) + "\n";
  out += "train.adam_epsilon=" + format_double(adam_epsilon) + "\n";
  out += "train.seed=" + std::to_string(seed) + "\n";
  out += "train.holdout_fraction=" + format_double(holdout_fraction) + "\n";
  out += "train.checkpoint_every=" + std::to_string(checkpoint_every) + "\n";
  out += "train.log_every=" + std::to_string(log_every) + "\n";
  out += "train.pairing=" + pairing + "\n";
  return out;
}

std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> split_instances(
    const std::vector<std::uint64_t>& seeds, double holdout_fraction) {
  std::size_t held = static_cast<std::size_t>(std::lround(seeds.size() * holdout_fraction));
  if (!seeds.empty()) held = std::min(held, seeds.size() - 1);
  std::vector<std::uint64_t> train(seeds.begin(), seeds.end() - static_cast<long>(held));
  std::vector<std::uint64_t> holdout(seeds.end() - static_cast<long>(held), seeds.end());
  return {train, holdout};
}

TrainingView make_training_view(const RenderedView& view, std::uint64_t seed, GridPose pose,
                                int size) {
  TrainingView tv;
  tv.instance_seed = seed;
  tv.pose = pose;
  tv.input = view_input(view.rgb, view.mask, size);
  tv.rgb = image_to_tensor(view.rgb);
  tv.depth = image_to_tensor(view.depth);
  return tv;
}

TrainingSet TrainingSet::load(const DatasetManifest& manifest, const std::string& cls,
                              double holdout_fraction, int threads) {
  TrainingSet set;
  set.cls = cls;
  set.size = manifest.size;
  const auto seeds = manifest.instances(cls);
  require(!seeds.empty(), ErrorCode::kEmptyClass,
          "class '" + cls + "' has no instances in " + manifest.root.string());
  auto [train, holdout] = split_instances(seeds, holdout_fraction);
  set.holdout = holdout;
  for (std::uint64_t seed : train) {
    TrainingInstance inst;
    inst.seed = seed;
    const auto records = manifest.records_for(cls, seed);
    inst.views.resize(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
      inst.views[i] = make_training_view(load_view(manifest, records[i]), seed,
                                         {records[i].pitch, records[i].yaw}, manifest.size);
    });
    set.instances.push_back(std::move(inst));
  }
  return set;
}

PairSampler::PairSampler(const TrainingSet& set, std::uint64_t seed, bool identity_only)
    : set_(&set), rng_(seed), identity_only_(identity_only) {
  require(!set.instances.empty(), ErrorCode::kEmptyClass,
          "class '" + set.cls + "' has no training instances");
  for (const auto& inst : set.instances) {
    require(!inst.views.empty(), ErrorCode::kEmptyClass,
            "instance " + std::to_string(inst.seed) + " has no views");
  }
}

PairBatch PairSampler::next(std::size_t batch_size) {
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
  const auto s = static_cast<std::size_t>(set_->size);
  const std::size_t plane = s * s;
  PairBatch b;
  b.inputs = Tensor<float>::zeros({batch_size, 4, s, s});
  b.targets_rgb = Tensor<float>::zeros({batch_size, 3, s, s});
  b.targets_depth = Tensor<float>::zeros({batch_size, 1, s, s});
  for (std::size_t i = 0; i < batch_size; ++i) {
    const auto& inst = set_->instances[rng_.below(set_->instances.size())];
    const auto& in = inst.views[rng_.below(inst.views.size())];
    const auto& out = identity_only_ ? in : inst.views[rng_.below(inst.views.size())];
    std::memcpy(b.inputs.data_mut().data() + i * 4 * plane, in.input.data().data(),
                4 * plane * sizeof(float));
    std::memcpy(b.targets_rgb.data_mut().data() + i * 3 * plane, out.rgb.data().data(),
                3 * plane * sizeof(float));
    std::memcpy(b.targets_depth.data_mut().data() + i * plane, out.depth.data().data(),
                plane * sizeof(float));
    b.queries.push_back({out.pose.yaw - in.pose.yaw, out.pose.pitch - in.pose.pitch});
    b.input_instances.push_back(in.instance_seed);
    b.target_instances.push_back(out.instance_seed);
    b.input_poses.push_back(in.pose);
    b.target_poses.push_back(out.pose);
  }
  return b;
}

template <typename T>
void clip_gradients(std::span<Tensor<T>> params, double lo, double hi) {
  require(lo < hi, ErrorCode::kInvalidArgument, "clip range must satisfy lo < hi");
  const T l = static_cast<T>(lo);
  const T h = static_cast<T>(hi);
  for (auto& p : params) {
    if (p.grad().empty()) continue;
    for (T& g : p.grad_mut()) g = std::clamp(g, l, h);
  }
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamConfig& config) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorCode::kInvalidShape, "adam state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.m[i].size() == params[i].numel() && state.v[i].size() == params[i].numel(),
            ErrorCode::kInvalidShape,
            "adam state shape differs from parameter " + shape_string(params[i].shape()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(config.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(config.beta2, t)));
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i].grad();
    auto w = params[i].data_mut();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has = g.size() == w.size();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const T gk = has ? g[k] : T(0);
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
      w[k] -= lr * (m[k] * c1) / (std::sqrt(v[k] * c2) + eps);
    }
  }
}

std::vector<LossRecord> train(ViewNet<float>& net, const TrainingSet& set, const TrainConfig& config,
                              const TrainCallbacks& callbacks) {
  config.validate();
  require(net.config().input_size == set.size, ErrorCode::kConfig,
          "model input size " + std::to_string(net.config().input_size) +
              " does not match dataset size " + std::to_string(set.size));
  PairSampler sampler(set, mix_seed(config.seed, 1), config.pairing == "identity");
  std::vector<Tensor<float>> params;
  for (auto& p : net.parameters()) {
    p.second.set_requires_grad(true);
    params.push_back(p.second);
  }
  AdamState<float> adam;
  const AdamConfig adam_config{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};
  std::vector<std::vector<float>> saved_norms;
  std::vector<LossRecord> trace;
  trace.reserve(static_cast<std::size_t>(config.iterations));

  for (std::int64_t it = 1; it <= config.iterations; ++it) {
    PairBatch batch = sampler.next(static_cast<std::size_t>(config.batch_size));
    saved_norms.clear();
    for (const auto& [name, st] : net.norm_state()) {
      saved_norms.emplace_back(st.running_mean.data().begin(), st.running_mean.data().end());
      saved_norms.emplace_back(st.running_var.data().begin(), st.running_var.data().end());
    }
    Tape<float> tape;
    auto out = net.forward(tape, batch.inputs, batch.queries, ops::Mode::kTrain);
    auto rgb_loss = ops::mse_loss(tape, out.rgb, batch.targets_rgb);
    auto depth_loss = ops::mse_loss(tape, out.depth, batch.targets_depth);
    auto total = ops::add(tape, ops::scale(tape, rgb_loss, static_cast<float>(config.rgb_weight)),
                          ops::scale(tape, depth_loss, static_cast<float>(config.depth_weight)));
    const LossRecord rec{it, rgb_loss.item(), depth_loss.item(), total.item()};
    if (!std::isfinite(rec.total)) {
      std::size_t k = 0;
      for (auto& [name, st] : net.norm_state()) {
        std::copy(saved_norms[k].begin(), saved_norms[k].end(), st.running_mean.data_mut().begin());
        std::copy(saved_norms[k + 1].begin(), saved_norms[k + 1].end(),
                  st.running_var.data_mut().begin());
        k += 2;
      }
      fail(ErrorCode::kDivergence, "loss became non-finite at iteration " + std::to_string(it));
    }
    tape.backward(total);
    clip_gradients<float>(params, config.clip_min, config.clip_max);
    adam_step<float>(params, adam, adam_config);
    for (auto& p : params) p.clear_grad();
    trace.push_back(rec);
    if (callbacks.on_iteration) callbacks.on_iteration(rec);
    if (callbacks.on_checkpoint && config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
      callbacks.on_checkpoint(it, net);
    }
  }
  for (auto& p : net.parameters()) p.second.set_requires_grad(false);
  return trace;
}

std::string loss_csv(const std::vector<LossRecord>& trace, const TrainConfig& config) {
  std::string out = "# one iteration = one batch update of " + std::to_string(config.batch_size) +
                    " pairs; total = " + format_double(config.rgb_weight) + "*rgb + " +
                    format_double(config.depth_weight) + "*depth\n";
  out += "iteration,rgb_loss,depth_loss,total\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + "," + format_double(r.rgb) + "," + format_double(r.depth) +
           "," + format_double(r.total) + "\n";
  }
  return out;
}

template void clip_gradients<float>(std::span<Tensor<float>>, double, double);
template void clip_gradients<double>(std::span<Tensor<double>>, double, double);
template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&, const AdamConfig&);

}  // namespace viewgen
