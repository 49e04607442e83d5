#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace viewgen {

// Layer sizes of the generator. The decoder mirrors the encoder.
struct ViewNetConfig {
  int input_size = 64;
  int input_channels = 4;
  std::vector<int> encoder_channels{16, 32, 64, 128};
  int latent_dim = 256;
  std::vector<int> fc_widths{256, 256};
  int angle_encoding_dim = 4;
  // Initial values of the learnable skip weights, one per encoder block.
  std::vector<double> skip_weights{1.0, 1.0, 1.0, 1.0};
  int rgb_branch_channels = 16;
  int depth_branch_channels = 16;
  double bn_momentum = 0.9;
  double bn_epsilon = 1e-5;

  static ViewNetConfig desk();   // 64px, four blocks
  static ViewNetConfig micro();  // 16px, two blocks, for gradient checks
  static ViewNetConfig full();   // 128px, five blocks
  static ViewNetConfig preset(std::string_view name);

  std::size_t blocks() const { return encoder_channels.size(); }
  int bottleneck_size() const { return input_size >> static_cast<int>(blocks()); }

  // Throws ErrorCode::kConfig naming the violated invariant.
  void validate() const;

  std::string to_text() const;
  static ViewNetConfig from_text(std::string_view text);

  bool operator==(const ViewNetConfig&) const = default;
};

// Requested rotation relative to the input view, in degrees.
struct AngleQuery {
  double delta_yaw = 0.0;
  double delta_pitch = 0.0;
};

// (sin dyaw, cos dyaw, sin dpitch, cos dpitch).
std::array<double, 4> encode_angle(const AngleQuery& query);

template <typename T>
Tensor<T> encode_angles(std::span<const AngleQuery> queries);

template <typename T>
struct ViewOutput {
  Tensor<T> rgb;    // [B,3,S,S] (or [3,S,S] for an unbatched input)
  Tensor<T> depth;  // [B,1,S,S]
};

template <typename T>
class ViewNet {
 public:
  using Parameter = std::pair<std::string, Tensor<T>>;
  using NormEntry = std::pair<std::string, ops::BatchNormState<T>>;

  // Xavier-uniform weights, zero biases, unit gammas, configured skip weights.
  static ViewNet build(const ViewNetConfig& config, std::uint64_t seed);
  // Rebuilds a network from stored tensors; names and shapes must match the
  // layout implied by `config` exactly.
  static ViewNet assemble(const ViewNetConfig& config, std::vector<Parameter> parameters,
                          std::vector<NormEntry> norm_state);

  const ViewNetConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return parameters_; }
  const std::vector<Parameter>& parameters() const { return parameters_; }
  std::vector<NormEntry>& norm_state() { return norm_state_; }
  const std::vector<NormEntry>& norm_state() const { return norm_state_; }
  const Tensor<T>& parameter(const std::string& name) const;
  Tensor<T>& parameter(const std::string& name);
  std::size_t parameter_count() const;

  // input [B,C,S,S] with one query per sample, or [C,S,S] with one query.
  // Train mode updates the batch-norm running statistics.
  ViewOutput<T> forward(Tape<T>& tape, const Tensor<T>& input,
                        std::span<const AngleQuery> queries, ops::Mode mode);
  // Eval-mode inference that never mutates the network; safe to call
  // concurrently.
  ViewOutput<T> generate(const Tensor<T>& input, std::span<const AngleQuery> queries) const;

 private:
  ViewOutput<T> run(Tape<T>& tape, const Tensor<T>& input, std::span<const AngleQuery> queries,
                    ops::Mode mode, std::vector<NormEntry>& norm) const;
  ops::BatchNormState<T>& norm(std::vector<NormEntry>& entries, const std::string& name) const;
  void index();

  ViewNetConfig config_;
  std::vector<Parameter> parameters_;
  std::vector<NormEntry> norm_state_;
  std::unordered_map<std::string, std::size_t> param_index_;
  std::unordered_map<std::string, std::size_t> norm_index_;
};

// Binary checkpoint: "VFCK", u32 version, config text, tensor table, CRC32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const ViewNet<T>& net, const std::filesystem::path& path);
template <typename T>
ViewNet<T> load_checkpoint(const std::filesystem::path& path);
template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const ViewNet<T>& net);
template <typename T>
ViewNet<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes);

extern template class ViewNet<float>;
extern template class ViewNet<double>;

}  // namespace viewgen
