#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "extractor.hpp"
#include "viewnet.hpp"

namespace viewgen {

// Mean absolute difference on the 0-255 scale over every element. Terms are
// accumulated in double in memory order.
double image_error(std::span<const float> generated, std::span<const float> reference);
double image_error(const Tensor<float>& generated, const Tensor<float>& reference);
// (1 - e/255) * 100; kInvalidArgument outside 0 <= e <= 255.
double image_accuracy(double e);

struct GeneratedViews {
  Tensor<float> rgb;    // [B,3,S,S]
  Tensor<float> depth;  // [B,1,S,S]
};

// One input view and the references of the poses to generate. References are
// only consulted by the oracle generator.
struct EvalRequest {
  const Tensor<float>* input;  // [4,S,S]
  std::span<const AngleQuery> queries;
  std::span<const Tensor<float>> reference_rgb;
  std::span<const Tensor<float>> reference_depth;
};

class ViewGenerator {
 public:
  virtual ~ViewGenerator() = default;
  virtual GeneratedViews generate(const EvalRequest& request) const = 0;
};

class NetGenerator : public ViewGenerator {
 public:
  explicit NetGenerator(const ViewNet<float>& net, std::size_t chunk = 64) : net_(net), chunk_(chunk) {}
  GeneratedViews generate(const EvalRequest& request) const override;

 private:
  const ViewNet<float>& net_;
  std::size_t chunk_;
};

// Returns the references themselves.
class OracleGenerator : public ViewGenerator {
 public:
  GeneratedViews generate(const EvalRequest& request) const override;
};

// Every pixel set to fixed values.
class ConstantGenerator : public ViewGenerator {
 public:
  ConstantGenerator(float rgb, float depth) : rgb_(rgb), depth_(depth) {}
  GeneratedViews generate(const EvalRequest& request) const override;

 private:
  float rgb_;
  float depth_;
};

// One scored (input view, target view) pair.
struct PairScore {
  std::uint64_t instance = 0;
  GridPose input_pose;
  GridPose target_pose;
  double e_rgb = 0.0;
  double e_depth = 0.0;
};

struct ClassStats {
  std::string cls;
  std::size_t images = 0;
  double e_rgb = 0.0;
  double std_rgb = 0.0;
  double acc_rgb = 0.0;
  double e_depth = 0.0;
  double std_depth = 0.0;
  double acc_depth = 0.0;
};

ClassStats class_stats(const std::string& cls, const std::vector<PairScore>& scores);

struct EvalReport {
  std::vector<ClassStats> classes;
  ClassStats average;  // unweighted mean over classes

  // Table-style CSV: one row per metric, one column per class plus average.
  std::string to_csv() const;
};

EvalReport make_report(const std::vector<ClassStats>& classes);

struct EvalOptions {
  std::vector<std::uint64_t> instances;  // empty: every instance in the manifest
  std::size_t inputs_per_instance = 2;
  std::uint64_t seed = 7;  // picks the input poses
  // When set, only target poses absent from this grid are scored.
  std::optional<GridSpec> exclude_grid;
  int threads = 1;
};

// Scores every selected input view against every (filtered) grid pose of the
// same instance. kEmptyHoldout when no instance or no target pose remains.
std::vector<PairScore> evaluate_model(const ViewGenerator& generator,
                                      const DatasetManifest& manifest, const std::string& cls,
                                      const EvalOptions& options);

struct RotationBin {
  double delta_pitch = 0.0;
  double delta_yaw = 0.0;  // signed, in (-180, 180]
  std::size_t count = 0;
  double acc_rgb = 0.0;    // mean per-pair accuracy
  double acc_depth = 0.0;
};

// Bins by exact relative rotation (target minus input).
struct RotationCurve {
  std::vector<RotationBin> bins;  // sorted by (delta_pitch, delta_yaw)

  std::size_t total() const;
  // Mean per-pair accuracy over pairs with lo <= |delta_yaw| <= hi.
  std::pair<double, double> mean_accuracy(double yaw_lo, double yaw_hi) const;
  std::string to_csv() const;
  // Heat map: rows delta pitch, columns delta yaw, gray level = RGB accuracy
  // on the left half and depth on the right.
  Image heatmap(int cell = 6) const;
};

RotationCurve rotation_curve(const std::vector<PairScore>& scores);

struct ContinuityResult {
  std::vector<double> rgb_steps;  // mean absolute difference between consecutive frames
  std::vector<double> depth_steps;
  double max_rgb = 0.0;
  double mean_rgb = 0.0;
  double max_depth = 0.0;
  double mean_depth = 0.0;
  bool closed = false;  // first and last frame bitwise equal
  GeneratedViews frames;
};

// Sweeps delta yaw over [0, 360] inclusive at `step` degrees, so the sweep
// has 360/step + 1 frames and its ends describe the same view.
ContinuityResult continuity_score(const ViewNet<float>& net, const Tensor<float>& input,
                                  double step = 6.0, double delta_pitch = 0.0);

// Generates `queries` for an input of class `label` through the model that
// route() selects, so an override converts between classes.
GeneratedViews cross_class_generate(const Tensor<float>& input, const std::string& label,
                                    const ModelRegistry& registry,
                                    const std::optional<std::string>& override_class,
                                    std::span<const AngleQuery> queries);

// Writes rgb_NNN.png / depth_NNN.png for each generated view.
void write_sequence(const GeneratedViews& views, const std::filesystem::path& dir,
                    std::size_t first_index = 0);

}  // namespace viewgen
