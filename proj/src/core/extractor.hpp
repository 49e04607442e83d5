#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "image.hpp"
#include "viewnet.hpp"

namespace viewgen {

struct BBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const BBox&) const = default;
};

struct Detection {
  BBox bbox;
  Image mask;  // [1, bbox.height, bbox.width], values {0,1}
  std::string class_label = "unknown";
  double score = 1.0;
};

// Pixels whose largest channel difference from `background` exceeds
// `tolerance` are foreground; each 8-connected component becomes one
// detection, ordered by its first pixel in row-major order.
std::vector<Detection> segment_background_threshold(const Image& scene,
                                                     std::array<float, 3> background = {0, 0, 0},
                                                     double tolerance = 0.5 / 255.0,
                                                     const std::string& label = "unknown");

Image crop(const Image& image, const BBox& box);
// Bounding box of the nonzero pixels; kInvalidCrop when there are none.
BBox mask_bbox(const Image& mask);

// Scales the longer side to `size` (bilinear for RGB, nearest for the mask),
// centers the result on a black square and stacks RGB + mask into [4,S,S].
Tensor<float> normalize_crop(const Image& rgb, const Image& mask, int size);
// Content rectangle normalize_crop uses for a w x h crop.
BBox normalized_content(int width, int height, int size);

// Network input for a full-frame view: crop to the mask's bounding box, then
// normalize_crop.
Tensor<float> view_input(const Image& rgb, const Image& mask, int size);

// Per-class generators, loaded once and immutable afterwards.
class ModelRegistry {
 public:
  // Text file of `class=checkpoint` lines; relative paths resolve against the
  // file's directory.
  static ModelRegistry load(const std::filesystem::path& path);

  void add(const std::string& cls, const std::filesystem::path& checkpoint);
  void add(const std::string& cls, ViewNet<float> net);

  bool contains(const std::string& cls) const { return models_.count(cls) != 0; }
  std::vector<std::string> classes() const;
  const ViewNet<float>& get(const std::string& cls) const;
  std::size_t size() const { return models_.size(); }

 private:
  std::map<std::string, std::shared_ptr<const ViewNet<float>>> models_;
};

// The model for `label`, or for `override_class` when given (conversion mode).
const ViewNet<float>& route(const std::string& label, const ModelRegistry& registry,
                            const std::optional<std::string>& override_class = std::nullopt);

}  // namespace viewgen
