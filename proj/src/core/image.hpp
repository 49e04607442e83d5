#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "tensor.hpp"

namespace viewgen {

// Planar float image [C,H,W] with values in [0,1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  static Image blank(int channels, int height, int width, float fill = 0.0f);

  bool empty() const { return data.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[(c * plane()) + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(c * plane()) + static_cast<std::size_t>(y) * width + x];
  }

  bool operator==(const Image&) const = default;
};

Tensor<float> image_to_tensor(const Image& image);
// Accepts [C,H,W] or [1,C,H,W].
Image tensor_to_image(const Tensor<float>& tensor);
// Slice b of a [B,C,H,W] tensor.
Image batch_image(const Tensor<float>& tensor, std::size_t b);

// Rounds to the nearest level of a `bits`-deep integer encoding so that
// values survive a PNG round trip unchanged.
float quantize(float value, int bits);

// 1 or 3 channels; 8 or 16 bits per sample. Values are clamped to [0,1].
void write_png(const std::filesystem::path& path, const Image& image, int bits = 8);
// Gray, gray+alpha, RGB, RGBA or palette; alpha is dropped. 8- and 16-bit
// samples are scaled to [0,1].
Image read_png(const std::filesystem::path& path);

}  // namespace viewgen
