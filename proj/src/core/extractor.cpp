#include "extractor.hpp"

#include <algorithm>
#include <cmath>

#include "files.hpp"
#include "key_values.hpp"

namespace viewgen {

namespace fs = std::filesystem;

std::vector<Detection> segment_background_threshold(const Image& scene,
                                                     std::array<float, 3> background,
                                                     double tolerance, const std::string& label) {
  require(scene.channels == 3, ErrorCode::kInvalidShape,
          "segment: scene must have 3 channels, got " + std::to_string(scene.channels));
  const int h = scene.height;
  const int w = scene.width;
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double diff = 0.0;
      for (int c = 0; c < 3; ++c) {
        diff = std::max(diff, static_cast<double>(std::abs(scene.at(c, y, x) - background[c])));
      }
      fg[static_cast<std::size_t>(y) * w + x] = diff > tolerance;
    }
  }

  std::vector<int> component(fg.size(), -1);
  std::vector<Detection> out;
  std::vector<std::size_t> stack;
  std::vector<std::size_t> members;
  for (std::size_t start = 0; start < fg.size(); ++start) {
    if (!fg[start] || component[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    members.clear();
    stack.push_back(start);
    component[start] = id;
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      members.push_back(p);
      const int py = static_cast<int>(p / w);
      const int px = static_cast<int>(p % w);
      x0 = std::min(x0, px), x1 = std::max(x1, px);
      y0 = std::min(y0, py), y1 = std::max(y1, py);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = py + dy;
          const int nx = px + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
          if (fg[q] && component[q] < 0) {
            component[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    Detection d;
    d.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    d.mask = Image::blank(1, d.bbox.height, d.bbox.width, 0.0f);
    for (std::size_t p : members) {
      d.mask.at(0, static_cast<int>(p / w) - y0, static_cast<int>(p % w) - x0) = 1.0f;
    }
    d.class_label = label;
    d.score = 1.0;
    out.push_back(std::move(d));
  }
  return out;
}

Image crop(const Image& image, const BBox& box) {
  require(box.width > 0 && box.height > 0, ErrorCode::kInvalidCrop, "crop: zero-area box");
  require(box.x >= 0 && box.y >= 0 && box.x + box.width <= image.width &&
              box.y + box.height <= image.height,
          ErrorCode::kInvalidCrop, "crop: box lies outside the image");
  Image out = Image::blank(image.channels, box.height, box.width);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < box.height; ++y) {
      for (int x = 0; x < box.width; ++x) out.at(c, y, x) = image.at(c, box.y + y, box.x + x);
    }
  }
  return out;
}

BBox mask_bbox(const Image& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(0, y, x) > 0.5f) {
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
    }
  }
  require(x1 >= 0, ErrorCode::kInvalidCrop, "mask has no object pixels");
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

BBox normalized_content(int width, int height, int size) {
  require(width > 0 && height > 0, ErrorCode::kInvalidCrop, "normalize_crop: zero-area crop");
  require(size > 0, ErrorCode::kInvalidArgument, "normalize_crop: target size must be positive");
  const double scale = static_cast<double>(size) / std::max(width, height);
  const int cw = std::clamp(static_cast<int>(std::lround(width * scale)), 1, size);
  const int ch = std::clamp(static_cast<int>(std::lround(height * scale)), 1, size);
  return {(size - cw) / 2, (size - ch) / 2, cw, ch};
}

Tensor<float> normalize_crop(const Image& rgb, const Image& mask, int size) {
  require(rgb.width > 0 && rgb.height > 0, ErrorCode::kInvalidCrop, "normalize_crop: empty crop");
  require(rgb.channels == 3 && mask.channels == 1, ErrorCode::kInvalidShape,
          "normalize_crop: expected a 3-channel crop and a 1-channel mask");
  require(mask.width == rgb.width && mask.height == rgb.height, ErrorCode::kInvalidShape,
          "normalize_crop: mask and crop sizes differ");
  const BBox c = normalized_content(rgb.width, rgb.height, size);
  const auto s = static_cast<std::size_t>(size);
  Tensor<float> out = Tensor<float>::zeros({4, s, s});
  auto o = out.data_mut();
  const double sx = static_cast<double>(rgb.width) / c.width;
  const double sy = static_cast<double>(rgb.height) / c.height;
  for (int y = 0; y < c.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, rgb.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, rgb.height - 1);
    const double wy = fy - y0;
    const int ny = std::min(static_cast<int>((y + 0.5) * sy), rgb.height - 1);
    for (int x = 0; x < c.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, rgb.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, rgb.width - 1);
      const double wx = fx - x0;
      const std::size_t dst = static_cast<std::size_t>(c.y + y) * s + (c.x + x);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - wx) * rgb.at(ch, y0, x0) + wx * rgb.at(ch, y0, x1);
        const double bottom = (1 - wx) * rgb.at(ch, y1, x0) + wx * rgb.at(ch, y1, x1);
        o[ch * s * s + dst] = static_cast<float>((1 - wy) * top + wy * bottom);
      }
      const int nx = std::min(static_cast<int>((x + 0.5) * sx), rgb.width - 1);
      o[3 * s * s + dst] = mask.at(0, ny, nx) > 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Tensor<float> view_input(const Image& rgb, const Image& mask, int size) {
  const BBox box = mask_bbox(mask);
  Image r = crop(rgb, box);
  const Image m = crop(mask, box);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < r.height; ++y) {
      for (int x = 0; x < r.width; ++x) {
        if (m.at(0, y, x) <= 0.5f) r.at(c, y, x) = 0.0f;
      }
    }
  }
  return normalize_crop(r, m, size);
}

ModelRegistry ModelRegistry::load(const fs::path& path) {
  const std::string text = read_text_file(path);
  ModelRegistry reg;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    if (raw.empty() || raw[0] == '#') continue;
    const auto eq = raw.find('=');
    require(eq != std::string::npos && eq > 0, ErrorCode::kConfig,
            path.string() + ":" + std::to_string(line_no) + ": expected class=checkpoint");
    const std::string cls = trim(raw.substr(0, eq));
    fs::path ckpt = trim(raw.substr(eq + 1));
    if (ckpt.is_relative()) ckpt = path.parent_path() / ckpt;
    reg.add(cls, ckpt);
  }
  require(reg.size() > 0, ErrorCode::kConfig, "registry " + path.string() + " lists no models");
  return reg;
}

void ModelRegistry::add(const std::string& cls, const fs::path& checkpoint) {
  add(cls, load_checkpoint<float>(checkpoint));
}

void ModelRegistry::add(const std::string& cls, ViewNet<float> net) {
  require(!cls.empty(), ErrorCode::kConfig, "registry class name is empty");
  require(!contains(cls), ErrorCode::kConfig, "class '" + cls + "' registered twice");
  models_[cls] = std::make_shared<const ViewNet<float>>(std::move(net));
}

std::vector<std::string> ModelRegistry::classes() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : models_) out.push_back(k);
  return out;
}

const ViewNet<float>& ModelRegistry::get(const std::string& cls) const {
  const auto it = models_.find(cls);
  require(it != models_.end(), ErrorCode::kNoModel, "no model registered for class '" + cls + "'");
  return *it->second;
}

const ViewNet<float>& route(const std::string& label, const ModelRegistry& registry,
                            const std::optional<std::string>& override_class) {
  require(registry.size() > 0, ErrorCode::kNoModel, "model registry is empty");
  return registry.get(override_class ? *override_class : label);
}

}  // namespace viewgen
