#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "image.hpp"

namespace viewgen {

enum class ShapeClass { kCan, kMug, kBottle, kBox, kTable };

const std::vector<std::string>& class_names();
ShapeClass parse_class(std::string_view name);  // kUnknownClass on failure
const char* class_name(ShapeClass cls);

using Vec3 = std::array<double, 3>;

// Solid in object space; cylinders, frusta and the torus follow the usual
// conventions below.
struct Primitive {
  enum class Kind {
    kSphere,    // center, a = radius
    kCylinder,  // axis along y through center, a = radius, b = half height, capped
    kFrustum,   // axis along y, center.y = bottom, a = bottom radius, b = height, c = top radius
    kBox,       // axis aligned, half = half extents
    kTorus,     // ring in the xy plane around center, a = major radius, b = minor radius
  };
  Kind kind = Kind::kSphere;
  Vec3 center{0, 0, 0};
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  Vec3 half{0, 0, 0};

  bool operator==(const Primitive&) const = default;
};

struct ShapeInstance {
  ShapeClass cls = ShapeClass::kCan;
  std::uint64_t seed = 0;
  // Raw per-class dimensions in sampling order, before normalization.
  std::vector<double> params;
  // Normalized so the bounding box is centered at the origin with a
  // half-diagonal of kInstanceRadius.
  std::vector<Primitive> parts;
};

// Inside the unit sphere with some room: at the default camera (distance 2.5,
// fov 40) a sphere of this radius subtends 18.7 degrees, so in any pose the
// object stays clear of the frame border by over a pixel at 32px and up.
inline constexpr double kInstanceRadius = 0.8;

ShapeInstance make_instance(ShapeClass cls, std::uint64_t seed);
ShapeInstance make_instance(std::string_view cls, std::uint64_t seed);

struct CameraPose {
  double pitch = 0.0;
  double yaw = 0.0;
  double distance = 2.5;
  double fov = 40.0;  // vertical, degrees
};

// A render: rgb [3,S,S], depth [1,S,S] (1 = background), mask [1,S,S] in {0,1}.
// Values are quantized to their PNG encodings so disk round trips are exact.
struct RenderedView {
  Image rgb;
  Image depth;
  Image mask;
};

struct RenderOptions {
  int supersample = 2;  // rays per pixel side
  std::array<float, 3> color{0.15f, 0.35f, 0.85f};
  double ambient = 0.25;
  double diffuse = 0.75;
};

// Largest 16-bit depth code an object pixel may take; 65535 marks background.
inline constexpr int kMaxObjectDepthCode = 65534;

RenderedView rasterize(const ShapeInstance& instance, const CameraPose& camera, int size,
                       const RenderOptions& options = {});
// Renders arbitrary parts (e.g. a bare unit sphere). `bound` is the radius
// of a sphere at the origin enclosing every part.
RenderedView render_primitives(const std::vector<Primitive>& parts, double bound,
                               const CameraPose& camera, int size,
                               const RenderOptions& options = {});

// Inclusive pitch/yaw grid. Yaw values are reduced mod 360 and duplicates
// dropped; poses are sorted by (pitch, yaw).
struct GridSpec {
  double pitch_min = 0, pitch_max = 30, pitch_step = 10;
  double yaw_min = -360, yaw_max = 348, yaw_step = 12;

  static GridSpec training();    // pitch 0..30 step 10, yaw -360..348 step 12
  static GridSpec evaluation();  // pitch 0..30 step 3, yaw 0..360 step 6

  // "pitch:0:30:10,yaw:-360:348:12"
  std::string to_string() const;
  static GridSpec parse(std::string_view text);

  bool operator==(const GridSpec&) const = default;
};

struct GridPose {
  double pitch = 0.0;
  double yaw = 0.0;
  bool operator==(const GridPose&) const = default;
  auto operator<=>(const GridPose&) const = default;
};

std::vector<GridPose> angle_grid(const GridSpec& spec);

}  // namespace viewgen
