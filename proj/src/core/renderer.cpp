#include "renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>

#include "angles.hpp"
#include "key_values.hpp"
#include "rng.hpp"

namespace viewgen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 normalized(const Vec3& a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

struct Hit {
  double t = kInf;
  Vec3 normal{0, 0, 0};
};

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

// Smallest root of a t^2 + b t + c = 0 above t_min that passes `accept`.
template <typename Accept>
std::optional<double> quadratic_root(double a, double b, double c, double t_min, Accept accept) {
  if (std::abs(a) < 1e-14) {
    if (std::abs(b) < 1e-14) return std::nullopt;
    const double t = -c / b;
    if (t > t_min && accept(t)) return t;
    return std::nullopt;
  }
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t0 = (-b - sq) / (2 * a);
  double t1 = (-b + sq) / (2 * a);
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > t_min && accept(t0)) return t0;
  if (t1 > t_min && accept(t1)) return t1;
  return std::nullopt;
}

void keep(Hit& best, double t, const Vec3& normal) {
  if (t < best.t) best = {t, normal};
}

void cap(const Ray& r, const Vec3& o, double plane_y, double radius, double ny, Hit& best) {
  if (std::abs(r.dir[1]) < 1e-14) return;
  const double t = (plane_y - o[1]) / r.dir[1];
  if (t <= 0) return;
  const double x = o[0] + t * r.dir[0];
  const double z = o[2] + t * r.dir[2];
  if (x * x + z * z <= radius * radius) keep(best, t, {0, ny, 0});
}

void hit_sphere(const Primitive& p, const Ray& r, Hit& best) {
  const Vec3 o = r.origin - p.center;
  const auto t = quadratic_root(1.0, 2 * dot(o, r.dir), dot(o, o) - p.a * p.a, 0.0,
                                [](double) { return true; });
  if (t) keep(best, *t, normalized(o + *t * r.dir));
}

void hit_cylinder(const Primitive& p, const Ray& r, Hit& best) {
  const Vec3 o = r.origin - p.center;
  const double a = r.dir[0] * r.dir[0] + r.dir[2] * r.dir[2];
  const double b = 2 * (o[0] * r.dir[0] + o[2] * r.dir[2]);
  const double c = o[0] * o[0] + o[2] * o[2] - p.a * p.a;
  const auto t = quadratic_root(a, b, c, 0.0, [&](double t) {
    return std::abs(o[1] + t * r.dir[1]) <= p.b;
  });
  if (t) {
    const Vec3 q = o + *t * r.dir;
    keep(best, *t, {q[0] / p.a, 0, q[2] / p.a});
  }
  cap(r, o, p.b, p.a, 1.0, best);
  cap(r, o, -p.b, p.a, -1.0, best);
}

void hit_frustum(const Primitive& p, const Ray& r, Hit& best) {
  const Vec3 o = r.origin - p.center;
  const double k = (p.c - p.a) / p.b;
  const double base = p.a + k * o[1];
  const double a = r.dir[0] * r.dir[0] + r.dir[2] * r.dir[2] - k * k * r.dir[1] * r.dir[1];
  const double b = 2 * (o[0] * r.dir[0] + o[2] * r.dir[2] - k * base * r.dir[1]);
  const double c = o[0] * o[0] + o[2] * o[2] - base * base;
  const auto t = quadratic_root(a, b, c, 0.0, [&](double t) {
    const double y = o[1] + t * r.dir[1];
    return y >= 0 && y <= p.b;
  });
  if (t) {
    const Vec3 q = o + *t * r.dir;
    const double radius = p.a + k * q[1];
    keep(best, *t, normalized({q[0], -k * radius, q[2]}));
  }
  cap(r, o, 0.0, p.a, -1.0, best);
  cap(r, o, p.b, p.c, 1.0, best);
}

void hit_box(const Primitive& p, const Ray& r, Hit& best) {
  const Vec3 o = r.origin - p.center;
  double t_near = -kInf;
  double t_far = kInf;
  int axis = -1;
  double sign = 0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(r.dir[i]) < 1e-14) {
      if (std::abs(o[i]) > p.half[i]) return;
      continue;
    }
    double t0 = (-p.half[i] - o[i]) / r.dir[i];
    double t1 = (p.half[i] - o[i]) / r.dir[i];
    double s = -1;
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = i;
      sign = s;
    }
    t_far = std::min(t_far, t1);
  }
  if (axis < 0 || t_near > t_far || t_near <= 0) return;
  Vec3 n{0, 0, 0};
  n[axis] = sign;
  keep(best, t_near, n);
}

double torus_field(const Primitive& p, const Vec3& q) {
  const double s = dot(q, q) + p.a * p.a - p.b * p.b;
  return s * s - 4 * p.a * p.a * (q[0] * q[0] + q[1] * q[1]);
}

void hit_torus(const Primitive& p, const Ray& r, Hit& best) {
  const Vec3 o = r.origin - p.center;
  const double outer = p.a + p.b;
  const double b = dot(o, r.dir);
  const double disc = b * b - (dot(o, o) - outer * outer);
  if (disc <= 0) return;
  const double sq = std::sqrt(disc);
  const double t_enter = std::max(0.0, -b - sq);
  const double t_exit = -b + sq;
  if (t_exit <= 0 || t_enter >= best.t) return;
  // March to the first sign change, then bisect.
  constexpr int kSteps = 128;
  const double step = (t_exit - t_enter) / kSteps;
  double t_prev = t_enter;
  double f_prev = torus_field(p, o + t_prev * r.dir);
  for (int i = 1; i <= kSteps; ++i) {
    const double t = t_enter + i * step;
    const double f = torus_field(p, o + t * r.dir);
    if (f_prev > 0 && f <= 0) {
      double lo = t_prev;
      double hi = t;
      for (int k = 0; k < 48; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (torus_field(p, o + mid * r.dir) > 0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const Vec3 q = o + hi * r.dir;
      const double s = dot(q, q) + p.a * p.a - p.b * p.b;
      const double ring = 8 * p.a * p.a;
      keep(best, hi, normalized({4 * s * q[0] - ring * q[0], 4 * s * q[1] - ring * q[1], 4 * s * q[2]}));
      return;
    }
    t_prev = t;
    f_prev = f;
  }
}

// Bounding sphere of a part, used to skip rays early.
struct Bounds {
  Vec3 center;
  double radius;
};

Bounds part_bounds(const Primitive& p) {
  switch (p.kind) {
    case Primitive::Kind::kSphere: return {p.center, p.a};
    case Primitive::Kind::kCylinder: return {p.center, std::hypot(p.a, p.b)};
    case Primitive::Kind::kFrustum:
      return {p.center + Vec3{0, p.b / 2, 0}, std::hypot(std::max(p.a, p.c), p.b / 2)};
    case Primitive::Kind::kBox: return {p.center, std::sqrt(dot(p.half, p.half))};
    case Primitive::Kind::kTorus: return {p.center, p.a + p.b};
  }
  return {p.center, 0};
}

void part_box(const Primitive& p, Vec3& lo, Vec3& hi) {
  Vec3 a{}, b{};
  switch (p.kind) {
    case Primitive::Kind::kSphere:
      a = p.center - Vec3{p.a, p.a, p.a};
      b = p.center + Vec3{p.a, p.a, p.a};
      break;
    case Primitive::Kind::kCylinder:
      a = p.center - Vec3{p.a, p.b, p.a};
      b = p.center + Vec3{p.a, p.b, p.a};
      break;
    case Primitive::Kind::kFrustum: {
      const double rmax = std::max(p.a, p.c);
      a = p.center - Vec3{rmax, 0, rmax};
      b = p.center + Vec3{rmax, p.b, rmax};
      break;
    }
    case Primitive::Kind::kBox:
      a = p.center - p.half;
      b = p.center + p.half;
      break;
    case Primitive::Kind::kTorus: {
      const double e = p.a + p.b;
      a = p.center - Vec3{e, e, p.b};
      b = p.center + Vec3{e, e, p.b};
      break;
    }
  }
  for (int i = 0; i < 3; ++i) {
    lo[i] = std::min(lo[i], a[i]);
    hi[i] = std::max(hi[i], b[i]);
  }
}

void normalize_parts(std::vector<Primitive>& parts) {
  Vec3 lo{kInf, kInf, kInf};
  Vec3 hi{-kInf, -kInf, -kInf};
  for (const auto& p : parts) part_box(p, lo, hi);
  const Vec3 mid = 0.5 * (lo + hi);
  const Vec3 ext = hi - lo;
  const double s = kInstanceRadius / (0.5 * std::sqrt(dot(ext, ext)));
  for (auto& p : parts) {
    p.center = s * (p.center - mid);
    p.a *= s;
    p.b *= s;
    p.c *= s;
    p.half = s * p.half;
  }
}

Primitive cylinder(Vec3 center, double radius, double half_height) {
  Primitive p;
  p.kind = Primitive::Kind::kCylinder;
  p.center = center;
  p.a = radius;
  p.b = half_height;
  return p;
}

Primitive box(Vec3 center, Vec3 half) {
  Primitive p;
  p.kind = Primitive::Kind::kBox;
  p.center = center;
  p.half = half;
  return p;
}

}  // namespace

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"can", "mug", "bottle", "box", "table"};
  return names;
}

const char* class_name(ShapeClass cls) {
  return class_names()[static_cast<std::size_t>(cls)].c_str();
}

ShapeClass parse_class(std::string_view name) {
  const auto& names = class_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<ShapeClass>(i);
  }
  fail(ErrorCode::kUnknownClass, "unknown object class '" + std::string(name) +
                                     "' (known: can, mug, bottle, box, table)");
}

ShapeInstance make_instance(std::string_view cls, std::uint64_t seed) {
  return make_instance(parse_class(cls), seed);
}

ShapeInstance make_instance(ShapeClass cls, std::uint64_t seed) {
  ShapeInstance inst;
  inst.cls = cls;
  inst.seed = seed;
  Rng rng(mix_seed(seed, 0x5eed00 + static_cast<std::uint64_t>(cls)));
  auto draw = [&](double lo, double hi) {
    const double v = rng.uniform(lo, hi);
    inst.params.push_back(v);
    return v;
  };
  auto& parts = inst.parts;
  switch (cls) {
    case ShapeClass::kCan: {
      const double r = draw(0.30, 0.45);
      const double h = draw(0.8, 1.3);
      parts.push_back(cylinder({0, 0, 0}, r, h / 2));
      break;
    }
    case ShapeClass::kMug: {
      const double r = draw(0.32, 0.48);
      const double h = draw(0.6, 1.0);
      const double ring = draw(0.22, 0.32) * h;
      const double thick = draw(0.04, 0.07);
      parts.push_back(cylinder({0, 0, 0}, r, h / 2));
      Primitive handle;
      handle.kind = Primitive::Kind::kTorus;
      handle.center = {r, 0, 0};
      handle.a = ring;
      handle.b = thick;
      parts.push_back(handle);
      break;
    }
    case ShapeClass::kBottle: {
      const double r = draw(0.25, 0.38);
      const double body = draw(0.7, 1.1);
      const double shoulder = draw(0.15, 0.3);
      const double neck_r = draw(0.08, 0.13);
      const double neck = draw(0.2, 0.4);
      parts.push_back(cylinder({0, body / 2, 0}, r, body / 2));
      Primitive f;
      f.kind = Primitive::Kind::kFrustum;
      f.center = {0, body, 0};
      f.a = r;
      f.b = shoulder;
      f.c = neck_r;
      parts.push_back(f);
      parts.push_back(cylinder({0, body + shoulder + neck / 2, 0}, neck_r, neck / 2));
      break;
    }
    case ShapeClass::kBox: {
      const double x = draw(0.3, 0.8);
      const double y = draw(0.3, 0.8);
      const double z = draw(0.3, 0.8);
      parts.push_back(box({0, 0, 0}, {x, y, z}));
      break;
    }
    case ShapeClass::kTable: {
      const double tx = draw(0.6, 1.0);
      const double ty = draw(0.04, 0.07);
      const double tz = draw(0.4, 0.8);
      const double leg = draw(0.04, 0.08);
      const double height = draw(0.5, 0.9);
      const double inset = draw(0.0, 0.1);
      parts.push_back(box({0, height + ty, 0}, {tx, ty, tz}));
      const double lx = tx - leg - inset;
      const double lz = tz - leg - inset;
      for (double sx : {-1.0, 1.0}) {
        for (double sz : {-1.0, 1.0}) {
          parts.push_back(box({sx * lx, height / 2, sz * lz}, {leg, height / 2, leg}));
        }
      }
      break;
    }
  }
  normalize_parts(parts);
  return inst;
}

RenderedView rasterize(const ShapeInstance& instance, const CameraPose& camera, int size,
                       const RenderOptions& options) {
  return render_primitives(instance.parts, 1.0, camera, size, options);
}

RenderedView render_primitives(const std::vector<Primitive>& parts, double bound,
                               const CameraPose& camera, int size, const RenderOptions& options) {
  require(size >= 16, ErrorCode::kInvalidArgument,
          "render size must be at least 16, got " + std::to_string(size));
  require(options.supersample >= 1, ErrorCode::kInvalidArgument, "supersample must be >= 1");
  require(camera.distance > bound, ErrorCode::kInvalidCamera,
          "camera distance " + format_double(camera.distance) + " does not exceed object radius " +
              format_double(bound));
  require(std::abs(camera.pitch) < 90.0, ErrorCode::kInvalidCamera,
          "pitch must lie strictly between -90 and 90 degrees");
  require(camera.fov > 0.0 && camera.fov < 180.0, ErrorCode::kInvalidCamera,
          "fov must lie in (0, 180) degrees");

  const auto [sp, cp] = sincos_degrees(camera.pitch);
  const auto [sy, cy] = sincos_degrees(camera.yaw);
  const double d = camera.distance;
  const Vec3 eye{d * cp * sy, d * sp, d * cp * cy};
  const Vec3 forward{-cp * sy, -sp, -cp * cy};
  const Vec3 right{cy, 0, -sy};
  const Vec3 up{-sy * sp, cp, -cy * sp};
  const double half = std::tan(camera.fov * std::numbers::pi / 360.0);

  std::vector<Bounds> bounds;
  for (const auto& p : parts) bounds.push_back(part_bounds(p));

  RenderedView view;
  view.rgb = Image::blank(3, size, size, 0.0f);
  view.depth = Image::blank(1, size, size, 1.0f);
  view.mask = Image::blank(1, size, size, 0.0f);

  const int k = options.supersample;
  const double near = d - bound;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      int hits = 0;
      double shade = 0.0;
      double t_sum = 0.0;
      for (int sv = 0; sv < k; ++sv) {
        for (int su = 0; su < k; ++su) {
          const double px = ((j + (su + 0.5) / k) / size * 2.0 - 1.0) * half;
          const double py = (1.0 - (i + (sv + 0.5) / k) / size * 2.0) * half;
          const Ray ray{eye, normalized(forward + px * right + py * up)};
          Hit best;
          for (std::size_t n = 0; n < parts.size(); ++n) {
            const Vec3 oc = ray.origin - bounds[n].center;
            const double b = dot(oc, ray.dir);
            const double c = dot(oc, oc) - bounds[n].radius * bounds[n].radius;
            if (b * b - c < 0 || (b > 0 && c > 0)) continue;
            switch (parts[n].kind) {
              case Primitive::Kind::kSphere: hit_sphere(parts[n], ray, best); break;
              case Primitive::Kind::kCylinder: hit_cylinder(parts[n], ray, best); break;
              case Primitive::Kind::kFrustum: hit_frustum(parts[n], ray, best); break;
              case Primitive::Kind::kBox: hit_box(parts[n], ray, best); break;
              case Primitive::Kind::kTorus: hit_torus(parts[n], ray, best); break;
            }
          }
          if (best.t == kInf) continue;
          ++hits;
          t_sum += best.t;
          shade += options.ambient + options.diffuse * std::abs(dot(best.normal, ray.dir));
        }
      }
      if (hits == 0 || 2 * hits < k * k) continue;
      const double coverage = 1.0 / (k * k);
      for (int c = 0; c < 3; ++c) {
        view.rgb.at(c, i, j) = quantize(static_cast<float>(options.color[c] * shade * coverage), 8);
      }
      const double depth = std::clamp((t_sum / hits - near) / 2.0, 0.0, 1.0);
      const long code = std::min<long>(std::lround(depth * 65535.0), kMaxObjectDepthCode);
      view.depth.at(0, i, j) = static_cast<float>(code / 65535.0);
      view.mask.at(0, i, j) = 1.0f;
    }
  }
  return view;
}

GridSpec GridSpec::training() { return GridSpec{}; }

GridSpec GridSpec::evaluation() { return GridSpec{0, 30, 3, 0, 360, 6}; }

std::string GridSpec::to_string() const {
  return "pitch:" + format_double(pitch_min) + ":" + format_double(pitch_max) + ":" +
         format_double(pitch_step) + ",yaw:" + format_double(yaw_min) + ":" +
         format_double(yaw_max) + ":" + format_double(yaw_step);
}

GridSpec GridSpec::parse(std::string_view text) {
  GridSpec g;
  bool seen_pitch = false;
  bool seen_yaw = false;
  for (const auto& part : split(text, ',')) {
    const auto f = split(part, ':');
    require(f.size() == 4, ErrorCode::kConfig,
            "grid axis '" + part + "' is not of the form name:min:max:step");
    double v[3];
    for (int i = 0; i < 3; ++i) {
      try {
        std::size_t used = 0;
        v[i] = std::stod(f[i + 1], &used);
        require(used == f[i + 1].size(), ErrorCode::kConfig, "trailing characters");
      } catch (const std::exception&) {
        fail(ErrorCode::kConfig, "bad number '" + f[i + 1] + "' in grid '" + std::string(text) + "'");
      }
    }
    require(v[2] > 0, ErrorCode::kConfig, "grid step must be positive in '" + part + "'");
    require(v[1] >= v[0], ErrorCode::kConfig, "grid max below min in '" + part + "'");
    if (f[0] == "pitch") {
      g.pitch_min = v[0], g.pitch_max = v[1], g.pitch_step = v[2];
      seen_pitch = true;
    } else if (f[0] == "yaw") {
      g.yaw_min = v[0], g.yaw_max = v[1], g.yaw_step = v[2];
      seen_yaw = true;
    } else {
      fail(ErrorCode::kConfig, "unknown grid axis '" + f[0] + "'");
    }
  }
  require(seen_pitch && seen_yaw, ErrorCode::kConfig,
          "grid needs both pitch and yaw axes: '" + std::string(text) + "'");
  return g;
}

std::vector<GridPose> angle_grid(const GridSpec& spec) {
  require(spec.pitch_step > 0 && spec.yaw_step > 0, ErrorCode::kInvalidArgument,
          "grid steps must be positive");
  auto values = [](double lo, double hi, double step) {
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
  };
  std::set<GridPose> poses;
  for (double p : values(spec.pitch_min, spec.pitch_max, spec.pitch_step)) {
    for (double y : values(spec.yaw_min, spec.yaw_max, spec.yaw_step)) {
      poses.insert({p, wrap_degrees(y)});
    }
  }
  return {poses.begin(), poses.end()};
}

}  // namespace viewgen
