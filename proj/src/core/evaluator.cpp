#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>

#include "angles.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "trainer.hpp"

namespace viewgen {

namespace fs = std::filesystem;

double image_error(std::span<const float> generated, std::span<const float> reference) {
  require(generated.size() == reference.size(), ErrorCode::kInvalidShape,
          "image_error: " + std::to_string(generated.size()) + " vs " +
              std::to_string(reference.size()) + " elements");
  require(!generated.empty(), ErrorCode::kInvalidShape, "image_error: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    sum += std::abs(static_cast<double>(generated[i]) * 255.0 - static_cast<double>(reference[i]) * 255.0);
  }
  return sum / static_cast<double>(generated.size());
}

double image_error(const Tensor<float>& generated, const Tensor<float>& reference) {
  require(generated.shape() == reference.shape(), ErrorCode::kInvalidShape,
          "image_error: shape mismatch " + shape_string(generated.shape()) + " vs " +
              shape_string(reference.shape()));
  return image_error(generated.data(), reference.data());
}

double image_accuracy(double e) {
  require(e >= 0.0 && e <= 255.0, ErrorCode::kInvalidArgument,
          "image_accuracy: error " + format_double(e) + " outside [0, 255]");
  return (1.0 - e / 255.0) * 100.0;
}

namespace {

Tensor<float> stack(std::span<const Tensor<float>> items) {
  require(!items.empty(), ErrorCode::kInvalidArgument, "nothing to stack");
  Shape s = items[0].shape();
  const std::size_t n = items[0].numel();
  s.insert(s.begin(), items.size());
  std::vector<float> data(items.size() * n);
  for (std::size_t i = 0; i < items.size(); ++i) {
    require(items[i].numel() == n, ErrorCode::kInvalidShape, "stack: differing sizes");
    std::memcpy(data.data() + i * n, items[i].data().data(), n * sizeof(float));
  }
  return Tensor<float>(std::move(s), std::move(data));
}

GeneratedViews generate_views(const ViewNet<float>& net, const Tensor<float>& input,
                              std::span<const AngleQuery> queries, std::size_t chunk) {
  require(input.rank() == 3, ErrorCode::kInvalidShape,
          "expected a single [C,S,S] input, got " + shape_string(input.shape()));
  require(!queries.empty(), ErrorCode::kInvalidArgument, "no views requested");
  const std::size_t n = queries.size();
  const Shape& is = input.shape();
  const std::size_t per = input.numel();
  const std::size_t s = is[1];
  GeneratedViews out{Tensor<float>::zeros({n, 3, s, s}), Tensor<float>::zeros({n, 1, s, s})};
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    std::vector<float> batch(m * per);
    for (std::size_t i = 0; i < m; ++i) {
      std::memcpy(batch.data() + i * per, input.data().data(), per * sizeof(float));
    }
    Tensor<float> x({m, is[0], is[1], is[2]}, std::move(batch));
    auto views = net.generate(x, queries.subspan(start, m));
    std::memcpy(out.rgb.data_mut().data() + start * 3 * s * s, views.rgb.data().data(),
                views.rgb.numel() * sizeof(float));
    std::memcpy(out.depth.data_mut().data() + start * s * s, views.depth.data().data(),
                views.depth.numel() * sizeof(float));
  }
  return out;
}

}  // namespace

GeneratedViews NetGenerator::generate(const EvalRequest& request) const {
  return generate_views(net_, *request.input, request.queries, chunk_);
}

GeneratedViews OracleGenerator::generate(const EvalRequest& request) const {
  return {stack(request.reference_rgb), stack(request.reference_depth)};
}

GeneratedViews ConstantGenerator::generate(const EvalRequest& request) const {
  const std::size_t n = request.queries.size();
  const std::size_t s = request.input->dim(1);
  return {Tensor<float>::full({n, 3, s, s}, rgb_), Tensor<float>::full({n, 1, s, s}, depth_)};
}

ClassStats class_stats(const std::string& cls, const std::vector<PairScore>& scores) {
  require(!scores.empty(), ErrorCode::kEmptyHoldout, "no scored images for class '" + cls + "'");
  ClassStats st;
  st.cls = cls;
  st.images = scores.size();
  const double n = static_cast<double>(scores.size());
  for (const auto& s : scores) {
    st.e_rgb += s.e_rgb;
    st.e_depth += s.e_depth;
  }
  st.e_rgb /= n;
  st.e_depth /= n;
  double vr = 0.0;
  double vd = 0.0;
  for (const auto& s : scores) {
    vr += (s.e_rgb - st.e_rgb) * (s.e_rgb - st.e_rgb);
    vd += (s.e_depth - st.e_depth) * (s.e_depth - st.e_depth);
  }
  st.std_rgb = std::sqrt(vr / n);
  st.std_depth = std::sqrt(vd / n);
  st.acc_rgb = image_accuracy(st.e_rgb);
  st.acc_depth = image_accuracy(st.e_depth);
  return st;
}

EvalReport make_report(const std::vector<ClassStats>& classes) {
  require(!classes.empty(), ErrorCode::kEmptyHoldout, "report has no classes");
  EvalReport r;
  r.classes = classes;
  r.average.cls = "average";
  const double n = static_cast<double>(classes.size());
  for (const auto& c : classes) {
    r.average.images += c.images;
    r.average.e_rgb += c.e_rgb / n;
    r.average.std_rgb += c.std_rgb / n;
    r.average.acc_rgb += c.acc_rgb / n;
    r.average.e_depth += c.e_depth / n;
    r.average.std_depth += c.std_depth / n;
    r.average.acc_depth += c.acc_depth / n;
  }
  return r;
}

std::string EvalReport::to_csv() const {
  std::vector<const ClassStats*> cols;
  for (const auto& c : classes) cols.push_back(&c);
  cols.push_back(&average);
  std::string out = "metric";
  for (const auto* c : cols) out += "," + c->cls;
  out += "\n";
  auto row = [&](const char* name, auto get) {
    out += name;
    for (const auto* c : cols) out += "," + format_double(get(*c));
    out += "\n";
  };
  row("images", [](const ClassStats& c) { return static_cast<double>(c.images); });
  row("e_rgb_px", [](const ClassStats& c) { return c.e_rgb; });
  row("std_rgb_px", [](const ClassStats& c) { return c.std_rgb; });
  row("acc_rgb_pct", [](const ClassStats& c) { return c.acc_rgb; });
  row("e_depth_px", [](const ClassStats& c) { return c.e_depth; });
  row("std_depth_px", [](const ClassStats& c) { return c.std_depth; });
  row("acc_depth_pct", [](const ClassStats& c) { return c.acc_depth; });
  return out;
}

std::vector<PairScore> evaluate_model(const ViewGenerator& generator,
                                      const DatasetManifest& manifest, const std::string& cls,
                                      const EvalOptions& options) {
  std::vector<std::uint64_t> seeds = options.instances;
  if (seeds.empty()) seeds = manifest.instances(cls);
  require(!seeds.empty(), ErrorCode::kEmptyHoldout,
          "no evaluation instances for class '" + cls + "'");
  require(options.inputs_per_instance >= 1, ErrorCode::kInvalidArgument,
          "inputs_per_instance must be >= 1");
  std::set<GridPose> excluded;
  if (options.exclude_grid) {
    for (const auto& p : angle_grid(*options.exclude_grid)) excluded.insert(p);
  }

  std::vector<PairScore> scores;
  for (std::uint64_t seed : seeds) {
    const auto records = manifest.records_for(cls, seed);
    require(!records.empty(), ErrorCode::kEmptyHoldout,
            "instance " + std::to_string(seed) + " of class '" + cls + "' is not in the manifest");
    std::vector<RenderedView> views(records.size());
    parallel_for(records.size(), options.threads,
                 [&](std::size_t i) { views[i] = load_view(manifest, records[i]); });

    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!excluded.count(GridPose{records[i].pitch, records[i].yaw})) targets.push_back(i);
    }
    require(!targets.empty(), ErrorCode::kEmptyHoldout,
            "every pose of instance " + std::to_string(seed) + " is excluded");
    std::vector<Tensor<float>> ref_rgb;
    std::vector<Tensor<float>> ref_depth;
    for (std::size_t t : targets) {
      ref_rgb.push_back(image_to_tensor(views[t].rgb));
      ref_depth.push_back(image_to_tensor(views[t].depth));
    }

    // Distinct input poses, drawn by a partial Fisher-Yates shuffle.
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(options.seed, seed));
    const std::size_t inputs = std::min(options.inputs_per_instance, order.size());
    for (std::size_t i = 0; i < inputs; ++i) {
      std::swap(order[i], order[i + rng.below(order.size() - i)]);
    }

    std::vector<std::vector<PairScore>> per_input(inputs);
    parallel_for(inputs, options.threads, [&](std::size_t k) {
      const auto& in = records[order[k]];
      const Tensor<float> x = view_input(views[order[k]].rgb, views[order[k]].mask, manifest.size);
      std::vector<AngleQuery> queries;
      for (std::size_t t : targets) {
        queries.push_back({records[t].yaw - in.yaw, records[t].pitch - in.pitch});
      }
      const GeneratedViews g = generator.generate({&x, queries, ref_rgb, ref_depth});
      require(g.rgb.rank() == 4 && g.rgb.dim(0) == targets.size() &&
                  g.depth.rank() == 4 && g.depth.dim(0) == targets.size(),
              ErrorCode::kInvalidShape, "generator returned the wrong number of views");
      const std::size_t nr = ref_rgb[0].numel();
      const std::size_t nd = ref_depth[0].numel();
      for (std::size_t j = 0; j < targets.size(); ++j) {
        PairScore s;
        s.instance = seed;
        s.input_pose = {in.pitch, in.yaw};
        s.target_pose = {records[targets[j]].pitch, records[targets[j]].yaw};
        s.e_rgb = image_error(g.rgb.data().subspan(j * nr, nr), ref_rgb[j].data());
        s.e_depth = image_error(g.depth.data().subspan(j * nd, nd), ref_depth[j].data());
        per_input[k].push_back(s);
      }
    });
    for (auto& v : per_input) scores.insert(scores.end(), v.begin(), v.end());
  }
  return scores;
}

std::size_t RotationCurve::total() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

std::pair<double, double> RotationCurve::mean_accuracy(double yaw_lo, double yaw_hi) const {
  double rgb = 0.0;
  double depth = 0.0;
  std::size_t n = 0;
  for (const auto& b : bins) {
    const double a = std::abs(b.delta_yaw);
    if (a < yaw_lo || a > yaw_hi) continue;
    rgb += b.acc_rgb * static_cast<double>(b.count);
    depth += b.acc_depth * static_cast<double>(b.count);
    n += b.count;
  }
  require(n > 0, ErrorCode::kEmptyHoldout,
          "no pairs with |delta yaw| in [" + format_double(yaw_lo) + ", " + format_double(yaw_hi) + "]");
  return {rgb / static_cast<double>(n), depth / static_cast<double>(n)};
}

std::string RotationCurve::to_csv() const {
  std::string out = "delta_pitch,delta_yaw,count,acc_rgb,acc_depth\n";
  for (const auto& b : bins) {
    out += format_double(b.delta_pitch) + "," + format_double(b.delta_yaw) + "," +
           std::to_string(b.count) + "," + format_double(b.acc_rgb) + "," +
           format_double(b.acc_depth) + "\n";
  }
  return out;
}

Image RotationCurve::heatmap(int cell) const {
  std::vector<double> pitches;
  std::vector<double> yaws;
  for (const auto& b : bins) {
    pitches.push_back(b.delta_pitch);
    yaws.push_back(b.delta_yaw);
  }
  std::sort(pitches.begin(), pitches.end());
  pitches.erase(std::unique(pitches.begin(), pitches.end()), pitches.end());
  std::sort(yaws.begin(), yaws.end());
  yaws.erase(std::unique(yaws.begin(), yaws.end()), yaws.end());
  const int cols = std::max<int>(1, static_cast<int>(yaws.size()));
  const int rows = std::max<int>(1, static_cast<int>(pitches.size()));
  const int gap = cell;
  Image img = Image::blank(3, rows * cell, 2 * cols * cell + gap, 0.0f);
  double lo_r = 100, lo_d = 100;
  for (const auto& b : bins) {
    lo_r = std::min(lo_r, b.acc_rgb);
    lo_d = std::min(lo_d, b.acc_depth);
  }
  for (const auto& b : bins) {
    const int r = static_cast<int>(std::lower_bound(pitches.begin(), pitches.end(), b.delta_pitch) - pitches.begin());
    const int c = static_cast<int>(std::lower_bound(yaws.begin(), yaws.end(), b.delta_yaw) - yaws.begin());
    const double vr = lo_r < 100 ? (b.acc_rgb - lo_r) / (100 - lo_r) : 1.0;
    const double vd = lo_d < 100 ? (b.acc_depth - lo_d) / (100 - lo_d) : 1.0;
    for (int y = 0; y < cell; ++y) {
      for (int x = 0; x < cell; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          img.at(ch, r * cell + y, c * cell + x) = static_cast<float>(vr);
          img.at(ch, r * cell + y, (cols + c) * cell + gap + x) = static_cast<float>(vd);
        }
      }
    }
  }
  return img;
}

RotationCurve rotation_curve(const std::vector<PairScore>& scores) {
  struct Acc {
    std::size_t count = 0;
    double rgb = 0.0;
    double depth = 0.0;
  };
  std::map<std::pair<double, double>, Acc> bins;
  for (const auto& s : scores) {
    const double dp = s.target_pose.pitch - s.input_pose.pitch;
    const double dy = signed_degrees(s.target_pose.yaw - s.input_pose.yaw);
    auto& a = bins[{dp, dy}];
    ++a.count;
    a.rgb += image_accuracy(s.e_rgb);
    a.depth += image_accuracy(s.e_depth);
  }
  RotationCurve curve;
  for (const auto& [key, a] : bins) {
    const double n = static_cast<double>(a.count);
    curve.bins.push_back({key.first, key.second, a.count, a.rgb / n, a.depth / n});
  }
  return curve;
}

ContinuityResult continuity_score(const ViewNet<float>& net, const Tensor<float>& input,
                                  double step, double delta_pitch) {
  require(step > 0 && step <= 360, ErrorCode::kInvalidArgument, "sweep step must lie in (0, 360]");
  const auto n = static_cast<std::size_t>(std::lround(360.0 / step));
  std::vector<AngleQuery> queries;
  for (std::size_t k = 0; k <= n; ++k) queries.push_back({static_cast<double>(k) * step, delta_pitch});
  ContinuityResult r;
  r.frames = generate_views(net, input, queries, 64);
  const std::size_t nr = r.frames.rgb.numel() / queries.size();
  const std::size_t nd = r.frames.depth.numel() / queries.size();
  auto rgb = r.frames.rgb.data();
  auto depth = r.frames.depth.data();
  for (std::size_t k = 0; k + 1 < queries.size(); ++k) {
    r.rgb_steps.push_back(image_error(rgb.subspan(k * nr, nr), rgb.subspan((k + 1) * nr, nr)));
    r.depth_steps.push_back(image_error(depth.subspan(k * nd, nd), depth.subspan((k + 1) * nd, nd)));
  }
  for (std::size_t k = 0; k < r.rgb_steps.size(); ++k) {
    r.max_rgb = std::max(r.max_rgb, r.rgb_steps[k]);
    r.max_depth = std::max(r.max_depth, r.depth_steps[k]);
    r.mean_rgb += r.rgb_steps[k] / static_cast<double>(r.rgb_steps.size());
    r.mean_depth += r.depth_steps[k] / static_cast<double>(r.depth_steps.size());
  }
  r.closed = std::memcmp(rgb.data(), rgb.data() + n * nr, nr * sizeof(float)) == 0 &&
             std::memcmp(depth.data(), depth.data() + n * nd, nd * sizeof(float)) == 0;
  return r;
}

GeneratedViews cross_class_generate(const Tensor<float>& input, const std::string& label,
                                    const ModelRegistry& registry,
                                    const std::optional<std::string>& override_class,
                                    std::span<const AngleQuery> queries) {
  const ViewNet<float>& net = route(label, registry, override_class);
  return generate_views(net, input, queries, 64);
}

void write_sequence(const GeneratedViews& views, const fs::path& dir, std::size_t first_index) {
  const std::size_t n = views.rgb.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%03zu", first_index + i);
    write_png(dir / ("rgb_" + std::string(name) + ".png"), batch_image(views.rgb, i), 8);
    write_png(dir / ("depth_" + std::string(name) + ".png"), batch_image(views.depth, i), 16);
  }
}

}  // namespace viewgen
