#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "evaluator.hpp"
#include "rng.hpp"
#include "trainer.hpp"

using namespace viewgen;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

const DatasetManifest& small_manifest() {
  static const DatasetManifest m = [] {
    fs::path dir = fs::temp_directory_path() / "viewgen_test_evaluator" / "train_grid";
    fs::remove_all(dir);
    DatasetOptions opt;
    opt.classes = {"can", "mug"};
    opt.instances = 2;
    opt.size = 16;
    return generate_dataset(opt, dir);
  }();
  return m;
}

const DatasetManifest& eval_grid_manifest() {
  static const DatasetManifest m = [] {
    fs::path dir = fs::temp_directory_path() / "viewgen_test_evaluator" / "eval_grid";
    fs::remove_all(dir);
    DatasetOptions opt;
    opt.classes = {"mug"};
    opt.instances = 1;
    opt.size = 16;
    opt.grid = GridSpec::evaluation();
    return generate_dataset(opt, dir);
  }();
  return m;
}

// Independent per-channel, per-row, per-column oracle.
double oracle_error(const Image& a, const Image& b) {
  double total = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x)
        total += std::abs(255.0 * a.at(c, y, x) - 255.0 * b.at(c, y, x));
  return total / (static_cast<double>(a.channels) * a.height * a.width);
}

}  // namespace

TEST_CASE("image_error fixed points") {
  std::vector<float> a(300, 0.4f);
  CHECK(image_error(a, a) == 0.0);
  std::vector<float> b(300);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = a[i] + ((i % 2) ? 10.0f : -10.0f) / 255.0f;
  CHECK(image_error(a, b) == doctest::Approx(10.0).epsilon(1e-5));
  CHECK(code_of([&] { image_error(a, std::span<const float>(b).first(10)); }) ==
        ErrorCode::kInvalidShape);
}

TEST_CASE("image_error agrees with a triple-loop oracle") {
  Rng rng(42);
  for (int k = 0; k < 100; ++k) {
    const int c = 1 + static_cast<int>(rng.below(3));
    const int h = 1 + static_cast<int>(rng.below(20));
    const int w = 1 + static_cast<int>(rng.below(20));
    Image a = Image::blank(c, h, w), b = Image::blank(c, h, w);
    for (auto& v : a.data) v = static_cast<float>(rng.uniform01());
    for (auto& v : b.data) v = static_cast<float>(rng.uniform01());
    const double got = image_error(image_to_tensor(a), image_to_tensor(b));
    CHECK(got == oracle_error(a, b));
  }
}

TEST_CASE("accuracy fixed points and range") {
  CHECK(image_accuracy(0) == 100.0);
  CHECK(image_accuracy(255) == 0.0);
  CHECK(image_accuracy(25.5) == doctest::Approx(90.0));
  CHECK(code_of([] { image_accuracy(-0.5); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { image_accuracy(255.5); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([] { image_accuracy(std::nan("")); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("class statistics use the population deviation") {
  std::vector<PairScore> s(2);
  s[0].e_rgb = 1;
  s[1].e_rgb = 3;
  s[0].e_depth = 5;
  s[1].e_depth = 5;
  const auto st = class_stats("can", s);
  CHECK(st.images == 2);
  CHECK(st.e_rgb == 2.0);
  CHECK(st.std_rgb == 1.0);
  CHECK(st.std_depth == 0.0);
  CHECK(st.acc_rgb == doctest::Approx(100.0 * (1 - 2.0 / 255)));
  CHECK(code_of([] { class_stats("can", {}); }) == ErrorCode::kEmptyHoldout);

  ClassStats other;
  other.cls = "mug";
  other.images = 6;
  other.e_rgb = 4;
  other.acc_rgb = 50;
  const auto report = make_report({st, other});
  CHECK(report.average.e_rgb == doctest::Approx(3.0));
  CHECK(report.average.acc_rgb == doctest::Approx((st.acc_rgb + 50) / 2));
  CHECK(report.average.images == 8);
  const std::string csv = report.to_csv();
  CHECK(csv.rfind("metric,can,mug,average\nimages,2,6,8\ne_rgb_px,2,4,3\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
}

TEST_CASE("the oracle generator scores perfectly") {
  const auto& m = small_manifest();
  OracleGenerator oracle;
  EvalOptions opt;
  opt.inputs_per_instance = 3;
  const auto scores = evaluate_model(oracle, m, "mug", opt);
  CHECK(scores.size() == 2 * 3 * 120);
  for (const auto& s : scores) {
    CHECK(s.e_rgb == 0.0);
    CHECK(s.e_depth == 0.0);
  }
  const auto st = class_stats("mug", scores);
  CHECK(st.acc_rgb == 100.0);
  CHECK(st.acc_depth == 100.0);

  // Input poses are distinct per instance.
  std::set<std::pair<std::uint64_t, GridPose>> inputs;
  for (const auto& s : scores) inputs.insert({s.instance, s.input_pose});
  CHECK(inputs.size() == 6);
}

TEST_CASE("a black depth guess costs the mean reference depth") {
  const auto& m = small_manifest();
  ConstantGenerator black(0.0f, 0.0f);
  EvalOptions opt;
  opt.instances = {2};
  opt.inputs_per_instance = 1;
  const auto scores = evaluate_model(black, m, "can", opt);
  REQUIRE(scores.size() == 120);
  for (const auto& s : scores) {
    const auto records = m.records_for("can", 2);
    const auto it = std::find_if(records.begin(), records.end(), [&](const ManifestRecord& r) {
      return r.pitch == s.target_pose.pitch && r.yaw == s.target_pose.yaw;
    });
    REQUIRE(it != records.end());
    const auto v = load_view(m, *it);
    double mean = 0;
    for (float d : v.depth.data) mean += 255.0 * d;
    mean /= static_cast<double>(v.depth.data.size());
    CHECK(s.e_depth == doctest::Approx(mean).epsilon(1e-9));
    CHECK(s.e_rgb == doctest::Approx(oracle_error(Image::blank(3, 16, 16), v.rgb)).epsilon(1e-9));
  }
}

TEST_CASE("held-out pose filtering and missing data") {
  const auto& m = eval_grid_manifest();
  OracleGenerator oracle;
  EvalOptions opt;
  opt.inputs_per_instance = 1;
  CHECK(evaluate_model(oracle, m, "mug", opt).size() == 660);
  opt.exclude_grid = GridSpec::training();
  const auto held = evaluate_model(oracle, m, "mug", opt);
  // Pitches 0 and 30 with yaw multiples of 12 are shared with the training grid.
  CHECK(held.size() == 600);
  const auto train_poses = angle_grid(GridSpec::training());
  const std::set<GridPose> train_set(train_poses.begin(), train_poses.end());
  for (const auto& s : held) CHECK(train_set.count(s.target_pose) == 0);

  opt.exclude_grid = GridSpec::evaluation();
  CHECK(code_of([&] { evaluate_model(oracle, m, "mug", opt); }) == ErrorCode::kEmptyHoldout);
  opt.exclude_grid.reset();
  CHECK(code_of([&] { evaluate_model(oracle, m, "can", opt); }) == ErrorCode::kEmptyHoldout);
  opt.instances = {9};
  CHECK(code_of([&] { evaluate_model(oracle, m, "mug", opt); }) == ErrorCode::kEmptyHoldout);
}

TEST_CASE("rotation curve partitions the pairs") {
  const auto& m = small_manifest();
  ConstantGenerator gray(0.5f, 0.5f);
  EvalOptions opt;
  opt.inputs_per_instance = 2;
  const auto scores = evaluate_model(gray, m, "mug", opt);
  const auto curve = rotation_curve(scores);
  CHECK(curve.total() == scores.size());
  std::set<std::pair<double, double>> keys;
  bool negative = false, positive = false;
  for (const auto& b : curve.bins) {
    CHECK(b.delta_yaw > -180.0);
    CHECK(b.delta_yaw <= 180.0);
    negative |= b.delta_yaw < 0;
    positive |= b.delta_yaw > 0;
    keys.insert({b.delta_pitch, b.delta_yaw});
  }
  CHECK(negative);
  CHECK(positive);
  CHECK(keys.size() == curve.bins.size());
  CHECK(std::is_sorted(keys.begin(), keys.end()));

  double all = 0;
  for (const auto& s : scores) all += image_accuracy(s.e_rgb);
  CHECK(curve.mean_accuracy(0, 180).first == doctest::Approx(all / scores.size()));
  CHECK(code_of([&] { curve.mean_accuracy(181, 200); }) == ErrorCode::kEmptyHoldout);

  const Image heat = curve.heatmap(4);
  CHECK(heat.channels == 3);
  CHECK(heat.width % 4 == 0);
  CHECK(curve.to_csv().rfind("delta_pitch,delta_yaw,", 0) == 0);
}

TEST_CASE("net generator output does not depend on chunking") {
  const auto net = ViewNet<float>::build(ViewNetConfig::micro(), 3);
  const auto& m = small_manifest();
  EvalOptions opt;
  opt.instances = {1};
  opt.inputs_per_instance = 1;
  const auto a = evaluate_model(NetGenerator(net, 64), m, "can", opt);
  const auto b = evaluate_model(NetGenerator(net, 7), m, "can", opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].e_rgb == doctest::Approx(b[i].e_rgb).epsilon(1e-6));
    CHECK(a[i].e_depth == doctest::Approx(b[i].e_depth).epsilon(1e-6));
  }
}

TEST_CASE("continuity sweep closes on itself") {
  const auto net = ViewNet<float>::build(ViewNetConfig::micro(), 4);
  const auto& m = small_manifest();
  const auto v = load_view(m, m.records_for("mug", 1)[5]);
  const auto input = view_input(v.rgb, v.mask, 16);
  const auto r = continuity_score(net, input, 6.0);
  CHECK(r.rgb_steps.size() == 60);
  CHECK(r.depth_steps.size() == 60);
  CHECK(r.frames.rgb.dim(0) == 61);
  CHECK(r.closed);
  CHECK(r.max_rgb >= r.mean_rgb);
  CHECK(r.mean_rgb >= 0.0);
  CHECK(code_of([&] { continuity_score(net, input, 0.0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("cross-class generation routes through the registry") {
  ModelRegistry reg;
  reg.add("can", ViewNet<float>::build(ViewNetConfig::micro(), 1));
  reg.add("mug", ViewNet<float>::build(ViewNetConfig::micro(), 2));
  const auto& m = small_manifest();
  const auto v = load_view(m, m.records_for("can", 1)[0]);
  const auto input = view_input(v.rgb, v.mask, 16);
  const std::vector<AngleQuery> q{{0, 0}, {30, 10}, {-90, 0}};

  const auto same = cross_class_generate(input, "can", reg, std::string("can"), q);
  const auto plain = cross_class_generate(input, "can", reg, std::nullopt, q);
  CHECK(std::equal(same.rgb.data().begin(), same.rgb.data().end(), plain.rgb.data().begin()));
  const auto conv = cross_class_generate(input, "can", reg, std::string("mug"), q);
  const auto direct = cross_class_generate(input, "mug", reg, std::nullopt, q);
  CHECK(std::equal(conv.rgb.data().begin(), conv.rgb.data().end(), direct.rgb.data().begin()));
  CHECK_FALSE(std::equal(conv.rgb.data().begin(), conv.rgb.data().end(), plain.rgb.data().begin()));
  CHECK(code_of([&] { cross_class_generate(input, "can", reg, std::string("table"), q); }) ==
        ErrorCode::kNoModel);
  CHECK(code_of([&] { cross_class_generate(input, "box", reg, std::nullopt, q); }) ==
        ErrorCode::kNoModel);

  const fs::path dir = fs::temp_directory_path() / "viewgen_test_evaluator" / "seq";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_sequence(conv, dir);
  CHECK(fs::exists(dir / "rgb_000.png"));
  CHECK(fs::exists(dir / "depth_002.png"));
  CHECK(read_png(dir / "rgb_001.png").width == 16);
}
