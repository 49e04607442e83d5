// Acceptance run: one PASS/FAIL line per criterion. Criteria can be selected
// on the command line (e.g. `acceptance 1 3 9`); default is all of them.
//
// Environment:
//   VIEWGEN_ACCEPT_DIR    work directory (datasets, runs); default under the build tree
//   VIEWGEN_ACCEPT_REUSE  when set, reuse datasets and trained desk models found in the work directory

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "evaluator.hpp"
#include "extractor.hpp"
#include "gradient_suite.hpp"
#include "key_values.hpp"
#include "renderer.hpp"
#include "rng.hpp"
#include "trainer.hpp"
#include "viewnet.hpp"

namespace fs = std::filesystem;
using namespace viewgen;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void note(const std::string& msg) {
  std::fprintf(stderr, "  .. %s\n", msg.c_str());
  std::fflush(stderr);
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path -> contents for every regular file under `root`.
std::map<std::string, std::vector<char>> snapshot(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_bytes(e.path());
  }
  return out;
}

fs::path work_dir() {
  if (const char* env = std::getenv("VIEWGEN_ACCEPT_DIR")) return env;
  return VIEWGEN_ACCEPT_DEFAULT_DIR;
}

const std::vector<std::string> kClasses{"can", "mug"};
constexpr int kInstances = 20;
constexpr double kHoldoutFraction = 0.2;

// ---------------------------------------------------------------- 1

Outcome criterion_metric_fixed_points() {
  struct Row {
    double e, expected, printed, tol;
  };
  const Row rows[] = {{17.38, 93.18, 93.19, 0.05},
                      {11.52, 95.48, 95.48, 0.05},
                      {9.62, 96.23, 96.2, 0.05},
                      {4.33, 98.30, 98.16, 0.2}};
  Outcome o{true, ""};
  for (const auto& r : rows) {
    const double acc = image_accuracy(r.e);
    const bool ok = std::abs(acc - r.expected) < 0.005 && std::abs(acc - r.printed) <= r.tol;
    o.pass = o.pass && ok;
    o.detail += fmt(r.e, 2) + "->" + fmt(acc, 3) + " ";
  }
  return o;
}

// ---------------------------------------------------------------- 2

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = gradient_suite<double>("micro", 5, 1e-5, true);
  const double worst = max_error(entries);
  std::set<std::string> names;
  for (const auto& e : entries) names.insert(e.name);
  const std::set<std::string> expected{"conv2d",  "maxpool2x2",          "fully_connected",
                                       "relu",    "batchnorm",           "bilinear_upsample2x",
                                       "concat_channels", "mse_loss", "viewnet"};
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && names == expected && entries.size() == 5 * expected.size() && secs < 300,
          "max_rel_err=" + sci(worst) + " checks=" + std::to_string(entries.size()) +
              " time=" + fmt(secs, 1) + "s"};
}

// ---------------------------------------------------------------- 3

double triple_loop_error(const std::vector<float>& g, const std::vector<float>& r, int c, int h, int w) {
  double sum = 0.0;
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = (static_cast<std::size_t>(k) * h + y) * w + x;
        sum += std::abs(255.0 * g[i] - 255.0 * r[i]);
      }
    }
  }
  return sum / (static_cast<double>(c) * h * w);
}

Outcome criterion_oracle_equivalence() {
  Rng rng(2024);
  int equal = 0;
  for (int t = 0; t < 100; ++t) {
    const int c = rng.below(2) ? 3 : 1;
    const int h = 1 + static_cast<int>(rng.below(96));
    const int w = 1 + static_cast<int>(rng.below(96));
    const std::size_t n = static_cast<std::size_t>(c) * h * w;
    std::vector<float> g(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = static_cast<float>(rng.uniform01());
      r[i] = static_cast<float>(rng.uniform01());
    }
    const Tensor<float> tg({static_cast<std::size_t>(c), static_cast<std::size_t>(h),
                            static_cast<std::size_t>(w)},
                           g);
    const Tensor<float> tr({static_cast<std::size_t>(c), static_cast<std::size_t>(h),
                            static_cast<std::size_t>(w)},
                           r);
    equal += image_error(tg, tr) == triple_loop_error(g, r, c, h, w);
  }
  return {equal == 100, std::to_string(equal) + "/100 pairs bitwise equal"};
}

// ---------------------------------------------------------------- 4, 5, 6 shared state

struct DeskClass {
  fs::path model_path;
  double train_seconds = 0.0;
  bool reused = false;
  std::optional<ViewNet<float>> net;
  std::vector<PairScore> seen_instances;    // held-out poses of training instances
  std::vector<PairScore> unseen_instances;  // held-out instances, every pose
};

struct DeskState {
  bool ready = false;
  std::string failure;
  std::map<std::string, DeskClass> classes;
};

fs::path training_data() { return work_dir() / "data_train"; }
fs::path evaluation_data() { return work_dir() / "data_eval"; }

// Renders afresh unless reuse was requested and a matching dataset exists.
void ensure_dataset(const fs::path& root, const GridSpec& grid) {
  static std::set<fs::path> rendered;
  if (rendered.count(root)) return;
  rendered.insert(root);
  if (std::getenv("VIEWGEN_ACCEPT_REUSE") && fs::exists(root / "manifest.txt")) {
    const auto m = DatasetManifest::load(root);
    if (m.grid == grid && m.size == 64 && m.classes == kClasses &&
        m.instances("can").size() == kInstances && m.instances("mug").size() == kInstances) {
      return;
    }
  }
  DatasetOptions opt;
  opt.classes = kClasses;
  opt.instances = kInstances;
  opt.grid = grid;
  opt.size = 64;
  opt.overwrite = true;
  const auto t0 = std::chrono::steady_clock::now();
  generate_dataset(opt, root);
  note("rendered " + root.filename().string() + " in " + fmt(seconds_since(t0), 1) + " s");
}

DeskState& desk() {
  static DeskState state = [] {
    DeskState s;
    try {
      fs::create_directories(work_dir());
      ensure_dataset(training_data(), GridSpec::training());
      ensure_dataset(evaluation_data(), GridSpec::evaluation());
      const bool reuse = std::getenv("VIEWGEN_ACCEPT_REUSE") != nullptr;
      const auto eval_manifest = DatasetManifest::load(evaluation_data());

      for (const auto& cls : kClasses) {
        DeskClass& dc = s.classes[cls];
        const fs::path run = work_dir() / ("desk_" + cls);
        dc.model_path = run / "model.vfck";
        const fs::path timing = run / "train_seconds.txt";
        if (reuse && fs::exists(dc.model_path) && fs::exists(timing)) {
          std::ifstream(timing) >> dc.train_seconds;
          dc.reused = true;
          note("reusing " + dc.model_path.string());
        } else {
          note("training desk model for " + cls + " (5000 iterations)");
          const std::string cmd = std::string(VIEWGEN_CLI) + " train --quiet --force --threads 1" +
                                  " --class " + cls + " --model desk --iters 5000 --batch 16" +
                                  " --lr 0.0005 --clip-min -1 --clip-max 1 --seed 1" +
                                  " --holdout " + fmt(kHoldoutFraction, 2) + " --checkpoint-every 0" +
                                  " --data " + training_data().string() + " --out " + run.string() +
                                  " > " + (work_dir() / ("train_" + cls + ".log")).string();
          const auto t0 = std::chrono::steady_clock::now();
          const int rc = shell(cmd);
          dc.train_seconds = seconds_since(t0);
          if (rc != 0) throw std::runtime_error("train " + cls + " exited with " + std::to_string(rc));
          std::ofstream(timing) << dc.train_seconds << "\n";
          note(cls + " trained in " + fmt(dc.train_seconds / 60.0, 1) + " min");
        }
        dc.net = load_checkpoint<float>(dc.model_path);

        const auto [train_seeds, holdout] =
            split_instances(eval_manifest.instances(cls), kHoldoutFraction);
        const NetGenerator gen(*dc.net);
        EvalOptions seen;
        seen.instances = train_seeds;
        seen.exclude_grid = GridSpec::training();
        const auto t1 = std::chrono::steady_clock::now();
        dc.seen_instances = evaluate_model(gen, eval_manifest, cls, seen);
        EvalOptions unseen;
        unseen.instances = holdout;
        dc.unseen_instances = evaluate_model(gen, eval_manifest, cls, unseen);
        note(cls + " evaluated " + std::to_string(dc.seen_instances.size() + dc.unseen_instances.size()) +
             " pairs in " + fmt(seconds_since(t1), 1) + " s");
      }
      s.ready = true;
    } catch (const std::exception& e) {
      s.failure = e.what();
    }
    return s;
  }();
  return state;
}

// ---------------------------------------------------------------- 4

Outcome criterion_desk_training() {
  auto& s = desk();
  if (!s.ready) return {false, "setup failed: " + s.failure};
  Outcome o{true, ""};
  for (const auto& cls : kClasses) {
    const auto& dc = s.classes.at(cls);
    const auto seen = class_stats(cls, dc.seen_instances);
    const auto unseen = class_stats(cls, dc.unseen_instances);
    const bool time_ok = dc.train_seconds <= 3600.0;
    const bool ok = seen.acc_depth >= 90.0 && seen.acc_rgb >= 85.0 && unseen.acc_depth >= 85.0 &&
                    unseen.acc_rgb >= 80.0 && time_ok;
    o.pass = o.pass && ok;
    o.detail += cls + "[poses depth=" + fmt(seen.acc_depth, 2) + " rgb=" + fmt(seen.acc_rgb, 2) +
                "; instances depth=" + fmt(unseen.acc_depth, 2) + " rgb=" + fmt(unseen.acc_rgb, 2) +
                "; train=" + fmt(dc.train_seconds / 60.0, 1) + "min" + (dc.reused ? " reused" : "") + "] ";
  }
  return o;
}

// ---------------------------------------------------------------- 5

Outcome criterion_rotation_trend() {
  auto& s = desk();
  if (!s.ready) return {false, "setup failed: " + s.failure};
  Outcome o{true, ""};
  for (const auto& cls : kClasses) {
    const auto& dc = s.classes.at(cls);
    std::vector<PairScore> all = dc.seen_instances;
    all.insert(all.end(), dc.unseen_instances.begin(), dc.unseen_instances.end());
    const auto curve = rotation_curve(all);
    const auto [near_rgb, near_depth] = curve.mean_accuracy(0.0, 24.0);
    const auto [far_rgb, far_depth] = curve.mean_accuracy(156.0, 180.0);
    const bool ok = near_rgb > far_rgb && near_depth > far_depth;
    // The can is close to rotationally symmetric about its axis, so its
    // trend is reported but only the mug decides the outcome.
    if (cls == "mug") o.pass = ok;
    o.detail += cls + (cls == "mug" ? "" : "(info)") + "[rgb " + fmt(near_rgb, 2) + ">" + fmt(far_rgb, 2) +
                " depth " + fmt(near_depth, 2) + ">" + fmt(far_depth, 2) + (ok ? "" : " not held") + "] ";
  }
  return o;
}

// ---------------------------------------------------------------- 6

Outcome criterion_continuity() {
  auto& s = desk();
  if (!s.ready) return {false, "setup failed: " + s.failure};
  const auto manifest = DatasetManifest::load(training_data());
  const auto rec = manifest.records_for("can", manifest.instances("can").front()).front();
  const auto view = load_view(manifest, rec);
  const auto r = continuity_score(*s.classes.at("can").net, view_input(view.rgb, view.mask, manifest.size), 6.0);
  const bool ok = r.rgb_steps.size() == 60 && r.max_rgb <= 3.0 * r.mean_rgb &&
                  r.max_depth <= 3.0 * r.mean_depth && r.closed;
  return {ok, "frames=" + std::to_string(r.rgb_steps.size() + 1) + " rgb max/mean=" +
                  fmt(r.max_rgb / r.mean_rgb, 3) + " depth max/mean=" + fmt(r.max_depth / r.mean_depth, 3) +
                  " closed=" + (r.closed ? "yes" : "no")};
}

// ---------------------------------------------------------------- 7

double mean_abs(const Tensor<float>& a, const Tensor<float>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
  return sum / static_cast<double>(a.numel());
}

// Renders the instance as part of a wider scene: `scene_size` pixels with the
// field of view widened so the object keeps the pixel scale (and pixel grid)
// of the direct S x S render.
RenderedView wide_scene(const ShapeInstance& inst, const CameraPose& cam, int size, int scene_size) {
  const double pi = std::acos(-1.0);
  CameraPose wide = cam;
  wide.fov = 2.0 * std::atan(std::tan(cam.fov * pi / 360.0) * scene_size / size) * 180.0 / pi;
  return rasterize(inst, wide, scene_size);
}

Outcome criterion_pipeline() {
  constexpr int kSize = 64;
  const std::vector<int> scene_sizes{96, 128, 200};
  const std::vector<GridPose> poses{{0, 0}, {10, 48}, {20, 132}, {30, 276}};
  double worst = 0.0;
  double worst_rescaled = 0.0;  // same camera at a higher resolution; reported only
  std::size_t cases = 0;
  bool segmented = true;
  auto compose = [&](const RenderedView& scene) -> std::optional<Tensor<float>> {
    const auto found = segment_background_threshold(scene.rgb);
    if (found.size() != 1) return std::nullopt;
    return normalize_crop(crop(scene.rgb, found.front().bbox), found.front().mask, kSize);
  };
  for (const auto& cls : kClasses) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const ShapeInstance inst = make_instance(cls, seed);
      for (const auto& pose : poses) {
        CameraPose cam;
        cam.pitch = pose.pitch;
        cam.yaw = pose.yaw;
        const auto direct = make_training_view(rasterize(inst, cam, kSize), seed, pose, kSize).input;
        for (int scene_size : scene_sizes) {
          const auto composed = compose(wide_scene(inst, cam, kSize, scene_size));
          const auto rescaled = compose(rasterize(inst, cam, scene_size));
          if (!composed || !rescaled) {
            segmented = false;
            continue;
          }
          worst = std::max(worst, mean_abs(*composed, direct));
          worst_rescaled = std::max(worst_rescaled, mean_abs(*rescaled, direct));
          ++cases;
        }
      }
    }
  }
  const bool compose_ok = segmented && worst <= 2.0 / 255.0;

  // Sampler: 10,000 batches over the training set of one class.
  ensure_dataset(training_data(), GridSpec::training());
  const auto manifest = DatasetManifest::load(training_data());
  const auto set = TrainingSet::load(manifest, "mug", kHoldoutFraction);
  PairSampler sampler(set, 99);
  std::size_t crossings = 0, pairs = 0;
  for (int b = 0; b < 10000; ++b) {
    const PairBatch batch = sampler.next(16);
    for (std::size_t i = 0; i < batch.input_instances.size(); ++i) {
      crossings += batch.input_instances[i] != batch.target_instances[i];
      ++pairs;
    }
  }
  return {compose_ok && crossings == 0 && pairs == 160000,
          "compose max_mae=" + fmt(worst * 255.0, 3) + "/255 over " + std::to_string(cases) +
              " scenes (info: resolution-changed scenes " + fmt(worst_rescaled * 255.0, 2) + "/255); sampler crossings=" + std::to_string(crossings) + "/" + std::to_string(pairs)};
}

// ---------------------------------------------------------------- 8

Outcome criterion_determinism() {
  const fs::path root = work_dir() / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = VIEWGEN_CLI;
  const std::string render = cli + " render-dataset --quiet --threads 1 --classes can,mug --instances 20 --size 64" +
                             " --grid training --out ";
  const fs::path d1 = root / "data_a", d2 = root / "data_b";
  if (shell(render + d1.string() + " >/dev/null") != 0 || shell(render + d2.string() + " >/dev/null") != 0) {
    return {false, "render-dataset failed"};
  }
  const auto s1 = snapshot(d1), s2 = snapshot(d2);
  const bool data_same = s1 == s2 && s1.size() == 2 * 20 * 120 * 3 + 2;

  const std::string train = cli + " train --quiet --seed 1 --threads 1 --class can --model desk --iters 40" +
                            " --batch 16 --checkpoint-every 20 --data " + d1.string() + " --out ";
  const fs::path r1 = root / "run_a", r2 = root / "run_b";
  if (shell(train + r1.string() + " >/dev/null") != 0 || shell(train + r2.string() + " >/dev/null") != 0) {
    return {false, "train failed"};
  }
  bool ckpt_same = true;
  int compared = 0;
  for (const char* name : {"checkpoint_20.vfck", "checkpoint_40.vfck", "model.vfck", "loss.csv"}) {
    const auto a = read_bytes(r1 / name), b = read_bytes(r2 / name);
    ckpt_same = ckpt_same && !a.empty() && a == b;
    ++compared;
  }
  return {data_same && ckpt_same, "dataset files identical=" + std::string(data_same ? "yes" : "no") + " (" +
                                      std::to_string(s1.size()) + " files); run artifacts identical=" +
                                      (ckpt_same ? "yes" : "no") + " (" + std::to_string(compared) + " files)"};
}

// ---------------------------------------------------------------- 9

template <typename F>
ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

Outcome criterion_serialization() {
  bool params_ok = true;
  for (const char* preset : {"micro", "desk"}) {
    ViewNet<float> net = ViewNet<float>::build(ViewNetConfig::preset(preset), 5);
    // Perturb the running statistics so they are not at their initial values.
    Rng rng(11);
    for (auto& [name, st] : net.norm_state()) {
      for (auto& v : st.running_mean.data_mut()) v = static_cast<float>(rng.uniform(-1, 1));
      for (auto& v : st.running_var.data_mut()) v = static_cast<float>(rng.uniform(0.1, 2));
    }
    const fs::path path = work_dir() / (std::string("roundtrip_") + preset + ".vfck");
    save_checkpoint(net, path);
    const ViewNet<float> back = load_checkpoint<float>(path);
    params_ok = params_ok && back.config() == net.config() &&
                back.parameters().size() == net.parameters().size() &&
                back.norm_state().size() == net.norm_state().size();
    for (std::size_t i = 0; params_ok && i < net.parameters().size(); ++i) {
      params_ok = back.parameters()[i].first == net.parameters()[i].first &&
                  same_bits(back.parameters()[i].second, net.parameters()[i].second);
    }
    for (std::size_t i = 0; params_ok && i < net.norm_state().size(); ++i) {
      params_ok = same_bits(back.norm_state()[i].second.running_mean, net.norm_state()[i].second.running_mean) &&
                  same_bits(back.norm_state()[i].second.running_var, net.norm_state()[i].second.running_var);
    }
    params_ok = params_ok && serialize_checkpoint(back) == serialize_checkpoint(net);
  }

  const auto bytes = serialize_checkpoint(ViewNet<float>::build(ViewNetConfig::micro(), 3));
  auto load = [](std::vector<std::uint8_t> b) {
    return error_of([&] { deserialize_checkpoint<float>(b); });
  };
  std::vector<std::pair<std::string, bool>> checks;
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  checks.emplace_back("truncated", load(truncated) == ErrorCode::kTruncated);
  auto magic = bytes;
  magic[0] = 'X';
  checks.emplace_back("magic", load(magic) == ErrorCode::kFormat);
  auto version = bytes;
  version[4] = 9;
  checks.emplace_back("version", load(version) == ErrorCode::kVersion);
  auto flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x40;
  checks.emplace_back("bitflip", load(flipped) == ErrorCode::kChecksum);
  checks.emplace_back("missing",
                      error_of([] { load_checkpoint<float>(work_dir() / "does_not_exist.vfck"); }) == ErrorCode::kIo);

  bool errors_ok = true;
  std::string detail = "round_trip=" + std::string(params_ok ? "bitwise" : "MISMATCH") + " corruption:";
  for (const auto& [name, ok] : checks) {
    errors_ok = errors_ok && ok;
    detail += " " + name + "=" + (ok ? "ok" : "wrong");
  }
  return {params_ok && errors_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion_metric_fixed_points}, {2, criterion_gradients},   {3, criterion_oracle_equivalence},
      {4, criterion_desk_training},       {5, criterion_rotation_trend}, {6, criterion_continuity},
      {7, criterion_pipeline},            {8, criterion_determinism}, {9, criterion_serialization}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  std::fprintf(stderr, "work directory: %s\n", work_dir().string().c_str());
  fs::create_directories(work_dir());
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 3;
}
