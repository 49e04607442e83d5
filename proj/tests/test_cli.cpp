#include <viewgen/viewgen.h>

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

Result run(const std::string& args) {
  const std::string cmd = std::string(VIEWGEN_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// One tiny dataset and model shared by every case; built on first use.
struct Fixture {
  fs::path root;
  fs::path data;
  fs::path model;
  fs::path registry;

  Fixture() {
    root = fs::temp_directory_path() / "viewgen_test_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    data = root / "data";
    model = root / "run" / "model.vfck";
    registry = root / "registry.txt";
    Result r = run("render-dataset --classes can,mug --instances 3 --size 16 --grid "
                   "pitch:0:30:10,yaw:0:348:24 --quiet --out " + data.string());
    REQUIRE_MESSAGE(r.code == 0, r.out);
    r = run("train --class can --model micro --iters 5 --batch 2 --quiet --data " + data.string() +
            " --out " + (root / "run").string());
    REQUIRE_MESSAGE(r.code == 0, r.out);
    std::ofstream(registry) << "can=" << model.string() << "\n";
  }

  std::string input() const { return "--input " + (data / "can" / "1" / "p0_y0_rgb.png").string(); }
  std::string mask() const { return "--mask " + (data / "can" / "1" / "p0_y0_mask.png").string(); }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

bool single_error_line(const std::string& out) {
  std::size_t lines = 0;
  std::size_t pos = 0;
  while ((pos = out.find("error: code=", pos)) != std::string::npos) {
    ++lines;
    ++pos;
  }
  return lines == 1;
}

}  // namespace

TEST_CASE("every subcommand answers --help with exit 0") {
  for (const char* sub : {"render-dataset", "train", "generate", "evaluate", "gradcheck", "info"}) {
    CAPTURE(sub);
    const Result r = run(std::string(sub) + " --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  CHECK(run("--help").code == 0);
}

TEST_CASE("usage errors exit 2 with one machine-readable line") {
  Result r = run("");
  CHECK(r.code == 2);
  CHECK(single_error_line(r.out));
  r = run("train --no-such-flag");
  CHECK(r.code == 2);
  CHECK(r.out.find("error: code=usage") != std::string::npos);
  r = run("train --set train.bogus=1 --out /nonexistent");
  CHECK(r.code == 2);
  CHECK(r.out.find("train.bogus") != std::string::npos);
  r = run("gradcheck --set nonsense");
  CHECK(r.code == 2);
}

TEST_CASE("generate sweeps 0..360 in 12 degree steps into 30 views") {
  auto& f = fixture();
  const fs::path out = f.root / "gen_sweep";
  const Result r = run("generate " + f.input() + " " + f.mask() + " --checkpoint " + f.model.string() +
                       " --sweep 0:360:12 --quiet --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.out);
  int rgb = 0, depth = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const std::string name = e.path().filename().string();
    rgb += name.rfind("rgb_", 0) == 0;
    depth += name.rfind("depth_", 0) == 0;
  }
  CHECK(rgb == 30);
  CHECK(depth == 30);
}

TEST_CASE("generate without a mask or --auto-segment is refused") {
  auto& f = fixture();
  const Result r = run("generate " + f.input() + " --checkpoint " + f.model.string() +
                       " --sweep 0:360:12 --out " + (f.root / "gen_nomask").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("no object mask") != std::string::npos);
  CHECK(single_error_line(r.out));
  CHECK_FALSE(fs::exists(f.root / "gen_nomask" / "rgb_000.png"));
}

TEST_CASE("generate with --auto-segment and an angle list") {
  auto& f = fixture();
  const fs::path out = f.root / "gen_auto";
  const Result r = run("generate " + f.input() + " --auto-segment --registry " + f.registry.string() +
                       " --class can --angles 30,45:10 --quiet --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(fs::exists(out / "rgb_001.png"));
  CHECK_FALSE(fs::exists(out / "rgb_002.png"));
}

TEST_CASE("a non-empty output directory needs --force") {
  auto& f = fixture();
  const fs::path out = f.root / "gen_exists";
  fs::create_directories(out);
  std::ofstream(out / "keep.txt") << "x";
  const std::string args = "generate " + f.input() + " " + f.mask() + " --checkpoint " +
                           f.model.string() + " --angles 0 --quiet --out " + out.string();
  Result r = run(args);
  CHECK(r.code == 1);
  CHECK(r.out.find("code=output_exists") != std::string::npos);
  r = run(args + " --force");
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "keep.txt"));
}

TEST_CASE("oracle evaluation reports zero error") {
  auto& f = fixture();
  const Result r = run("evaluate --generator oracle --no-continuity --quiet --registry " +
                       f.registry.string() + " --data " + f.data.string() + " --out " +
                       (f.root / "eval_oracle").string());
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("e_rgb_px,0,0") != std::string::npos);
  CHECK(r.out.find("e_depth_px,0,0") != std::string::npos);
  CHECK(r.out.find("acc_depth_pct,100,100") != std::string::npos);
}

TEST_CASE("a registry class missing from the dataset is a configuration error") {
  auto& f = fixture();
  const fs::path reg = f.root / "registry_bottle.txt";
  std::ofstream(reg) << "bottle=" << f.model.string() << "\n";
  const Result r = run("evaluate --registry " + reg.string() + " --data " + f.data.string() +
                       " --out " + (f.root / "eval_bad").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("code=config") != std::string::npos);
}

TEST_CASE("config file values yield to flags, VIEWGEN_DATA supplies the data root") {
  auto& f = fixture();
  const fs::path cfg = f.root / "train.cfg";
  std::ofstream(cfg) << "# test config\ntrain.model=micro\ntrain.iterations=50\ntrain.batch_size=2\n";
  const fs::path out = f.root / "run_cfg";
  const Result r = run("--config " + cfg.string() + " train --iters 2 --quiet --out " + out.string() +
                       " --data " + f.data.string());
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("iterations=2") != std::string::npos);

  const std::string env = "VIEWGEN_DATA=" + f.data.string() + " ";
  const std::string cmd = env + VIEWGEN_CLI + " train --model micro --iters 1 --batch 2 --quiet --out " +
                          (f.root / "run_env").string() + " >/dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
}

TEST_CASE("gradcheck exit codes") {
  Result r = run("gradcheck --seeds 1 --ops-only --quiet");
  CHECK(r.code == 0);
  CHECK(r.out.find("max_relative_error=") != std::string::npos);
  r = run("gradcheck --seeds 1 --ops-only --tolerance 1e-14 --quiet");
  CHECK(r.code == 3);
  CHECK(r.out.find("code=verification") != std::string::npos);
}

TEST_CASE("info prints checkpoint metadata") {
  auto& f = fixture();
  Result r = run("info " + f.model.string());
  CHECK(r.code == 0);
  CHECK(r.out.find("format_version=") != std::string::npos);
  r = run("info " + (f.root / "missing.vfck").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("code=io") != std::string::npos);
}

TEST_CASE("C API: load, route, generate and error codes") {
  auto& f = fixture();
  vg_model* model = nullptr;
  REQUIRE(vg_model_load(f.model.string().c_str(), &model) == VG_OK);
  int size = 0;
  REQUIRE(vg_model_input_size(model, &size) == VG_OK);
  CHECK(size == 16);

  const std::size_t s = static_cast<std::size_t>(size);
  std::vector<float> input(4 * s * s, 0.5f);
  const double yaw[3] = {0.0, 12.0, 0.0};
  std::vector<float> rgb(3 * 3 * s * s), depth(3 * s * s);
  REQUIRE(vg_model_generate(model, input.data(), yaw, nullptr, 3, rgb.data(), depth.data()) == VG_OK);
  // Same query at batch positions 0 and 2.
  CHECK(std::equal(rgb.begin(), rgb.begin() + 3 * s * s, rgb.begin() + 6 * s * s));
  CHECK(vg_model_generate(model, nullptr, yaw, nullptr, 1, rgb.data(), depth.data()) ==
        VG_ERR_INVALID_ARGUMENT);
  CHECK(std::string(vg_last_error_message()).find("NULL") != std::string::npos);

  vg_registry* reg = nullptr;
  REQUIRE(vg_registry_load(f.registry.string().c_str(), &reg) == VG_OK);
  CHECK(vg_registry_size(reg) == 1);
  const vg_model* routed = nullptr;
  CHECK(vg_registry_route(reg, "can", nullptr, &routed) == VG_OK);
  CHECK(routed != nullptr);
  CHECK(vg_registry_route(reg, "mug", nullptr, &routed) == VG_ERR_NO_MODEL);
  CHECK(std::string(vg_status_name(VG_ERR_NO_MODEL)) == "no_model");
  vg_registry_free(reg);

  const fs::path bad = f.root / "truncated.vfck";
  {
    std::ifstream in(f.model, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(bad, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  vg_model* broken = nullptr;
  CHECK(vg_model_load(bad.string().c_str(), &broken) == VG_ERR_TRUNCATED);
  CHECK(broken == nullptr);
  vg_model_free(model);
}
