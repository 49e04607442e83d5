#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "grad_check.hpp"
#include "viewnet.hpp"

using namespace viewgen;
namespace fs = std::filesystem;

namespace {

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(T)) == 0;
}

template <typename T>
Tensor<T> unit_input(const ViewNetConfig& c, std::size_t batch, std::uint64_t seed) {
  const auto s = static_cast<std::size_t>(c.input_size);
  const auto ch = static_cast<std::size_t>(c.input_channels);
  if (batch == 0) return make_tensor<T>({ch, s, s}, Init::uniform(0, 1, seed));
  return make_tensor<T>({batch, ch, s, s}, Init::uniform(0, 1, seed));
}

fs::path temp_path(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "viewgen_test_viewnet";
  fs::create_directories(dir);
  return dir / name;
}

ErrorCode load_error(const fs::path& p) {
  try {
    load_checkpoint<float>(p);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

}  // namespace

TEST_CASE("encode_angle") {
  auto e0 = encode_angle({0, 0});
  CHECK(e0 == std::array<double, 4>{0, 1, 0, 1});
  auto e90 = encode_angle({90, 0});
  CHECK(e90 == std::array<double, 4>{1, 0, 0, 1});
  CHECK(encode_angle({360, 0}) == e0);
  CHECK(encode_angle({-348, 10}) == encode_angle({12, 10}));
  for (double v : encode_angle({37.5, -21})) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("build_viewnet is deterministic and Xavier bounded") {
  auto cfg = ViewNetConfig::micro();
  auto a = ViewNet<float>::build(cfg, 9);
  auto b = ViewNet<float>::build(cfg, 9);
  auto c = ViewNet<float>::build(cfg, 10);
  REQUIRE(a.parameters().size() == b.parameters().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].first == b.parameters()[i].first);
    CHECK(bitwise_equal(a.parameters()[i].second, b.parameters()[i].second));
    if (!bitwise_equal(a.parameters()[i].second, c.parameters()[i].second)) differs = true;
  }
  CHECK(differs);

  for (const auto& [name, t] : a.parameters()) {
    if (name.ends_with(".bias") || name.ends_with(".beta")) {
      for (float v : t.data()) CHECK(v == 0.0f);
    } else if (name.ends_with(".gamma") || name.starts_with("skip")) {
      for (float v : t.data()) CHECK(v == 1.0f);
    } else if (t.rank() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
      for (float v : t.data()) CHECK(std::abs(v) <= bound);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(9 * (t.dim(0) + t.dim(1))));
      for (float v : t.data()) CHECK(std::abs(v) <= bound);
    }
  }
}

TEST_CASE("fc layer with fan_in = fan_out = 3 is bounded by 1") {
  ViewNetConfig cfg = ViewNetConfig::micro();
  cfg.latent_dim = 3;
  cfg.fc_widths = {3, 3};
  auto net = ViewNet<double>::build(cfg, 1);
  const auto& w = net.parameter("fc1.weight");
  REQUIRE(w.shape() == Shape{3, 3});
  for (double v : w.data()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("invalid configs are rejected with the violated invariant") {
  ViewNetConfig cfg = ViewNetConfig::micro();
  cfg.skip_weights = {1.0};
  try {
    ViewNet<float>::build(cfg, 1);
    FAIL("accepted bad config");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(std::string(e.what()).find("skip_weights") != std::string::npos);
  }
  ViewNetConfig deep = ViewNetConfig::micro();
  deep.encoder_channels = {4, 8, 8};
  deep.skip_weights = {1, 1, 1};
  CHECK_THROWS_AS(ViewNet<float>::build(deep, 1), Error);
}

TEST_CASE("config text round trip") {
  auto cfg = ViewNetConfig::desk();
  cfg.skip_weights = {0.5, 0.25, 1.0 / 3.0, 2.0};
  CHECK(ViewNetConfig::from_text(cfg.to_text()) == cfg);
  CHECK_THROWS_AS(ViewNetConfig::from_text("input_size=64\nbogus=1\n"), Error);
}

TEST_CASE("forward contract on the micro config") {
  auto cfg = ViewNetConfig::micro();
  auto net = ViewNet<float>::build(cfg, 3);
  auto x = unit_input<float>(cfg, 0, 5);
  AngleQuery q{30, 10};
  auto out = net.generate(x, std::span(&q, 1));
  CHECK(out.rgb.shape() == Shape{3, 16, 16});
  CHECK(out.depth.shape() == Shape{1, 16, 16});
  for (float v : out.rgb.data()) CHECK((v >= 0.0f && v <= 1.0f));
  for (float v : out.depth.data()) CHECK((v >= 0.0f && v <= 1.0f));

  auto again = net.generate(x, std::span(&q, 1));
  CHECK(bitwise_equal(out.rgb, again.rgb));
  CHECK(bitwise_equal(out.depth, again.depth));

  AngleQuery wrapped{390, 10};
  auto periodic = net.generate(x, std::span(&wrapped, 1));
  CHECK(bitwise_equal(out.rgb, periodic.rgb));
  CHECK(bitwise_equal(out.depth, periodic.depth));

  CHECK_THROWS_AS(net.generate(Tensor<float>::zeros({4, 32, 32}), std::span(&q, 1)), Error);
  CHECK_THROWS_AS(net.generate(Tensor<float>::zeros({3, 16, 16}), std::span(&q, 1)), Error);
}

TEST_CASE("desk config forward shapes and batched train mode") {
  auto cfg = ViewNetConfig::desk();
  auto net = ViewNet<float>::build(cfg, 1);
  auto x = unit_input<float>(cfg, 2, 8);
  std::vector<AngleQuery> qs{{0, 0}, {120, 20}};
  Tape<float> tape;
  auto out = net.forward(tape, x, qs, ops::Mode::kTrain);
  CHECK(out.rgb.shape() == Shape{2, 3, 64, 64});
  CHECK(out.depth.shape() == Shape{2, 1, 64, 64});
  Tape<float> single;
  CHECK_THROWS_AS(net.forward(single, unit_input<float>(cfg, 1, 8), std::span(qs.data(), 1),
                              ops::Mode::kTrain),
                  Error);
}

TEST_CASE("output range holds for extreme parameters and zero skips") {
  auto cfg = ViewNetConfig::micro();
  cfg.skip_weights = {0.0, 0.0};
  auto net = ViewNet<float>::build(cfg, 4);
  for (auto& [name, t] : net.parameters()) {
    for (float& v : t.data_mut()) v *= 50.0f;
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = unit_input<float>(cfg, 0, seed);
    AngleQuery q{static_cast<double>(seed) * 70.0, 5.0};
    auto out = net.generate(x, std::span(&q, 1));
    CHECK(out.rgb.shape() == Shape{3, 16, 16});
    for (float v : out.rgb.data()) CHECK((v >= 0.0f && v <= 1.0f));
    for (float v : out.depth.data()) CHECK((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("full micro ViewNet gradient check in 64-bit mode") {
  const auto cfg = ViewNetConfig::micro();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto net = ViewNet<double>::build(cfg, seed);
    auto x = unit_input<double>(cfg, 2, seed + 100);
    auto trgb = make_tensor<double>({2, 3, 16, 16}, Init::uniform(0, 1, seed + 200));
    auto tdep = make_tensor<double>({2, 1, 16, 16}, Init::uniform(0, 1, seed + 300));
    std::vector<AngleQuery> qs{{12.0 * seed, 10}, {-48, 0}};
    std::function<Tensor<double>(Tape<double>&)> loss = [&](Tape<double>& t) {
      auto out = net.forward(t, x, qs, ops::Mode::kTrain);
      return ops::add(t, ops::mse_loss(t, out.rgb, trgb), ops::mse_loss(t, out.depth, tdep));
    };
    std::vector<Tensor<double>> params;
    for (auto& p : net.parameters()) params.push_back(p.second);
    auto r = grad_check<double>(loss, params, 1e-5);
    CHECK(r.coordinates == net.parameter_count());
    CHECK(r.max_relative_error <= 1e-3);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  auto cfg = ViewNetConfig::micro();
  auto net = ViewNet<float>::build(cfg, 12);
  // Move the running statistics away from their defaults.
  Tape<float> tape(false);
  std::vector<AngleQuery> qs{{0, 0}, {24, 10}};
  net.forward(tape, unit_input<float>(cfg, 2, 1), qs, ops::Mode::kTrain);

  const auto path = temp_path("roundtrip.vfck");
  save_checkpoint(net, path);
  auto loaded = load_checkpoint<float>(path);
  CHECK(loaded.config() == net.config());
  REQUIRE(loaded.parameters().size() == net.parameters().size());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK(loaded.parameters()[i].first == net.parameters()[i].first);
    CHECK(bitwise_equal(loaded.parameters()[i].second, net.parameters()[i].second));
  }
  for (std::size_t i = 0; i < net.norm_state().size(); ++i) {
    CHECK(bitwise_equal(loaded.norm_state()[i].second.running_mean, net.norm_state()[i].second.running_mean));
    CHECK(bitwise_equal(loaded.norm_state()[i].second.running_var, net.norm_state()[i].second.running_var));
  }
  auto x = unit_input<float>(cfg, 0, 77);
  AngleQuery q{48, 20};
  auto a = net.generate(x, std::span(&q, 1));
  auto b = loaded.generate(x, std::span(&q, 1));
  CHECK(bitwise_equal(a.rgb, b.rgb));
  CHECK(bitwise_equal(a.depth, b.depth));
  CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(net));
}

TEST_CASE("corrupted checkpoints are rejected with distinct errors") {
  auto net = ViewNet<float>::build(ViewNetConfig::micro(), 2);
  const auto bytes = serialize_checkpoint(net);
  auto write = [](const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  write(temp_path("trunc.vfck"), truncated);
  CHECK(load_error(temp_path("trunc.vfck")) == ErrorCode::kTruncated);

  auto missing_crc = bytes;
  missing_crc.resize(bytes.size() - 2);
  write(temp_path("nocrc.vfck"), missing_crc);
  CHECK(load_error(temp_path("nocrc.vfck")) == ErrorCode::kTruncated);

  auto magic = bytes;
  magic[0] = 'X';
  write(temp_path("magic.vfck"), magic);
  CHECK(load_error(temp_path("magic.vfck")) == ErrorCode::kFormat);

  auto version = bytes;
  version[4] = 9;
  write(temp_path("version.vfck"), version);
  CHECK(load_error(temp_path("version.vfck")) == ErrorCode::kVersion);

  auto flipped = bytes;
  flipped[bytes.size() - 10] ^= 0x40;
  write(temp_path("flip.vfck"), flipped);
  CHECK(load_error(temp_path("flip.vfck")) == ErrorCode::kChecksum);

  CHECK(load_error(temp_path("does_not_exist.vfck")) == ErrorCode::kIo);
}
