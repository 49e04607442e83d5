#include "viewnet.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <fstream>

#include "angles.hpp"
#include "key_values.hpp"
#include "rng.hpp"

namespace viewgen {

ViewNetConfig ViewNetConfig::desk() { return ViewNetConfig{}; }

ViewNetConfig ViewNetConfig::micro() {
  ViewNetConfig c;
  c.input_size = 16;
  c.encoder_channels = {4, 8};
  c.latent_dim = 16;
  c.fc_widths = {16};
  c.skip_weights = {1.0, 1.0};
  c.rgb_branch_channels = 4;
  c.depth_branch_channels = 4;
  return c;
}

ViewNetConfig ViewNetConfig::full() {
  ViewNetConfig c;
  c.input_size = 128;
  c.encoder_channels = {16, 32, 64, 128, 256};
  c.latent_dim = 512;
  c.fc_widths = {512, 512};
  c.skip_weights = {1.0, 1.0, 1.0, 1.0, 1.0};
  return c;
}

ViewNetConfig ViewNetConfig::preset(std::string_view name) {
  if (name == "desk") return desk();
  if (name == "micro") return micro();
  if (name == "full") return full();
  fail(ErrorCode::kConfig, "unknown model preset '" + std::string(name) +
                               "' (expected desk, micro or full)");
}

void ViewNetConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kConfig, "invalid ViewNet config: " + what);
  };
  check(input_size >= 4 && (input_size & (input_size - 1)) == 0,
        "input_size must be a power of two >= 4");
  check(input_channels >= 1, "input_channels must be >= 1");
  check(!encoder_channels.empty(), "encoder_channels must list at least one block");
  for (int c : encoder_channels) check(c >= 1, "encoder channel counts must be >= 1");
  check(blocks() < 31 && (input_size >> blocks()) >= 4,
        "input_size / 2^blocks must be >= 4");
  check(skip_weights.size() == blocks(), "skip_weights needs one entry per encoder block");
  for (double w : skip_weights) check(std::isfinite(w), "skip_weights must be finite");
  check(latent_dim >= 1, "latent_dim must be >= 1");
  for (int w : fc_widths) check(w >= 1, "fc_widths entries must be >= 1");
  check(angle_encoding_dim == 4, "angle_encoding_dim must be 4");
  check(rgb_branch_channels >= 1 && depth_branch_channels >= 1,
        "branch channel counts must be >= 1");
  check(bn_momentum >= 0.0 && bn_momentum < 1.0, "bn_momentum must lie in [0, 1)");
  check(bn_epsilon > 0.0, "bn_epsilon must be positive");
}

namespace {

template <typename V>
std::string join(const std::vector<V>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<V>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

}  // namespace

std::string ViewNetConfig::to_text() const {
  std::string out;
  out += "input_size=" + std::to_string(input_size) + "\n";
  out += "input_channels=" + std::to_string(input_channels) + "\n";
  out += "encoder_channels=" + join(encoder_channels) + "\n";
  out += "latent_dim=" + std::to_string(latent_dim) + "\n";
  out += "fc_widths=" + join(fc_widths) + "\n";
  out += "angle_encoding_dim=" + std::to_string(angle_encoding_dim) + "\n";
  out += "skip_weights=" + join(skip_weights) + "\n";
  out += "rgb_branch_channels=" + std::to_string(rgb_branch_channels) + "\n";
  out += "depth_branch_channels=" + std::to_string(depth_branch_channels) + "\n";
  out += "bn_momentum=" + format_double(bn_momentum) + "\n";
  out += "bn_epsilon=" + format_double(bn_epsilon) + "\n";
  return out;
}

ViewNetConfig ViewNetConfig::from_text(std::string_view text) {
  KeyValues kv = KeyValues::parse(text, "model config");
  ViewNetConfig d;
  ViewNetConfig c;
  c.input_size = static_cast<int>(kv.take_int("input_size", d.input_size));
  c.input_channels = static_cast<int>(kv.take_int("input_channels", d.input_channels));
  c.encoder_channels = kv.take_int_list("encoder_channels", d.encoder_channels);
  c.latent_dim = static_cast<int>(kv.take_int("latent_dim", d.latent_dim));
  c.fc_widths = kv.take_int_list("fc_widths", d.fc_widths);
  c.angle_encoding_dim = static_cast<int>(kv.take_int("angle_encoding_dim", d.angle_encoding_dim));
  c.skip_weights = kv.take_double_list("skip_weights", d.skip_weights);
  c.rgb_branch_channels =
      static_cast<int>(kv.take_int("rgb_branch_channels", d.rgb_branch_channels));
  c.depth_branch_channels =
      static_cast<int>(kv.take_int("depth_branch_channels", d.depth_branch_channels));
  c.bn_momentum = kv.take_double("bn_momentum", d.bn_momentum);
  c.bn_epsilon = kv.take_double("bn_epsilon", d.bn_epsilon);
  kv.finish();
  return c;
}

std::array<double, 4> encode_angle(const AngleQuery& query) {
  const auto [sy, cy] = sincos_degrees(query.delta_yaw);
  const auto [sp, cp] = sincos_degrees(query.delta_pitch);
  return {sy, cy, sp, cp};
}

template <typename T>
Tensor<T> encode_angles(std::span<const AngleQuery> queries) {
  std::vector<T> values;
  values.reserve(queries.size() * 4);
  for (const AngleQuery& q : queries) {
    for (double v : encode_angle(q)) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>({queries.size(), 4}, std::move(values));
}

namespace {

enum class Role { kConvWeight, kFcWeight, kBias, kGamma, kBeta, kSkip };

struct Slot {
  std::string name;
  Shape shape;
  Role role;
  double init = 0.0;  // skip weight initial value
};

struct Layout {
  std::vector<Slot> params;
  std::vector<std::pair<std::string, std::size_t>> norms;  // name, channels
};

Layout layout(const ViewNetConfig& c) {
  Layout l;
  auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout) {
    l.params.push_back({name + ".weight", {cout, cin, 3, 3}, Role::kConvWeight});
    l.params.push_back({name + ".bias", {cout}, Role::kBias});
  };
  auto bn = [&](const std::string& name, std::size_t ch) {
    l.params.push_back({name + ".gamma", {ch}, Role::kGamma});
    l.params.push_back({name + ".beta", {ch}, Role::kBeta});
    l.norms.emplace_back(name, ch);
  };
  auto fc = [&](const std::string& name, std::size_t in, std::size_t out) {
    l.params.push_back({name + ".weight", {out, in}, Role::kFcWeight});
    l.params.push_back({name + ".bias", {out}, Role::kBias});
  };

  const std::size_t n = c.blocks();
  const auto ch = [&](std::size_t i) { return static_cast<std::size_t>(c.encoder_channels[i]); };
  std::size_t cin = static_cast<std::size_t>(c.input_channels);
  for (std::size_t i = 0; i < n; ++i) {
    conv("enc" + std::to_string(i) + ".conv", cin, ch(i));
    bn("enc" + std::to_string(i) + ".bn", ch(i));
    cin = ch(i);
  }
  const std::size_t s = static_cast<std::size_t>(c.bottleneck_size());
  const std::size_t flat = ch(n - 1) * s * s;
  fc("latent", flat, static_cast<std::size_t>(c.latent_dim));
  std::size_t width = static_cast<std::size_t>(c.latent_dim + c.angle_encoding_dim);
  for (std::size_t k = 0; k < c.fc_widths.size(); ++k) {
    fc("fc" + std::to_string(k), width, static_cast<std::size_t>(c.fc_widths[k]));
    width = static_cast<std::size_t>(c.fc_widths[k]);
  }
  fc("bottleneck", width, flat);
  std::size_t prev = ch(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = n - 1 - j;
    conv("dec" + std::to_string(j) + ".conv", prev, ch(i));
    bn("dec" + std::to_string(j) + ".bn", ch(i));
    l.params.push_back({"skip" + std::to_string(i) + ".weight", {1}, Role::kSkip, c.skip_weights[i]});
    prev = ch(i);
  }
  const std::size_t rgb = static_cast<std::size_t>(c.rgb_branch_channels);
  const std::size_t dep = static_cast<std::size_t>(c.depth_branch_channels);
  conv("rgb0.conv", prev, rgb);
  bn("rgb0.bn", rgb);
  conv("rgb1.conv", rgb, 3);
  conv("depth0.conv", prev, dep);
  bn("depth0.bn", dep);
  conv("depth1.conv", dep, 1);
  return l;
}

}  // namespace

template <typename T>
ViewNet<T> ViewNet<T>::build(const ViewNetConfig& config, std::uint64_t seed) {
  config.validate();
  ViewNet net;
  net.config_ = config;
  Rng rng(seed);
  const Layout l = layout(config);
  for (const Slot& slot : l.params) {
    Tensor<T> t = Tensor<T>::zeros(slot.shape);
    auto v = t.data_mut();
    switch (slot.role) {
      case Role::kConvWeight:
      case Role::kFcWeight: {
        double fan_in;
        double fan_out;
        if (slot.role == Role::kConvWeight) {
          fan_in = static_cast<double>(slot.shape[1] * 9);
          fan_out = static_cast<double>(slot.shape[0] * 9);
        } else {
          fan_in = static_cast<double>(slot.shape[1]);
          fan_out = static_cast<double>(slot.shape[0]);
        }
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Role::kBias:
      case Role::kBeta:
        break;
      case Role::kGamma:
        std::fill(v.begin(), v.end(), T(1));
        break;
      case Role::kSkip:
        v[0] = static_cast<T>(slot.init);
        break;
    }
    t.set_requires_grad(true);
    net.parameters_.emplace_back(slot.name, std::move(t));
  }
  for (const auto& [name, channels] : l.norms) {
    auto state = ops::BatchNormState<T>::create(channels);
    state.momentum = config.bn_momentum;
    state.epsilon = config.bn_epsilon;
    net.norm_state_.emplace_back(name, std::move(state));
  }
  net.index();
  return net;
}

template <typename T>
ViewNet<T> ViewNet<T>::assemble(const ViewNetConfig& config, std::vector<Parameter> parameters,
                                std::vector<NormEntry> norm_state) {
  config.validate();
  const Layout l = layout(config);
  require(parameters.size() == l.params.size(), ErrorCode::kFormat,
          "checkpoint holds " + std::to_string(parameters.size()) + " parameters, config needs " +
              std::to_string(l.params.size()));
  require(norm_state.size() == l.norms.size(), ErrorCode::kFormat,
          "checkpoint batch-norm state does not match the config");
  for (std::size_t i = 0; i < l.params.size(); ++i) {
    require(parameters[i].first == l.params[i].name &&
                parameters[i].second.shape() == l.params[i].shape,
            ErrorCode::kFormat,
            "checkpoint parameter '" + parameters[i].first + "' " +
                shape_string(parameters[i].second.shape()) + " does not match expected '" +
                l.params[i].name + "' " + shape_string(l.params[i].shape));
    parameters[i].second.set_requires_grad(true);
  }
  for (std::size_t i = 0; i < l.norms.size(); ++i) {
    const Shape expected{l.norms[i].second};
    require(norm_state[i].first == l.norms[i].first &&
                norm_state[i].second.running_mean.shape() == expected &&
                norm_state[i].second.running_var.shape() == expected,
            ErrorCode::kFormat, "checkpoint batch-norm entry '" + norm_state[i].first +
                                    "' does not match expected '" + l.norms[i].first + "'");
    norm_state[i].second.momentum = config.bn_momentum;
    norm_state[i].second.epsilon = config.bn_epsilon;
  }
  ViewNet net;
  net.config_ = config;
  net.parameters_ = std::move(parameters);
  net.norm_state_ = std::move(norm_state);
  net.index();
  return net;
}

template <typename T>
void ViewNet<T>::index() {
  param_index_.clear();
  norm_index_.clear();
  for (std::size_t i = 0; i < parameters_.size(); ++i) param_index_[parameters_[i].first] = i;
  for (std::size_t i = 0; i < norm_state_.size(); ++i) norm_index_[norm_state_[i].first] = i;
}

template <typename T>
const Tensor<T>& ViewNet<T>::parameter(const std::string& name) const {
  auto it = param_index_.find(name);
  require(it != param_index_.end(), ErrorCode::kInvalidArgument, "no parameter named " + name);
  return parameters_[it->second].second;
}

template <typename T>
Tensor<T>& ViewNet<T>::parameter(const std::string& name) {
  auto it = param_index_.find(name);
  require(it != param_index_.end(), ErrorCode::kInvalidArgument, "no parameter named " + name);
  return parameters_[it->second].second;
}

template <typename T>
std::size_t ViewNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters_) n += p.second.numel();
  return n;
}

template <typename T>
ops::BatchNormState<T>& ViewNet<T>::norm(std::vector<NormEntry>& entries,
                                         const std::string& name) const {
  return entries[norm_index_.at(name)].second;
}

template <typename T>
ViewOutput<T> ViewNet<T>::forward(Tape<T>& tape, const Tensor<T>& input,
                                  std::span<const AngleQuery> queries, ops::Mode mode) {
  return run(tape, input, queries, mode, norm_state_);
}

template <typename T>
ViewOutput<T> ViewNet<T>::generate(const Tensor<T>& input,
                                   std::span<const AngleQuery> queries) const {
  std::vector<NormEntry> norms = norm_state_;  // handles only; eval mode never writes
  Tape<T> tape(false);
  return run(tape, input, queries, ops::Mode::kEval, norms);
}

template <typename T>
ViewOutput<T> ViewNet<T>::run(Tape<T>& tape, const Tensor<T>& input,
                              std::span<const AngleQuery> queries, ops::Mode mode,
                              std::vector<NormEntry>& norms) const {
  using namespace ops;
  const std::size_t size = static_cast<std::size_t>(config_.input_size);
  const std::size_t channels = static_cast<std::size_t>(config_.input_channels);
  const bool batched = input.defined() && input.rank() == 4;
  require(input.defined() && (input.rank() == 3 || batched), ErrorCode::kInvalidShape,
          "ViewNet input must be [C,S,S] or [B,C,S,S]");
  const Shape& s = input.shape();
  const std::size_t batch = batched ? s[0] : 1;
  const std::size_t off = batched ? 1 : 0;
  require(s[off] == channels && s[off + 1] == size && s[off + 2] == size,
          ErrorCode::kInvalidShape,
          "ViewNet expects " + std::to_string(channels) + "x" + std::to_string(size) + "x" +
              std::to_string(size) + " input, got " + shape_string(s));
  require(queries.size() == batch, ErrorCode::kInvalidShape,
          "ViewNet needs one angle query per sample (" + std::to_string(batch) + "), got " +
              std::to_string(queries.size()));

  auto P = [&](const std::string& name) -> const Tensor<T>& { return parameter(name); };
  auto conv = [&](const Tensor<T>& x, const std::string& name) {
    return conv2d(tape, x, P(name + ".weight"), P(name + ".bias"));
  };
  auto bn = [&](const Tensor<T>& x, const std::string& name) {
    return batchnorm(tape, x, P(name + ".gamma"), P(name + ".beta"), norm(norms, name), mode);
  };
  auto fc = [&](const Tensor<T>& x, const std::string& name) {
    return fully_connected(tape, x, P(name + ".weight"), P(name + ".bias"));
  };

  Tensor<T> h = batched ? input : reshape(tape, input, {1, channels, size, size});
  const std::size_t n = config_.blocks();
  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "enc" + std::to_string(i);
    h = relu(tape, bn(conv(h, id + ".conv"), id + ".bn"));
    skips.push_back(h);
    h = maxpool2x2(tape, h);
  }

  const std::size_t bs = static_cast<std::size_t>(config_.bottleneck_size());
  const std::size_t last = static_cast<std::size_t>(config_.encoder_channels.back());
  Tensor<T> z = reshape(tape, h, {batch, last * bs * bs});
  z = relu(tape, fc(z, "latent"));
  z = concat_channels(tape, z, encode_angles<T>(queries));
  for (std::size_t k = 0; k < config_.fc_widths.size(); ++k) {
    z = relu(tape, fc(z, "fc" + std::to_string(k)));
  }
  z = relu(tape, fc(z, "bottleneck"));
  h = reshape(tape, z, {batch, last, bs, bs});

  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = n - 1 - j;
    const std::string id = "dec" + std::to_string(j);
    h = bilinear_upsample2x(tape, h);
    h = relu(tape, bn(conv(h, id + ".conv"), id + ".bn"));
    h = add(tape, h, scale_by(tape, skips[i], P("skip" + std::to_string(i) + ".weight")));
  }

  Tensor<T> rgb = relu(tape, bn(conv(h, "rgb0.conv"), "rgb0.bn"));
  rgb = sigmoid(tape, conv(rgb, "rgb1.conv"));
  Tensor<T> depth = relu(tape, bn(conv(h, "depth0.conv"), "depth0.bn"));
  depth = sigmoid(tape, conv(depth, "depth1.conv"));
  if (!batched) {
    rgb = reshape(tape, rgb, {3, size, size});
    depth = reshape(tape, depth, {1, size, size});
  }
  return {rgb, depth};
}

// ---------------------------------------------------------------------------
// Checkpoint format

namespace {

constexpr char kMagic[4] = {'V', 'F', 'C', 'K'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename T>
  void tensor(const std::string& name, const Tensor<T>& t) {
    str(name);
    u8(std::is_same_v<T, float> ? kDtypeF32 : kDtypeF64);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (T v : t.data()) {
      if constexpr (std::is_same_v<T, float>) {
        u32(std::bit_cast<std::uint32_t>(v));
      } else {
        u64(std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void need(std::size_t n) const {
    require(remaining() >= n, ErrorCode::kTruncated,
            "checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  template <typename T>
  Tensor<T> tensor(std::string& name) {
    name = str();
    const std::uint8_t dtype = u8();
    require(dtype == kDtypeF32 || dtype == kDtypeF64, ErrorCode::kFormat,
            "checkpoint tensor '" + name + "' has unknown dtype tag " + std::to_string(dtype));
    const std::uint32_t rank = u32();
    require(rank >= 1 && rank <= 8, ErrorCode::kFormat,
            "checkpoint tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape;
    std::size_t count = 1;
    const std::size_t width = dtype == kDtypeF32 ? 4 : 8;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t d = u64();
      require(d <= remaining() && (d == 0 || count <= remaining() / d), ErrorCode::kTruncated,
              "checkpoint tensor '" + name + "' extends past end of file");
      shape.push_back(static_cast<std::size_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    need(count * width);
    std::vector<T> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (dtype == kDtypeF32) {
        values[i] = static_cast<T>(std::bit_cast<float>(u32()));
      } else {
        values[i] = static_cast<T>(std::bit_cast<double>(u64()));
      }
    }
    return Tensor<T>(std::move(shape), std::move(values));
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const ViewNet<T>& net) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(net.config().to_text());
  const std::size_t count = net.parameters().size() + 2 * net.norm_state().size();
  w.u32(static_cast<std::uint32_t>(count));
  for (const auto& [name, t] : net.parameters()) w.tensor(name, t);
  for (const auto& [name, state] : net.norm_state()) {
    w.tensor(name + ".running_mean", state.running_mean);
    w.tensor(name + ".running_var", state.running_var);
  }
  w.u32(crc32_of(w.data()));
  return std::move(w.data());
}

template <typename T>
ViewNet<T> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4);
  require(std::equal(kMagic, kMagic + 4, bytes.begin()), ErrorCode::kFormat,
          "not a checkpoint: bad magic bytes");
  r.u32();  // magic, already checked
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorCode::kVersion,
          "unsupported checkpoint version " + std::to_string(version) + " (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const std::string config_text = r.str();
  const std::uint32_t count = r.u32();

  std::vector<std::pair<std::string, Tensor<T>>> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Tensor<T> t = r.tensor<T>(name);
    tensors.emplace_back(std::move(name), std::move(t));
  }
  const std::size_t payload_end = r.position();
  const std::uint32_t stored_crc = r.u32();
  require(r.remaining() == 0, ErrorCode::kFormat, "trailing bytes after checkpoint checksum");
  require(stored_crc == crc32_of(bytes.subspan(0, payload_end)), ErrorCode::kChecksum,
          "checkpoint checksum mismatch");

  ViewNetConfig config;
  try {
    config = ViewNetConfig::from_text(config_text);
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint config block is invalid: ") + e.what());
  }

  std::vector<typename ViewNet<T>::Parameter> params;
  std::vector<typename ViewNet<T>::NormEntry> norms;
  std::size_t i = 0;
  const std::string mean_suffix = ".running_mean";
  for (; i < tensors.size(); ++i) {
    const std::string& name = tensors[i].first;
    if (name.size() > mean_suffix.size() &&
        name.compare(name.size() - mean_suffix.size(), mean_suffix.size(), mean_suffix) == 0) {
      break;
    }
    params.push_back(std::move(tensors[i]));
  }
  for (; i < tensors.size(); i += 2) {
    require(i + 1 < tensors.size(), ErrorCode::kFormat, "unpaired batch-norm statistics");
    const std::string base =
        tensors[i].first.substr(0, tensors[i].first.size() - mean_suffix.size());
    require(tensors[i + 1].first == base + ".running_var", ErrorCode::kFormat,
            "expected running_var after " + tensors[i].first);
    ops::BatchNormState<T> state;
    state.running_mean = std::move(tensors[i].second);
    state.running_var = std::move(tensors[i + 1].second);
    norms.emplace_back(base, std::move(state));
  }
  return ViewNet<T>::assemble(config, std::move(params), std::move(norms));
}

template <typename T>
void save_checkpoint(const ViewNet<T>& net, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing checkpoint " + path.string());
}

template <typename T>
ViewNet<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes);
}

template class ViewNet<float>;
template class ViewNet<double>;
template Tensor<float> encode_angles<float>(std::span<const AngleQuery>);
template Tensor<double> encode_angles<double>(std::span<const AngleQuery>);
template std::vector<std::uint8_t> serialize_checkpoint(const ViewNet<float>&);
template std::vector<std::uint8_t> serialize_checkpoint(const ViewNet<double>&);
template ViewNet<float> deserialize_checkpoint<float>(std::span<const std::uint8_t>);
template ViewNet<double> deserialize_checkpoint<double>(std::span<const std::uint8_t>);
template void save_checkpoint(const ViewNet<float>&, const std::filesystem::path&);
template void save_checkpoint(const ViewNet<double>&, const std::filesystem::path&);
template ViewNet<float> load_checkpoint<float>(const std::filesystem::path&);
template ViewNet<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace viewgen
