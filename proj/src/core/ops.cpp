#include "ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace viewgen::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

template <typename T>
bool tracked(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> output(Shape shape, bool track) {
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  out.set_requires_grad(track);
  return out;
}

// Upstream gradient, or an empty span when nothing downstream produced one.
template <typename T>
std::span<const T> upstream(const Tensor<T>& out) {
  if (out.numel() == 0 || out.grad().size() != out.numel()) return {};
  return out.grad();
}

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorCode::kInvalidShape,
          std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

struct Spatial {
  std::size_t batch, channels, height, width;
  std::size_t plane() const { return height * width; }
};

Spatial spatial_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  fail(ErrorCode::kInvalidShape,
       std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " + shape_string(s));
}

Shape spatial_shape(const Shape& like, std::size_t batch, std::size_t c, std::size_t h,
                    std::size_t w) {
  if (like.size() == 3) return {c, h, w};
  return {batch, c, h, w};
}

// cols is [C*9, H*W]; row (c*9 + ky*3 + kx) holds the input shifted by (ky-1, kx-1).
template <typename T>
void im2col3x3(const T* img, std::size_t channels, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          if (kx == 1) {
            std::memcpy(dst, src, w * sizeof(T));
          } else if (kx == 0) {
            dst[0] = T(0);
            std::memcpy(dst + 1, src, (w - 1) * sizeof(T));
          } else {
            std::memcpy(dst, src + 1, (w - 1) * sizeof(T));
            dst[w - 1] = T(0);
          }
        }
      }
    }
  }
}

struct Lerp {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Lerp> upsample_taps(std::size_t in) {
  std::vector<Lerp> taps(in * 2);
  for (std::size_t o = 0; o < in * 2; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    const std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  const bool track = tracked(tape, {&a, &b});
  Tensor<T> out = output<T>(a.shape(), track);
  auto o = out.data_mut();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (track) {
    tape.record([a, b, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "sub");
  const bool track = tracked(tape, {&a, &b});
  Tensor<T> out = output<T>(a.shape(), track);
  auto o = out.data_mut();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (track) {
    tape.record([a, b, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  const bool track = tracked(tape, {&a, &b});
  Tensor<T> out = output<T>(a.shape(), track);
  auto o = out.data_mut();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (track) {
    tape.record([a, b, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto x = a.data();
      auto y = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  const bool track = tracked(tape, {&a});
  Tensor<T> out = output<T>(a.shape(), track);
  auto o = out.data_mut();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  if (track) {
    tape.record([a, out, factor]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale_by(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& factor) {
  require(factor.numel() == 1, ErrorCode::kInvalidShape,
          "scale_by: factor must have one element, got " + shape_string(factor.shape()));
  const bool track = tracked(tape, {&a, &factor});
  Tensor<T> out = output<T>(a.shape(), track);
  const T f = factor.data()[0];
  auto o = out.data_mut();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * f;
  if (track) {
    tape.record([a, factor, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto x = a.data();
      if (a.requires_grad()) {
        const T f = factor.data()[0];
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * f;
      }
      if (factor.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * x[i];
        factor.grad_mut()[0] += static_cast<T>(acc);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  const bool track = tracked(tape, {&a});
  Tensor<T> out = output<T>({1}, track);
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  out.data_mut()[0] = static_cast<T>(acc);
  if (track) {
    tape.record([a, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto ga = a.grad_mut();
      for (T& v : ga) v += g[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias) {
  const Spatial in = spatial_dims(input.shape(), "conv2d");
  const Shape& ks = kernels.shape();
  require(ks.size() == 4 && ks[2] == 3 && ks[3] == 3, ErrorCode::kInvalidShape,
          "conv2d: kernels must be [Cout,Cin,3,3], got " + shape_string(ks));
  require(ks[1] == in.channels, ErrorCode::kInvalidShape,
          "conv2d: kernel expects " + std::to_string(ks[1]) + " input channels, input has " +
              std::to_string(in.channels));
  const std::size_t cout = ks[0];
  require(bias.shape() == Shape{cout}, ErrorCode::kInvalidShape,
          "conv2d: bias must be [" + std::to_string(cout) + "], got " + shape_string(bias.shape()));

  const bool track = tracked(tape, {&input, &kernels, &bias});
  Tensor<T> out = output<T>(spatial_shape(input.shape(), in.batch, cout, in.height, in.width), track);
  const std::size_t hw = in.plane();
  const std::size_t krows = in.channels * 9;
  std::vector<T> cols(krows * hw);
  MapConstMat<T> k(kernels.data().data(), cout, krows);
  MapConstMat<T> col_mat(cols.data(), krows, hw);
  for (std::size_t b = 0; b < in.batch; ++b) {
    im2col3x3(input.data().data() + b * in.channels * hw, in.channels, in.height, in.width,
              cols.data());
    MapMat<T> o(out.data_mut().data() + b * cout * hw, cout, hw);
    o.noalias() = k * col_mat;
    for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += bias.data()[c];
  }
  if (track) {
    tape.record([input, kernels, bias, out, in, cout]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      const std::size_t hw = in.plane();
      const std::size_t krows = in.channels * 9;
      std::vector<T> cols(krows * hw);
      // The input gradient is a convolution of the output gradient with the
      // spatially flipped, channel-transposed kernel bank.
      std::vector<T> flipped;
      std::vector<T> gcols;
      if (input.requires_grad()) {
        flipped.resize(in.channels * cout * 9);
        gcols.resize(cout * 9 * hw);
        auto kd = kernels.data();
        for (std::size_t ci = 0; ci < in.channels; ++ci) {
          for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t t = 0; t < 9; ++t) {
              flipped[(ci * cout + co) * 9 + t] = kd[(co * in.channels + ci) * 9 + (8 - t)];
            }
          }
        }
      }
      for (std::size_t b = 0; b < in.batch; ++b) {
        MapConstMat<T> go(g.data() + b * cout * hw, cout, hw);
        if (bias.requires_grad()) {
          auto gb = bias.grad_mut();
          // Serial sum: Eigen's vectorized reduction depends on the address alignment.
          for (std::size_t c = 0; c < cout; ++c) {
            const T* row = g.data() + (b * cout + c) * hw;
            T acc = 0;
            for (std::size_t i = 0; i < hw; ++i) acc += row[i];
            gb[c] += acc;
          }
        }
        if (kernels.requires_grad()) {
          im2col3x3(input.data().data() + b * in.channels * hw, in.channels, in.height,
                    in.width, cols.data());
          MapMat<T> gk(kernels.grad_mut().data(), cout, krows);
          MapConstMat<T> col_mat(cols.data(), krows, hw);
          gk.noalias() += go * col_mat.transpose();
        }
        if (input.requires_grad()) {
          im2col3x3(g.data() + b * cout * hw, cout, in.height, in.width, gcols.data());
          MapConstMat<T> wf(flipped.data(), in.channels, cout * 9);
          MapConstMat<T> gc(gcols.data(), cout * 9, hw);
          MapMat<T> gi(input.grad_mut().data() + b * in.channels * hw, in.channels, hw);
          gi.noalias() += wf * gc;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2x2(Tape<T>& tape, const Tensor<T>& input) {
  const Spatial in = spatial_dims(input.shape(), "maxpool2x2");
  require(in.height % 2 == 0 && in.width % 2 == 0, ErrorCode::kInvalidShape,
          "maxpool2x2: spatial size must be even, got " + shape_string(input.shape()));
  const std::size_t oh = in.height / 2;
  const std::size_t ow = in.width / 2;
  const bool track = tracked(tape, {&input});
  Tensor<T> out = output<T>(spatial_shape(input.shape(), in.batch, in.channels, oh, ow), track);
  std::vector<std::size_t> argmax(out.numel());
  auto x = input.data();
  auto o = out.data_mut();
  std::size_t idx = 0;
  for (std::size_t p = 0; p < in.batch * in.channels; ++p) {
    const std::size_t base = p * in.plane();
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo, ++idx) {
        const std::size_t r0 = base + 2 * y * in.width + 2 * xo;
        const std::size_t cand[4] = {r0, r0 + 1, r0 + in.width, r0 + in.width + 1};
        std::size_t best = cand[0];
        for (int j = 1; j < 4; ++j) {
          if (x[cand[j]] > x[best]) best = cand[j];
        }
        o[idx] = x[best];
        argmax[idx] = best;
      }
    }
  }
  if (track) {
    tape.record([input, out, argmax = std::move(argmax)]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto gi = input.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gi[argmax[i]] += g[i];
    });
  }
  return out;
}

// Eight independent partial sums combined in a fixed order.
template <typename T>
T dot_lanes(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

template <typename T>
Tensor<T> fully_connected(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  const Shape& is = input.shape();
  require(is.size() == 1 || is.size() == 2, ErrorCode::kInvalidShape,
          "fully_connected: input must be [K] or [B,K], got " + shape_string(is));
  const std::size_t batch = is.size() == 2 ? is[0] : 1;
  const std::size_t k = is.back();
  require(weight.rank() == 2 && weight.dim(1) == k, ErrorCode::kInvalidShape,
          "fully_connected: weight " + shape_string(weight.shape()) + " does not accept input " +
              shape_string(is));
  const std::size_t j = weight.dim(0);
  require(bias.shape() == Shape{j}, ErrorCode::kInvalidShape,
          "fully_connected: bias must be [" + std::to_string(j) + "], got " +
              shape_string(bias.shape()));
  const bool track = tracked(tape, {&input, &weight, &bias});
  Tensor<T> out = output<T>(is.size() == 2 ? Shape{batch, j} : Shape{j}, track);
  // Each sample gets the same summation order wherever it sits in the batch;
  // a GEMM would route trailing rows through different kernels.
  const T* x = input.data().data();
  const T* w = weight.data().data();
  T* o = out.data_mut().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < j; ++r) o[b * j + r] = bias.data()[r] + dot_lanes(x + b * k, w + r * k, k);
  }
  if (track) {
    tape.record([input, weight, bias, out, batch, k, j]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      MapConstMat<T> go(g.data(), batch, j);
      if (input.requires_grad()) {
        MapMat<T> gx(input.grad_mut().data(), batch, k);
        MapConstMat<T> w(weight.data().data(), j, k);
        gx.noalias() += go * w;
      }
      if (weight.requires_grad()) {
        MapMat<T> gw(weight.grad_mut().data(), j, k);
        MapConstMat<T> x(input.data().data(), batch, k);
        gw.noalias() += go.transpose() * x;
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_mut();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t r = 0; r < j; ++r) gb[r] += go(b, r);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
  const bool track = tracked(tape, {&input});
  Tensor<T> out = output<T>(input.shape(), track);
  auto x = input.data();
  auto o = out.data_mut();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > T(0) ? x[i] : T(0);
  if (track) {
    tape.record([input, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto x = input.data();
      auto gi = input.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > T(0)) gi[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input) {
  const bool track = tracked(tape, {&input});
  Tensor<T> out = output<T>(input.shape(), track);
  auto x = input.data();
  auto o = out.data_mut();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (x[i] >= T(0)) {
      o[i] = T(1) / (T(1) + std::exp(-x[i]));
    } else {
      const T e = std::exp(x[i]);
      o[i] = e / (T(1) + e);
    }
  }
  if (track) {
    tape.record([input, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto y = out.data();
      auto gi = input.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormState<T>& state, Mode mode) {
  const Shape& s = input.shape();
  require(s.size() >= 2, ErrorCode::kInvalidShape,
          "batchnorm: input must be [B,C,...], got " + shape_string(s));
  const std::size_t batch = s[0];
  const std::size_t channels = s[1];
  const std::size_t inner = input.numel() / (batch * channels);
  require(gamma.shape() == Shape{channels} && beta.shape() == Shape{channels},
          ErrorCode::kInvalidShape, "batchnorm: gamma/beta must be [" + std::to_string(channels) + "]");
  require(state.running_mean.shape() == Shape{channels} &&
              state.running_var.shape() == Shape{channels},
          ErrorCode::kInvalidShape, "batchnorm: running statistics do not match channel count");
  if (mode == Mode::kTrain) {
    require(batch >= 2, ErrorCode::kInvalidBatch,
            "batchnorm: train mode needs batch size >= 2, got " + std::to_string(batch));
  }

  const bool track = tracked(tape, {&input, &gamma, &beta});
  Tensor<T> out = output<T>(s, track);
  const std::size_t count = batch * inner;
  std::vector<T> inv_std(channels);
  std::vector<T> xhat(input.numel());
  auto x = input.data();
  auto o = out.data_mut();

  for (std::size_t c = 0; c < channels; ++c) {
    double mean;
    double var;
    if (mode == Mode::kTrain) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      }
      mean = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? var * count / static_cast<double>(count - 1) : var;
      auto rm = state.running_mean.data_mut();
      auto rv = state.running_var.data_mut();
      rm[c] = static_cast<T>(state.momentum * rm[c] + (1.0 - state.momentum) * mean);
      rv[c] = static_cast<T>(state.momentum * rv[c] + (1.0 - state.momentum) * unbiased);
    } else {
      mean = state.running_mean.data()[c];
      var = state.running_var.data()[c];
    }
    const double istd = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[c] = static_cast<T>(istd);
    const T gm = gamma.data()[c];
    const T bt = beta.data()[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * istd);
        xhat[off + i] = xh;
        o[off + i] = gm * xh + bt;
      }
    }
  }

  if (track) {
    tape.record([input, gamma, beta, out, mode, batch, channels, inner,
                 inv_std = std::move(inv_std), xhat = std::move(xhat)]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      const double count = static_cast<double>(batch * inner);
      for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = (b * channels + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            sum_g += g[off + i];
            sum_gx += static_cast<double>(g[off + i]) * xhat[off + i];
          }
        }
        if (gamma.requires_grad()) gamma.grad_mut()[c] += static_cast<T>(sum_gx);
        if (beta.requires_grad()) beta.grad_mut()[c] += static_cast<T>(sum_g);
        if (!input.requires_grad()) continue;
        auto gi = input.grad_mut();
        const double gm = gamma.data()[c];
        const double istd = inv_std[c];
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = (b * channels + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) {
            double d;
            if (mode == Mode::kTrain) {
              d = gm * istd / count * (count * g[off + i] - sum_g - xhat[off + i] * sum_gx);
            } else {
              d = gm * istd * g[off + i];
            }
            gi[off + i] += static_cast<T>(d);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_upsample2x(Tape<T>& tape, const Tensor<T>& input) {
  const Spatial in = spatial_dims(input.shape(), "bilinear_upsample2x");
  const std::size_t oh = in.height * 2;
  const std::size_t ow = in.width * 2;
  const bool track = tracked(tape, {&input});
  Tensor<T> out = output<T>(spatial_shape(input.shape(), in.batch, in.channels, oh, ow), track);
  const auto ty = upsample_taps(in.height);
  const auto tx = upsample_taps(in.width);
  auto x = input.data();
  auto o = out.data_mut();
  for (std::size_t p = 0; p < in.batch * in.channels; ++p) {
    const T* src = x.data() + p * in.plane();
    T* dst = o.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const Lerp& ly = ty[y];
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const Lerp& lx = tx[xo];
        const double v = ly.w0 * (lx.w0 * src[ly.i0 * in.width + lx.i0] +
                                  lx.w1 * src[ly.i0 * in.width + lx.i1]) +
                         ly.w1 * (lx.w0 * src[ly.i1 * in.width + lx.i0] +
                                  lx.w1 * src[ly.i1 * in.width + lx.i1]);
        dst[y * ow + xo] = static_cast<T>(v);
      }
    }
  }
  if (track) {
    tape.record([input, out, in, ty, tx]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      const std::size_t oh = in.height * 2;
      const std::size_t ow = in.width * 2;
      auto gi = input.grad_mut();
      for (std::size_t p = 0; p < in.batch * in.channels; ++p) {
        const T* go = g.data() + p * oh * ow;
        T* dst = gi.data() + p * in.plane();
        for (std::size_t y = 0; y < oh; ++y) {
          const Lerp& ly = ty[y];
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const Lerp& lx = tx[xo];
            const double v = go[y * ow + xo];
            dst[ly.i0 * in.width + lx.i0] += static_cast<T>(v * ly.w0 * lx.w0);
            dst[ly.i0 * in.width + lx.i1] += static_cast<T>(v * ly.w0 * lx.w1);
            dst[ly.i1 * in.width + lx.i0] += static_cast<T>(v * ly.w1 * lx.w0);
            dst[ly.i1 * in.width + lx.i1] += static_cast<T>(v * ly.w1 * lx.w1);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.size() == sb.size() && !sa.empty() && sa.size() <= 4, ErrorCode::kInvalidShape,
          "concat_channels: rank mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  const std::size_t axis = (sa.size() == 2 || sa.size() == 4) ? 1 : 0;
  for (std::size_t d = 0; d < sa.size(); ++d) {
    require(d == axis || sa[d] == sb[d], ErrorCode::kInvalidShape,
            "concat_channels: non-channel dimensions differ " + shape_string(sa) + " vs " +
                shape_string(sb));
  }
  Shape os = sa;
  os[axis] = sa[axis] + sb[axis];
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= sa[d];
  std::size_t tail = 1;
  for (std::size_t d = axis + 1; d < sa.size(); ++d) tail *= sa[d];
  const std::size_t na = sa[axis] * tail;
  const std::size_t nb = sb[axis] * tail;

  const bool track = tracked(tape, {&a, &b});
  Tensor<T> out = output<T>(os, track);
  auto o = out.data_mut();
  for (std::size_t i = 0; i < outer; ++i) {
    std::copy_n(a.data().data() + i * na, na, o.data() + i * (na + nb));
    std::copy_n(b.data().data() + i * nb, nb, o.data() + i * (na + nb) + na);
  }
  if (track) {
    tape.record([a, b, out, outer, na, nb]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      for (std::size_t i = 0; i < outer; ++i) {
        const T* src = g.data() + i * (na + nb);
        if (a.requires_grad() && na) {
          T* ga = a.grad_mut().data() + i * na;
          for (std::size_t j = 0; j < na; ++j) ga[j] += src[j];
        }
        if (b.requires_grad() && nb) {
          T* gb = b.grad_mut().data() + i * nb;
          for (std::size_t j = 0; j < nb; ++j) gb[j] += src[na + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& input, Shape shape) {
  require(shape_numel(shape) == input.numel() && !shape.empty(), ErrorCode::kInvalidShape,
          "reshape: cannot view " + shape_string(input.shape()) + " as " + shape_string(shape));
  const bool track = tracked(tape, {&input});
  Tensor<T> out(std::move(shape), std::vector<T>(input.data().begin(), input.data().end()));
  out.set_requires_grad(track);
  if (track) {
    tape.record([input, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto gi = input.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
  check_same_shape(pred.shape(), target.shape(), "mse_loss");
  const bool track = tracked(tape, {&pred, &target});
  Tensor<T> out = output<T>({1}, track);
  auto p = pred.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  out.data_mut()[0] = static_cast<T>(acc / static_cast<double>(p.size()));
  if (track) {
    tape.record([pred, target, out]() mutable {
      auto g = upstream(out);
      if (g.empty()) return;
      auto p = pred.data();
      auto t = target.data();
      const double k = 2.0 * g[0] / static_cast<double>(p.size());
      if (pred.requires_grad()) {
        auto gp = pred.grad_mut();
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += static_cast<T>(k * (p[i] - t[i]));
      }
      if (target.requires_grad()) {
        auto gt = target.grad_mut();
        for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= static_cast<T>(k * (p[i] - t[i]));
      }
    });
  }
  return out;
}

#define VIEWGEN_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                    \
  template Tensor<T> scale_by(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                         \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> maxpool2x2(Tape<T>&, const Tensor<T>&);                                  \
  template Tensor<T> fully_connected(Tape<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                     const Tensor<T>&);                                       \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                     \
  template Tensor<T> batchnorm(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                               BatchNormState<T>&, Mode);                                     \
  template Tensor<T> bilinear_upsample2x(Tape<T>&, const Tensor<T>&);                         \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                              \
  template Tensor<T> mse_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

VIEWGEN_INSTANTIATE_OPS(float)
VIEWGEN_INSTANTIATE_OPS(double)

}  // namespace viewgen::ops
