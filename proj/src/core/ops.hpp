#pragma once

#include "tensor.hpp"

// Differentiable operators. Spatial ops accept an unbatched [C,H,W] tensor or
// a batched [B,C,H,W] tensor and return the same rank. Nothing broadcasts:
// every shape disagreement raises ErrorCode::kInvalidShape.
namespace viewgen::ops {

enum class Mode { kTrain, kEval };

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  static BatchNormState create(std::size_t channels) {
    return {Tensor<T>::zeros({channels}), Tensor<T>::full({channels}, T(1)), 0.9, 1e-5};
  }
};

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);
// factor is a learnable single-element tensor.
template <typename T>
Tensor<T> scale_by(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& factor);
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

// 3x3 cross-correlation, stride 1, zero padding 1. kernels [Cout,Cin,3,3].
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias);
// Gradient goes to the first maximum in row-major window order.
template <typename T>
Tensor<T> maxpool2x2(Tape<T>& tape, const Tensor<T>& input);
// input [K] or [B,K], weight [J,K], bias [J].
template <typename T>
Tensor<T> fully_connected(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);
template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input);
template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& input);
// input [B,C,...]. Train mode normalizes with batch statistics and updates
// state; eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormState<T>& state, Mode mode);
// Half-pixel (align_corners = false) bilinear interpolation.
template <typename T>
Tensor<T> bilinear_upsample2x(Tape<T>& tape, const Tensor<T>& input);
// Joins along the channel axis: axis 0 for rank 1 and 3, axis 1 for rank 2 and 4.
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& input, Shape shape);
template <typename T>
Tensor<T> mse_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace viewgen::ops
