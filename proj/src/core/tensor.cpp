#include "tensor.hpp"

#include <algorithm>

#include "rng.hpp"

namespace viewgen {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : storage_(std::make_shared<Storage>()) {
  require(!shape.empty(), ErrorCode::kInvalidShape, "tensor shape must have at least one dimension");
  require(shape_numel(shape) == values.size(), ErrorCode::kInvalidShape,
          "shape " + shape_string(shape) + " does not match " + std::to_string(values.size()) +
              " elements");
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
T Tensor<T>::item() const {
  require(numel() == 1, ErrorCode::kInvalidShape,
          "item() needs a single-element tensor, got " + shape_string(shape()));
  return storage_->values[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() const {
  if (storage_->grad.size() != storage_->values.size()) {
    storage_->grad.assign(storage_->values.size(), T(0));
  }
  return storage_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  if (!storage_->grad.empty()) std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
Tensor<T> make_tensor(const Shape& shape, const Init& init) {
  require(!shape.empty(), ErrorCode::kInvalidShape, "make_tensor: empty shape");
  for (std::size_t d : shape) {
    require(d >= 1, ErrorCode::kInvalidShape,
            "make_tensor: zero dimension in " + shape_string(shape));
  }
  std::vector<T> values(shape_numel(shape));
  switch (init.kind) {
    case Init::Kind::kZeros:
      break;
    case Init::Kind::kConstant:
      std::fill(values.begin(), values.end(), static_cast<T>(init.value));
      break;
    case Init::Kind::kUniform: {
      Rng rng(init.seed);
      for (T& v : values) v = static_cast<T>(rng.uniform(init.low, init.high));
      break;
    }
  }
  return Tensor<T>(shape, std::move(values));
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  require(loss.defined() && loss.numel() == 1, ErrorCode::kInvalidArgument,
          "backward needs a scalar loss");
  require(!nodes_.empty(), ErrorCode::kInvalidArgument,
          "backward on an empty tape; run a forward pass first");
  require(loss.requires_grad(), ErrorCode::kInvalidArgument,
          "loss is not connected to any tensor that requires grad");
  loss.grad_mut()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_tensor<float>(const Shape&, const Init&);
template Tensor<double> make_tensor<double>(const Shape&, const Init&);

}  // namespace viewgen
