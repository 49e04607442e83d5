#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace viewgen {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Fill rule for make_tensor.
struct Init {
  enum class Kind { kZeros, kConstant, kUniform };

  Kind kind = Kind::kZeros;
  double value = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::uint64_t seed = 0;

  static Init zeros() { return {}; }
  static Init constant(double c) { return {Kind::kConstant, c, 0.0, 0.0, 0}; }
  static Init uniform(double lo, double hi, std::uint64_t seed) {
    return {Kind::kUniform, 0.0, lo, hi, seed};
  }
};

// Dense row-major array shared by handle. Copies of a Tensor alias the same
// storage; values are only written by the op that creates the tensor and by
// optimizers updating parameters in place.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  // Accepts zero-sized dimensions (e.g. an empty channel block); make_tensor
  // is the validated public constructor.
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t numel() const { return storage_->values.size(); }

  std::span<const T> data() const { return storage_->values; }
  std::span<T> data_mut() { return storage_->values; }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool on) { storage_->requires_grad = on; }

  bool has_grad() const { return !storage_->grad.empty() || numel() == 0; }
  std::span<const T> grad() const { return storage_->grad; }
  // Gradient buffers stay writable through const handles: backward closures
  // accumulate into them while tensor values remain fixed.
  std::span<T> grad_mut() const;
  void zero_grad() const;
  void clear_grad() const { std::vector<T>().swap(storage_->grad); }

  // Deep copy of values only.
  Tensor clone() const { return Tensor(shape(), storage_->values); }
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

template <typename T>
Tensor<T> make_tensor(const Shape& shape, const Init& init);

// Ordered record of backward closures. One forward/backward pass owns a tape;
// a tape is not shared between threads.
template <typename T>
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

  // Seeds d(loss)/d(loss) = 1, replays the nodes in reverse and clears the tape.
  void backward(Tensor<T>& loss);
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace viewgen
