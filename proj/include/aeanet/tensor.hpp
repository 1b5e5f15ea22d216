#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "aeanet/error.hpp"

namespace aeanet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

template <typename T>
class GradTape;

// Dense row-major array. The value buffer is shared and never mutated after
// construction, so copies are cheap. A tensor optionally carries a handle into
// the GradTape that recorded it.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_->size(); }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  const T* ptr() const { return data_->data(); }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  // Row-major 2-D accessor.
  T at(std::size_t row, std::size_t col) const { return (*data_)[row * shape_.back() + col]; }
  T item() const;

  std::vector<T> to_vector() const { return *data_; }

  // Same values under a different shape; drops the tape handle.
  Tensor reshaped(Shape shape) const;
  // Same values, no tape handle.
  Tensor detach() const;

  bool on_tape() const { return tape_ != nullptr; }
  GradTape<T>* tape() const { return tape_; }
  std::size_t grad_id() const { return grad_id_; }

  bool all_finite() const;

 private:
  friend class GradTape<T>;

  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  GradTape<T>* tape_ = nullptr;
  std::size_t grad_id_ = 0;
};

// Linear reverse-mode tape. Every op that touches a taped tensor appends one
// node; backward() replays the nodes once, newest first.
template <typename T>
class GradTape {
 public:
  // Receives dL/d(output) and, for each input flagged in `needs`, returns
  // dL/d(input) as a flat buffer (empty when not needed).
  using BackwardFn = std::function<std::vector<std::vector<T>>(std::span<const T> grad_out,
                                                               const std::vector<bool>& needs)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Registers a leaf; gradients with respect to the returned tensor are
  // available after backward().
  Tensor<T> watch(const Tensor<T>& value);

  Tensor<T> record(const Tensor<T>& output, std::initializer_list<const Tensor<T>*> inputs,
                   BackwardFn backward);
  Tensor<T> record(const Tensor<T>& output, const std::vector<const Tensor<T>*>& inputs,
                   BackwardFn backward);

  void backward(const Tensor<T>& loss);

  // Gradient of the loss with respect to a watched tensor; zeros when the loss
  // does not depend on it. Intermediate gradients are released during backward.
  Tensor<T> grad(const Tensor<T>& tensor) const;

  std::size_t node_count() const { return nodes_.size(); }
  bool finished() const { return finished_; }

 private:
  struct Node {
    std::vector<std::size_t> inputs;  // ids; kNoId for untaped inputs
    std::size_t output;
    BackwardFn backward;
  };
  static constexpr std::size_t kNoId = static_cast<std::size_t>(-1);

  std::size_t new_id(const Shape& shape);

  std::vector<Node> nodes_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<T>> grads_;
  bool finished_ = false;
};

// Returns the tape shared by the taped tensors among `inputs`, or nullptr.
// Mixing tensors from two tapes is a usage error.
template <typename T>
GradTape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs);
template <typename T>
GradTape<T>* common_tape(const std::vector<const Tensor<T>*>& inputs);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradTape<float>;
extern template class GradTape<double>;

}  // namespace aeanet
