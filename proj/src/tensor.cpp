#include "aeanet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace aeanet {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
Tensor<T>::Tensor() : shape_{0}, data_(std::make_shared<const std::vector<T>>()) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != values.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar " + shape_to_string(shape_));
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  return out;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
std::size_t GradTape<T>::new_id(const Shape& shape) {
  shapes_.push_back(shape);
  grads_.emplace_back();
  return shapes_.size() - 1;
}

template <typename T>
Tensor<T> GradTape<T>::watch(const Tensor<T>& value) {
  if (finished_) throw UsageError("cannot watch on a tape that already ran backward");
  Tensor<T> out = value.detach();
  out.tape_ = this;
  out.grad_id_ = new_id(out.shape_);
  return out;
}

template <typename T>
Tensor<T> GradTape<T>::record(const Tensor<T>& output,
                              std::initializer_list<const Tensor<T>*> inputs,
                              BackwardFn backward) {
  return record(output, std::vector<const Tensor<T>*>(inputs), std::move(backward));
}

template <typename T>
Tensor<T> GradTape<T>::record(const Tensor<T>& output,
                              const std::vector<const Tensor<T>*>& inputs,
                              BackwardFn backward) {
  if (finished_) throw UsageError("cannot record on a tape that already ran backward");
  Node node;
  node.inputs.reserve(inputs.size());
  for (const Tensor<T>* in : inputs) {
    if (in->tape_ == this) {
      node.inputs.push_back(in->grad_id_);
    } else if (in->tape_ == nullptr) {
      node.inputs.push_back(kNoId);
    } else {
      throw UsageError("tensor belongs to a different gradient tape");
    }
  }
  Tensor<T> out = output.detach();
  out.tape_ = this;
  out.grad_id_ = new_id(out.shape_);
  node.output = out.grad_id_;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return out;
}

template <typename T>
void GradTape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward requires a scalar loss, got " + shape_to_string(loss.shape()));
  }
  if (loss.tape_ != this) throw UsageError("loss was not produced under this tape");
  if (finished_) throw UsageError("backward already ran on this tape");
  finished_ = true;

  grads_[loss.grad_id_].assign(1, T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const std::vector<T>& g_out = grads_[it->output];
    if (g_out.empty()) continue;
    std::vector<bool> needs(it->inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      needs[i] = it->inputs[i] != kNoId;
      any = any || needs[i];
    }
    if (!any) continue;
    std::vector<std::vector<T>> g_in = it->backward(std::span<const T>(g_out), needs);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      if (!needs[i]) continue;
      std::vector<T>& acc = grads_[it->inputs[i]];
      std::vector<T>& contrib = g_in[i];
      if (contrib.size() != shape_numel(shapes_[it->inputs[i]])) {
        throw DimensionError("internal: gradient size mismatch on tape node");
      }
      if (acc.empty()) {
        acc = std::move(contrib);
      } else {
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += contrib[j];
      }
    }
    // Intermediate gradients are no longer needed once propagated.
    if (it->output != loss.grad_id_) std::vector<T>().swap(grads_[it->output]);
  }
}

template <typename T>
Tensor<T> GradTape<T>::grad(const Tensor<T>& tensor) const {
  if (!finished_) throw UsageError("grad() before backward()");
  if (tensor.tape_ != this) throw UsageError("tensor is not on this tape");
  const std::vector<T>& g = grads_[tensor.grad_id_];
  if (g.empty()) return Tensor<T>::zeros(tensor.shape());
  return Tensor<T>(tensor.shape(), g);
}

template <typename T>
GradTape<T>* common_tape(const std::vector<const Tensor<T>*>& inputs) {
  GradTape<T>* tape = nullptr;
  for (const Tensor<T>* in : inputs) {
    if (!in->on_tape()) continue;
    if (tape && in->tape() != tape) throw UsageError("inputs are recorded on different tapes");
    tape = in->tape();
  }
  return tape;
}

template <typename T>
GradTape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs) {
  return common_tape(std::vector<const Tensor<T>*>(inputs));
}

template class Tensor<float>;
template class Tensor<double>;
template class GradTape<float>;
template class GradTape<double>;
template GradTape<float>* common_tape(std::initializer_list<const Tensor<float>*>);
template GradTape<double>* common_tape(std::initializer_list<const Tensor<double>*>);
template GradTape<float>* common_tape(const std::vector<const Tensor<float>*>&);
template GradTape<double>* common_tape(const std::vector<const Tensor<double>*>&);

}  // namespace aeanet
