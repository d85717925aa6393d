#include "cdsl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace cdsl {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  for (auto d : shape) {
    if (d == 0) throw Error("tensor shape " + shape_string(shape) + " has a zero extent");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (element_count(shape_) != values_.size()) {
    throw Error("tensor shape " + shape_string(shape_) + " does not match " +
                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() > 2) throw Error("rows() on rank-" + std::to_string(shape_.size()) + " tensor");
  return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape_.size() > 2) throw Error("cols() on rank-" + std::to_string(shape_.size()) + " tensor");
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (values_.size() != 1) throw Error("item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

std::span<double> Tensor::grad() {
  if (!grad_) throw Error("tensor has no gradient");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw Error("tensor has no gradient");
  return *grad_;
}

void Tensor::set_grad(std::vector<double> g) {
  if (g.size() != values_.size()) {
    throw Error("gradient size " + std::to_string(g.size()) + " does not match tensor " +
                shape_string(shape_));
  }
  grad_ = std::move(g);
}

Tensor Tensor::slice_rows(std::size_t first, std::size_t count) const {
  const std::size_t c = cols();
  if (first + count > rows()) throw Error("slice_rows out of range");
  std::vector<double> out(values_.begin() + static_cast<std::ptrdiff_t>(first * c),
                          values_.begin() + static_cast<std::ptrdiff_t>((first + count) * c));
  return Tensor::matrix(count, c, std::move(out));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  const std::size_t n = rows();
  std::vector<double> out;
  out.reserve(indices.size() * c);
  for (auto i : indices) {
    if (i >= n) throw Error("gather_rows index " + std::to_string(i) + " out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor::matrix(indices.size(), c, std::move(out));
}

Tensor Tensor::stack_rows(const Tensor& top, const Tensor& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) {
    throw Error("stack_rows: column mismatch " + shape_string(top.shape()) + " vs " +
                shape_string(bottom.shape()));
  }
  std::vector<double> out(top.values_);
  out.insert(out.end(), bottom.values_.begin(), bottom.values_.end());
  return Tensor::matrix(top.rows() + bottom.rows(), top.cols(), std::move(out));
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace cdsl
