#include "fedsis/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace fedsis {

Precision precision_from_string(const std::string& s) {
  if (s == "f64" || s == "64") return Precision::F64;
  if (s == "f32" || s == "32") return Precision::F32;
  fail("precision", "unknown precision '" + s + "' (expected f64 or f32)");
}

std::string to_string(Precision p) { return p == Precision::F64 ? "f64" : "f32"; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void fail(const std::string& where, const std::string& msg) {
  throw std::runtime_error(where + ": " + msg);
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t e : shape_) {
    if (e == 0) fail("tensor", "zero extent in shape " + shape_str(shape_));
  }
  values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_numel(shape_) != values_.size()) {
    fail("tensor", "shape " + shape_str(shape_) + " does not match " +
                       std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::flat_index(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) {
    fail("tensor", "index rank " + std::to_string(idx.size()) + " vs shape " +
                       shape_str(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= shape_[axis]) {
      fail("tensor", "index " + std::to_string(i) + " out of range on axis " +
                         std::to_string(axis) + " of " + shape_str(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return values_[flat_index(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return values_[flat_index(idx)]; }

std::vector<double>& Tensor::grad() {
  if (grad_.empty()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (grad_.empty()) fail("tensor", "gradient requested but absent");
  return grad_;
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
  if (g.size() != values_.size()) {
    fail("tensor", "gradient size " + std::to_string(g.size()) + " vs " +
                       std::to_string(values_.size()) + " values");
  }
  auto& dst = grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::same_values(const Tensor& other) const {
  return shape_ == other.shape_ &&
         std::memcmp(values_.data(), other.values_.data(),
                     values_.size() * sizeof(double)) == 0;
}

void Tensor::reshape_in_place(Shape new_shape) {
  if (shape_numel(new_shape) != values_.size()) {
    fail("tensor", "reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                       " changes element count");
  }
  shape_ = std::move(new_shape);
}

}  // namespace fedsis
