#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsis {

// Compute precision. Storage is always double; in F32 mode every kernel
// loads operands as float, computes in float, and stores the rounded
// result back, so stored values are exactly representable floats and the
// numerics match a native single-precision engine.
enum class Precision : uint8_t { F64, F32 };

inline std::size_t bytes_per_element(Precision p) {
  return p == Precision::F64 ? 8 : 4;
}

Precision precision_from_string(const std::string& s);
std::string to_string(Precision p);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

[[noreturn]] void fail(const std::string& where, const std::string& msg);

// Dense row-major n-d array of doubles with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Row-major multi-index access, bounds-checked; test and setup code only.
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  bool has_grad() const { return !grad_.empty(); }
  std::vector<double>& grad();             // allocates zeros on first use
  const std::vector<double>& grad() const; // throws if absent
  void accumulate_grad(const std::vector<double>& g);
  void zero_grad() { grad_.clear(); }

  bool all_finite() const;
  bool same_values(const Tensor& other) const; // bitwise compare of shape+values

  void reshape_in_place(Shape new_shape);

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

}  // namespace fedsis
