#pragma once

#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drums {

inline constexpr const char *kVersion = "0.1.0";

using cx = std::complex<double>;
using Shape = std::vector<std::size_t>;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent, malformed or incongruent data.
class DataError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
public:
  using Error::Error;
};

inline std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_string(const Shape &shape);

/// Dense row-major N-d array with value semantics.
template <class T> class Array {
public:
  using value_type = T;

  Array() = default;
  explicit Array(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw DataError("array data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_string(shape_));
  }

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T> &vector() const { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  template <class... I> T &operator()(I... idx) { return data_[offset(idx...)]; }
  template <class... I> const T &operator()(I... idx) const { return data_[offset(idx...)]; }

  /// Elements per step of the leading axis.
  std::size_t stride0() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

  /// View of the sub-array at leading index i.
  std::span<T> slab(std::size_t i) { return {data_.data() + i * stride0(), stride0()}; }
  std::span<const T> slab(std::size_t i) const { return {data_.data() + i * stride0(), stride0()}; }

  /// Copy of the sub-array at leading index i.
  Array slice(std::size_t i) const {
    Shape s(shape_.begin() + 1, shape_.end());
    auto v = slab(i);
    return Array(std::move(s), std::vector<T>(v.begin(), v.end()));
  }

  void set_slice(std::size_t i, const Array &sub) {
    if (sub.size() != stride0())
      throw DataError("slice size mismatch");
    std::copy(sub.data_.begin(), sub.data_.end(), data_.begin() + i * stride0());
  }

  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size())
      throw DataError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Array &o) const = default;

private:
  template <class... I> std::size_t offset(I... idx) const {
    const std::size_t ix[] = {static_cast<std::size_t>(idx)...};
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(I); ++a)
      off = off * shape_[a] + ix[a];
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

using CArray = Array<cx>;
using RArray = Array<double>;
using MaskArray = Array<unsigned char>;

// Complex helpers. dot is conjugate-linear in its first argument.
cx dot(std::span<const cx> a, std::span<const cx> b);
double norm2(std::span<const cx> a);
double norm(std::span<const cx> a);
double norm(std::span<const double> a);
double max_abs(std::span<const cx> a);

RArray magnitude(const CArray &a);
CArray to_complex(const RArray &a);

/// Fixed-shape check with a readable message.
void require_shape(const Shape &got, const Shape &want, const std::string &what);

} // namespace drums
