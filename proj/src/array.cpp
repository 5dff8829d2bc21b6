#include "drums/core.hpp"

#include <cmath>
#include <sstream>

namespace drums {

std::string shape_string(const Shape &shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

cx dot(std::span<const cx> a, std::span<const cx> b) {
  if (a.size() != b.size())
    throw DataError("dot: length mismatch");
  cx acc{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += std::conj(a[i]) * b[i];
  return acc;
}

double norm2(std::span<const cx> a) {
  double acc = 0.0;
  for (const auto &v : a)
    acc += std::norm(v);
  return acc;
}

double norm(std::span<const cx> a) { return std::sqrt(norm2(a)); }

double norm(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a)
    acc += v * v;
  return std::sqrt(acc);
}

double max_abs(std::span<const cx> a) {
  double m = 0.0;
  for (const auto &v : a)
    m = std::max(m, std::abs(v));
  return m;
}

RArray magnitude(const CArray &a) {
  RArray out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = std::abs(a[i]);
  return out;
}

CArray to_complex(const RArray &a) {
  CArray out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = a[i];
  return out;
}

void require_shape(const Shape &got, const Shape &want, const std::string &what) {
  if (got != want)
    throw DataError(what + ": expected shape " + shape_string(want) + ", got " +
                    shape_string(got));
}

} // namespace drums
