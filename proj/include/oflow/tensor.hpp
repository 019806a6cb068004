#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "oflow/errors.hpp"

namespace oflow {

// Dimensions of a dense 4-D array: (batch, height, width, channels).
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  bool operator==(const Shape&) const = default;

  // Checked element count; throws SizeError on negative dims or overflow.
  std::size_t total() const;
};

std::string to_string(const Shape& s);

// Dense 4-D tensor, row-major over (n, h, w, c) with channels fastest.
// Instances are treated as immutable once an operation returns them;
// mutation happens only on tensors the caller exclusively owns.
template <typename T>
struct TensorT {
  Shape shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(Shape s) : shape(s), data(s.total(), T(0)) {}

  static TensorT zeros(Shape s) { return TensorT(s); }

  static TensorT full(Shape s, T v) {
    TensorT t(s);
    for (T& x : t.data) x = v;
    return t;
  }

  std::size_t index(int n, int y, int x, int c) const {
    return ((static_cast<std::size_t>(n) * shape.h + y) * shape.w + x) * shape.c + c;
  }

  T& at(int n, int y, int x, int c) { return data[index(n, y, x, c)]; }
  const T& at(int n, int y, int x, int c) const { return data[index(n, y, x, c)]; }

  bool empty() const { return data.empty(); }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {
void require_same_shape(const Shape& a, const Shape& b, const char* what);
}

// Elementwise combination of two same-shaped tensors.
template <typename T, typename F>
TensorT<T> map_binary(const TensorT<T>& a, const TensorT<T>& b, F op) {
  detail::require_same_shape(a.shape, b.shape, "map_binary");
  TensorT<T> out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = op(a.data[i], b.data[i]);
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return map_binary(a, b, [](T x, T y) { return x + y; });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return map_binary(a, b, [](T x, T y) { return x - y; });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return map_binary(a, b, [](T x, T y) { return x * y; });
}

// Reductions accumulate in double regardless of element type.
template <typename T>
double reduce_sum(const TensorT<T>& a) {
  double acc = 0.0;
  for (T x : a.data) acc += static_cast<double>(x);
  return acc;
}

template <typename T>
double reduce_mean(const TensorT<T>& a) {
  if (a.data.empty()) throw DomainError("reduce_mean: empty tensor");
  return reduce_sum(a) / static_cast<double>(a.data.size());
}

inline TensorD widen(const Tensor& t) {
  TensorD out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = t.data[i];
  return out;
}

inline Tensor narrow(const TensorD& t) {
  Tensor out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<float>(t.data[i]);
  return out;
}

// Binary dump: little-endian header of 4 x uint32 (n, h, w, c), then the raw
// float32 payload in layout order.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace oflow
