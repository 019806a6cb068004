#include "oflow/tensor.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "tensor and flow file codecs assume a little-endian host");

namespace oflow {

std::size_t Shape::total() const {
  const int dims[4] = {n, h, w, c};
  std::size_t count = 1;
  for (int d : dims) {
    if (d < 0) throw SizeError("negative tensor dimension in " + to_string(*this));
    if (d == 0) return 0;
    const auto ud = static_cast<std::size_t>(d);
    if (count > std::numeric_limits<std::size_t>::max() / ud / sizeof(float))
      throw SizeError("tensor size overflow in " + to_string(*this));
    count *= ud;
  }
  return count;
}

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << "(" << s.n << ", " << s.h << ", " << s.w << ", " << s.c << ")";
  return os.str();
}

namespace detail {
void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}
}  // namespace detail

void write_tensor(std::ostream& os, const Tensor& t) {
  const std::uint32_t header[4] = {
      static_cast<std::uint32_t>(t.shape.n), static_cast<std::uint32_t>(t.shape.h),
      static_cast<std::uint32_t>(t.shape.w), static_cast<std::uint32_t>(t.shape.c)};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  if (!t.data.empty())
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!os) throw IoError("write_tensor: stream write failed");
}

Tensor read_tensor(std::istream& is) {
  std::uint32_t header[4] = {};
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is) throw FormatError("read_tensor: truncated header");
  constexpr std::uint32_t dim_cap = std::numeric_limits<int>::max();
  for (std::uint32_t d : header)
    if (d > dim_cap) throw FormatError("read_tensor: dimension out of range");
  Tensor t(Shape{static_cast<int>(header[0]), static_cast<int>(header[1]),
                 static_cast<int>(header[2]), static_cast<int>(header[3])});
  if (!t.data.empty()) {
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw FormatError("read_tensor: truncated payload");
  }
  return t;
}

}  // namespace oflow
