#include "oflow/flow.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace oflow {

namespace {

constexpr float kFloMagic = 202021.25f;  // spells "PIEH" when read as bytes

}  // namespace

FlowField read_flo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_flo: cannot open " + path);

  float magic = 0.0f;
  std::int32_t width = 0, height = 0;
  is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  is.read(reinterpret_cast<char*>(&width), sizeof(width));
  is.read(reinterpret_cast<char*>(&height), sizeof(height));
  if (!is) throw FormatError("read_flo: truncated header in " + path);
  if (magic != kFloMagic) throw FormatError("read_flo: bad magic in " + path);
  if (width < 0 || height < 0 || (width > 0 && height > std::numeric_limits<std::int32_t>::max() / width))
    throw FormatError("read_flo: implausible dimensions in " + path);

  FlowField flow(height, width);
  std::vector<float> row(static_cast<std::size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw FormatError("read_flo: truncated payload in " + path);
    for (int x = 0; x < width; ++x) {
      const float u = row[static_cast<std::size_t>(x) * 2];
      const float v = row[static_cast<std::size_t>(x) * 2 + 1];
      const std::size_t i = flow.index(y, x);
      flow.u[i] = u;
      flow.v[i] = v;
      flow.valid[i] = std::abs(u) <= kFlowUnknownThreshold &&
                      std::abs(v) <= kFlowUnknownThreshold && std::isfinite(u) && std::isfinite(v);
    }
  }
  return flow;
}

void write_flo(const std::string& path, const FlowField& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_flo: cannot open " + path);

  const float magic = kFloMagic;
  const std::int32_t width = flow.w, height = flow.h;
  os.write(reinterpret_cast<const char*>(&magic), sizeof(magic));
  os.write(reinterpret_cast<const char*>(&width), sizeof(width));
  os.write(reinterpret_cast<const char*>(&height), sizeof(height));

  std::vector<float> row(static_cast<std::size_t>(flow.w) * 2);
  for (int y = 0; y < flow.h; ++y) {
    for (int x = 0; x < flow.w; ++x) {
      const std::size_t i = flow.index(y, x);
      row[static_cast<std::size_t>(x) * 2] = flow.valid[i] ? flow.u[i] : kFlowUnknownSentinel;
      row[static_cast<std::size_t>(x) * 2 + 1] = flow.valid[i] ? flow.v[i] : kFlowUnknownSentinel;
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw IoError("write_flo: write failed for " + path);
}

}  // namespace oflow
