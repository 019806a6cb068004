#include <algorithm>
#include <cmath>

#include "oflow/flow.hpp"
#include "oflow/image.hpp"

namespace oflow {

namespace {

// Middlebury color wheel: smooth transitions across six hue arcs.
constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
constexpr int kWheelSize = kRY + kYG + kGC + kCB + kBM + kMR;

struct Wheel {
  float rgb[kWheelSize][3];
};

Wheel make_wheel() {
  Wheel w{};
  int k = 0;
  for (int i = 0; i < kRY; ++i, ++k) {
    w.rgb[k][0] = 1.0f;
    w.rgb[k][1] = static_cast<float>(i) / kRY;
  }
  for (int i = 0; i < kYG; ++i, ++k) {
    w.rgb[k][0] = 1.0f - static_cast<float>(i) / kYG;
    w.rgb[k][1] = 1.0f;
  }
  for (int i = 0; i < kGC; ++i, ++k) {
    w.rgb[k][1] = 1.0f;
    w.rgb[k][2] = static_cast<float>(i) / kGC;
  }
  for (int i = 0; i < kCB; ++i, ++k) {
    w.rgb[k][1] = 1.0f - static_cast<float>(i) / kCB;
    w.rgb[k][2] = 1.0f;
  }
  for (int i = 0; i < kBM; ++i, ++k) {
    w.rgb[k][2] = 1.0f;
    w.rgb[k][0] = static_cast<float>(i) / kBM;
  }
  for (int i = 0; i < kMR; ++i, ++k) {
    w.rgb[k][2] = 1.0f - static_cast<float>(i) / kMR;
    w.rgb[k][0] = 1.0f;
  }
  return w;
}

const Wheel& wheel() {
  static const Wheel w = make_wheel();
  return w;
}

}  // namespace

std::array<float, 3> flow_wheel_color(float angle, float saturation) {
  const double a = angle / M_PI;  // in [-1, 1]
  const double fk = (a + 1.0) / 2.0 * (kWheelSize - 1);
  int k0 = static_cast<int>(std::floor(fk));
  k0 = std::clamp(k0, 0, kWheelSize - 1);
  const int k1 = (k0 + 1) % kWheelSize;
  const double f = fk - k0;
  const float sat = std::clamp(saturation, 0.0f, 1.0f);
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double col = (1.0 - f) * wheel().rgb[k0][c] + f * wheel().rgb[k1][c];
    out[c] = static_cast<float>(1.0 - sat * (1.0 - col));  // desaturate toward white
  }
  return out;
}

Image colorize_flow(const FlowField& flow, float max_mag) {
  if (max_mag <= 0.0f) {
    double best = 0.0;
    for (std::size_t i = 0; i < flow.pixel_count(); ++i) {
      if (!flow.valid[i]) continue;
      const double mag = std::hypot(static_cast<double>(flow.u[i]), static_cast<double>(flow.v[i]));
      best = std::max(best, mag);
    }
    max_mag = static_cast<float>(best);
  }
  const float norm = max_mag > 0.0f ? max_mag : 1.0f;

  Image img(flow.h, flow.w);
  for (int y = 0; y < flow.h; ++y)
    for (int x = 0; x < flow.w; ++x) {
      const std::size_t i = flow.index(y, x);
      if (!flow.valid[i]) continue;  // invalid pixels stay black
      const float u = flow.u[i], v = flow.v[i];
      const float mag = std::hypot(u, v);
      const auto rgb = flow_wheel_color(std::atan2(v, u), mag / norm);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
    }
  return img;
}

}  // namespace oflow
