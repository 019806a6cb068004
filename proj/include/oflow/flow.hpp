#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "oflow/errors.hpp"

namespace oflow {

struct Image;

// Per-pixel 2-D displacement map in pixel units, with a validity mask that
// excludes unknown ground truth from losses and metrics.
struct FlowField {
  int h = 0;
  int w = 0;
  std::vector<float> u;  // h*w row-major
  std::vector<float> v;
  std::vector<std::uint8_t> valid;

  FlowField() = default;
  FlowField(int height, int width)
      : h(height), w(width), u(pixel_count(), 0.0f), v(pixel_count(), 0.0f),
        valid(pixel_count(), 1) {}

  static FlowField constant(int height, int width, float u0, float v0) {
    FlowField f(height, width);
    for (auto& x : f.u) x = u0;
    for (auto& x : f.v) x = v0;
    return f;
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(h) * w; }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * w + x; }
};

// Middlebury sentinel: values with magnitude above this are unknown flow.
inline constexpr float kFlowUnknownThreshold = 1e9f;
inline constexpr float kFlowUnknownSentinel = 1e10f;

// Middlebury .flo codec: float magic 202021.25, int32 width, int32 height,
// then row-major interleaved (u, v) float32, all little-endian. Reading marks
// sentinel magnitudes invalid; writing emits the sentinel for invalid pixels.
FlowField read_flo(const std::string& path);
void write_flo(const std::string& path, const FlowField& flow);

// Color-wheel rendering. max_mag <= 0 selects the maximum magnitude over
// valid pixels; invalid pixels render black.
Image colorize_flow(const FlowField& flow, float max_mag = 0.0f);

// RGB in [0,1] of the wheel at a given angle (radians, from atan2(v, u)) and
// saturation in [0,1]; saturation 0 is white.
std::array<float, 3> flow_wheel_color(float angle, float saturation);

}  // namespace oflow
