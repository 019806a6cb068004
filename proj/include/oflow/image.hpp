#pragma once

#include <string>
#include <vector>

#include "oflow/errors.hpp"

namespace oflow {

// RGB image with float channels in [0, 1], row-major (h, w, 3).
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int height, int width) : h(height), w(width), rgb(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * w + x) * 3 + c;
  }
  float& at(int y, int x, int c) { return rgb[index(y, x, c)]; }
  const float& at(int y, int x, int c) const { return rgb[index(y, x, c)]; }
};

// Reads an 8-bit PNG or binary PPM (P6), dispatching on the file magic.
Image read_image(const std::string& path);

void write_ppm(const std::string& path, const Image& img);
void write_png(const std::string& path, const Image& img);

// Dispatches on the output extension: ".png" writes PNG, anything else PPM.
void write_image(const std::string& path, const Image& img);

}  // namespace oflow
