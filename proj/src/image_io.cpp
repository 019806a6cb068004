#include "oflow/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace oflow {

namespace {

Image from_rgb8(const std::vector<std::uint8_t>& buf, int h, int w) {
  Image img(h, w);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = buf[i] / 255.0f;
  return img;
}

std::vector<std::uint8_t> to_rgb8(const Image& img) {
  std::vector<std::uint8_t> buf(img.rgb.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
    buf[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return buf;
}

Image read_png_file(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw FormatError("read_image: libpng rejected " + path + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw FormatError("read_image: PNG decode failed for " + path + ": " + msg);
  }
  return from_rgb8(buf, static_cast<int>(png.height), static_cast<int>(png.width));
}

int read_ppm_token(std::istream& is, const std::string& path) {
  // Skips whitespace and '#' comments between header fields.
  while (is) {
    const int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  int value = -1;
  if (!(is >> value)) throw FormatError("read_image: malformed PPM header in " + path);
  return value;
}

Image read_ppm_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_image: cannot open " + path);
  char magic[2] = {};
  is.read(magic, 2);
  if (!is || magic[0] != 'P' || magic[1] != '6')
    throw FormatError("read_image: not a P6 PPM: " + path);
  const int w = read_ppm_token(is, path);
  const int h = read_ppm_token(is, path);
  const int maxval = read_ppm_token(is, path);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw FormatError("read_image: unsupported PPM header in " + path);
  is.get();  // single whitespace byte after maxval
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw FormatError("read_image: truncated PPM payload in " + path);
  return from_rgb8(buf, h, w);
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("read_image: cannot open " + path);
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), sizeof(sig));
  probe.close();
  if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') return read_png_file(path);
  if (sig[0] == 'P' && sig[1] == '6') return read_ppm_file(path);
  throw FormatError("read_image: unrecognized image format: " + path);
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_ppm: cannot open " + path);
  os << "P6\n" << img.w << " " << img.h << "\n255\n";
  const auto buf = to_rgb8(img);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write_ppm: write failed for " + path);
}

void write_png(const std::string& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.format = PNG_FORMAT_RGB;
  png.width = static_cast<png_uint_32>(img.w);
  png.height = static_cast<png_uint_32>(img.h);
  const auto buf = to_rgb8(img);
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("write_png: encode failed for " + path + ": " + png.message);
}

void write_image(const std::string& path, const Image& img) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    write_png(path, img);
  else
    write_ppm(path, img);
}

}  // namespace oflow
