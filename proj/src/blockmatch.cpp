#include "oflow/blockmatch.hpp"

#include <cmath>
#include <cstdlib>

namespace oflow {

namespace {

void validate(const Image& f1, const Image& f2, const BlockMatchConfig& cfg) {
  if (cfg.block_size < 3 || cfg.block_size % 2 == 0)
    throw InputError("block_match: block_size must be odd and >= 3");
  if (cfg.search_radius < 1) throw InputError("block_match: search_radius must be >= 1");
  if (cfg.step < 1) throw InputError("block_match: step must be >= 1");
  if (f1.h != f2.h || f1.w != f2.w)
    throw InputError("block_match: frames differ in size");
  if (f1.h < cfg.block_size || f1.w < cfg.block_size)
    throw InputError("block_match: image smaller than block_size");
}

double sad(const Image& f1, const Image& f2, int y0, int y1, int x0, int x1, int dv, int du) {
  double acc = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < 3; ++c)
        acc += std::abs(static_cast<double>(f1.at(y, x, c)) - f2.at(y + dv, x + du, c));
  return acc;
}

}  // namespace

FlowField block_match(const Image& frame1, const Image& frame2, const BlockMatchConfig& cfg) {
  validate(frame1, frame2, cfg);
  const int h = frame1.h, w = frame1.w, r = cfg.search_radius;

  FlowField flow(h, w);
  for (int by = 0; by < h; by += cfg.step) {
    const int y0 = by, y1 = std::min(by + cfg.block_size, h);  // border blocks clamp
    for (int bx = 0; bx < w; bx += cfg.step) {
      const int x0 = bx, x1 = std::min(bx + cfg.block_size, w);

      int best_u = 0, best_v = 0;
      double best_cost = sad(frame1, frame2, y0, y1, x0, x1, 0, 0);
      int best_mag = 0;
      for (int dv = -r; dv <= r; ++dv) {
        if (y0 + dv < 0 || y1 + dv > h) continue;
        for (int du = -r; du <= r; ++du) {
          if (x0 + du < 0 || x1 + du > w) continue;
          if (du == 0 && dv == 0) continue;
          const double cost = sad(frame1, frame2, y0, y1, x0, x1, dv, du);
          const int mag = du * du + dv * dv;
          if (cost < best_cost || (cost == best_cost && mag < best_mag)) {
            best_cost = cost;
            best_u = du;
            best_v = dv;
            best_mag = mag;
          }
        }
      }

      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const std::size_t i = flow.index(y, x);
          flow.u[i] = static_cast<float>(best_u);
          flow.v[i] = static_cast<float>(best_v);
        }
    }
  }
  return flow;
}

Tensor flow_to_guide_channels(const FlowField& flow) {
  Tensor guide(Shape{1, flow.h, flow.w, 2});
  for (std::size_t i = 0; i < flow.pixel_count(); ++i) {
    guide.data[i * 2] = flow.u[i];
    guide.data[i * 2 + 1] = flow.v[i];
  }
  return guide;
}

FlowField guide_channels_to_flow(const Tensor& guide) {
  if (guide.shape.n != 1 || guide.shape.c != 2)
    throw ShapeError("guide_channels_to_flow: expected shape (1, h, w, 2), got " +
                     to_string(guide.shape));
  FlowField flow(guide.shape.h, guide.shape.w);
  for (std::size_t i = 0; i < flow.pixel_count(); ++i) {
    flow.u[i] = guide.data[i * 2];
    flow.v[i] = guide.data[i * 2 + 1];
  }
  return flow;
}

}  // namespace oflow
