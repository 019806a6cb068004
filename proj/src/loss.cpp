#include "oflow/loss.hpp"

#include <cmath>

namespace oflow {

namespace {

void require_same_dims(const FlowField& a, const FlowField& b, const char* what) {
  if (a.h != b.h || a.w != b.w)
    throw ShapeError(std::string(what) + ": flow dims " + std::to_string(a.h) + "x" +
                     std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                     std::to_string(b.w));
}

// One spatial partial of a gt plane at (y, x). Out-of-bounds or invalid
// neighbors degrade central differences to one-sided ones, then to zero.
double gt_partial(const std::vector<float>& plane, const std::vector<std::uint8_t>& valid, int h,
                  int w, int y, int x, int dy, int dx) {
  const auto idx = [w](int yy, int xx) { return static_cast<std::size_t>(yy) * w + xx; };
  const int yp = y + dy, xp = x + dx;
  const int ym = y - dy, xm = x - dx;
  const bool has_plus = yp >= 0 && yp < h && xp >= 0 && xp < w && valid[idx(yp, xp)];
  const bool has_minus = ym >= 0 && ym < h && xm >= 0 && xm < w && valid[idx(ym, xm)];
  const double center = plane[idx(y, x)];
  if (has_plus && has_minus)
    return (static_cast<double>(plane[idx(yp, xp)]) - plane[idx(ym, xm)]) / 2.0;
  if (has_plus) return static_cast<double>(plane[idx(yp, xp)]) - center;
  if (has_minus) return center - static_cast<double>(plane[idx(ym, xm)]);
  return 0.0;
}

template <typename T>
struct NeAccum {
  double sum = 0.0;           // sum of |r|^2 / (g + eps) over valid pixels
  std::size_t valid_count = 0;
};

// pred planes are strided so tensor slices (stride 2) and FlowField planes
// (stride 1) share one implementation.
template <typename T>
NeAccum<T> ne_sum(const T* pu, const T* pv, std::size_t stride,
                  const std::vector<std::uint8_t>* pred_valid, const FlowField& gt,
                  const std::vector<double>& energy, double eps) {
  NeAccum<T> acc;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!gt.valid[i] || (pred_valid && !(*pred_valid)[i])) continue;
    const double du = static_cast<double>(pu[i * stride]) - gt.u[i];
    const double dv = static_cast<double>(pv[i * stride]) - gt.v[i];
    acc.sum += (du * du + dv * dv) / (energy[i] + eps);
    ++acc.valid_count;
  }
  return acc;
}

}  // namespace

std::vector<double> gt_gradient_energy(const FlowField& gt) {
  std::vector<double> energy(gt.pixel_count(), 0.0);
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      const double ux = gt_partial(gt.u, gt.valid, gt.h, gt.w, y, x, 0, 1);
      const double uy = gt_partial(gt.u, gt.valid, gt.h, gt.w, y, x, 1, 0);
      const double vx = gt_partial(gt.v, gt.valid, gt.h, gt.w, y, x, 0, 1);
      const double vy = gt_partial(gt.v, gt.valid, gt.h, gt.w, y, x, 1, 0);
      energy[gt.index(y, x)] = ux * ux + uy * uy + vx * vx + vy * vy;
    }
  return energy;
}

double ne_loss(const FlowField& pred, const FlowField& gt, const NeConfig& cfg) {
  require_same_dims(pred, gt, "ne_loss");
  const auto energy = gt_gradient_energy(gt);
  const auto acc = ne_sum<float>(pred.u.data(), pred.v.data(), 1, &pred.valid, gt, energy,
                                 cfg.epsilon);
  if (acc.valid_count == 0) throw DomainError("ne_loss: all pixels masked");
  return std::sqrt(acc.sum);
}

FlowField ne_gradient(const FlowField& pred, const FlowField& gt, const NeConfig& cfg) {
  require_same_dims(pred, gt, "ne_gradient");
  const auto energy = gt_gradient_energy(gt);
  const auto acc = ne_sum<float>(pred.u.data(), pred.v.data(), 1, &pred.valid, gt, energy,
                                 cfg.epsilon);
  if (acc.valid_count == 0) throw DomainError("ne_gradient: all pixels masked");
  const double ne = std::sqrt(acc.sum);

  FlowField grad(gt.h, gt.w);
  grad.valid = gt.valid;
  if (ne == 0.0) return grad;  // subgradient choice at the square root's kink
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!gt.valid[i] || !pred.valid[i]) continue;
    const double scale = 1.0 / ((energy[i] + cfg.epsilon) * ne);
    grad.u[i] = static_cast<float>((static_cast<double>(pred.u[i]) - gt.u[i]) * scale);
    grad.v[i] = static_cast<float>((static_cast<double>(pred.v[i]) - gt.v[i]) * scale);
  }
  return grad;
}

double average_epe(const FlowField& pred, const FlowField& gt) {
  require_same_dims(pred, gt, "average_epe");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!gt.valid[i] || !pred.valid[i]) continue;
    const double du = static_cast<double>(pred.u[i]) - gt.u[i];
    const double dv = static_cast<double>(pred.v[i]) - gt.v[i];
    sum += std::sqrt(du * du + dv * dv);
    ++count;
  }
  if (count == 0) throw DomainError("average_epe: all pixels masked");
  return sum / static_cast<double>(count);
}

namespace {

void check_batch(const Shape& s, const std::vector<FlowField>& gt, const char* what) {
  if (s.c != 2) throw ShapeError(std::string(what) + ": prediction must have 2 channels");
  if (s.n != static_cast<int>(gt.size()))
    throw ShapeError(std::string(what) + ": batch size mismatch");
  for (const auto& f : gt)
    if (f.h != s.h || f.w != s.w) throw ShapeError(std::string(what) + ": gt dims mismatch");
}

}  // namespace

template <typename T>
double batch_ne_loss(const TensorT<T>& pred, const std::vector<FlowField>& gt,
                     const NeConfig& cfg) {
  check_batch(pred.shape, gt, "batch_ne_loss");
  double total = 0.0;
  for (int n = 0; n < pred.shape.n; ++n) {
    const std::size_t base = pred.index(n, 0, 0, 0);
    const auto energy = gt_gradient_energy(gt[n]);
    const auto acc = ne_sum<T>(&pred.data[base], &pred.data[base + 1], 2, nullptr, gt[n], energy,
                               cfg.epsilon);
    if (acc.valid_count == 0)
      throw DomainError("batch_ne_loss: all pixels masked in sample " + std::to_string(n));
    total += std::sqrt(acc.sum);
  }
  return total / static_cast<double>(pred.shape.n);
}

template double batch_ne_loss<float>(const Tensor&, const std::vector<FlowField>&,
                                     const NeConfig&);
template double batch_ne_loss<double>(const TensorD&, const std::vector<FlowField>&,
                                      const NeConfig&);

Tensor batch_ne_gradient(const Tensor& pred, const std::vector<FlowField>& gt,
                         const NeConfig& cfg) {
  check_batch(pred.shape, gt, "batch_ne_gradient");
  Tensor grad(pred.shape);
  const double batch_scale = 1.0 / static_cast<double>(pred.shape.n);
  for (int n = 0; n < pred.shape.n; ++n) {
    const std::size_t base = pred.index(n, 0, 0, 0);
    const auto energy = gt_gradient_energy(gt[n]);
    const auto acc = ne_sum<float>(&pred.data[base], &pred.data[base + 1], 2, nullptr, gt[n],
                                   energy, cfg.epsilon);
    if (acc.valid_count == 0)
      throw DomainError("batch_ne_gradient: all pixels masked in sample " + std::to_string(n));
    const double ne = std::sqrt(acc.sum);
    if (ne == 0.0) continue;
    for (std::size_t i = 0; i < gt[n].pixel_count(); ++i) {
      if (!gt[n].valid[i]) continue;
      const double scale = batch_scale / ((energy[i] + cfg.epsilon) * ne);
      grad.data[base + i * 2] =
          static_cast<float>((static_cast<double>(pred.data[base + i * 2]) - gt[n].u[i]) * scale);
      grad.data[base + i * 2 + 1] = static_cast<float>(
          (static_cast<double>(pred.data[base + i * 2 + 1]) - gt[n].v[i]) * scale);
    }
  }
  return grad;
}

double batch_average_epe(const Tensor& pred, const std::vector<FlowField>& gt) {
  check_batch(pred.shape, gt, "batch_average_epe");
  double total = 0.0;
  for (int n = 0; n < pred.shape.n; ++n) total += average_epe(flow_from_tensor(pred, n), gt[n]);
  return total / static_cast<double>(pred.shape.n);
}

FlowField flow_from_tensor(const Tensor& pred, int sample) {
  if (pred.shape.c != 2) throw ShapeError("flow_from_tensor: tensor must have 2 channels");
  if (sample < 0 || sample >= pred.shape.n)
    throw ShapeError("flow_from_tensor: sample index out of range");
  FlowField f(pred.shape.h, pred.shape.w);
  const std::size_t base = pred.index(sample, 0, 0, 0);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    f.u[i] = pred.data[base + i * 2];
    f.v[i] = pred.data[base + i * 2 + 1];
  }
  return f;
}

}  // namespace oflow
