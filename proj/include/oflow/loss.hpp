#pragma once

#include <vector>

#include "oflow/flow.hpp"
#include "oflow/tensor.hpp"

namespace oflow {

// Normalized endpoint error: NE = sqrt(sum over valid pixels of
// |pred - gt|^2 / (|grad gt|^2 + epsilon)), where |pred - gt|^2 sums the
// squared u and v differences and |grad gt|^2 sums all four spatial partials
// of the ground-truth flow.
//
// The partials use central differences in the interior and one-sided
// differences at borders; a neighbor that is out of bounds or masked invalid
// is treated like a border. The same discretization defines the contract for
// any reference implementation.
struct NeConfig {
  float epsilon = 1e-2f;
  enum class GtGradient { CentralOneSidedBorders } gt_gradient =
      GtGradient::CentralOneSidedBorders;
};

// Pixels masked invalid in gt (or in pred) are excluded. Throws DomainError
// when no pixel is valid.
double ne_loss(const FlowField& pred, const FlowField& gt, const NeConfig& cfg = {});

// d(NE)/d(pred) per pixel: (pred - gt) / ((|grad gt|^2 + epsilon) * NE).
// Defined as zero everywhere when NE == 0; masked pixels get zero gradient.
FlowField ne_gradient(const FlowField& pred, const FlowField& gt, const NeConfig& cfg = {});

// Mean over valid pixels of sqrt(du^2 + dv^2).
double average_epe(const FlowField& pred, const FlowField& gt);

// Squared gradient energy |grad gt|^2 + 0 per pixel, exposed for reporting.
std::vector<double> gt_gradient_energy(const FlowField& gt);

// Batch forms over (n, h, w, 2) prediction tensors, one ground-truth field
// per batch entry. The batch loss is the mean of per-sample NE values.
template <typename T>
double batch_ne_loss(const TensorT<T>& pred, const std::vector<FlowField>& gt,
                     const NeConfig& cfg = {});

// d(mean per-sample NE)/d(pred).
Tensor batch_ne_gradient(const Tensor& pred, const std::vector<FlowField>& gt,
                         const NeConfig& cfg = {});

double batch_average_epe(const Tensor& pred, const std::vector<FlowField>& gt);

// Per-sample prediction slice of a (n, h, w, 2) tensor as a FlowField.
FlowField flow_from_tensor(const Tensor& pred, int sample);

}  // namespace oflow
