#pragma once

#include "oflow/flow.hpp"
#include "oflow/image.hpp"
#include "oflow/tensor.hpp"

namespace oflow {

// Exhaustive patch search with a sum-of-absolute-differences cost over RGB.
// Defaults keep the pre-computation cheap while covering typical sub-9-pixel
// motion with room to spare.
struct BlockMatchConfig {
  int block_size = 9;     // odd, >= 3
  int search_radius = 15;  // >= 1, per axis
  int step = 9;            // block anchor stride; == block_size tiles without overlap
};

// For each block anchor in frame1, searches displacements within
// +-search_radius in frame2 and fills the block with the winning (u, v).
// Candidate windows leaving frame2 are skipped; (0, 0) is always a candidate.
// SAD accumulates in double over (y, x, channel) row-major order, and ties
// break by smaller u^2 + v^2, then by (v, u) enumeration order, making the
// output bit-reproducible.
FlowField block_match(const Image& frame1, const Image& frame2,
                      const BlockMatchConfig& cfg = {});

// (1, h, w, 2) tensor with u in channel 0 and v in channel 1, pixel units.
Tensor flow_to_guide_channels(const FlowField& flow);

// Inverse of flow_to_guide_channels; the result is fully valid.
FlowField guide_channels_to_flow(const Tensor& guide);

}  // namespace oflow
