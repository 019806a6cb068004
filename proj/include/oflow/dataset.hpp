#pragma once

#include <string>
#include <vector>

#include "oflow/flow.hpp"
#include "oflow/image.hpp"
#include "oflow/tensor.hpp"

namespace oflow {

// Two adjacent frames plus the approximate (guide) flow and, when available,
// the ground truth. All members share dimensions.
struct SamplePair {
  Image frame1;
  Image frame2;
  FlowField approx;  // empty until the block-matching front end fills it
  FlowField gt;      // empty for inference-only samples
  std::string id;

  bool has_gt() const { return gt.h > 0; }
  bool has_approx() const { return approx.h > 0; }
};

// Smallest multiple of 16 at or above x; four clean halvings must reach the
// bottleneck and return.
int pad16(int x);

struct AssembledInput {
  Tensor input;  // (1, h', w', 8): R1 G1 B1 R2 G2 B2 u v
  int orig_h = 0;
  int orig_w = 0;
};

// Reflect-pads all eight channels to multiples of 16 (bottom/right) and
// records the crop box for un-padding the prediction.
AssembledInput assemble_input(const SamplePair& s);

// Crops a (1, h', w', 2) prediction back to the original frame size.
FlowField crop_prediction(const Tensor& flow, int orig_h, int orig_w);

// Ground truth padded to (h', w') with the padded band masked invalid.
FlowField pad_gt(const FlowField& gt, int padded_h, int padded_w);

// Training augmentation helpers. Cropping applies to frames, guide and gt
// alike; horizontal flips mirror x and negate u.
SamplePair crop_sample(const SamplePair& s, int y0, int x0, int size);
SamplePair hflip_sample(const SamplePair& s);

// One dataset record; paths stay unopened until load_sample.
struct DatasetEntry {
  std::string id;
  std::string frame1_path;
  std::string frame2_path;
  std::string gt_path;  // empty when no ground truth exists
};

// Sintel layout: root/<pass>/<scene>/frame_NNNN.png with ground truth at
// root/flow/<scene>/frame_NNNN.flo for the first frame of each pair.
// Ordering is lexicographic over scenes then frames regardless of filesystem
// enumeration order.
std::vector<DatasetEntry> list_sintel(const std::string& root, const std::string& pass);

struct SintelSplit {
  std::vector<DatasetEntry> train;
  std::vector<DatasetEntry> val;
};

// Scene-level split: every pair of a validation scene goes to val.
SintelSplit split_sintel(const std::vector<DatasetEntry>& entries,
                         const std::vector<std::string>& val_scenes);

// Validation scenes shipped with the toolkit (closest scene-level split to a
// 900/141 partition of the 1041 Sintel training pairs).
std::vector<std::string> default_sintel_val_scenes();

// One scene name per line; '#' starts a comment.
std::vector<std::string> load_scene_list(const std::string& path);

// Middlebury layout: root/<seq>/frame10.png, frame11.png, flow10.flo. Only
// sequences with ground truth are listed.
std::vector<DatasetEntry> list_middlebury(const std::string& root);

// Reads the images (and ground truth when present). require_gt makes a
// missing ground-truth file an error naming the pair.
SamplePair load_sample(const DatasetEntry& entry, bool require_gt);

}  // namespace oflow
