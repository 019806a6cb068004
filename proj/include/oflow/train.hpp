#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oflow/blockmatch.hpp"
#include "oflow/dataset.hpp"
#include "oflow/graph.hpp"
#include "oflow/loss.hpp"

namespace oflow {

struct TrainConfig {
  std::string arch = "finalnet";
  int batch_size = 6;
  float lr_initial = 1e-7f;
  float lr_after_half = 1e-8f;  // takes over after the first half of the epochs
  float momentum = 0.9f;
  int epochs = 200;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;

  int crop_size = 256;  // multiple of 16; 0 trains on full padded frames
  bool augment_flip = true;
  float ne_epsilon = 1e-2f;
  bool prefetch = false;  // assemble the next batch on a worker thread
  int val_every = 1;      // validation cadence in epochs
  int max_iterations = 0;       // stop after this many SGD steps (0 = no cap)
  double stop_train_epe = 0.0;  // stop once the epoch train EPE drops below (0 = off)
  BlockMatchConfig guide;
};

// Flat key=value file; '#' comments and blank lines are ignored. Unknown keys
// are errors so typos do not silently train with defaults.
TrainConfig load_train_config(const std::string& path);
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

struct EpochMetrics {
  int epoch = 0;
  double train_epe = 0.0;
  double val_epe = 0.0;  // NaN when validation did not run this epoch
};

struct Checkpoint {
  int epoch = 0;
  Network net;
  std::vector<std::vector<float>> velocity;  // aligned with parameter_arrays
  std::vector<EpochMetrics> history;
};

Checkpoint fresh_checkpoint(const TrainConfig& cfg);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Classical momentum: v <- momentum * v - lr * g; p <- p + v.
void sgd_momentum_step(std::span<float> params, std::span<const float> grads,
                       std::span<float> velocity, float lr, float momentum);

struct TrainCallbacks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(int iteration, double loss, double batch_epe)> on_iteration;
};

// Seeded shuffled mini-batches; loss is the mean per-sample NE. Resumes from
// start.epoch and runs through cfg.epochs. When out_dir is non-empty, writes
// metrics.csv (epoch, train_epe, val_epe), periodic epoch checkpoints,
// last.ckpt and best.ckpt (by validation EPE). Aborts with NumericError
// naming the batch if the loss goes non-finite.
Checkpoint train_loop(Checkpoint start, const std::vector<SamplePair>& train_set,
                      const std::vector<SamplePair>& val_set, const TrainConfig& cfg,
                      const std::string& out_dir, const TrainCallbacks& callbacks = {});

using Predictor = std::function<FlowField(const SamplePair&)>;

// Full-resolution inference: assemble, forward in inference phase, un-pad.
FlowField infer_flow(Network& net, const SamplePair& sample);
Predictor network_predictor(Network& net);

struct EvalRow {
  std::string id;
  double guide_epe = 0.0;  // block-matching baseline
  double net_epe = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_guide_epe = 0.0;
  double mean_net_epe = 0.0;
};

// Per-sample average EPE for the predictor and for the guide flow already
// attached to each sample. Samples must carry ground truth and guide flow.
EvalReport evaluate(const Predictor& predictor, const std::vector<SamplePair>& samples);

// One row per sample plus a MEAN row; columns id, blockmatch_epe, network_epe.
void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace oflow
