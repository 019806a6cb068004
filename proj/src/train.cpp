#include "oflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace oflow {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw InputError("config: expected boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "arch") cfg.arch = value;
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "lr_initial") cfg.lr_initial = std::stof(value);
    else if (key == "lr_after_half") cfg.lr_after_half = std::stof(value);
    else if (key == "momentum") cfg.momentum = std::stof(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
    else if (key == "crop_size") cfg.crop_size = std::stoi(value);
    else if (key == "augment_flip") cfg.augment_flip = parse_bool(value);
    else if (key == "ne_epsilon") cfg.ne_epsilon = std::stof(value);
    else if (key == "prefetch") cfg.prefetch = parse_bool(value);
    else if (key == "val_every") cfg.val_every = std::stoi(value);
    else if (key == "max_iterations") cfg.max_iterations = std::stoi(value);
    else if (key == "stop_train_epe") cfg.stop_train_epe = std::stod(value);
    else if (key == "bm_block_size") cfg.guide.block_size = std::stoi(value);
    else if (key == "bm_search_radius") cfg.guide.search_radius = std::stoi(value);
    else if (key == "bm_step") cfg.guide.step = std::stoi(value);
    else throw InputError("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw InputError("config: bad value '" + value + "' for key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw InputError("config: value '" + value + "' out of range for key '" + key + "'");
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_train_config: cannot open " + path);
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("config: line " + std::to_string(line_no) + " is not key=value");
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw InputError("config: batch_size must be >= 1");
  if (cfg.lr_initial <= 0 || cfg.lr_after_half <= 0)
    throw InputError("config: learning rates must be > 0");
  if (cfg.epochs < 0) throw InputError("config: epochs must be >= 0");
  if (cfg.crop_size != 0 && (cfg.crop_size < 16 || cfg.crop_size % 16 != 0))
    throw InputError("config: crop_size must be 0 or a positive multiple of 16");
  if (cfg.ne_epsilon <= 0) throw InputError("config: ne_epsilon must be > 0");
}

Checkpoint fresh_checkpoint(const TrainConfig& cfg) {
  validate_train_config(cfg);
  Checkpoint ckpt;
  if (cfg.arch == "plainnet") ckpt.net = build_plainnet(cfg.seed);
  else if (cfg.arch == "finalnet") ckpt.net = build_finalnet(cfg.seed);
  else throw InputError("config: arch must be plainnet or finalnet, got '" + cfg.arch + "'");
  return ckpt;
}

namespace {

constexpr char kCkptMagic[4] = {'O', 'F', 'C', 'P'};
constexpr std::uint8_t kCkptVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw FormatError("checkpoint: truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_checkpoint: cannot open " + path);
  os.write(kCkptMagic, sizeof(kCkptMagic));
  os.put(static_cast<char>(kCkptVersion));
  save_network(os, ckpt.net);
  write_u32(os, static_cast<std::uint32_t>(ckpt.epoch));
  write_u32(os, static_cast<std::uint32_t>(ckpt.velocity.size()));
  for (const auto& v : ckpt.velocity) {
    write_u32(os, static_cast<std::uint32_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  write_u32(os, static_cast<std::uint32_t>(ckpt.history.size()));
  for (const auto& m : ckpt.history) {
    write_u32(os, static_cast<std::uint32_t>(m.epoch));
    os.write(reinterpret_cast<const char*>(&m.train_epe), sizeof(m.train_epe));
    os.write(reinterpret_cast<const char*>(&m.val_epe), sizeof(m.val_epe));
  }
  if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4] = {};
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCkptMagic, sizeof(kCkptMagic)) != 0)
    throw FormatError("load_checkpoint: bad magic in " + path);
  const int version = is.get();
  if (version != kCkptVersion)
    throw FormatError("load_checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.net = load_network(is);
  ckpt.epoch = static_cast<int>(read_u32(is));
  const auto n_arrays = read_u32(is);
  ckpt.velocity.resize(n_arrays);
  for (auto& v : ckpt.velocity) {
    v.resize(read_u32(is));
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  const auto n_history = read_u32(is);
  ckpt.history.resize(n_history);
  for (auto& m : ckpt.history) {
    m.epoch = static_cast<int>(read_u32(is));
    is.read(reinterpret_cast<char*>(&m.train_epe), sizeof(m.train_epe));
    is.read(reinterpret_cast<char*>(&m.val_epe), sizeof(m.val_epe));
  }
  if (!is) throw FormatError("load_checkpoint: truncated file " + path);
  return ckpt;
}

void sgd_momentum_step(std::span<float> params, std::span<const float> grads,
                       std::span<float> velocity, float lr, float momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw ShapeError("sgd_momentum_step: array sizes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] - lr * grads[i];
    params[i] += velocity[i];
  }
}

namespace {

struct Batch {
  Tensor input;
  std::vector<FlowField> gt;
  std::vector<std::string> ids;
};

struct SampleDraw {
  int index = 0;
  int crop_y = -1, crop_x = -1;  // -1 = full-frame path
  bool flip = false;
};

Batch make_batch(const std::vector<SamplePair>& samples, const std::vector<SampleDraw>& draws,
                 int crop_size) {
  Batch batch;
  std::vector<Tensor> inputs;
  for (const auto& d : draws) {
    SamplePair s = samples[d.index];
    if (d.crop_y >= 0) s = crop_sample(s, d.crop_y, d.crop_x, crop_size);
    if (d.flip) s = hflip_sample(s);
    auto ai = assemble_input(s);
    batch.gt.push_back(pad_gt(s.gt, ai.input.shape.h, ai.input.shape.w));
    batch.ids.push_back(s.id);
    inputs.push_back(std::move(ai.input));
  }
  for (std::size_t i = 1; i < inputs.size(); ++i)
    if (!(inputs[i].shape == inputs[0].shape))
      throw InputError("train: batch mixes frame sizes " + to_string(inputs[0].shape) + " and " +
                       to_string(inputs[i].shape) + "; set crop_size to make them uniform");
  const Shape s0 = inputs.empty() ? Shape{} : inputs[0].shape;
  batch.input = Tensor(Shape{static_cast<int>(inputs.size()), s0.h, s0.w, s0.c});
  for (std::size_t i = 0; i < inputs.size(); ++i)
    std::copy(inputs[i].data.begin(), inputs[i].data.end(),
              batch.input.data.begin() + static_cast<std::ptrdiff_t>(i * inputs[i].data.size()));
  return batch;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

double mean_val_epe(Network& net, const std::vector<SamplePair>& val_set) {
  double sum = 0.0;
  for (const auto& s : val_set) sum += average_epe(infer_flow(net, s), s.gt);
  return sum / static_cast<double>(val_set.size());
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  // splitmix64 over (seed, epoch) so resumed runs re-draw identical batches
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Checkpoint train_loop(Checkpoint start, const std::vector<SamplePair>& train_set,
                      const std::vector<SamplePair>& val_set, const TrainConfig& cfg,
                      const std::string& out_dir, const TrainCallbacks& callbacks) {
  validate_train_config(cfg);
  if (train_set.empty()) throw InputError("train: empty training set");
  for (const auto& s : train_set) {
    if (!s.has_gt()) throw InputError("train: sample " + s.id + " has no ground truth");
    if (!s.has_approx()) throw InputError("train: sample " + s.id + " has no guide flow");
  }
  for (const auto& s : val_set)
    if (!s.has_gt() || !s.has_approx())
      throw InputError("train: validation sample " + s.id + " missing gt or guide flow");

  Checkpoint ckpt = std::move(start);
  auto params = parameter_arrays(ckpt.net);
  if (ckpt.velocity.empty()) {
    ckpt.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      ckpt.velocity[i].assign(params[i]->size(), 0.0f);
  }
  if (ckpt.velocity.size() != params.size())
    throw StateError("train: checkpoint velocity does not match network parameters");

  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const bool existed = fs::exists(fs::path(out_dir) / "metrics.csv");
    csv.open(fs::path(out_dir) / "metrics.csv", std::ios::app);
    if (!existed) csv << "epoch,train_epe,val_epe\n";
  }

  const NeConfig ne_cfg{cfg.ne_epsilon};
  const int half_epochs = (cfg.epochs + 1) / 2;
  double best_val = std::numeric_limits<double>::infinity();
  int iterations_done = 0;
  bool stop = false;

  for (int epoch = ckpt.epoch + 1; epoch <= cfg.epochs && !stop; ++epoch) {
    const float lr = epoch <= half_epochs ? cfg.lr_initial : cfg.lr_after_half;
    std::mt19937_64 rng(epoch_seed(cfg.seed, epoch));

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);

    // All augmentation decisions are drawn up front in a fixed order, so the
    // prefetch thread cannot perturb the random stream.
    std::vector<std::vector<SampleDraw>> batch_draws;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      std::vector<SampleDraw> draws;
      for (std::size_t j = pos; j < std::min(order.size(), pos + cfg.batch_size); ++j) {
        SampleDraw d;
        d.index = order[j];
        const auto& s = train_set[d.index];
        if (cfg.crop_size > 0 && s.frame1.h >= cfg.crop_size && s.frame1.w >= cfg.crop_size) {
          d.crop_y = std::uniform_int_distribution<int>(0, s.frame1.h - cfg.crop_size)(rng);
          d.crop_x = std::uniform_int_distribution<int>(0, s.frame1.w - cfg.crop_size)(rng);
        }
        if (cfg.augment_flip) d.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        draws.push_back(d);
      }
      batch_draws.push_back(std::move(draws));
    }

    double epe_sum = 0.0;
    std::size_t samples_seen = 0;

    std::future<Batch> pending;
    auto batch_at = [&](std::size_t bi) {
      return make_batch(train_set, batch_draws[bi], cfg.crop_size);
    };
    if (cfg.prefetch && !batch_draws.empty())
      pending = std::async(std::launch::async, batch_at, 0);

    for (std::size_t bi = 0; bi < batch_draws.size(); ++bi) {
      Batch batch = cfg.prefetch ? pending.get() : batch_at(bi);
      if (cfg.prefetch && bi + 1 < batch_draws.size())
        pending = std::async(std::launch::async, batch_at, bi + 1);

      ForwardCache cache;
      const Tensor pred = forward(ckpt.net, batch.input, Phase::Train, &cache);
      const double loss = batch_ne_loss(pred, batch.gt, ne_cfg);
      if (!std::isfinite(loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(bi) + " (samples: " + join_ids(batch.ids) +
                           ")");
      const double batch_epe = batch_average_epe(pred, batch.gt);
      const Tensor grad_flow = batch_ne_gradient(pred, batch.gt, ne_cfg);
      const auto grads = backward(ckpt.net, cache, grad_flow);
      for (std::size_t i = 0; i < params.size(); ++i)
        sgd_momentum_step(*params[i], grads[i], ckpt.velocity[i], lr, cfg.momentum);

      epe_sum += batch_epe * static_cast<double>(batch.gt.size());
      samples_seen += batch.gt.size();
      ++iterations_done;
      if (callbacks.on_iteration) callbacks.on_iteration(iterations_done, loss, batch_epe);
      if (cfg.max_iterations > 0 && iterations_done >= cfg.max_iterations) {
        stop = true;
        break;
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_epe = epe_sum / static_cast<double>(samples_seen);
    m.val_epe = std::numeric_limits<double>::quiet_NaN();
    if (cfg.stop_train_epe > 0.0 && m.train_epe < cfg.stop_train_epe) stop = true;
    const bool last_epoch = stop || epoch == cfg.epochs;
    if (!val_set.empty() && (last_epoch || (cfg.val_every > 0 && epoch % cfg.val_every == 0)))
      m.val_epe = mean_val_epe(ckpt.net, val_set);

    ckpt.epoch = epoch;
    ckpt.history.push_back(m);
    if (callbacks.on_epoch) callbacks.on_epoch(m);

    if (csv.is_open()) {
      csv << m.epoch << "," << m.train_epe << ",";
      if (std::isfinite(m.val_epe)) csv << m.val_epe;
      csv << "\n";
      csv.flush();
    }
    if (!out_dir.empty()) {
      if (cfg.checkpoint_every > 0 && (epoch % cfg.checkpoint_every == 0 || last_epoch)) {
        std::ostringstream name;
        name << "epoch_" << epoch << ".ckpt";
        save_checkpoint((fs::path(out_dir) / name.str()).string(), ckpt);
      }
      save_checkpoint((fs::path(out_dir) / "last.ckpt").string(), ckpt);
      if (std::isfinite(m.val_epe) && m.val_epe < best_val) {
        best_val = m.val_epe;
        save_checkpoint((fs::path(out_dir) / "best.ckpt").string(), ckpt);
      }
    }
  }
  return ckpt;
}

FlowField infer_flow(Network& net, const SamplePair& sample) {
  auto ai = assemble_input(sample);
  const Tensor pred = forward(net, ai.input, Phase::Inference);
  return crop_prediction(pred, ai.orig_h, ai.orig_w);
}

Predictor network_predictor(Network& net) {
  return [&net](const SamplePair& s) { return infer_flow(net, s); };
}

EvalReport evaluate(const Predictor& predictor, const std::vector<SamplePair>& samples) {
  if (samples.empty()) throw InputError("evaluate: no samples");
  EvalReport report;
  double guide_sum = 0.0, net_sum = 0.0;
  for (const auto& s : samples) {
    if (!s.has_gt()) throw InputError("evaluate: sample " + s.id + " has no ground truth");
    if (!s.has_approx()) throw InputError("evaluate: sample " + s.id + " has no guide flow");
    EvalRow row;
    row.id = s.id;
    row.guide_epe = average_epe(s.approx, s.gt);
    row.net_epe = average_epe(predictor(s), s.gt);
    guide_sum += row.guide_epe;
    net_sum += row.net_epe;
    report.rows.push_back(std::move(row));
  }
  report.mean_guide_epe = guide_sum / static_cast<double>(samples.size());
  report.mean_net_epe = net_sum / static_cast<double>(samples.size());
  return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream os(path);
  if (!os) throw IoError("write_eval_csv: cannot open " + path);
  os << "id,blockmatch_epe,network_epe\n";
  for (const auto& r : report.rows)
    os << r.id << "," << r.guide_epe << "," << r.net_epe << "\n";
  os << "MEAN," << report.mean_guide_epe << "," << report.mean_net_epe << "\n";
  if (!os) throw IoError("write_eval_csv: write failed for " + path);
}

}  // namespace oflow
