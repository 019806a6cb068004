#include "oflow/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace oflow {

namespace {

// Reflect fold (border repeated), robust to pads wider than the source.
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

void check_members(const SamplePair& s) {
  if (s.frame1.h <= 0 || s.frame1.w <= 0)
    throw InputError("sample " + s.id + ": empty frames");
  if (s.frame1.h != s.frame2.h || s.frame1.w != s.frame2.w)
    throw InputError("sample " + s.id + ": frames differ in size");
  if (!s.has_approx())
    throw InputError("sample " + s.id +
                     ": no approximate flow; run block matching before assembling input");
  if (s.approx.h != s.frame1.h || s.approx.w != s.frame1.w)
    throw InputError("sample " + s.id + ": approximate flow size mismatch");
  if (s.has_gt() && (s.gt.h != s.frame1.h || s.gt.w != s.frame1.w))
    throw InputError("sample " + s.id + ": ground-truth size mismatch");
}

}  // namespace

int pad16(int x) { return (x + 15) / 16 * 16; }

AssembledInput assemble_input(const SamplePair& s) {
  check_members(s);
  const int h = s.frame1.h, w = s.frame1.w;
  const int ph = pad16(h), pw = pad16(w);

  AssembledInput out;
  out.orig_h = h;
  out.orig_w = w;
  out.input = Tensor(Shape{1, ph, pw, 8});
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect(y, h);
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect(x, w);
      float* px = &out.input.data[out.input.index(0, y, x, 0)];
      for (int c = 0; c < 3; ++c) {
        px[c] = s.frame1.at(sy, sx, c);
        px[3 + c] = s.frame2.at(sy, sx, c);
      }
      const std::size_t fi = s.approx.index(sy, sx);
      px[6] = s.approx.u[fi];
      px[7] = s.approx.v[fi];
    }
  }
  return out;
}

FlowField crop_prediction(const Tensor& flow, int orig_h, int orig_w) {
  if (flow.shape.n != 1 || flow.shape.c != 2)
    throw ShapeError("crop_prediction: expected shape (1, h, w, 2), got " + to_string(flow.shape));
  if (orig_h > flow.shape.h || orig_w > flow.shape.w)
    throw ShapeError("crop_prediction: crop larger than prediction");
  FlowField out(orig_h, orig_w);
  for (int y = 0; y < orig_h; ++y)
    for (int x = 0; x < orig_w; ++x) {
      const std::size_t i = out.index(y, x);
      out.u[i] = flow.at(0, y, x, 0);
      out.v[i] = flow.at(0, y, x, 1);
    }
  return out;
}

FlowField pad_gt(const FlowField& gt, int padded_h, int padded_w) {
  if (padded_h < gt.h || padded_w < gt.w) throw ShapeError("pad_gt: target smaller than source");
  FlowField out(padded_h, padded_w);
  std::fill(out.valid.begin(), out.valid.end(), std::uint8_t{0});
  for (int y = 0; y < gt.h; ++y)
    for (int x = 0; x < gt.w; ++x) {
      const std::size_t src = gt.index(y, x), dst = out.index(y, x);
      out.u[dst] = gt.u[src];
      out.v[dst] = gt.v[src];
      out.valid[dst] = gt.valid[src];
    }
  return out;
}

namespace {

Image crop_image(const Image& img, int y0, int x0, int size) {
  Image out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

FlowField crop_flow(const FlowField& f, int y0, int x0, int size) {
  FlowField out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const std::size_t src = f.index(y0 + y, x0 + x), dst = out.index(y, x);
      out.u[dst] = f.u[src];
      out.v[dst] = f.v[src];
      out.valid[dst] = f.valid[src];
    }
  return out;
}

Image hflip_image(const Image& img) {
  Image out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
  return out;
}

FlowField hflip_flow(const FlowField& f) {
  FlowField out(f.h, f.w);
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      const std::size_t src = f.index(y, f.w - 1 - x), dst = out.index(y, x);
      out.u[dst] = -f.u[src];  // mirrored x reverses horizontal motion
      out.v[dst] = f.v[src];
      out.valid[dst] = f.valid[src];
    }
  return out;
}

}  // namespace

SamplePair crop_sample(const SamplePair& s, int y0, int x0, int size) {
  if (y0 < 0 || x0 < 0 || y0 + size > s.frame1.h || x0 + size > s.frame1.w)
    throw InputError("crop_sample: crop outside image for " + s.id);
  SamplePair out;
  out.id = s.id;
  out.frame1 = crop_image(s.frame1, y0, x0, size);
  out.frame2 = crop_image(s.frame2, y0, x0, size);
  if (s.has_approx()) out.approx = crop_flow(s.approx, y0, x0, size);
  if (s.has_gt()) out.gt = crop_flow(s.gt, y0, x0, size);
  return out;
}

SamplePair hflip_sample(const SamplePair& s) {
  SamplePair out;
  out.id = s.id;
  out.frame1 = hflip_image(s.frame1);
  out.frame2 = hflip_image(s.frame2);
  if (s.has_approx()) out.approx = hflip_flow(s.approx);
  if (s.has_gt()) out.gt = hflip_flow(s.gt);
  return out;
}

namespace {

std::vector<std::string> sorted_dir_names(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> sorted_files_with_ext(const fs::path& dir, const std::string& ext) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext)
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

std::vector<DatasetEntry> list_sintel(const std::string& root, const std::string& pass) {
  const fs::path pass_dir = fs::path(root) / pass;
  if (!fs::is_directory(pass_dir))
    throw IoError("list_sintel: missing directory " + pass_dir.string());
  const fs::path flow_dir = fs::path(root) / "flow";

  std::vector<DatasetEntry> entries;
  for (const auto& scene : sorted_dir_names(pass_dir)) {
    const auto frames = sorted_files_with_ext(pass_dir / scene, ".png");
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
      DatasetEntry e;
      const std::string stem = fs::path(frames[i]).stem().string();
      e.id = scene + "/" + stem;
      e.frame1_path = (pass_dir / scene / frames[i]).string();
      e.frame2_path = (pass_dir / scene / frames[i + 1]).string();
      const fs::path flo = flow_dir / scene / (stem + ".flo");
      if (fs::exists(flo)) e.gt_path = flo.string();
      entries.push_back(std::move(e));
    }
  }
  return entries;
}

SintelSplit split_sintel(const std::vector<DatasetEntry>& entries,
                         const std::vector<std::string>& val_scenes) {
  SintelSplit split;
  for (const auto& e : entries) {
    const auto slash = e.id.find('/');
    const std::string scene = e.id.substr(0, slash);
    const bool in_val =
        std::find(val_scenes.begin(), val_scenes.end(), scene) != val_scenes.end();
    (in_val ? split.val : split.train).push_back(e);
  }
  return split;
}

std::vector<std::string> default_sintel_val_scenes() {
  // 140 of 1041 pairs; the scene pair counts cannot reach 141 exactly without
  // splitting a scene across both sets.
  return {"alley_2", "ambush_2", "ambush_4", "market_6"};
}

std::vector<std::string> load_scene_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_scene_list: cannot open " + path);
  std::vector<std::string> scenes;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    if (start < line.size()) scenes.push_back(line.substr(start));
  }
  return scenes;
}

std::vector<DatasetEntry> list_middlebury(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError("list_middlebury: missing directory " + root);
  std::vector<DatasetEntry> entries;
  for (const auto& seq : sorted_dir_names(root)) {
    const fs::path dir = fs::path(root) / seq;
    const fs::path f1 = dir / "frame10.png", f2 = dir / "frame11.png", gt = dir / "flow10.flo";
    if (!fs::exists(f1) || !fs::exists(f2) || !fs::exists(gt)) continue;
    entries.push_back(DatasetEntry{seq, f1.string(), f2.string(), gt.string()});
  }
  return entries;
}

SamplePair load_sample(const DatasetEntry& entry, bool require_gt) {
  if (require_gt && entry.gt_path.empty())
    throw IoError("load_sample: pair " + entry.id + " has no ground-truth flow file");
  SamplePair s;
  s.id = entry.id;
  s.frame1 = read_image(entry.frame1_path);
  s.frame2 = read_image(entry.frame2_path);
  if (!entry.gt_path.empty()) s.gt = read_flo(entry.gt_path);
  return s;
}

}  // namespace oflow
