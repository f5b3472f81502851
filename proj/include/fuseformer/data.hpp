#pragma once

#include <filesystem>
#include <fstream>

#include "fuseformer/model.hpp"

namespace ff {

// ---------------------------------------------------------------------------
// Synthetic clip generation: colored shapes moving over a static background.
// Everything is a pure function of (seed, index), so a dataset is fixed by
// its spec alone. Motion uses integer velocities and reflects at the borders,
// keeping shapes inside the frame; content hidden behind a mask in one frame
// is visible in others because the shapes keep moving.

struct SyntheticSpec {
  size_t clips = 8;
  size_t frames = 8;
  size_t height = 64;
  size_t width = 64;
  std::vector<std::string> shapes = {"circle", "rectangle", "bar"};
  size_t shape_count = 3;
  std::string background = "gradient";  // flat | gradient | checker | any
  double vel_min = 1.0;
  double vel_max = 3.0;
  double drift_amp = 0.0;  // optional sinusoidal drift, px
  uint64_t seed = 1;

  void validate() const {
    if (clips < 1 || frames < 1) throw ConfigError("clips and frames >= 1");
    if (height % 4 || width % 4)
      throw ConfigError("extents must be divisible by 4");
    if (height < 16 || width < 16) throw ConfigError("extents must be >= 16");
    if (shapes.empty() || shape_count < 1)
      throw ConfigError("at least one shape required");
    for (const auto& s : shapes)
      if (s != "circle" && s != "rectangle" && s != "bar")
        throw ConfigError("unknown shape kind '" + s + "'");
    if (background != "flat" && background != "gradient" &&
        background != "checker" && background != "any")
      throw ConfigError("unknown background kind '" + background + "'");
    if (vel_min < 1.0 || vel_max < vel_min)
      throw ConfigError("need 1 <= vel_min <= vel_max so content moves");
    if (drift_amp < 0) throw ConfigError("drift_amp must be >= 0");
  }
};


enum class ShapeKind { circle, rectangle, bar };

struct MovingShape {
  ShapeKind kind = ShapeKind::circle;
  double cx0 = 0, cy0 = 0;   // center at frame 0
  double vx = 0, vy = 0;     // px per frame
  double half_w = 4, half_h = 4;  // radius for circles
  double color[3] = {0.5, 0.5, 0.5};
  double drift_amp = 0, drift_phase = 0;
};

namespace detail {

// Reflect x into [lo, hi] (triangle-wave extension).
inline double reflect_into(double x, double lo, double hi) {
  double span = hi - lo;
  if (span <= 0) return lo;
  double y = std::fmod(x - lo, 2 * span);
  if (y < 0) y += 2 * span;
  return y <= span ? lo + y : hi - (y - span);
}

}  // namespace detail

// Center trajectory: linear velocity plus optional sinusoidal drift,
// reflected at the borders so the shape stays at least partially in frame.
inline std::pair<double, double> shape_center_at(const MovingShape& sh,
                                                 size_t frame, size_t height,
                                                 size_t width) {
  double drift =
      sh.drift_amp * std::sin(0.7853981633974483 * double(frame) +
                              sh.drift_phase);
  double cx = sh.cx0 + sh.vx * double(frame) + drift;
  double cy = sh.cy0 + sh.vy * double(frame);
  return {detail::reflect_into(cx, sh.half_w, double(width) - 1 - sh.half_w),
          detail::reflect_into(cy, sh.half_h, double(height) - 1 - sh.half_h)};
}

namespace detail {

inline bool shape_covers(const MovingShape& sh, double cx, double cy,
                         size_t x, size_t y) {
  double dx = double(x) - cx, dy = double(y) - cy;
  switch (sh.kind) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= sh.half_w * sh.half_w;
    case ShapeKind::rectangle:
      return std::abs(dx) <= sh.half_w && std::abs(dy) <= sh.half_h;
    case ShapeKind::bar:
      return std::abs(dx) <= sh.half_w;  // full-height strip
  }
  return false;
}

inline ShapeKind shape_kind_from(const std::string& s) {
  if (s == "circle") return ShapeKind::circle;
  if (s == "rectangle") return ShapeKind::rectangle;
  return ShapeKind::bar;
}

}  // namespace detail

// The deterministic cast of one clip; exposed so tests can check trajectories
// against the rendered frames.
struct ClipScene {
  std::string background;
  double bg_color[3] = {0, 0, 0};
  double bg_color2[3] = {0, 0, 0};  // checker second color
  std::vector<MovingShape> shapes;
};

inline ClipScene plan_clip(const SyntheticSpec& spec, size_t index) {
  spec.validate();
  Rng rng = Rng(spec.seed).fork(0x636c6970ULL ^ index);
  ClipScene scene;
  scene.background = spec.background;
  if (scene.background == "any") {
    const char* kinds[3] = {"flat", "gradient", "checker"};
    scene.background = kinds[rng.below(3)];
  }
  for (int c = 0; c < 3; ++c) scene.bg_color[c] = rng.uniform(0.05, 0.45);
  for (int c = 0; c < 3; ++c) scene.bg_color2[c] = rng.uniform(0.55, 0.95);

  for (size_t i = 0; i < spec.shape_count; ++i) {
    MovingShape sh;
    sh.kind = detail::shape_kind_from(
        spec.shapes[rng.below(spec.shapes.size())]);
    double max_half = std::min(spec.height, spec.width) / 5.0;
    sh.half_w = std::floor(rng.uniform(3.0, max_half));
    sh.half_h = sh.kind == ShapeKind::rectangle
                    ? std::floor(rng.uniform(3.0, max_half))
                    : sh.half_w;
    if (sh.kind == ShapeKind::bar) sh.half_h = double(spec.height);
    sh.cx0 = std::floor(rng.uniform(sh.half_w, spec.width - 1 - sh.half_w));
    sh.cy0 = std::floor(rng.uniform(sh.half_h < spec.height ? sh.half_h : 0.0,
                                    sh.half_h < spec.height
                                        ? spec.height - 1 - sh.half_h
                                        : 1.0));
    double speed = rng.uniform(spec.vel_min, spec.vel_max);
    sh.vx = std::max(1.0, std::floor(speed)) * (rng.below(2) ? 1.0 : -1.0);
    sh.vy = std::floor(rng.uniform(0.0, spec.vel_max)) *
            (rng.below(2) ? 1.0 : -1.0);
    if (sh.kind == ShapeKind::bar) sh.vy = 0;
    sh.drift_amp = spec.drift_amp;
    sh.drift_phase = rng.uniform(0.0, 6.283185307179586);
    for (int c = 0; c < 3; ++c) sh.color[c] = rng.uniform(0.1, 0.95);
    scene.shapes.push_back(sh);
  }
  return scene;
}

// Ground-truth frames of one clip, (t, H, W, 3) in [0, 1]; a deterministic
// function of (spec.seed, index).
template <typename T>
Tensor<T> generate_clip(const SyntheticSpec& spec, size_t index) {
  ClipScene scene = plan_clip(spec, index);
  size_t H = spec.height, W = spec.width, t = spec.frames;
  std::vector<T> out(t * H * W * 3);

  std::vector<double> bg(H * W * 3);
  for (size_t y = 0; y < H; ++y)
    for (size_t x = 0; x < W; ++x)
      for (size_t c = 0; c < 3; ++c) {
        double v;
        if (scene.background == "flat") {
          v = scene.bg_color[c];
        } else if (scene.background == "gradient") {
          double fx = double(x) / double(W - 1);
          double fy = double(y) / double(H - 1);
          v = scene.bg_color[c] * (1 - fx) + scene.bg_color2[c] * fx;
          v = 0.5 * v + 0.5 * (scene.bg_color[c] * (1 - fy) +
                               scene.bg_color2[c] * fy);
        } else {  // checker, 8 px tiles
          bool a = ((x / 8) + (y / 8)) % 2 == 0;
          v = a ? scene.bg_color[c] : scene.bg_color2[c];
        }
        bg[(y * W + x) * 3 + c] = v;
      }

  for (size_t j = 0; j < t; ++j) {
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x) {
        const double* px = &bg[(y * W + x) * 3];
        double rgb[3] = {px[0], px[1], px[2]};
        for (const auto& sh : scene.shapes) {
          auto [cx, cy] = shape_center_at(sh, j, H, W);
          if (detail::shape_covers(sh, cx, cy, x, y))
            for (int c = 0; c < 3; ++c) rgb[c] = sh.color[c];
        }
        size_t base = ((j * H + y) * W + x) * 3;
        for (int c = 0; c < 3; ++c) out[base + c] = T(rgb[c]);
      }
  }
  return Tensor<T>::from({t, H, W, 3}, std::move(out));
}

// ---------------------------------------------------------------------------
// Mask synthesis

struct MaskSpec {
  std::string kind = "moving_rect";  // stationary_rect | moving_rect | free_blob
  double area_lo = 0.05;
  double area_hi = 0.25;
  uint64_t seed = 1;

  void validate() const {
    if (kind != "stationary_rect" && kind != "moving_rect" &&
        kind != "free_blob")
      throw ConfigError("unknown mask kind '" + kind + "'");
    if (!(area_lo > 0 && area_lo <= area_hi && area_hi <= 0.5))
      throw ConfigError("mask area range must satisfy 0 < lo <= hi <= 0.5");
  }
};

// One dataset = one spec file holding both the clip and the mask recipe.
struct DataSpec {
  SyntheticSpec synth;
  MaskSpec mask;
};

inline DataSpec load_data_spec(const std::string& path) {
  DataSpec spec;
  detail::parse_kv_file(path, [&](const std::string& key,
                                  const std::string& value,
                                  const std::string& where) {
    auto& sy = spec.synth;
    auto& mk = spec.mask;
    if (key == "clips") sy.clips = detail::parse_u64(value, where);
    else if (key == "frames") sy.frames = detail::parse_u64(value, where);
    else if (key == "height") sy.height = detail::parse_u64(value, where);
    else if (key == "width") sy.width = detail::parse_u64(value, where);
    else if (key == "shapes") {
      sy.shapes.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        sy.shapes.push_back(detail::trim(item));
    } else if (key == "shape_count")
      sy.shape_count = detail::parse_u64(value, where);
    else if (key == "background") sy.background = value;
    else if (key == "vel_min") sy.vel_min = detail::parse_f64(value, where);
    else if (key == "vel_max") sy.vel_max = detail::parse_f64(value, where);
    else if (key == "drift_amp")
      sy.drift_amp = detail::parse_f64(value, where);
    else if (key == "seed") sy.seed = detail::parse_u64(value, where);
    else if (key == "mask_kind") mk.kind = value;
    else if (key == "mask_area_lo")
      mk.area_lo = detail::parse_f64(value, where);
    else if (key == "mask_area_hi")
      mk.area_hi = detail::parse_f64(value, where);
    else if (key == "mask_seed") mk.seed = detail::parse_u64(value, where);
    else
      throw ConfigError(where + ": unknown key '" + key + "'");
  });
  spec.synth.validate();
  spec.mask.validate();
  return spec;
}

namespace detail {

struct RectMask {
  size_t w = 1, h = 1;  // extents
  double cx = 0, cy = 0;
  double vx = 0, vy = 0;
};

inline RectMask sample_rect(const MaskSpec& spec, size_t H, size_t W,
                            Rng& rng, bool moving) {
  double total = double(H * W);
  RectMask r;
  for (int attempt = 0; attempt < 64; ++attempt) {
    double frac = rng.uniform(spec.area_lo, spec.area_hi);
    double ar = rng.uniform(0.5, 2.0);
    double area = frac * total;
    size_t h = size_t(std::clamp(std::round(std::sqrt(area / ar)), 2.0,
                                 double(H) - 2));
    size_t w = size_t(std::clamp(std::round(area / double(h)), 2.0,
                                 double(W) - 2));
    double got = double(w * h) / total;
    if (got >= spec.area_lo && got <= spec.area_hi) {
      r.w = w;
      r.h = h;
      break;
    }
    if (attempt == 63)
      throw ConfigError("cannot satisfy mask area range on " +
                        std::to_string(W) + "x" + std::to_string(H));
  }
  r.cx = std::floor(rng.uniform(r.w / 2.0, double(W) - r.w / 2.0 - 1));
  r.cy = std::floor(rng.uniform(r.h / 2.0, double(H) - r.h / 2.0 - 1));
  if (moving) {
    r.vx = std::max(1.0, std::floor(rng.uniform(1.0, 3.0)));
    r.vy = std::floor(rng.uniform(0.0, 3.0));
    if (rng.below(2)) r.vx = -r.vx;
    if (rng.below(2)) r.vy = -r.vy;
  }
  return r;
}

inline void stamp_rect(std::vector<uint8_t>& mask, size_t H, size_t W,
                       const RectMask& r, double cx, double cy) {
  size_t x0 = size_t(std::lround(cx - r.w / 2.0));
  size_t y0 = size_t(std::lround(cy - r.h / 2.0));
  for (size_t y = y0; y < y0 + r.h; ++y)
    for (size_t x = x0; x < x0 + r.w; ++x) mask[y * W + x] = 1;
}

}  // namespace detail

// Binary mask volume (t, H, W, 1), 1 = hole. Stationary kinds repeat one
// mask; moving_rect translates it with border reflection so the per-frame
// area fraction stays constant and inside [area_lo, area_hi].
template <typename T>
Tensor<T> generate_mask(const MaskSpec& spec, size_t t, size_t H, size_t W,
                        size_t index) {
  spec.validate();
  Rng rng = Rng(spec.seed).fork(0x6d61736bULL ^ index);
  std::vector<T> out(t * H * W, T(0));

  if (spec.kind == "free_blob") {
    double total = double(H * W);
    size_t lo = size_t(std::ceil(spec.area_lo * total));
    size_t hi = size_t(std::floor(spec.area_hi * total));
    size_t target =
        std::clamp(size_t(std::llround(rng.uniform(double(lo), double(hi)))),
                   lo, std::max(lo, hi));
    std::vector<uint8_t> blob(H * W, 0);
    std::vector<size_t> frontier;
    size_t seed_px = (H / 2) * W + W / 2;
    blob[seed_px] = 1;
    frontier.push_back(seed_px);
    size_t count = 1;
    while (count < target && !frontier.empty()) {
      size_t pick = size_t(rng.below(frontier.size()));
      size_t px = frontier[pick];
      size_t x = px % W, y = px / W;
      size_t neigh[4];
      size_t nn = 0;
      if (x > 0) neigh[nn++] = px - 1;
      if (x + 1 < W) neigh[nn++] = px + 1;
      if (y > 0) neigh[nn++] = px - W;
      if (y + 1 < H) neigh[nn++] = px + W;
      bool grew = false;
      for (size_t i = 0; i < nn; ++i) {
        size_t q = neigh[(i + rng.below(nn)) % nn];
        if (!blob[q]) {
          blob[q] = 1;
          frontier.push_back(q);
          ++count;
          grew = true;
          break;
        }
      }
      if (!grew) {
        frontier[pick] = frontier.back();
        frontier.pop_back();
      }
    }
    for (size_t j = 0; j < t; ++j)
      for (size_t i = 0; i < H * W; ++i)
        if (blob[i]) out[j * H * W + i] = T(1);
    return Tensor<T>::from({t, H, W, 1}, std::move(out));
  }

  bool moving = spec.kind == "moving_rect";
  detail::RectMask r = detail::sample_rect(spec, H, W, rng, moving);
  for (size_t j = 0; j < t; ++j) {
    std::vector<uint8_t> frame(H * W, 0);
    double cx = detail::reflect_into(r.cx + r.vx * double(j), r.w / 2.0,
                                     double(W) - r.w / 2.0 - 1);
    double cy = detail::reflect_into(r.cy + r.vy * double(j), r.h / 2.0,
                                     double(H) - r.h / 2.0 - 1);
    detail::stamp_rect(frame, H, W, r, moving ? cx : r.cx,
                       moving ? cy : r.cy);
    for (size_t i = 0; i < H * W; ++i)
      if (frame[i]) out[j * H * W + i] = T(1);
  }
  return Tensor<T>::from({t, H, W, 1}, std::move(out));
}

// True when every pixel that is ever masked is unmasked in at least one
// frame, so temporal propagation can recover it.
template <typename T>
bool propagation_feasible(const Tensor<T>& masks) {
  size_t t = masks.extent(0);
  size_t px = masks.extent(1) * masks.extent(2);
  const auto& mv = masks.data();
  for (size_t i = 0; i < px; ++i) {
    bool masked_somewhere = false, free_somewhere = false;
    for (size_t j = 0; j < t; ++j) {
      if (mv[j * px + i] != T(0)) masked_somewhere = true;
      else free_somewhere = true;
    }
    if (masked_somewhere && !free_somewhere) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Netpbm I/O: binary PPM (P6) for frames, binary PGM (P5) for masks,
// maxval 255, quantization round-half-up. Bit-exact round trips.

inline uint8_t quantize8(double v) {
  double q = std::floor(v * 255.0 + 0.5);
  return uint8_t(std::clamp(q, 0.0, 255.0));
}

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      in.get();
    } else {
      return;
    }
  }
}

inline size_t read_pnm_uint(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  size_t v = 0;
  bool any = false;
  while (std::isdigit(in.peek())) {
    v = v * 10 + size_t(in.get() - '0');
    any = true;
  }
  if (!any) throw IoError("malformed netpbm header in '" + path + "'");
  return v;
}

inline std::vector<uint8_t> read_pnm(const std::string& path,
                                     const char* magic, size_t channels,
                                     size_t& H, size_t& W) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char m[2];
  in.read(m, 2);
  if (!in || m[0] != magic[0] || m[1] != magic[1])
    throw IoError("'" + path + "' is not a " + std::string(magic) + " file");
  W = read_pnm_uint(in, path);
  H = read_pnm_uint(in, path);
  size_t maxval = read_pnm_uint(in, path);
  if (maxval != 255)
    throw IoError("unsupported maxval " + std::to_string(maxval) + " in '" +
                  path + "' (only 255)");
  in.get();  // single whitespace byte before payload
  std::vector<uint8_t> bytes(H * W * channels);
  in.read(reinterpret_cast<char*>(bytes.data()),
          std::streamsize(bytes.size()));
  if (size_t(in.gcount()) != bytes.size())
    throw IoError("truncated payload in '" + path + "'");
  return bytes;
}

}  // namespace detail

// frame: (H, W, 3) in [0, 1]
template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& frame) {
  if (frame.rank() != 3 || frame.extent(2) != 3)
    throw ShapeError("write_ppm expects (H, W, 3), got " +
                     shape_str(frame.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P6\n" << frame.extent(1) << " " << frame.extent(0) << "\n255\n";
  std::vector<uint8_t> bytes(frame.numel());
  const auto& v = frame.data();
  for (size_t i = 0; i < v.size(); ++i) bytes[i] = quantize8(double(v[i]));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

template <typename T>
Tensor<T> read_ppm(const std::string& path) {
  size_t H, W;
  auto bytes = detail::read_pnm(path, "P6", 3, H, W);
  std::vector<T> v(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) v[i] = T(bytes[i] / 255.0);
  return Tensor<T>::from({H, W, 3}, std::move(v));
}

// mask: (H, W, 1) binary
template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& mask) {
  if (mask.rank() != 3 || mask.extent(2) != 1)
    throw ShapeError("write_pgm expects (H, W, 1), got " +
                     shape_str(mask.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << mask.extent(1) << " " << mask.extent(0) << "\n255\n";
  std::vector<uint8_t> bytes(mask.numel());
  const auto& v = mask.data();
  for (size_t i = 0; i < v.size(); ++i) bytes[i] = quantize8(double(v[i]));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

template <typename T>
Tensor<T> read_pgm(const std::string& path) {
  size_t H, W;
  auto bytes = detail::read_pnm(path, "P5", 1, H, W);
  std::vector<T> v(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) v[i] = T(bytes[i] / 255.0);
  return Tensor<T>::from({H, W, 1}, std::move(v));
}

// ---------------------------------------------------------------------------
// Dataset directory layout: root/<clip_id>/frame_%05d.ppm + mask_%05d.pgm

template <typename T>
struct ClipSample {
  std::string id;
  ClipTensor<T> clip;
};

template <typename T>
void write_clip_dir(const std::string& dir, const Tensor<T>& frames,
                    const Tensor<T>& masks) {
  std::filesystem::create_directories(dir);
  size_t t = frames.extent(0);
  size_t H = frames.extent(1), W = frames.extent(2);
  for (size_t j = 0; j < t; ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%05zu.ppm", j);
    auto f = reshape(slice0(frames, j, j + 1), {H, W, size_t(3)});
    write_ppm(dir + name, f);
    std::snprintf(name, sizeof(name), "/mask_%05zu.pgm", j);
    auto m = reshape(slice0(masks, j, j + 1), {H, W, size_t(1)});
    write_pgm(dir + name, m);
  }
}

// Generates and writes the whole dataset; returns the clip count.
template <typename T>
size_t write_dataset(const SyntheticSpec& spec, const MaskSpec& mspec,
                     const std::string& root) {
  spec.validate();
  mspec.validate();
  std::filesystem::create_directories(root);
  for (size_t i = 0; i < spec.clips; ++i) {
    Tensor<T> frames = generate_clip<T>(spec, i);
    Tensor<T> masks =
        generate_mask<T>(mspec, spec.frames, spec.height, spec.width, i);
    char id[32];
    std::snprintf(id, sizeof(id), "clip_%04zu", i);
    write_clip_dir(root + "/" + id, frames, masks);
  }
  return spec.clips;
}

// Reads one clip directory (frame_%05d.ppm and mask_%05d.pgm counted from
// zero). Failures name the clip id.
template <typename T>
ClipTensor<T> load_clip_dir(const std::string& dir, const std::string& id) {
  namespace fs = std::filesystem;
  size_t frames = 0, masks = 0;
  char name[32];
  for (;; ++frames) {
    std::snprintf(name, sizeof(name), "/frame_%05zu.ppm", frames);
    if (!fs::exists(dir + name)) break;
  }
  for (;; ++masks) {
    std::snprintf(name, sizeof(name), "/mask_%05zu.pgm", masks);
    if (!fs::exists(dir + name)) break;
  }
  if (frames == 0) throw IoError("clip '" + id + "' has no frames");
  if (frames != masks)
    throw IoError("clip '" + id + "': " + std::to_string(frames) +
                  " frames but " + std::to_string(masks) + " masks");
  std::vector<Tensor<T>> fparts, mparts;
  for (size_t j = 0; j < frames; ++j) {
    std::snprintf(name, sizeof(name), "/frame_%05zu.ppm", j);
    Tensor<T> f;
    try {
      f = read_ppm<T>(dir + name);
    } catch (const IoError& e) {
      throw IoError("clip '" + id + "': " + e.what());
    }
    fparts.push_back(reshape(f, {1, f.extent(0), f.extent(1), f.extent(2)}));
    std::snprintf(name, sizeof(name), "/mask_%05zu.pgm", j);
    Tensor<T> m;
    try {
      m = read_pgm<T>(dir + name);
    } catch (const IoError& e) {
      throw IoError("clip '" + id + "': " + e.what());
    }
    // Binarize: quantized masks are exactly 0 or 255.
    auto& mv = m.mutable_data();
    for (auto& v : mv) v = v >= T(0.5) ? T(1) : T(0);
    mparts.push_back(reshape(m, {1, m.extent(0), m.extent(1), m.extent(2)}));
  }
  ClipTensor<T> clip{concat0(fparts), concat0(mparts)};
  clip.validate();
  return clip;
}

// Deterministic lexicographic iteration over clip directories. Frame and
// mask counts must match per clip; failures name the clip id.
template <typename T>
std::vector<ClipSample<T>> load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::exists(root)) throw IoError("dataset root '" + root + "' missing");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());

  std::vector<ClipSample<T>> out;
  for (const auto& id : ids)
    out.push_back(ClipSample<T>{id, load_clip_dir<T>(root + "/" + id, id)});
  return out;
}

}  // namespace ff
