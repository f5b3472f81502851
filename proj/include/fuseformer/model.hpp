#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fuseformer/transformer.hpp"

namespace ff {

enum class Variant {
  vib_t,            // hard split both sides, standard FFN
  vib_s,            // soft split + soft composite, standard FFN
  vib_s_ss_only,    // soft split, hard composite
  vib_s_sc_only,    // hard split, soft composite
  vif,              // soft both sides, F3N with normalized fold
  vif_unnormalized  // soft both sides, F3N with raw (summing) fold
};

inline Variant variant_from_string(const std::string& s) {
  if (s == "vib_t") return Variant::vib_t;
  if (s == "vib_s") return Variant::vib_s;
  if (s == "vib_s_ss_only") return Variant::vib_s_ss_only;
  if (s == "vib_s_sc_only") return Variant::vib_s_sc_only;
  if (s == "vif") return Variant::vif;
  if (s == "vif_unnormalized") return Variant::vif_unnormalized;
  throw ConfigError("unknown variant '" + s + "'");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::vib_t: return "vib_t";
    case Variant::vib_s: return "vib_s";
    case Variant::vib_s_ss_only: return "vib_s_ss_only";
    case Variant::vib_s_sc_only: return "vib_s_sc_only";
    case Variant::vif: return "vif";
    case Variant::vif_unnormalized: return "vif_unnormalized";
  }
  return "?";
}

// Full architecture description. Frame extents are divisible by 4; the
// encoder downsamples by exactly 4, so the token grid lives at (H/4, W/4).
struct ModelConfig {
  Variant variant = Variant::vif;
  size_t depth = 8;
  size_t dim = 128;
  size_t heads = 4;
  size_t patch = 7;
  size_t stride = 3;
  size_t padding = 3;
  size_t channels = 64;
  size_t height = 64;
  size_t width = 64;
  bool discriminator = false;
  bool pos_embedding = false;
  double leaky_slope = 0.2;
  uint64_t seed = 1;

  static constexpr size_t downsample = 4;

  size_t feat_h() const { return height / downsample; }
  size_t feat_w() const { return width / downsample; }

  // Tokenizer-side geometry over the feature map, with `c` channels.
  PatchGeometry feature_geom(size_t c) const {
    return PatchGeometry{feat_h(), feat_w(), c, patch, stride, padding};
  }

  bool soft_tokenize() const {
    return variant == Variant::vib_s || variant == Variant::vib_s_ss_only ||
           variant == Variant::vif || variant == Variant::vif_unnormalized;
  }
  bool soft_detokenize() const {
    return variant == Variant::vib_s || variant == Variant::vib_s_sc_only ||
           variant == Variant::vif || variant == Variant::vif_unnormalized;
  }

  FfnKind ffn_kind() const {
    if (variant == Variant::vif) return FfnKind::f3n_normalized;
    if (variant == Variant::vif_unnormalized) return FfnKind::f3n;
    return FfnKind::standard;
  }

  void validate() const {
    if (height % downsample || width % downsample)
      throw ConfigError("frame extents must be divisible by " +
                        std::to_string(downsample));
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (variant == Variant::vib_t) {
      if (patch != stride || padding != 0)
        throw ConfigError("vib_t requires patch == stride and padding == 0");
    } else {
      if (stride >= patch)
        throw ConfigError(to_string(variant) +
                          " requires stride < patch (overlap)");
    }
    feature_geom(channels).validate();
    if (dim == 0 || heads == 0 || dim % heads)
      throw ConfigError("dim must be a positive multiple of heads");
  }
};

// Derived hard (non-overlapping) geometry aligned with a soft grid: same
// token count, patches shrunk to the s x s centers of the soft patches.
inline PatchGeometry hard_side_geometry(const PatchGeometry& soft) {
  if (soft.k == soft.s && soft.p == 0) return soft;
  size_t shrink = (soft.k - soft.s) / 2;
  if (soft.p < shrink)
    throw ConfigError("cannot derive centered hard grid: padding " +
                      std::to_string(soft.p) + " < (k-s)/2");
  PatchGeometry hard{soft.h, soft.w, soft.c,
                     soft.s, soft.s, soft.p - shrink};
  hard.validate();
  if (hard.grid_h() != soft.grid_h() || hard.grid_w() != soft.grid_w())
    throw ConfigError("derived hard grid token count mismatch");
  return hard;
}

// One training/inference item: frames in [0,1], binary masks with 1 = hole.
template <typename T>
struct ClipTensor {
  Tensor<T> frames;  // (t, H, W, 3)
  Tensor<T> masks;   // (t, H, W, 1)

  size_t frame_count() const { return frames.extent(0); }

  void validate() const {
    if (frames.rank() != 4 || frames.extent(3) != 3)
      throw ShapeError("clip frames must be (t, H, W, 3), got " +
                       shape_str(frames.shape()));
    if (masks.rank() != 4 || masks.extent(3) != 1 ||
        masks.extent(0) != frames.extent(0) ||
        masks.extent(1) != frames.extent(1) ||
        masks.extent(2) != frames.extent(2))
      throw ShapeError("clip masks must be (t, H, W, 1) matching frames");
    if (frames.extent(1) % 4 || frames.extent(2) % 4)
      throw ShapeError("frame extents must be divisible by 4");
    for (T v : masks.data())
      if (v != T(0) && v != T(1))
        throw ShapeError("masks must be binary");
  }
};

// ---------------------------------------------------------------------------
// Convolution layers, expressed through the same unfold/fold pair the
// tokenizer uses: conv = unfold + matmul, transposed conv = matmul + fold.

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // (k*k*cin, cout), unfold layout
  Tensor<T> bias;    // (cout)
  size_t cin = 0, cout = 0, k = 3, s = 1, p = 1;

  Conv2d() = default;
  Conv2d(size_t cin_, size_t cout_, size_t k_, size_t s_, size_t p_, Rng& rng)
      : cin(cin_), cout(cout_), k(k_), s(s_), p(p_) {
    size_t fan_in = k * k * cin;
    T a = T(std::sqrt(6.0 / double(fan_in + cout)));
    weight =
        Tensor<T>::uniform({fan_in, cout}, rng, -a, a).set_requires_grad(true);
    bias = Tensor<T>::zeros({cout}).set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {  // (h, w, cin)
    PatchGeometry g{x.extent(0), x.extent(1), cin, k, s, p};
    auto cols = soft_split(x, g).patches;
    auto y = add(matmul(cols, weight), bias);  // (n, cout)
    return reshape(y, {g.grid_h(), g.grid_w(), cout});
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".weight", weight);
    pm.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight;  // (cin, k*k*cout)
  Tensor<T> bias;    // (cout)
  size_t cin = 0, cout = 0, k = 4, s = 2, p = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(size_t cin_, size_t cout_, size_t k_, size_t s_, size_t p_,
                  Rng& rng)
      : cin(cin_), cout(cout_), k(k_), s(s_), p(p_) {
    size_t fan_out = k * k * cout;
    T a = T(std::sqrt(6.0 / double(cin + fan_out)));
    weight =
        Tensor<T>::uniform({cin, fan_out}, rng, -a, a).set_requires_grad(true);
    bias = Tensor<T>::zeros({cout}).set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {  // (ih, iw, cin)
    size_t ih = x.extent(0), iw = x.extent(1);
    size_t oh = s * (ih - 1) + k - 2 * p;
    size_t ow = s * (iw - 1) + k - 2 * p;
    PatchGeometry g{oh, ow, cout, k, s, p};
    if (g.grid_h() != ih || g.grid_w() != iw)
      throw GeometryError("transposed conv geometry inconsistent");
    auto flat = reshape(x, {ih * iw, cin});
    auto patches = matmul(flat, weight);  // (ih*iw, k*k*cout)
    auto y = soft_composite(PatchSet<T>{patches, g});
    return add(y, bias);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".weight", weight);
    pm.add(prefix + ".bias", bias);
  }
};

// Spatiotemporal convolution as a sum of 2D convolutions over temporal taps,
// with zero padding in time.
template <typename T>
struct Conv3d {
  std::vector<Conv2d<T>> taps;  // one 2D conv per temporal offset
  size_t kt = 3;

  Conv3d() = default;
  Conv3d(size_t cin, size_t cout, size_t kt_, size_t k, size_t s, size_t p,
         Rng& rng)
      : kt(kt_) {
    for (size_t i = 0; i < kt; ++i) taps.emplace_back(cin, cout, k, s, p, rng);
  }

  // x: (t, h, w, cin) -> (t, oh, ow, cout)
  Tensor<T> operator()(const Tensor<T>& x) const {
    size_t t = x.extent(0);
    ptrdiff_t half = ptrdiff_t(kt / 2);
    std::vector<Tensor<T>> frames;
    frames.reserve(t);
    for (size_t ti = 0; ti < t; ++ti) {
      Tensor<T> acc;
      bool first = true;
      for (size_t tap = 0; tap < kt; ++tap) {
        ptrdiff_t src = ptrdiff_t(ti) + ptrdiff_t(tap) - half;
        if (src < 0 || src >= ptrdiff_t(t)) continue;
        auto frame = reshape(slice0(x, size_t(src), size_t(src) + 1),
                             {x.extent(1), x.extent(2), x.extent(3)});
        auto y = taps[tap](frame);
        acc = first ? y : add(acc, y);
        first = false;
      }
      frames.push_back(reshape(acc, {1, acc.extent(0), acc.extent(1),
                                     acc.extent(2)}));
    }
    return concat0(frames);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    for (size_t i = 0; i < taps.size(); ++i)
      taps[i].collect(pm, prefix + ".tap" + std::to_string(i));
  }
};

// ---------------------------------------------------------------------------
// Encoder / decoder stacks

// Two stride-2 stages then two stride-1 refinement convs; leaky ReLU after
// each. Input is pre-masked RGB plus the mask as a fourth channel.
template <typename T>
struct Encoder {
  Conv2d<T> conv1, conv2, conv3, conv4;
  T slope = T(0.2);

  Encoder() = default;
  Encoder(size_t c, T slope_, Rng& rng)
      : conv1(4, c, 3, 2, 1, rng), conv2(c, c, 3, 2, 1, rng),
        conv3(c, c, 3, 1, 1, rng), conv4(c, c, 3, 1, 1, rng), slope(slope_) {}

  Tensor<T> frame(const Tensor<T>& x) const {  // (H, W, 4) -> (H/4, W/4, c)
    auto y = leaky_relu(conv1(x), slope);
    y = leaky_relu(conv2(y), slope);
    y = leaky_relu(conv3(y), slope);
    return leaky_relu(conv4(y), slope);
  }

  // (t, H, W, 4) -> (t, H/4, W/4, c)
  Tensor<T> operator()(const Tensor<T>& x) const {
    std::vector<Tensor<T>> outs;
    for (size_t j = 0; j < x.extent(0); ++j) {
      auto f = reshape(slice0(x, j, j + 1),
                       {x.extent(1), x.extent(2), x.extent(3)});
      auto y = frame(f);
      outs.push_back(reshape(y, {1, y.extent(0), y.extent(1), y.extent(2)}));
    }
    return concat0(outs);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    conv1.collect(pm, prefix + ".conv1");
    conv2.collect(pm, prefix + ".conv2");
    conv3.collect(pm, prefix + ".conv3");
    conv4.collect(pm, prefix + ".conv4");
  }
};

// Two stride-2 transposed-conv stages back to full resolution; tanh output
// remapped from [-1, 1] to [0, 1].
template <typename T>
struct Decoder {
  ConvTranspose2d<T> up1, up2;
  T slope = T(0.2);

  Decoder() = default;
  Decoder(size_t c, T slope_, Rng& rng)
      : up1(c, c, 4, 2, 1, rng), up2(c, 3, 4, 2, 1, rng), slope(slope_) {}

  Tensor<T> frame(const Tensor<T>& x) const {  // (H/4, W/4, c) -> (H, W, 3)
    auto y = leaky_relu(up1(x), slope);
    return scale(add_scalar(tanh(up2(y)), T(1)), T(0.5));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    std::vector<Tensor<T>> outs;
    for (size_t j = 0; j < x.extent(0); ++j) {
      auto f = reshape(slice0(x, j, j + 1),
                       {x.extent(1), x.extent(2), x.extent(3)});
      auto y = frame(f);
      outs.push_back(reshape(y, {1, y.extent(0), y.extent(1), y.extent(2)}));
    }
    return concat0(outs);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    up1.collect(pm, prefix + ".up1");
    up2.collect(pm, prefix + ".up2");
  }
};

// ---------------------------------------------------------------------------
// Tokenization between feature maps and the transformer stack

template <typename T>
struct Tokenizer {
  Linear<T> embed;          // patch_len -> d
  Tensor<T> pos;            // (n, d) learned additive embedding, optional
  PatchGeometry geom;       // split-side geometry (soft or hard)
  bool use_pos = false;

  Tokenizer() = default;
  Tokenizer(const PatchGeometry& g, size_t d, bool use_pos_, Rng& rng)
      : embed(g.patch_len(), d, rng), geom(g), use_pos(use_pos_) {
    if (use_pos)
      pos = Tensor<T>::uniform({g.tokens(), d}, rng, T(-0.02), T(0.02))
                .set_requires_grad(true);
  }

  // (t, fh, fw, c) -> frame-major tokens (t*n, d)
  TokenBatch<T> operator()(const Tensor<T>& feat) const {
    size_t t = feat.extent(0);
    std::vector<Tensor<T>> rows;
    rows.reserve(t);
    for (size_t j = 0; j < t; ++j) {
      auto f = reshape(slice0(feat, j, j + 1),
                       {feat.extent(1), feat.extent(2), feat.extent(3)});
      auto tok = embed(soft_split(f, geom).patches);
      if (use_pos) tok = add(tok, pos);
      rows.push_back(tok);
    }
    return {concat0(rows), t, geom.tokens(), geom};
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    embed.collect(pm, prefix + ".embed");
    if (use_pos) pm.add(prefix + ".pos", pos);
  }
};

template <typename T>
struct Detokenizer {
  Linear<T> unembed;   // d -> patch_len
  PatchGeometry geom;  // composite-side geometry (soft or hard)
  bool normalized = true;  // Eq-8 averaging on the soft side

  Detokenizer() = default;
  Detokenizer(const PatchGeometry& g, size_t d, bool normalized_, Rng& rng)
      : unembed(d, g.patch_len(), rng), geom(g), normalized(normalized_) {}

  // (t*n, d) -> (t, fh, fw, c)
  Tensor<T> operator()(const TokenBatch<T>& z) const {
    if (z.n != geom.tokens())
      throw GeometryError("detokenizer grid holds " +
                          std::to_string(geom.tokens()) +
                          " tokens, batch has " + std::to_string(z.n));
    auto patches = unembed(z.tokens);  // (t*n, patch_len)
    std::vector<Tensor<T>> frames;
    frames.reserve(z.t);
    for (size_t j = 0; j < z.t; ++j) {
      PatchSet<T> ps{slice0(patches, j * z.n, (j + 1) * z.n), geom};
      auto f = normalized && geom.overlapping() ? normalized_composite(ps)
                                                : soft_composite(ps);
      frames.push_back(reshape(f, {1, geom.h, geom.w, geom.c}));
    }
    return concat0(frames);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    unembed.collect(pm, prefix + ".unembed");
  }
};

// ---------------------------------------------------------------------------
// Generator: encoder -> tokenize -> L blocks -> detokenize -> decoder

template <typename T>
struct Generator {
  ModelConfig cfg;
  Encoder<T> encoder;
  Tokenizer<T> tokenizer;
  std::vector<FuseFormerBlock<T>> blocks;
  Detokenizer<T> detokenizer;
  Decoder<T> decoder;

  Generator() = default;

  explicit Generator(const ModelConfig& config, uint64_t seed_override = 0)
      : cfg(config) {
    cfg.validate();
    Rng rng(seed_override ? seed_override : cfg.seed);
    T slope = T(cfg.leaky_slope);

    encoder = Encoder<T>(cfg.channels, slope, rng);

    PatchGeometry soft = cfg.feature_geom(cfg.channels);
    PatchGeometry split_geom =
        cfg.soft_tokenize() ? soft : hard_side_geometry(soft);
    PatchGeometry comp_geom =
        cfg.soft_detokenize() ? soft : hard_side_geometry(soft);
    tokenizer = Tokenizer<T>(split_geom, cfg.dim, cfg.pos_embedding, rng);

    BlockConfig bc;
    bc.d = cfg.dim;
    bc.heads = cfg.heads;
    bc.ffn_kind = cfg.ffn_kind();
    if (bc.ffn_kind != FfnKind::standard) {
      size_t cp = f3n_inner_channels(cfg.dim, cfg.patch);
      bc.inner_geom = PatchGeometry{soft.h, soft.w, cp,
                                    cfg.patch, cfg.stride, cfg.padding};
    }
    for (size_t l = 0; l < cfg.depth; ++l) blocks.emplace_back(bc, rng);

    detokenizer = Detokenizer<T>(comp_geom, cfg.dim, true, rng);
    decoder = Decoder<T>(cfg.channels, slope, rng);
  }

  // Pre-masked input: RGB * (1 - mask) with the mask as a fourth channel.
  // Built as a fresh leaf; gradients never flow into clip data.
  static Tensor<T> masked_input(const ClipTensor<T>& clip) {
    size_t t = clip.frames.extent(0), h = clip.frames.extent(1),
           w = clip.frames.extent(2);
    const auto& fv = clip.frames.data();
    const auto& mv = clip.masks.data();
    std::vector<T> in(t * h * w * 4);
    for (size_t i = 0; i < t * h * w; ++i) {
      T m = mv[i];
      in[i * 4 + 0] = fv[i * 3 + 0] * (T(1) - m);
      in[i * 4 + 1] = fv[i * 3 + 1] * (T(1) - m);
      in[i * 4 + 2] = fv[i * 3 + 2] * (T(1) - m);
      in[i * 4 + 3] = m;
    }
    return Tensor<T>::from({t, h, w, 4}, std::move(in));
  }

  TokenBatch<T> tokens_of(const ClipTensor<T>& clip) const {
    return tokenizer(encoder(masked_input(clip)));
  }

  Tensor<T> head(const TokenBatch<T>& z) const {
    return decoder(detokenizer(z));
  }

  // Raw network output over all pixels, (t, H, W, 3) in [0, 1].
  Tensor<T> forward(const ClipTensor<T>& clip) const {
    TokenBatch<T> z = tokens_of(clip);
    for (const auto& b : blocks) z = b(z);
    return head(z);
  }

  // Decoded image after every block, for layer-by-layer inspection.
  std::vector<Tensor<T>> forward_per_layer(const ClipTensor<T>& clip) const {
    std::vector<Tensor<T>> decoded;
    TokenBatch<T> z = tokens_of(clip);
    for (const auto& b : blocks) {
      z = b(z);
      decoded.push_back(head(z));
    }
    return decoded;
  }

  void collect(ParamMap<T>& pm) const {
    encoder.collect(pm, "encoder");
    tokenizer.collect(pm, "tokenizer");
    for (size_t l = 0; l < blocks.size(); ++l)
      blocks[l].collect(pm, "blocks." + std::to_string(l));
    detokenizer.collect(pm, "detokenizer");
    decoder.collect(pm, "decoder");
  }

  ParamMap<T> params() const {
    ParamMap<T> pm;
    collect(pm);
    return pm;
  }
};

// Hole pixels from the network, everything else copied from the input.
template <typename T>
Tensor<T> composite_output(const Tensor<T>& raw, const ClipTensor<T>& clip) {
  auto inv = add_scalar(neg(clip.masks), T(1));
  return add(mul(raw, clip.masks), mul(clip.frames, inv));
}

// ---------------------------------------------------------------------------
// Video discriminator: four spatiotemporal conv layers, global average,
// sigmoid. Returns one scalar per clip in (0, 1).

template <typename T>
struct Discriminator {
  Conv3d<T> c1, c2, c3, c4;
  T slope = T(0.2);

  Discriminator() = default;
  Discriminator(T slope_, Rng& rng)
      : c1(3, 16, 3, 3, 2, 1, rng), c2(16, 32, 3, 3, 2, 1, rng),
        c3(32, 32, 3, 3, 2, 1, rng), c4(32, 1, 3, 3, 2, 1, rng),
        slope(slope_) {}

  Tensor<T> operator()(const Tensor<T>& frames) const {  // (t, H, W, 3)
    auto y = leaky_relu(c1(frames), slope);
    y = leaky_relu(c2(y), slope);
    y = leaky_relu(c3(y), slope);
    y = c4(y);
    return sigmoid(mean(y));
  }

  void collect(ParamMap<T>& pm) const {
    c1.collect(pm, "disc.c1");
    c2.collect(pm, "disc.c2");
    c3.collect(pm, "disc.c3");
    c4.collect(pm, "disc.c4");
  }

  ParamMap<T> params() const {
    ParamMap<T> pm;
    collect(pm);
    return pm;
  }
};

// ---------------------------------------------------------------------------
// Model config file: line-oriented `key = value`, '#' comments, unknown keys
// are errors.

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Parses "key = value" lines, dispatching each pair to `apply`.
template <typename ApplyFn>
void parse_kv_file(const std::string& path, ApplyFn apply) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": empty key or value");
    apply(key, value, path + ":" + std::to_string(lineno));
  }
}

inline uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected unsigned integer, got '" + v + "'");
  }
}

inline double parse_f64(const std::string& v, const std::string& where) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError(where + ": expected boolean, got '" + v + "'");
}

}  // namespace detail

inline ModelConfig load_model_config(const std::string& path) {
  ModelConfig cfg;
  detail::parse_kv_file(path, [&](const std::string& key,
                                  const std::string& value,
                                  const std::string& where) {
    if (key == "variant") cfg.variant = variant_from_string(value);
    else if (key == "depth") cfg.depth = detail::parse_u64(value, where);
    else if (key == "dim") cfg.dim = detail::parse_u64(value, where);
    else if (key == "heads") cfg.heads = detail::parse_u64(value, where);
    else if (key == "patch") cfg.patch = detail::parse_u64(value, where);
    else if (key == "stride") cfg.stride = detail::parse_u64(value, where);
    else if (key == "padding") cfg.padding = detail::parse_u64(value, where);
    else if (key == "channels") cfg.channels = detail::parse_u64(value, where);
    else if (key == "height") cfg.height = detail::parse_u64(value, where);
    else if (key == "width") cfg.width = detail::parse_u64(value, where);
    else if (key == "discriminator")
      cfg.discriminator = detail::parse_bool(value, where);
    else if (key == "pos_embedding")
      cfg.pos_embedding = detail::parse_bool(value, where);
    else if (key == "leaky_slope")
      cfg.leaky_slope = detail::parse_f64(value, where);
    else if (key == "seed") cfg.seed = detail::parse_u64(value, where);
    else
      throw ConfigError(where + ": unknown key '" + key + "'");
  });
  cfg.validate();
  return cfg;
}

}  // namespace ff
