#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fuseformer/patching.hpp"
#include "fuseformer/tensor.hpp"

namespace ff {

// Named parameter registry. Collection order is fixed by construction order,
// which also fixes checkpoint layout and optimizer iteration order.
template <typename T>
struct ParamMap {
  std::vector<std::pair<std::string, Tensor<T>>> entries;

  void add(const std::string& name, const Tensor<T>& t) {
    entries.emplace_back(name, t);
  }

  size_t count() const {
    size_t n = 0;
    for (auto& [name, t] : entries) n += t.numel();
    return n;
  }
};

// Tokens of a whole clip in frame-major order: rows [j*n, (j+1)*n) belong to
// frame j. `geom` is the frame-level split that produced them.
template <typename T>
struct TokenBatch {
  Tensor<T> tokens;  // (t*n, d)
  size_t t = 0;
  size_t n = 0;
  PatchGeometry geom;
};

enum class FfnKind { standard, f3n, f3n_normalized };

// Inner channel count c' of the fusion feed-forward net:
// c' = 10 * floor(4d / (10 k^2)), which keeps the hidden width k^2 * c'
// reshapeable to (k, k, c') patches while staying at most 4d. For small d
// the multiple-of-ten form collapses to zero, so fall back to the largest
// c' >= 1 with k^2 * c' <= 4d.
inline size_t f3n_inner_channels(size_t d, size_t k) {
  size_t primary = 10 * ((4 * d) / (10 * k * k));
  if (primary >= 1) return primary;
  size_t fallback = (4 * d) / (k * k);
  if (fallback >= 1) return fallback;
  throw ConfigError("token dim " + std::to_string(d) +
                    " too small for patch size " + std::to_string(k) +
                    ": inner channel count would be zero");
}

struct BlockConfig {
  size_t d = 0;
  size_t heads = 4;
  FfnKind ffn_kind = FfnKind::standard;
  // Geometry F3N folds through: the tokenizer's grid at feature resolution
  // with c = c'. Ignored for the standard FFN.
  PatchGeometry inner_geom;

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0)
      throw ConfigError("token dim " + std::to_string(d) +
                        " not divisible by head count " +
                        std::to_string(heads));
    if (ffn_kind != FfnKind::standard) inner_geom.validate();
  }
};

// ---------------------------------------------------------------------------
// Layers

template <typename T>
struct Linear {
  Tensor<T> weight;  // (in, out)
  Tensor<T> bias;    // (out)
  bool with_bias = true;

  Linear() = default;
  Linear(size_t in, size_t out, Rng& rng, bool with_bias_ = true)
      : with_bias(with_bias_) {
    T a = T(std::sqrt(6.0 / double(in + out)));
    weight = Tensor<T>::uniform({in, out}, rng, -a, a).set_requires_grad(true);
    if (with_bias) bias = Tensor<T>::zeros({out}).set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return with_bias ? add(matmul(x, weight), bias) : matmul(x, weight);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".weight", weight);
    if (with_bias) pm.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  T eps = T(1e-6);

  LayerNorm() = default;
  explicit LayerNorm(size_t d) {
    gamma = Tensor<T>::ones({d}).set_requires_grad(true);
    beta = Tensor<T>::zeros({d}).set_requires_grad(true);
  }

  // Per-row standardization over the last axis, then affine scale/shift.
  Tensor<T> operator()(const Tensor<T>& x) const {
    auto mu = mean_last(x);
    auto centered = sub(x, mu);
    auto var = mean_last(mul(centered, centered));
    auto normed = div(centered, sqrt(add_scalar(var, eps)));
    return add(mul(normed, gamma), beta);
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
  }
};

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-6)) {
  LayerNorm<T> ln;
  ln.gamma = gamma;
  ln.beta = beta;
  ln.eps = eps;
  return ln(x);
}

// Standard multi-head self-attention over all rows jointly; for a TokenBatch
// that means every token of every frame attends to every other
// (spatiotemporal attention, no per-frame masking).
template <typename T>
struct MultiHeadSelfAttention {
  Linear<T> wq, wk, wv, wo;
  size_t heads = 1;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(size_t d, size_t heads_, Rng& rng)
      : wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng),
        heads(heads_) {
    if (d % heads != 0)
      throw ConfigError("token dim " + std::to_string(d) +
                        " not divisible by head count " +
                        std::to_string(heads));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    size_t d = x.extent(1);
    size_t dh = d / heads;
    T inv_scale = T(1.0 / std::sqrt(double(dh)));
    auto q = wq(x), k = wk(x), v = wv(x);
    std::vector<Tensor<T>> outs;
    outs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
      auto qh = slice_cols(q, h * dh, (h + 1) * dh);
      auto kh = slice_cols(k, h * dh, (h + 1) * dh);
      auto vh = slice_cols(v, h * dh, (h + 1) * dh);
      auto attn = softmax_last(scale(matmul_nt(qh, kh), inv_scale));
      outs.push_back(matmul(attn, vh));
    }
    return wo(concat_cols(outs));
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    wq.collect(pm, prefix + ".wq");
    wk.collect(pm, prefix + ".wk");
    wv.collect(pm, prefix + ".wv");
    wo.collect(pm, prefix + ".wo");
  }
};

// Vanilla two-layer MLP with GELU, hidden width 4d.
template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;

  FeedForward() = default;
  FeedForward(size_t d, size_t hidden, Rng& rng)
      : fc1(d, hidden, rng), fc2(hidden, d, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return fc2(gelu(fc1(x)));
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    fc1.collect(pm, prefix + ".fc1");
    fc2.collect(pm, prefix + ".fc2");
  }
};

// Fusion feed-forward net: MLP1 lifts each token to a (k, k, c') patch,
// patches of one frame are folded into a feature map (summing or averaging
// overlaps), split back into patches, and MLP2 projects back to d. The
// fold/split round trip fuses sub-token information across neighboring
// patches without adding parameters.
template <typename T>
struct FusionFeedForward {
  Linear<T> fc1, fc2;
  PatchGeometry inner_geom;  // c = c'
  bool normalized = true;

  FusionFeedForward() = default;
  FusionFeedForward(size_t d, const PatchGeometry& geom, bool normalized_,
                    Rng& rng)
      : fc1(d, geom.patch_len(), rng), fc2(geom.patch_len(), d, rng),
        inner_geom(geom), normalized(normalized_) {
    inner_geom.validate();
  }

  // Acts per frame: rows are frame-major and frames are processed
  // independently (j indexes frames in the fold/split step).
  Tensor<T> operator()(const Tensor<T>& x, size_t t, size_t n) const {
    if (n != inner_geom.tokens())
      throw ConfigError("F3N geometry yields " +
                        std::to_string(inner_geom.tokens()) +
                        " tokens per frame, batch has " + std::to_string(n));
    if (x.extent(0) != t * n)
      throw ShapeError("F3N input rows " + std::to_string(x.extent(0)) +
                       " != t*n = " + std::to_string(t * n));
    auto lifted = gelu(fc1(x));  // (t*n, k^2 c')
    std::vector<Tensor<T>> fused;
    fused.reserve(t);
    for (size_t j = 0; j < t; ++j) {
      PatchSet<T> ps{slice0(lifted, j * n, (j + 1) * n), inner_geom};
      Tensor<T> frame =
          normalized ? normalized_composite(ps) : soft_composite(ps);
      fused.push_back(soft_split(frame, inner_geom).patches);
    }
    return fc2(concat0(fused));
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    fc1.collect(pm, prefix + ".fc1");
    fc2.collect(pm, prefix + ".fc2");
  }
};

// ---------------------------------------------------------------------------
// FuseFormer block: pre-norm residual attention followed by a pre-norm
// residual feed-forward, where the feed-forward is either the standard MLP
// or F3N depending on the config.

template <typename T>
struct FuseFormerBlock {
  LayerNorm<T> ln1, ln2;
  MultiHeadSelfAttention<T> msa;
  std::optional<FeedForward<T>> ffn;
  std::optional<FusionFeedForward<T>> f3n;

  FuseFormerBlock() = default;
  FuseFormerBlock(const BlockConfig& cfg, Rng& rng)
      : ln1(cfg.d), ln2(cfg.d), msa(cfg.d, cfg.heads, rng) {
    cfg.validate();
    if (cfg.ffn_kind == FfnKind::standard) {
      ffn.emplace(cfg.d, 4 * cfg.d, rng);
    } else {
      f3n.emplace(cfg.d, cfg.inner_geom,
                  cfg.ffn_kind == FfnKind::f3n_normalized, rng);
    }
  }

  TokenBatch<T> operator()(const TokenBatch<T>& z) const {
    auto attended = add(msa(ln1(z.tokens)), z.tokens);
    auto normed = ln2(attended);
    Tensor<T> ff_out =
        ffn ? (*ffn)(normed) : (*f3n)(normed, z.t, z.n);
    return {add(ff_out, attended), z.t, z.n, z.geom};
  }

  void collect(ParamMap<T>& pm, const std::string& prefix) const {
    ln1.collect(pm, prefix + ".ln1");
    msa.collect(pm, prefix + ".msa");
    ln2.collect(pm, prefix + ".ln2");
    if (ffn) ffn->collect(pm, prefix + ".ffn");
    if (f3n) f3n->collect(pm, prefix + ".f3n");
  }
};

}  // namespace ff
