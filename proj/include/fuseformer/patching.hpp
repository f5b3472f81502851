#pragma once

#include <map>
#include <mutex>
#include <tuple>

#include "fuseformer/tensor.hpp"

namespace ff {

// Geometry of an overlapped patch grid over an (h, w, c) feature map:
// square k x k patches, stride s, zero padding p on every border.
// Patches overlap iff s < k; k == s, p == 0 is the hard (tiling) split.
struct PatchGeometry {
  size_t h = 0, w = 0, c = 0;
  size_t k = 1, s = 1, p = 0;

  void validate() const {
    if (k < 1) throw GeometryError("patch size k must be >= 1");
    if (s < 1 || s > k)
      throw GeometryError("stride s must satisfy 1 <= s <= k, got s=" +
                          std::to_string(s) + " k=" + std::to_string(k));
    if (p >= k)
      throw GeometryError("padding p must satisfy p < k, got p=" +
                          std::to_string(p) + " k=" + std::to_string(k));
    if (c < 1) throw GeometryError("channel count must be >= 1");
    if (h + 2 * p < k || w + 2 * p < k)
      throw GeometryError("degenerate geometry: no patch fits " +
                          std::to_string(h) + "x" + std::to_string(w) +
                          " with k=" + std::to_string(k) +
                          " p=" + std::to_string(p));
  }

  // Per-axis grid counts: floor((extent + 2p - k) / s) + 1.
  size_t grid_h() const { return (h + 2 * p - k) / s + 1; }
  size_t grid_w() const { return (w + 2 * p - k) / s + 1; }
  size_t tokens() const { return grid_h() * grid_w(); }
  // Flattened patch length; order inside a row is (channel, row, column).
  size_t patch_len() const { return k * k * c; }

  bool overlapping() const { return s < k; }

  friend bool operator==(const PatchGeometry& a, const PatchGeometry& b) {
    return a.h == b.h && a.w == b.w && a.c == b.c && a.k == b.k && a.s == b.s &&
           a.p == b.p;
  }
};

// Number of patch start positions per frame. Start positions along an axis
// are -p, -p+s, ... while the patch still ends within the padded extent.
inline size_t token_count(const PatchGeometry& geom) {
  geom.validate();
  return geom.tokens();
}

namespace detail {

// Accumulating unfold: out (n, k*k*c) += gather of x (h, w, c).
// Out-of-bounds taps read as zero (virtual zero padding).
template <typename T>
void soft_split_acc(const T* x, T* out, const PatchGeometry& g) {
  const size_t nw = g.grid_w(), nh = g.grid_h();
  const ptrdiff_t p = ptrdiff_t(g.p);
  const size_t plen = g.patch_len();
  for (size_t gy = 0; gy < nh; ++gy) {
    for (size_t gx = 0; gx < nw; ++gx) {
      T* row = out + (gy * nw + gx) * plen;
      const ptrdiff_t y0 = ptrdiff_t(gy * g.s) - p;
      const ptrdiff_t x0 = ptrdiff_t(gx * g.s) - p;
      for (size_t ch = 0; ch < g.c; ++ch) {
        for (size_t py = 0; py < g.k; ++py) {
          const ptrdiff_t y = y0 + ptrdiff_t(py);
          if (y < 0 || y >= ptrdiff_t(g.h)) continue;
          for (size_t px = 0; px < g.k; ++px) {
            const ptrdiff_t xx = x0 + ptrdiff_t(px);
            if (xx < 0 || xx >= ptrdiff_t(g.w)) continue;
            row[(ch * g.k + py) * g.k + px] +=
                x[(size_t(y) * g.w + size_t(xx)) * g.c + ch];
          }
        }
      }
    }
  }
}

// Accumulating fold: x (h, w, c) += overlap-add scatter of out rows.
// Contributions that fall in the padding are discarded.
template <typename T>
void soft_composite_acc(const T* patches, T* x, const PatchGeometry& g) {
  const size_t nw = g.grid_w(), nh = g.grid_h();
  const ptrdiff_t p = ptrdiff_t(g.p);
  const size_t plen = g.patch_len();
  for (size_t gy = 0; gy < nh; ++gy) {
    for (size_t gx = 0; gx < nw; ++gx) {
      const T* row = patches + (gy * nw + gx) * plen;
      const ptrdiff_t y0 = ptrdiff_t(gy * g.s) - p;
      const ptrdiff_t x0 = ptrdiff_t(gx * g.s) - p;
      for (size_t ch = 0; ch < g.c; ++ch) {
        for (size_t py = 0; py < g.k; ++py) {
          const ptrdiff_t y = y0 + ptrdiff_t(py);
          if (y < 0 || y >= ptrdiff_t(g.h)) continue;
          for (size_t px = 0; px < g.k; ++px) {
            const ptrdiff_t xx = x0 + ptrdiff_t(px);
            if (xx < 0 || xx >= ptrdiff_t(g.w)) continue;
            x[(size_t(y) * g.w + size_t(xx)) * g.c + ch] +=
                row[(ch * g.k + py) * g.k + px];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Overlapped patches of one frame plus the geometry needed to invert the
// split. Row i of `patches` is grid cell (i / grid_w, i mod grid_w).
template <typename T>
struct PatchSet {
  Tensor<T> patches;  // (n, k*k*c)
  PatchGeometry geom;
};

// Soft Split: unfold an (h, w, c) map into n overlapped k x k patches,
// flattened row-wise. Linear; its adjoint is soft_composite.
template <typename T>
PatchSet<T> soft_split(const Tensor<T>& x, const PatchGeometry& geom) {
  geom.validate();
  Shape expect{geom.h, geom.w, geom.c};
  if (x.shape() != expect)
    throw ShapeError("soft_split input " + shape_str(x.shape()) +
                     " does not match geometry " + shape_str(expect));
  std::vector<T> out(geom.tokens() * geom.patch_len(), T(0));
  detail::soft_split_acc(x.data().data(), out.data(), geom);
  TensorNode<T>* xn = x.node();
  PatchGeometry g = geom;
  auto backward = [xn, g](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    detail::soft_composite_acc(self.grad.data(), xn->grad_buffer().data(), g);
  };
  auto patches = detail::make_op<T>({geom.tokens(), geom.patch_len()},
                                    std::move(out), {x}, std::move(backward));
  return {patches, geom};
}

// Soft Composite: fold patches back to an (h, w, c) map, summing where
// patches overlap. Exact adjoint of soft_split.
template <typename T>
Tensor<T> soft_composite(const PatchSet<T>& ps) {
  const PatchGeometry& g = ps.geom;
  g.validate();
  Shape expect{g.tokens(), g.patch_len()};
  if (ps.patches.shape() != expect)
    throw GeometryError("soft_composite patches " +
                        shape_str(ps.patches.shape()) +
                        " inconsistent with geometry " + shape_str(expect));
  std::vector<T> out(g.h * g.w * g.c, T(0));
  detail::soft_composite_acc(ps.patches.data().data(), out.data(), g);
  TensorNode<T>* pn = ps.patches.node();
  PatchGeometry geom = g;
  auto backward = [pn, geom](const TensorNode<T>& self) {
    if (!pn->requires_grad) return;
    detail::soft_split_acc(self.grad.data(), pn->grad_buffer().data(), geom);
  };
  return detail::make_op<T>({g.h, g.w, g.c}, std::move(out), {ps.patches},
                            std::move(backward));
}

// Per-pixel count of overlapping patch contributions: SC applied to all-ones
// patches. Computed once per geometry and cached; first concurrent access is
// serialized. Throws CoverageError if any pixel is uncovered, since the
// normalized composite would divide by zero there.
template <typename T>
Tensor<T> coverage_map(const PatchGeometry& geom) {
  geom.validate();
  using Key = std::tuple<size_t, size_t, size_t, size_t, size_t, size_t>;
  static std::map<Key, std::vector<T>> cache;
  static std::mutex mu;
  Key key{geom.h, geom.w, geom.c, geom.k, geom.s, geom.p};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) {
    std::vector<T> ones(geom.tokens() * geom.patch_len(), T(1));
    std::vector<T> cov(geom.h * geom.w * geom.c, T(0));
    detail::soft_composite_acc(ones.data(), cov.data(), geom);
    for (size_t i = 0; i < cov.size(); ++i)
      if (cov[i] == T(0)) {
        size_t pix = i / geom.c;
        throw CoverageError(
            "pixel (" + std::to_string(pix / geom.w) + "," +
            std::to_string(pix % geom.w) +
            ") is covered by no patch; normalization would divide by zero");
      }
    it = cache.emplace(key, std::move(cov)).first;
  }
  return Tensor<T>::from({geom.h, geom.w, geom.c}, it->second);
}

// Normalized Soft Composite: overlap-add divided elementwise by the coverage
// map, so equal contributions average instead of summing. Left inverse of
// soft_split: normalized_composite(soft_split(x)) == x.
template <typename T>
Tensor<T> normalized_composite(const PatchSet<T>& ps) {
  Tensor<T> cov = coverage_map<T>(ps.geom);
  return div(soft_composite(ps), cov);
}

}  // namespace ff
