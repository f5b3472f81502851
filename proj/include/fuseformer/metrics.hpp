#pragma once

#include <limits>
#include <ostream>

#include "fuseformer/data.hpp"
#include "fuseformer/model.hpp"

namespace ff {

// PSNR in dB over all elements jointly (RGB together):
// 10 * log10(max_val^2 / MSE). Zero error reports +inf.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target,
            double max_val = 1.0) {
  if (pred.shape() != target.shape())
    throw ShapeError("psnr shapes differ: " + shape_str(pred.shape()) +
                     " vs " + shape_str(target.shape()));
  if (max_val <= 0) throw DomainError("psnr max_val must be > 0");
  double mse = 0;
  const auto& p = pred.data();
  const auto& g = target.data();
  for (size_t i = 0; i < p.size(); ++i) {
    double d = double(p[i]) - double(g[i]);
    mse += d * d;
  }
  mse /= double(p.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

// PSNR restricted to hole pixels (mask == 1), all channels of those pixels.
template <typename T>
double masked_psnr(const Tensor<T>& pred, const Tensor<T>& target,
                   const Tensor<T>& mask, double max_val = 1.0) {
  if (pred.shape() != target.shape())
    throw ShapeError("masked_psnr shapes differ");
  size_t ch = pred.shape().back();
  size_t px = pred.numel() / ch;
  if (mask.numel() != px)
    throw ShapeError("mask has " + std::to_string(mask.numel()) +
                     " pixels, images have " + std::to_string(px));
  double mse = 0;
  size_t count = 0;
  const auto& p = pred.data();
  const auto& g = target.data();
  const auto& m = mask.data();
  for (size_t i = 0; i < px; ++i) {
    if (m[i] == T(0)) continue;
    for (size_t c = 0; c < ch; ++c) {
      double d = double(p[i * ch + c]) - double(g[i * ch + c]);
      mse += d * d;
      ++count;
    }
  }
  if (count == 0 || mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / (mse / double(count)));
}

namespace detail {

// 11x11 Gaussian window, sigma 1.5, normalized to unit sum.
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> win(11 * 11);
    double sum = 0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        double dy = y - 5, dx = x - 5;
        double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        win[y * 11 + x] = v;
        sum += v;
      }
    for (auto& v : win) v /= sum;
    return win;
  }();
  return w;
}

template <typename T>
std::vector<double> to_gray(const Tensor<T>& img) {
  size_t H = img.extent(0), W = img.extent(1), C = img.extent(2);
  std::vector<double> g(H * W);
  const auto& v = img.data();
  if (C == 3) {
    for (size_t i = 0; i < H * W; ++i)
      g[i] = 0.299 * double(v[i * 3]) + 0.587 * double(v[i * 3 + 1]) +
             0.114 * double(v[i * 3 + 2]);
  } else if (C == 1) {
    for (size_t i = 0; i < H * W; ++i) g[i] = double(v[i]);
  } else {
    throw ShapeError("ssim expects 1 or 3 channels, got " +
                     std::to_string(C));
  }
  return g;
}

}  // namespace detail

// Mean local SSIM on the luma channel, Gaussian-weighted 11x11 windows over
// valid positions, C1 = 0.01^2 and C2 = 0.03^2 at unit dynamic range.
template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("ssim shapes differ: " + shape_str(pred.shape()) +
                     " vs " + shape_str(target.shape()));
  if (pred.rank() != 3)
    throw ShapeError("ssim expects (H, W, C) frames");
  size_t H = pred.extent(0), W = pred.extent(1);
  if (H < 11 || W < 11)
    throw ShapeError("image " + std::to_string(W) + "x" + std::to_string(H) +
                     " smaller than the 11x11 ssim window");

  auto x = detail::to_gray(pred);
  auto y = detail::to_gray(target);
  const auto& win = detail::ssim_window();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;

  double total = 0;
  size_t count = 0;
  for (size_t wy = 0; wy + 11 <= H; ++wy) {
    for (size_t wx = 0; wx + 11 <= W; ++wx) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (size_t i = 0; i < 11; ++i)
        for (size_t j = 0; j < 11; ++j) {
          double wgt = win[i * 11 + j];
          double a = x[(wy + i) * W + wx + j];
          double b = y[(wy + i) * W + wx + j];
          mx += wgt * a;
          my += wgt * b;
          xx += wgt * a * a;
          yy += wgt * b * b;
          xy += wgt * a * b;
        }
      double vx = xx - mx * mx;
      double vy = yy - my * my;
      double cov = xy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / double(count);
}

// ---------------------------------------------------------------------------
// Per-clip reports. Means are plain arithmetic means of per-frame values.

struct FrameMetrics {
  double psnr = 0;
  double ssim = 0;
  double masked_psnr = 0;
};

struct ClipMetrics {
  std::string id;
  std::vector<FrameMetrics> frames;

  FrameMetrics mean() const {
    FrameMetrics m;
    for (const auto& f : frames) {
      m.psnr += f.psnr;
      m.ssim += f.ssim;
      m.masked_psnr += f.masked_psnr;
    }
    double n = double(frames.size());
    m.psnr /= n;
    m.ssim /= n;
    m.masked_psnr /= n;
    return m;
  }
};

struct MetricReport {
  std::vector<ClipMetrics> clips;
};

// Composited forward pass over every clip, metrics frame by frame.
template <typename T>
MetricReport evaluate(const Generator<T>& gen,
                      const std::vector<ClipSample<T>>& dataset) {
  NoGradGuard ng;
  MetricReport report;
  for (const auto& sample : dataset) {
    ClipMetrics cm;
    cm.id = sample.id;
    Tensor<T> out = composite_output(gen.forward(sample.clip), sample.clip);
    size_t t = out.extent(0), H = out.extent(1), W = out.extent(2);
    for (size_t j = 0; j < t; ++j) {
      auto pf = reshape(slice0(out, j, j + 1), {H, W, size_t(3)});
      auto gf = reshape(slice0(sample.clip.frames, j, j + 1),
                        {H, W, size_t(3)});
      auto mf = reshape(slice0(sample.clip.masks, j, j + 1),
                        {H, W, size_t(1)});
      FrameMetrics fm;
      fm.psnr = psnr(pf, gf);
      fm.ssim = ssim(pf, gf);
      fm.masked_psnr = masked_psnr(pf, gf, mf);
      cm.frames.push_back(fm);
    }
    report.clips.push_back(std::move(cm));
  }
  return report;
}

namespace detail {

inline std::string fmt_metric(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

inline void write_report(const MetricReport& report, std::ostream& out) {
  for (const auto& clip : report.clips) {
    for (size_t i = 0; i < clip.frames.size(); ++i) {
      const auto& f = clip.frames[i];
      out << "clip=" << clip.id << " frame=" << i
          << " psnr=" << detail::fmt_metric(f.psnr)
          << " ssim=" << detail::fmt_metric(f.ssim) << "\n";
    }
    FrameMetrics m = clip.mean();
    out << "clip=" << clip.id << " mean psnr=" << detail::fmt_metric(m.psnr)
        << " ssim=" << detail::fmt_metric(m.ssim) << "\n";
  }
}

}  // namespace ff
