#pragma once

#include "fuseformer/gradcheck.hpp"
#include "fuseformer/metrics.hpp"
#include "fuseformer/training.hpp"

namespace ff {

// Registry of finite-difference targets, run in f64. Thresholds follow the
// contract: elementary ops well below 1e-4, composite layers 1e-4, the full
// micro model 1e-3.

namespace detail {

using DT = Tensor<double>;

inline DT leaf(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  return DT::uniform(std::move(shape), rng, lo, hi).set_requires_grad(true);
}

// Values bounded away from zero, for ops with a kink there.
inline DT nonzero_leaf(Shape shape, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v)
    x = rng.uniform(0.2, 1.2) * (rng.below(2) ? 1.0 : -1.0);
  return DT::from(std::move(shape), std::move(v)).set_requires_grad(true);
}

// Scalar readout with fixed random weights, so every output entry
// contributes a distinct term to the checked gradient.
inline DT readout(const DT& out, uint64_t tag) {
  Rng rng(tag);
  auto w = DT::uniform(out.shape(), rng, -1.0, 1.0);
  return sum(mul(out, w));
}

inline GradCheckOptions fd_opts(double eps, size_t max_coords = 0) {
  GradCheckOptions o;
  o.eps = eps;
  o.max_coords = max_coords;
  return o;
}

using Params = std::vector<std::pair<std::string, DT>>;

}  // namespace detail

inline std::vector<GradCheckCase> op_gradchecks(uint64_t seed) {
  using namespace detail;
  std::vector<GradCheckCase> cases;
  auto add_case = [&](const std::string& name, double threshold,
                      std::function<GradCheckReport(Rng&, double)> body) {
    uint64_t case_seed = splitmix64(seed ^ std::hash<std::string>{}(name));
    cases.push_back(GradCheckCase{name, threshold, [case_seed, body](double eps) {
                                    Rng rng(case_seed);
                                    return body(rng, eps);
                                  }});
  };

  // Broadcasting binary ops.
  auto binary = [&](const std::string& name, auto op, bool safe_denominator) {
    add_case(name, 1e-6, [=](Rng& rng, double eps) -> GradCheckReport {
      auto a = leaf({2, 3}, rng);
      auto b = safe_denominator ? nonzero_leaf({3}, rng) : leaf({3}, rng);
      auto fn = [=] { return readout(op(a, b), 7); };
      return finite_diff_check<double>(fn, {{"a", a}, {"b", b}},
                                       fd_opts(eps));
    });
  };
  binary("add", [](auto a, auto b) { return add(a, b); }, false);
  binary("sub", [](auto a, auto b) { return sub(a, b); }, false);
  binary("mul", [](auto a, auto b) { return mul(a, b); }, false);
  binary("div", [](auto a, auto b) { return div(a, b); }, true);

  // Unary ops; kinked ones get inputs bounded away from the kink.
  auto unary = [&](const std::string& name, auto op, bool positive,
                   bool away_from_zero) {
    add_case(name, 1e-6, [=](Rng& rng, double eps) -> GradCheckReport {
      DT x = positive ? leaf({3, 4}, rng, 0.2, 2.0)
                      : (away_from_zero ? nonzero_leaf({3, 4}, rng)
                                        : leaf({3, 4}, rng));
      auto fn = [=] { return readout(op(x), 11); };
      return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
    });
  };
  unary("relu", [](auto x) { return relu(x); }, false, true);
  unary("leaky_relu",
        [](auto x) { return leaky_relu(x, 0.2); }, false, true);
  unary("abs", [](auto x) { return abs(x); }, false, true);
  unary("exp", [](auto x) { return exp(x); }, false, false);
  unary("log", [](auto x) { return log(x); }, true, false);
  unary("sqrt", [](auto x) { return sqrt(x); }, true, false);
  unary("tanh", [](auto x) { return tanh(x); }, false, false);
  unary("sigmoid", [](auto x) { return sigmoid(x); }, false, false);
  unary("gelu", [](auto x) { return gelu(x); }, false, false);
  unary("scale", [](auto x) { return scale(x, 1.7); }, false, false);
  unary("add_scalar", [](auto x) { return add_scalar(x, 0.3); }, false,
        false);
  unary("neg", [](auto x) { return neg(x); }, false, false);
  // Keep probe points at least 2*eps away from the clamp edges.
  add_case("clamp", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    std::vector<double> v(12);
    for (auto& x : v) {
      x = rng.uniform(-2.0, 2.0);
      if (std::abs(x - 1.0) < 1e-3) x += 0.01;
      if (std::abs(x + 1.0) < 1e-3) x += 0.01;
    }
    auto x = DT::from({3, 4}, std::move(v)).set_requires_grad(true);
    auto fn = [=] { return readout(clamp(x, -1.0, 1.0), 13); };
    return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
  });

  add_case("softmax", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto x = leaf({3, 4}, rng, -2, 2);
    auto fn = [=] { return readout(softmax_last(x), 17); };
    return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
  });

  add_case("matmul", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto a = leaf({4, 5}, rng);
    auto b = leaf({5, 3}, rng);
    auto fn = [=] { return readout(matmul(a, b), 19); };
    return finite_diff_check<double>(fn, {{"a", a}, {"b", b}}, fd_opts(eps));
  });
  add_case("matmul_nt", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto a = leaf({4, 5}, rng);
    auto b = leaf({3, 5}, rng);
    auto fn = [=] { return readout(matmul_nt(a, b), 23); };
    return finite_diff_check<double>(fn, {{"a", a}, {"b", b}}, fd_opts(eps));
  });
  add_case("transpose", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto x = leaf({3, 5}, rng);
    auto fn = [=] { return readout(transpose(x), 29); };
    return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
  });

  add_case("reshape_slice_concat", 1e-6,
           [](Rng& rng, double eps) -> GradCheckReport {
    auto x = leaf({4, 6}, rng);
    auto fn = [=] {
      auto a = slice0(x, 0, 2);
      auto b = slice0(x, 2, 4);
      auto joined = concat0<double>({b, a});
      return readout(reshape(joined, {2, 12}), 31);
    };
    return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
  });
  add_case("slice_concat_cols", 1e-6,
           [](Rng& rng, double eps) -> GradCheckReport {
    auto x = leaf({3, 8}, rng);
    auto fn = [=] {
      auto a = slice_cols(x, 0, 3);
      auto b = slice_cols(x, 3, 8);
      return readout(concat_cols<double>({b, a}), 37);
    };
    return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
  });

  auto reduction = [&](const std::string& name, auto op) {
    add_case(name, 1e-6, [=](Rng& rng, double eps) -> GradCheckReport {
      auto x = leaf({3, 4}, rng);
      auto fn = [=] { return readout(op(x), 41); };
      return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
    });
  };
  reduction("sum", [](auto x) { return sum(x); });
  reduction("mean", [](auto x) { return mean(x); });
  reduction("sum_last", [](auto x) { return sum_last(x); });
  reduction("mean_last", [](auto x) { return mean_last(x); });

  add_case("layer_norm", 1e-5, [](Rng& rng, double eps) -> GradCheckReport {
    auto x = leaf({4, 8}, rng, -2, 2);
    LayerNorm<double> ln(8);
    auto fn = [=] { return readout(ln(x), 43); };
    return finite_diff_check<double>(
        fn, {{"x", x}, {"gamma", ln.gamma}, {"beta", ln.beta}}, fd_opts(eps));
  });

  PatchGeometry small_geom{6, 6, 2, 3, 2, 1};
  add_case("soft_split", 1e-6, [=](Rng& rng, double eps) -> GradCheckReport {
    auto x = leaf({6, 6, 2}, rng);
    auto fn = [=] { return readout(soft_split(x, small_geom).patches, 47); };
    return finite_diff_check<double>(fn, {{"x", x}}, fd_opts(eps));
  });
  add_case("soft_composite", 1e-6,
           [=](Rng& rng, double eps) -> GradCheckReport {
    auto p = leaf({small_geom.tokens(), small_geom.patch_len()}, rng);
    auto fn = [=] {
      return readout(soft_composite(PatchSet<double>{p, small_geom}), 53);
    };
    return finite_diff_check<double>(fn, {{"p", p}}, fd_opts(eps));
  });
  add_case("normalized_composite", 1e-6,
           [=](Rng& rng, double eps) -> GradCheckReport {
    auto p = leaf({small_geom.tokens(), small_geom.patch_len()}, rng);
    auto fn = [=] {
      return readout(normalized_composite(PatchSet<double>{p, small_geom}),
                     59);
    };
    return finite_diff_check<double>(fn, {{"p", p}}, fd_opts(eps));
  });

  add_case("msa", 1e-4, [](Rng& rng, double eps) -> GradCheckReport {
    MultiHeadSelfAttention<double> msa(16, 4, rng);
    auto x = leaf({12, 16}, rng);
    ParamMap<double> pm;
    msa.collect(pm, "msa");
    pm.add("x", x);
    auto fn = [=] { return readout(msa(x), 61); };
    return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
  });

  add_case("ffn_standard", 1e-4, [](Rng& rng, double eps) -> GradCheckReport {
    FeedForward<double> ffn(8, 32, rng);
    auto x = leaf({5, 8}, rng);
    ParamMap<double> pm;
    ffn.collect(pm, "ffn");
    pm.add("x", x);
    auto fn = [=] { return readout(ffn(x), 67); };
    return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
  });

  for (bool normalized : {false, true}) {
    std::string name = normalized ? "f3n_normalized" : "f3n";
    add_case(name, 1e-4,
             [normalized](Rng& rng, double eps) -> GradCheckReport {
      size_t d = 8, k = 3;
      PatchGeometry geom{4, 4, f3n_inner_channels(d, k), k, 2, 1};
      FusionFeedForward<double> f3n(d, geom, normalized, rng);
      auto x = leaf({2 * geom.tokens(), d}, rng);
      ParamMap<double> pm;
      f3n.collect(pm, "f3n");
      pm.add("x", x);
      auto fn = [=] { return readout(f3n(x, 2, geom.tokens()), 71); };
      return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
    });
  }

  add_case("conv2d", 1e-5, [](Rng& rng, double eps) -> GradCheckReport {
    Conv2d<double> conv(3, 4, 3, 2, 1, rng);
    auto x = leaf({8, 8, 3}, rng);
    ParamMap<double> pm;
    conv.collect(pm, "conv");
    pm.add("x", x);
    auto fn = [=] { return readout(conv(x), 73); };
    return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
  });
  add_case("conv_transpose2d", 1e-5,
           [](Rng& rng, double eps) -> GradCheckReport {
    ConvTranspose2d<double> up(3, 2, 4, 2, 1, rng);
    auto x = leaf({4, 4, 3}, rng);
    ParamMap<double> pm;
    up.collect(pm, "up");
    pm.add("x", x);
    auto fn = [=] { return readout(up(x), 79); };
    return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
  });
  add_case("conv3d", 1e-5, [](Rng& rng, double eps) -> GradCheckReport {
    Conv3d<double> c3(2, 2, 3, 3, 2, 1, rng);
    auto x = leaf({3, 6, 6, 2}, rng);
    ParamMap<double> pm;
    c3.collect(pm, "c3");
    pm.add("x", x);
    auto fn = [=] { return readout(c3(x), 83); };
    return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
  });

  add_case("recon_loss", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto pred = leaf({2, 3, 3}, rng, -1, 0.4);
    auto target = DT::uniform({2, 3, 3}, rng, 0.5, 1.0);
    auto fn = [=] { return recon_loss(pred, target); };
    return finite_diff_check<double>(fn, {{"pred", pred}}, fd_opts(eps));
  });
  add_case("disc_loss", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto a = leaf({1}, rng);
    auto b = leaf({1}, rng);
    auto fn = [=] { return disc_loss(sigmoid(a), sigmoid(b)); };
    return finite_diff_check<double>(fn, {{"a", a}, {"b", b}}, fd_opts(eps));
  });
  add_case("gen_adv_loss", 1e-6, [](Rng& rng, double eps) -> GradCheckReport {
    auto a = leaf({1}, rng);
    auto fn = [=] { return gen_adv_loss(sigmoid(a)); };
    return finite_diff_check<double>(fn, {{"a", a}}, fd_opts(eps));
  });

  add_case("discriminate", 1e-4, [](Rng& rng, double eps) -> GradCheckReport {
    Discriminator<double> disc(0.2, rng);
    auto frames = DT::uniform({2, 8, 8, 3}, rng, 0.0, 1.0);
    ParamMap<double> pm = disc.params();
    auto fn = [=] { return disc(frames); };
    return finite_diff_check<double>(fn, pm.entries, fd_opts(eps, 40));
  });

  return cases;
}

inline std::vector<GradCheckCase> block_gradchecks(uint64_t seed) {
  using namespace detail;
  std::vector<GradCheckCase> cases;
  struct Setup {
    const char* name;
    FfnKind kind;
  };
  for (Setup setup : {Setup{"block_standard", FfnKind::standard},
                      Setup{"block_f3n", FfnKind::f3n},
                      Setup{"block_f3n_normalized", FfnKind::f3n_normalized}}) {
    uint64_t case_seed =
        splitmix64(seed ^ std::hash<std::string>{}(setup.name));
    FfnKind kind = setup.kind;
    cases.push_back(GradCheckCase{setup.name, 1e-4, [case_seed, kind](double eps) {
      Rng rng(case_seed);
      BlockConfig bc;
      bc.d = 8;
      bc.heads = 2;
      bc.ffn_kind = kind;
      size_t n = 4;
      if (kind != FfnKind::standard) {
        bc.inner_geom = PatchGeometry{4, 4, f3n_inner_channels(8, 3), 3, 2, 1};
        n = bc.inner_geom.tokens();
      }
      FuseFormerBlock<double> block(bc, rng);
      size_t t = 2;
      auto x = leaf({t * n, bc.d}, rng);
      ParamMap<double> pm;
      block.collect(pm, "block");
      pm.add("x", x);
      auto fn = [=] {
        TokenBatch<double> z{x, t, n, bc.inner_geom};
        return readout(block(z).tokens, 89);
      };
      return finite_diff_check<double>(fn, pm.entries, fd_opts(eps));
    }});
  }
  return cases;
}

// The micro config pinned by the verification contract: t=2 frames of 16x16,
// d=16, 2 heads, one block, patch 3 / stride 2 / padding 1.
inline ModelConfig micro_model_config(Variant variant = Variant::vif) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.depth = 1;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.patch = 3;
  cfg.stride = 2;
  cfg.padding = 1;
  cfg.channels = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.seed = 99;
  return cfg;
}

inline std::vector<GradCheckCase> model_gradchecks(uint64_t seed) {
  using namespace detail;
  std::vector<GradCheckCase> cases;
  cases.push_back(GradCheckCase{"model_micro_vif", 1e-3, [seed](double eps) {
    Rng rng(splitmix64(seed ^ 0xab12cd34ULL));
    Generator<double> gen(micro_model_config());
    ClipTensor<double> clip;
    clip.frames = DT::uniform({2, 16, 16, 3}, rng, 0.0, 1.0);
    std::vector<double> mv(2 * 16 * 16, 0.0);
    for (size_t i = 0; i < mv.size(); ++i)
      mv[i] = rng.below(5) == 0 ? 1.0 : 0.0;
    clip.masks = DT::from({2, 16, 16, 1}, std::move(mv));
    auto target = DT::uniform({2, 16, 16, 3}, rng, 0.0, 1.0);
    auto fn = [=, &gen] { return recon_loss(gen.forward(clip), target); };
    return finite_diff_check<double>(fn, gen.params().entries,
                                     fd_opts(eps, 24));
  }});
  return cases;
}

inline std::vector<GradCheckCase> gradchecks_for_scope(const std::string& scope,
                                                       uint64_t seed) {
  if (scope == "op") return op_gradchecks(seed);
  if (scope == "block") return block_gradchecks(seed);
  if (scope == "model") return model_gradchecks(seed);
  throw ConfigError("unknown gradcheck scope '" + scope + "'");
}

}  // namespace ff
