// fuseformer: video inpainting with soft-split transformers.
//
// Subcommands cover the whole workflow: gen-data, train, infer, eval,
// gradcheck, bench, inspect-layers. All configs are files; flags carry only
// paths, the seed, and the numeric precision. Exit codes: 0 success,
// 1 verification failure, 2 usage error, 3 I/O error.

#include <CLI11.hpp>

#include "fuseformer/fuseformer.hpp"

#include <cinttypes>
#include <cstdio>
#include <iostream>

namespace {

struct CommonArgs {
  uint64_t seed = 0;  // 0: keep config/default seeds
  std::string precision = "f32";
};

uint64_t iter_from_checkpoint_name(const std::string& path) {
  // Trailing digit run in the stem, e.g. out/ckpt_002000.gen -> 2000.
  size_t dot = path.rfind('.');
  std::string stem = dot == std::string::npos ? path : path.substr(0, dot);
  size_t end = stem.size();
  while (end > 0 && std::isdigit(uint8_t(stem[end - 1]))) --end;
  if (end == stem.size())
    throw ff::ConfigError("cannot infer iteration from checkpoint name '" +
                          path + "'");
  return std::stoull(stem.substr(end));
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir,
                 const CommonArgs& common) {
  ff::DataSpec spec = ff::load_data_spec(spec_path);
  if (common.seed) {
    spec.synth.seed = common.seed;
    spec.mask.seed = common.seed;
  }
  size_t n = ff::write_dataset<float>(spec.synth, spec.mask, out_dir);
  std::printf("wrote %zu clips to %s\n", n, out_dir.c_str());
  return 0;
}

template <typename T>
int run_train(const ff::ModelConfig& mcfg, const ff::TrainConfig& tcfg,
              const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
  auto samples = ff::load_dataset<T>(data_dir);
  std::vector<ff::ClipTensor<T>> clips;
  for (auto& s : samples) clips.push_back(s.clip);

  ff::Generator<T> gen(mcfg);
  std::optional<ff::Discriminator<T>> disc;
  bool adversarial = tcfg.lambda_adv > 0;
  if (adversarial) {
    ff::Rng drng(mcfg.seed + 1);
    disc.emplace(T(mcfg.leaky_slope), drng);
  }

  uint64_t start_iter = 0;
  if (!resume.empty()) {
    start_iter = iter_from_checkpoint_name(resume);
    auto gp = gen.params();
    ff::load_checkpoint(gp, resume);
    if (adversarial) {
      std::string disc_path = resume.substr(0, resume.rfind('.')) + ".disc";
      auto dp = disc->params();
      ff::load_checkpoint(dp, disc_path);
    }
    std::fprintf(stderr, "resumed from %s at iteration %" PRIu64 "\n",
                 resume.c_str(), start_iter);
  }

  auto stats = ff::train_loop<T>(gen, adversarial ? &*disc : nullptr, tcfg,
                                 clips, out_dir, start_iter);
  if (!stats.empty()) {
    const auto& last = stats.back();
    std::printf("%s\n", last.format().c_str());
  }
  std::printf("checkpoints and metrics.log in %s\n", out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& model_cfg, const std::string& train_cfg,
              const std::string& data_dir, const std::string& out_dir,
              const std::string& resume, const CommonArgs& common) {
  ff::ModelConfig mcfg = ff::load_model_config(model_cfg);
  ff::TrainConfig tcfg = ff::load_train_config(train_cfg);
  if (common.seed) tcfg.seed = common.seed;
  if (tcfg.lambda_adv > 0 && !mcfg.discriminator)
    throw ff::ConfigError(
        "train config has lambda_adv > 0 but model config has "
        "discriminator = 0");
  if (tcfg.precision == "f64")
    return run_train<double>(mcfg, tcfg, data_dir, out_dir, resume);
  return run_train<float>(mcfg, tcfg, data_dir, out_dir, resume);
}

template <typename T>
int run_infer(const ff::ModelConfig& mcfg, const std::string& ckpt,
              const std::string& in_dir, const std::string& out_dir) {
  ff::Generator<T> gen(mcfg);
  auto params = gen.params();
  ff::load_checkpoint(params, ckpt);
  ff::ClipTensor<T> clip = ff::load_clip_dir<T>(in_dir, in_dir);
  ff::NoGradGuard ng;
  ff::Tensor<T> out = ff::composite_output(gen.forward(clip), clip);
  std::filesystem::create_directories(out_dir);
  size_t t = out.extent(0), H = out.extent(1), W = out.extent(2);
  for (size_t j = 0; j < t; ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%05zu.ppm", j);
    ff::write_ppm(out_dir + name,
                  ff::reshape(ff::slice0(out, j, j + 1), {H, W, size_t(3)}));
  }
  std::printf("wrote %zu frames to %s\n", t, out_dir.c_str());
  return 0;
}

template <typename T>
int run_eval(const ff::ModelConfig& mcfg, const std::string& ckpt,
             const std::string& data_dir, const std::string& out_path) {
  ff::Generator<T> gen(mcfg);
  auto params = gen.params();
  ff::load_checkpoint(params, ckpt);
  auto dataset = ff::load_dataset<T>(data_dir);
  ff::MetricReport report = ff::evaluate(gen, dataset);
  std::ofstream out(out_path);
  if (!out) throw ff::IoError("cannot open report '" + out_path + "'");
  ff::write_report(report, out);

  double psnr_sum = 0, ssim_sum = 0;
  for (const auto& c : report.clips) {
    auto m = c.mean();
    psnr_sum += m.psnr;
    ssim_sum += m.ssim;
  }
  size_t n = report.clips.size();
  std::printf("clips=%zu mean_psnr=%s mean_ssim=%s\n", n,
              ff::detail::fmt_metric(psnr_sum / double(n)).c_str(),
              ff::detail::fmt_metric(ssim_sum / double(n)).c_str());
  return 0;
}

template <typename T>
int run_inspect(const ff::ModelConfig& mcfg, const std::string& ckpt,
                const std::string& in_dir, const std::string& out_dir) {
  ff::Generator<T> gen(mcfg);
  auto params = gen.params();
  ff::load_checkpoint(params, ckpt);
  ff::ClipTensor<T> clip = ff::load_clip_dir<T>(in_dir, in_dir);
  ff::NoGradGuard ng;
  auto layers = gen.forward_per_layer(clip);
  for (size_t l = 0; l < layers.size(); ++l) {
    char sub[32];
    std::snprintf(sub, sizeof(sub), "/layer_%02zu", l);
    std::string dir = out_dir + sub;
    std::filesystem::create_directories(dir);
    const auto& frames = layers[l];
    size_t t = frames.extent(0), H = frames.extent(1), W = frames.extent(2);
    for (size_t j = 0; j < t; ++j) {
      char name[32];
      std::snprintf(name, sizeof(name), "/frame_%05zu.ppm", j);
      ff::write_ppm(dir + name, ff::reshape(ff::slice0(frames, j, j + 1),
                                            {H, W, size_t(3)}));
    }
  }
  std::printf("wrote %zu layer dumps to %s\n", layers.size(),
              out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& scope, double eps, const CommonArgs& common) {
  uint64_t seed = common.seed ? common.seed : 2026;
  auto cases = ff::gradchecks_for_scope(scope, seed);
  int failures = 0;
  std::string worst_name;
  double worst_err = -1;
  for (auto& c : cases) {
    ff::GradCheckReport r = c.run(eps);
    bool ok = r.max_rel_err < c.threshold;
    std::printf("%-24s max_rel_err=%.3e threshold=%.0e worst=%s %s\n",
                c.name.c_str(), r.max_rel_err, c.threshold,
                r.worst_param.c_str(), ok ? "ok" : "FAIL");
    if (!ok) {
      ++failures;
      if (r.max_rel_err > worst_err) {
        worst_err = r.max_rel_err;
        worst_name = c.name;
      }
    }
  }
  if (failures) {
    std::printf("FAILED %d/%zu targets; worst offender: %s (%.3e)\n",
                failures, cases.size(), worst_name.c_str(), worst_err);
    return 1;
  }
  std::printf("all %zu targets passed\n", cases.size());
  return 0;
}

// --geom "h=16,w=16,c=64,k=7,s=3,p=3,d=64,heads=4,t=5"
struct BenchGeom {
  size_t h = 16, w = 16, c = 64, k = 7, s = 3, p = 3;
  size_t d = 64, heads = 4, t = 5;
};

BenchGeom parse_bench_geom(const std::string& text) {
  BenchGeom g;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw ff::ConfigError("bad geometry item '" + item + "'");
    std::string key = ff::detail::trim(item.substr(0, eq));
    uint64_t value = ff::detail::parse_u64(ff::detail::trim(item.substr(eq + 1)),
                                           "--geom");
    if (key == "h") g.h = value;
    else if (key == "w") g.w = value;
    else if (key == "c") g.c = value;
    else if (key == "k") g.k = value;
    else if (key == "s") g.s = value;
    else if (key == "p") g.p = value;
    else if (key == "d") g.d = value;
    else if (key == "heads") g.heads = value;
    else if (key == "t") g.t = value;
    else throw ff::ConfigError("unknown geometry key '" + key + "'");
  }
  return g;
}

struct BenchResult {
  double mean_ns = 0, stddev_ns = 0;
  double checksum = 0;
};

template <typename Fn>
BenchResult run_bench(size_t iters, Fn body) {
  BenchResult res;
  body();  // warmup
  std::vector<double> ns(iters);
  for (size_t i = 0; i < iters; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    res.checksum += body();
    auto t1 = std::chrono::steady_clock::now();
    ns[i] = std::chrono::duration<double, std::nano>(t1 - t0).count();
  }
  for (double v : ns) res.mean_ns += v;
  res.mean_ns /= double(iters);
  for (double v : ns)
    res.stddev_ns += (v - res.mean_ns) * (v - res.mean_ns);
  res.stddev_ns = std::sqrt(res.stddev_ns / double(iters));
  return res;
}

void print_bench(const std::string& name, const BenchResult& r) {
  std::printf("%-8s %.0f ns/op ± %.0f (checksum %.6g)\n", name.c_str(),
              r.mean_ns, r.stddev_ns, r.checksum);
}

int cmd_bench(const std::string& op, const std::string& geom_text,
              size_t iters, const CommonArgs& common) {
  using T = float;
  BenchGeom bg = parse_bench_geom(geom_text);
  ff::PatchGeometry geom{bg.h, bg.w, bg.c, bg.k, bg.s, bg.p};
  geom.validate();
  ff::Rng rng(common.seed ? common.seed : 7);
  ff::NoGradGuard ng;

  if (op == "ss") {
    auto x = ff::Tensor<T>::uniform({bg.h, bg.w, bg.c}, rng, 0, 1);
    print_bench("ss", run_bench(iters, [&] {
      auto ps = ff::soft_split(x, geom);
      return double(ps.patches.data()[0]) + double(ps.patches.data().back());
    }));
  } else if (op == "sc") {
    auto p = ff::Tensor<T>::uniform({geom.tokens(), geom.patch_len()}, rng, 0, 1);
    print_bench("sc", run_bench(iters, [&] {
      auto y = ff::soft_composite(ff::PatchSet<T>{p, geom});
      return double(y.data()[0]) + double(y.data().back());
    }));
  } else if (op == "msa") {
    ff::MultiHeadSelfAttention<T> msa(bg.d, bg.heads, rng);
    auto x = ff::Tensor<T>::uniform({bg.t * geom.tokens(), bg.d}, rng, -1, 1);
    print_bench("msa", run_bench(iters, [&] {
      auto y = msa(x);
      return double(y.data()[0]) + double(y.data().back());
    }));
  } else if (op == "f3n") {
    size_t cp = ff::f3n_inner_channels(bg.d, bg.k);
    ff::PatchGeometry inner{bg.h, bg.w, cp, bg.k, bg.s, bg.p};
    ff::FusionFeedForward<T> f3n(bg.d, inner, true, rng);
    ff::FeedForward<T> ffn(bg.d, 4 * bg.d, rng);
    auto x = ff::Tensor<T>::uniform({bg.t * inner.tokens(), bg.d}, rng, -1, 1);
    BenchResult rf3n = run_bench(iters, [&] {
      auto y = f3n(x, bg.t, inner.tokens());
      return double(y.data()[0]) + double(y.data().back());
    });
    BenchResult rffn = run_bench(iters, [&] {
      auto y = ffn(x);
      return double(y.data()[0]) + double(y.data().back());
    });
    print_bench("f3n", rf3n);
    print_bench("ffn", rffn);
    std::printf("f3n/ffn time ratio: %.3f\n", rf3n.mean_ns / rffn.mean_ns);
  } else {
    throw ff::ConfigError("unknown bench op '" + op + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FuseFormer video inpainting toolkit"};
  app.require_subcommand(1);

  CommonArgs common;

  // gen-data
  auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string spec_path, out_dir;
  gen_data->add_option("--spec", spec_path, "data spec file")->required();
  gen_data->add_option("--out", out_dir, "output dataset directory")->required();
  gen_data->add_option("--seed", common.seed, "override spec seeds");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string model_cfg, train_cfg, data_dir, train_out, resume;
  train->add_option("--model-cfg", model_cfg, "model config")->required();
  train->add_option("--train-cfg", train_cfg, "train config")->required();
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint (.gen) to resume from");
  train->add_option("--seed", common.seed, "override train config seed");

  // infer
  auto* infer = app.add_subcommand("infer", "inpaint one clip directory");
  std::string ckpt, in_dir, infer_out;
  infer->add_option("--ckpt", ckpt, "generator checkpoint")->required();
  infer->add_option("--model-cfg", model_cfg, "model config")->required();
  infer->add_option("--in", in_dir, "input clip directory")->required();
  infer->add_option("--out", infer_out, "output directory")->required();
  infer->add_option("--precision", common.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  infer->add_option("--seed", common.seed, "accepted for uniformity");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report over a dataset");
  std::string report_path;
  eval_cmd->add_option("--ckpt", ckpt, "generator checkpoint")->required();
  eval_cmd->add_option("--model-cfg", model_cfg, "model config")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", report_path, "report file")->required();
  eval_cmd->add_option("--precision", common.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  eval_cmd->add_option("--seed", common.seed, "accepted for uniformity");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "finite-difference gradient audit");
  std::string scope;
  double eps = 1e-5;
  gradcheck->add_option("--scope", scope, "op | block | model")
      ->required()
      ->check(CLI::IsMember({"op", "block", "model"}));
  gradcheck->add_option("--eps", eps, "finite-difference step")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", common.seed, "input seed");

  // bench
  auto* bench = app.add_subcommand("bench", "time one operator");
  std::string bench_op, geom_text = "h=16,w=16,c=64,k=7,s=3,p=3,d=64";
  size_t iters = 0;
  bench->add_option("--op", bench_op, "ss | sc | f3n | msa")
      ->required()
      ->check(CLI::IsMember({"ss", "sc", "f3n", "msa"}));
  bench->add_option("--geom", geom_text, "h=..,w=..,c=..,k=..,s=..,p=..[,d=..,heads=..,t=..]");
  bench->add_option("--iters", iters, "iterations")
      ->required()
      ->check(CLI::PositiveNumber);
  bench->add_option("--seed", common.seed, "input seed");

  // inspect-layers
  auto* inspect = app.add_subcommand("inspect-layers",
                                     "decode every block's tokens to frames");
  inspect->add_option("--ckpt", ckpt, "generator checkpoint")->required();
  inspect->add_option("--model-cfg", model_cfg, "model config")->required();
  inspect->add_option("--in", in_dir, "input clip directory")->required();
  inspect->add_option("--out", out_dir, "output directory")->required();
  inspect->add_option("--precision", common.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  inspect->add_option("--seed", common.seed, "accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen_data->parsed()) return cmd_gen_data(spec_path, out_dir, common);
    if (train->parsed())
      return cmd_train(model_cfg, train_cfg, data_dir, train_out, resume,
                       common);
    if (infer->parsed()) {
      ff::ModelConfig mcfg = ff::load_model_config(model_cfg);
      return common.precision == "f64"
                 ? run_infer<double>(mcfg, ckpt, in_dir, infer_out)
                 : run_infer<float>(mcfg, ckpt, in_dir, infer_out);
    }
    if (eval_cmd->parsed()) {
      ff::ModelConfig mcfg = ff::load_model_config(model_cfg);
      return common.precision == "f64"
                 ? run_eval<double>(mcfg, ckpt, data_dir, report_path)
                 : run_eval<float>(mcfg, ckpt, data_dir, report_path);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(scope, eps, common);
    if (bench->parsed()) return cmd_bench(bench_op, geom_text, iters, common);
    if (inspect->parsed()) {
      ff::ModelConfig mcfg = ff::load_model_config(model_cfg);
      return common.precision == "f64"
                 ? run_inspect<double>(mcfg, ckpt, in_dir, out_dir)
                 : run_inspect<float>(mcfg, ckpt, in_dir, out_dir);
    }
  } catch (const ff::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const ff::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
