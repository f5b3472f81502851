#pragma once

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "fuseformer/checkpoint.hpp"
#include "fuseformer/model.hpp"

namespace ff {

struct TrainConfig {
  double lambda_r = 1.0;
  double lambda_adv = 0.01;  // 0 disables the adversarial path entirely
  double lr = 1e-4;
  std::vector<uint64_t> lr_drop_iters;  // x0.1 after each listed iteration
  uint64_t total_iters = 2000;
  size_t clip_len = 5;
  size_t batch_size = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string precision = "f32";

  void validate() const {
    if (lambda_r <= 0) throw ConfigError("lambda_r must be > 0");
    if (lambda_adv < 0) throw ConfigError("lambda_adv must be >= 0");
    if (lr <= 0) throw ConfigError("lr must be > 0");
    if (total_iters < 1) throw ConfigError("total_iters must be >= 1");
    if (clip_len < 1) throw ConfigError("clip_len must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (precision != "f32" && precision != "f64")
      throw ConfigError("precision must be f32 or f64");
  }
};

inline TrainConfig load_train_config(const std::string& path) {
  TrainConfig cfg;
  detail::parse_kv_file(path, [&](const std::string& key,
                                  const std::string& value,
                                  const std::string& where) {
    if (key == "lambda_r") cfg.lambda_r = detail::parse_f64(value, where);
    else if (key == "lambda_adv")
      cfg.lambda_adv = detail::parse_f64(value, where);
    else if (key == "lr") cfg.lr = detail::parse_f64(value, where);
    else if (key == "lr_drop_iters") {
      cfg.lr_drop_iters.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        cfg.lr_drop_iters.push_back(
            detail::parse_u64(detail::trim(item), where));
    } else if (key == "total_iters")
      cfg.total_iters = detail::parse_u64(value, where);
    else if (key == "clip_len") cfg.clip_len = detail::parse_u64(value, where);
    else if (key == "batch_size")
      cfg.batch_size = detail::parse_u64(value, where);
    else if (key == "beta1") cfg.beta1 = detail::parse_f64(value, where);
    else if (key == "beta2") cfg.beta2 = detail::parse_f64(value, where);
    else if (key == "adam_eps") cfg.adam_eps = detail::parse_f64(value, where);
    else if (key == "seed") cfg.seed = detail::parse_u64(value, where);
    else if (key == "checkpoint_every")
      cfg.checkpoint_every = detail::parse_u64(value, where);
    else if (key == "precision") cfg.precision = value;
    else
      throw ConfigError(where + ": unknown key '" + key + "'");
  });
  cfg.validate();
  return cfg;
}

// The paper-scale recipe: 500k iterations, learning rate 0.01 dropped at
// 400k and 450k. Named preset, not the default.
inline TrainConfig paper_scale_preset() {
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.total_iters = 500000;
  cfg.lr_drop_iters = {400000, 450000};
  cfg.clip_len = 5;
  return cfg;
}

// ---------------------------------------------------------------------------
// Losses

// Mean absolute error over all elements.
template <typename T>
Tensor<T> recon_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("recon_loss shapes differ: " + shape_str(pred.shape()) +
                     " vs " + shape_str(target.shape()));
  return mean(abs(sub(pred, target)));
}

namespace detail {

template <typename T>
void check_unit_range(const Tensor<T>& v, const char* role) {
  T x = v.item();
  if (!(x >= T(0) && x <= T(1)))
    throw DomainError(std::string(role) + " must lie in [0,1], got " +
                      std::to_string(double(x)));
}

}  // namespace detail

// -[log d_real + log(1 - d_fake)]; log arguments clamped at 1e-7.
template <typename T>
Tensor<T> disc_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  detail::check_unit_range(d_real, "d_real");
  detail::check_unit_range(d_fake, "d_fake");
  const T lo = T(1e-7);
  auto term_real = log(clamp(d_real, lo, T(1)));
  auto term_fake = log(clamp(add_scalar(neg(d_fake), T(1)), lo, T(1)));
  return neg(add(term_real, term_fake));
}

// Non-saturating generator loss: -log d_fake.
template <typename T>
Tensor<T> gen_adv_loss(const Tensor<T>& d_fake) {
  detail::check_unit_range(d_fake, "d_fake");
  return neg(log(clamp(d_fake, T(1e-7), T(1))));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& recon, const Tensor<T>& adv,
                     const TrainConfig& cfg) {
  return add(scale(recon, T(cfg.lambda_r)), scale(adv, T(cfg.lambda_adv)));
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  uint64_t step = 0;

  explicit AdamState(const ParamMap<T>& params) {
    for (auto& [name, t] : params.entries) {
      m.emplace_back(t.numel(), T(0));
      v.emplace_back(t.numel(), T(0));
    }
  }
};

// Standard bias-corrected Adam, applied in place to leaf parameters.
template <typename T>
void adam_step(ParamMap<T>& params, AdamState<T>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.entries.size())
    throw ShapeError("optimizer state does not match parameter list");
  state.step += 1;
  double bc1 = 1.0 - std::pow(beta1, double(state.step));
  double bc2 = 1.0 - std::pow(beta2, double(state.step));
  for (size_t pi = 0; pi < params.entries.size(); ++pi) {
    auto& t = params.entries[pi].second;
    if (!t.has_grad()) continue;
    const auto& g = t.grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != g.size())
      throw ShapeError("optimizer buffer shape mismatch for '" +
                       params.entries[pi].first + "'");
    auto& data = t.mutable_data();
    for (size_t i = 0; i < g.size(); ++i) {
      double gi = double(g[i]);
      double mi = beta1 * double(m[i]) + (1.0 - beta1) * gi;
      double vi = beta2 * double(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = T(mi);
      v[i] = T(vi);
      data[i] = T(double(data[i]) -
                  lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct IterationStats {
  uint64_t iter = 0;
  double l_r = 0, l_adv = 0, l_d = 0, lr = 0, ms = 0;

  std::string format() const {
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "iter=%" PRIu64 " l_r=%.9g l_adv=%.9g l_d=%.9g lr=%.9g ms=%.3f",
                  iter, l_r, l_adv, l_d, lr, ms);
    return buf;
  }
};

namespace detail {

// Random sub-clip of `len` distinct frames in temporal order.
template <typename T>
ClipTensor<T> sample_subclip(const ClipTensor<T>& clip, size_t len, Rng& rng) {
  size_t t = clip.frame_count();
  if (len > t)
    throw ShapeError("clip_len " + std::to_string(len) + " exceeds clip of " +
                     std::to_string(t) + " frames");
  std::vector<size_t> idx(t);
  for (size_t i = 0; i < t; ++i) idx[i] = i;
  for (size_t i = 0; i + 1 < t; ++i) {
    size_t j = i + size_t(rng.below(t - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(len);
  std::sort(idx.begin(), idx.end());

  size_t fsz = clip.frames.numel() / t;
  size_t msz = clip.masks.numel() / t;
  std::vector<T> fr(len * fsz), ma(len * msz);
  for (size_t i = 0; i < len; ++i) {
    std::copy_n(clip.frames.data().begin() + idx[i] * fsz, fsz,
                fr.begin() + i * fsz);
    std::copy_n(clip.masks.data().begin() + idx[i] * msz, msz,
                ma.begin() + i * msz);
  }
  Shape fshape = clip.frames.shape();
  fshape[0] = len;
  Shape mshape = clip.masks.shape();
  mshape[0] = len;
  return {Tensor<T>::from(fshape, std::move(fr)),
          Tensor<T>::from(mshape, std::move(ma))};
}

inline double lr_at(const TrainConfig& cfg, uint64_t iter) {
  double lr = cfg.lr;
  for (uint64_t drop : cfg.lr_drop_iters)
    if (iter > drop) lr *= 0.1;
  return lr;
}

}  // namespace detail

// Alternating G/D loop. Per iteration: sample a sub-clip, take one generator
// step on lambda_r * L_R + lambda_adv * L_adv, then (if adversarial) one
// discriminator step on L_D against the detached fake. Appends one metrics
// line per iteration and writes periodic checkpoints when out_dir is set.
template <typename T>
std::vector<IterationStats> train_loop(Generator<T>& gen,
                                       Discriminator<T>* disc,
                                       const TrainConfig& cfg,
                                       const std::vector<ClipTensor<T>>& data,
                                       const std::string& out_dir,
                                       uint64_t start_iter = 0) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training dataset is empty");
  bool adversarial = cfg.lambda_adv > 0;
  if (adversarial && !disc)
    throw ConfigError("lambda_adv > 0 requires a discriminator");

  ParamMap<T> gen_params = gen.params();
  AdamState<T> gen_state(gen_params);
  std::optional<ParamMap<T>> disc_params;
  std::optional<AdamState<T>> disc_state;
  if (adversarial) {
    disc_params = disc->params();
    disc_state.emplace(*disc_params);
  }

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir + "/metrics.log",
                  start_iter ? std::ios::app : std::ios::out);
    if (!log_file) throw IoError("cannot open metrics log in " + out_dir);
  }

  auto write_ckpt = [&](uint64_t iter) {
    if (out_dir.empty()) return;
    char tag[32];
    std::snprintf(tag, sizeof(tag), "ckpt_%06" PRIu64, iter);
    save_checkpoint(gen_params, out_dir + "/" + tag + ".gen");
    if (adversarial)
      save_checkpoint(*disc_params, out_dir + "/" + tag + ".disc");
  };

  Rng rng(cfg.seed);
  std::vector<IterationStats> stats;
  stats.reserve(cfg.total_iters);

  for (uint64_t iter = start_iter + 1; iter <= cfg.total_iters; ++iter) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = detail::lr_at(cfg, iter);
    IterationStats st;
    st.iter = iter;
    st.lr = lr;

    // Generator step.
    for (auto& [name, p] : gen_params.entries) p.zero_grad();
    if (adversarial)
      for (auto& [name, p] : disc_params->entries) p.zero_grad();

    std::vector<Tensor<T>> raw_outputs;
    std::vector<ClipTensor<T>> batch;
    Tensor<T> g_total;
    for (size_t b = 0; b < cfg.batch_size; ++b) {
      const ClipTensor<T>& clip = data[size_t(rng.below(data.size()))];
      ClipTensor<T> sub = detail::sample_subclip(clip, cfg.clip_len, rng);
      Tensor<T> raw = gen.forward(sub);
      Tensor<T> l_r = recon_loss(raw, sub.frames);
      st.l_r += double(l_r.item());
      Tensor<T> sample_loss = scale(l_r, T(cfg.lambda_r));
      if (adversarial) {
        Tensor<T> d_fake = (*disc)(raw);
        Tensor<T> l_adv = gen_adv_loss(d_fake);
        st.l_adv += double(l_adv.item());
        sample_loss = add(sample_loss, scale(l_adv, T(cfg.lambda_adv)));
      }
      g_total = b == 0 ? sample_loss : add(g_total, sample_loss);
      raw_outputs.push_back(raw);
      batch.push_back(std::move(sub));
    }
    if (cfg.batch_size > 1)
      g_total = scale(g_total, T(1) / T(cfg.batch_size));
    st.l_r /= double(cfg.batch_size);
    st.l_adv /= double(cfg.batch_size);
    g_total.backward();
    adam_step(gen_params, gen_state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

    // Discriminator step against detached fakes.
    if (adversarial) {
      for (auto& [name, p] : gen_params.entries) p.zero_grad();
      for (auto& [name, p] : disc_params->entries) p.zero_grad();
      Tensor<T> d_total;
      for (size_t b = 0; b < cfg.batch_size; ++b) {
        Tensor<T> d_real = (*disc)(batch[b].frames);
        Tensor<T> d_fake = (*disc)(raw_outputs[b].detach());
        Tensor<T> l_d = disc_loss(d_real, d_fake);
        st.l_d += double(l_d.item());
        d_total = b == 0 ? l_d : add(d_total, l_d);
      }
      if (cfg.batch_size > 1)
        d_total = scale(d_total, T(1) / T(cfg.batch_size));
      st.l_d /= double(cfg.batch_size);
      d_total.backward();
      adam_step(*disc_params, *disc_state, lr, cfg.beta1, cfg.beta2,
                cfg.adam_eps);
    }

    auto t1 = std::chrono::steady_clock::now();
    st.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (log_file) log_file << st.format() << "\n";
    if (cfg.checkpoint_every && iter % cfg.checkpoint_every == 0 &&
        iter != cfg.total_iters)
      write_ckpt(iter);
    stats.push_back(st);
  }
  write_ckpt(cfg.total_iters);
  if (log_file) log_file.flush();
  return stats;
}

}  // namespace ff
