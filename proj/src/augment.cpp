#include "fedccrl/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fedccrl/wire.hpp"

namespace fedccrl {

namespace {
constexpr double kSigmaGuard = 1e-6;  // normalization guard for flat channels
constexpr double kRangeSlack = 1e-6;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

void AugmentConfig::validate() const {
  if (!(alpha > 0.0)) throw TensorError("augment: alpha must be positive");
  if (!(beta > 0.0)) throw TensorError("augment: beta must be positive");
  if (severity < 1 || severity > 3) throw TensorError("augment: severity must be in {1,2,3}");
}

StatisticsPool StatisticsPool::view_for(std::uint32_t client_id) const {
  StatisticsPool view;
  view.entries.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.origin_client != client_id) view.entries.push_back(e);
  }
  return view;
}

SampleStatistics channel_stats(const Tensor& image) {
  if (image.rank() != 3) {
    throw TensorError("channel_stats: expected [C,H,W], got " + shape_to_string(image.shape()));
  }
  const std::size_t c = image.shape()[0];
  const std::size_t hw = image.shape()[1] * image.shape()[2];
  if (hw == 0) throw TensorError("channel_stats: empty spatial extent");
  SampleStatistics st;
  st.mean.resize(c);
  st.std.resize(c);
  const auto px = image.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double lo = px[ch * hw], hi = px[ch * hw];
    double m = 0.0;
    for (std::size_t s = 0; s < hw; ++s) {
      const double v = px[ch * hw + s];
      m += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo == hi) {  // constant channel: exact stats, no summation rounding
      st.mean[ch] = lo;
      st.std[ch] = 0.0;
      continue;
    }
    m /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t s = 0; s < hw; ++s) {
      const double d = px[ch * hw + s] - m;
      var += d * d;
    }
    st.mean[ch] = m;
    st.std[ch] = std::sqrt(var / static_cast<double>(hw));
  }
  return st;
}

std::vector<SampleStatistics> select_statistics(const ClientShard& shard, double upload_ratio,
                                                Rng& rng) {
  if (!(upload_ratio > 0.0 && upload_ratio < 1.0)) {
    throw TensorError("select_statistics: upload ratio must lie in (0,1), got " +
                      std::to_string(upload_ratio));
  }
  if (shard.size() == 0) throw TensorError("select_statistics: empty shard");
  const auto n = static_cast<double>(shard.size());
  const auto count = static_cast<std::size_t>(std::ceil(upload_ratio * n));
  std::vector<SampleStatistics> out;
  out.reserve(count);
  for (std::size_t i : rng.sample_without_replacement(shard.size(), count)) {
    SampleStatistics st = channel_stats(shard.images[i]);
    st.origin_client = shard.client_id;
    out.push_back(std::move(st));
  }
  return out;
}

Tensor ccdt(const Tensor& batch, const StatisticsPool& pool_view, const AugmentConfig& cfg,
            Rng& rng) {
  cfg.validate();
  if (batch.rank() != 4) {
    throw TensorError("ccdt: expected [B,C,H,W], got " + shape_to_string(batch.shape()));
  }
  if (pool_view.empty()) {
    throw TensorError("ccdt: empty statistics pool view; caller should fall back to identity");
  }
  const std::size_t b = batch.shape()[0], c = batch.shape()[1];
  const std::size_t hw = batch.shape()[2] * batch.shape()[3];
  for (const auto& e : pool_view.entries) {
    if (e.mean.size() != c || e.std.size() != c) {
      throw TensorError("ccdt: pool entry channel count does not match batch");
    }
  }

  std::vector<double> out(batch.size());
  const auto px = batch.data();
  for (std::size_t i = 0; i < b; ++i) {
    const double* sample = &px[i * c * hw];
    double* dst = &out[i * c * hw];
    const SampleStatistics& donor = pool_view.entries[rng.uniform_int(pool_view.size())];
    const double lambda = cfg.forced_lambda ? *cfg.forced_lambda : rng.beta(cfg.alpha, cfg.alpha);
    if (lambda == 0.0) {
      // Mixed statistics coincide with the sample's own; the transform is the
      // identity, returned bit-exactly.
      std::copy_n(sample, c * hw, dst);
      continue;
    }
    // Own statistics, per channel.
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean = 0.0;
      for (std::size_t s = 0; s < hw; ++s) mean += sample[ch * hw + s];
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t s = 0; s < hw; ++s) {
        const double d = sample[ch * hw + s] - mean;
        var += d * d;
      }
      const double sigma = std::sqrt(var / static_cast<double>(hw));
      const double sigma_guarded = std::max(sigma, kSigmaGuard);
      const double mean_mix = lambda * donor.mean[ch] + (1.0 - lambda) * mean;
      const double sigma_mix = lambda * donor.std[ch] + (1.0 - lambda) * sigma;
      // Default: mixed std scales the normalized sample and mixed mean shifts
      // it, which transfers the statistics exactly. The literal variant swaps
      // the two roles.
      const double scale = (cfg.ccdt_literal_variant ? mean_mix : sigma_mix) / sigma_guarded;
      const double shift = cfg.ccdt_literal_variant ? sigma_mix : mean_mix;
      for (std::size_t s = 0; s < hw; ++s) {
        dst[ch * hw + s] = scale * (sample[ch * hw + s] - mean) + shift;
      }
    }
  }
  return Tensor::from_data(batch.shape(), std::move(out));
}

namespace {

// ---- AugMix operation base -------------------------------------------------
// All ops map a planar [C,H,W] image in [0,1] to a same-shape image. Geometric
// ops resample nearest-neighbor around the image center with zero fill.

struct ImageView {
  const double* px;
  std::size_t c, h, w;
};

using OpFn = void (*)(const ImageView&, double*, double);

void op_autocontrast(const ImageView& in, double* out, double) {
  const std::size_t hw = in.h * in.w;
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const double* src = &in.px[ch * hw];
    double lo = src[0], hi = src[0];
    for (std::size_t s = 1; s < hw; ++s) {
      lo = std::min(lo, src[s]);
      hi = std::max(hi, src[s]);
    }
    double* dst = &out[ch * hw];
    if (hi - lo < 1e-12) {
      std::copy_n(src, hw, dst);
    } else {
      const double scale = 1.0 / (hi - lo);
      for (std::size_t s = 0; s < hw; ++s) dst[s] = (src[s] - lo) * scale;
    }
  }
}

void op_equalize(const ImageView& in, double* out, double) {
  const std::size_t hw = in.h * in.w;
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const double* src = &in.px[ch * hw];
    double* dst = &out[ch * hw];
    std::array<std::size_t, 256> hist{};
    for (std::size_t s = 0; s < hw; ++s) {
      const int bin = std::clamp(static_cast<int>(src[s] * 255.0 + 0.5), 0, 255);
      ++hist[bin];
    }
    std::array<double, 256> lut;
    std::size_t cum = 0, nonzero_min = 0;
    bool found = false;
    for (int i = 0; i < 256 && !found; ++i) {
      if (hist[i] > 0) {
        nonzero_min = hist[i];
        found = true;
      }
    }
    const double denom = static_cast<double>(hw) - static_cast<double>(nonzero_min);
    for (int i = 0; i < 256; ++i) {
      cum += hist[i];
      lut[i] = denom <= 0.0
                   ? static_cast<double>(i) / 255.0
                   : std::clamp(static_cast<double>(cum - nonzero_min) / denom, 0.0, 1.0);
    }
    for (std::size_t s = 0; s < hw; ++s) {
      const int bin = std::clamp(static_cast<int>(src[s] * 255.0 + 0.5), 0, 255);
      dst[s] = lut[bin];
    }
  }
}

void op_posterize(const ImageView& in, double* out, double bits) {
  const int keep = std::clamp(static_cast<int>(bits), 1, 8);
  const double levels = static_cast<double>((1 << keep) - 1);
  const std::size_t n = in.c * in.h * in.w;
  for (std::size_t s = 0; s < n; ++s) {
    out[s] = std::floor(in.px[s] * levels) / levels;
  }
}

void op_solarize(const ImageView& in, double* out, double threshold) {
  const std::size_t n = in.c * in.h * in.w;
  for (std::size_t s = 0; s < n; ++s) {
    out[s] = in.px[s] >= threshold ? 1.0 - in.px[s] : in.px[s];
  }
}

// Shared inverse-affine resampler: out(y,x) samples in at center + A*(p-center).
void affine_sample(const ImageView& in, double* out, double a00, double a01, double a10, double a11,
                   double tx, double ty) {
  const double cy = (static_cast<double>(in.h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(in.w) - 1.0) / 2.0;
  const std::size_t hw = in.h * in.w;
  for (std::size_t y = 0; y < in.h; ++y) {
    for (std::size_t x = 0; x < in.w; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = a10 * dx + a11 * dy + cy + ty;
      const double sx = a00 * dx + a01 * dy + cx + tx;
      const long iy = std::lround(sy);
      const long ix = std::lround(sx);
      const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(in.h) &&
                          ix < static_cast<long>(in.w);
      for (std::size_t ch = 0; ch < in.c; ++ch) {
        out[ch * hw + y * in.w + x] =
            inside ? in.px[ch * hw + static_cast<std::size_t>(iy) * in.w + ix] : 0.0;
      }
    }
  }
}

void op_rotate(const ImageView& in, double* out, double degrees) {
  const double rad = degrees * kPi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  affine_sample(in, out, c, -s, s, c, 0.0, 0.0);
}

void op_shear_x(const ImageView& in, double* out, double factor) {
  affine_sample(in, out, 1.0, factor, 0.0, 1.0, 0.0, 0.0);
}

void op_shear_y(const ImageView& in, double* out, double factor) {
  affine_sample(in, out, 1.0, 0.0, factor, 1.0, 0.0, 0.0);
}

void op_translate_x(const ImageView& in, double* out, double pixels) {
  affine_sample(in, out, 1.0, 0.0, 0.0, 1.0, pixels, 0.0);
}

void op_translate_y(const ImageView& in, double* out, double pixels) {
  affine_sample(in, out, 1.0, 0.0, 0.0, 1.0, 0.0, pixels);
}

void op_identity(const ImageView& in, double* out, double) {
  std::copy_n(in.px, in.c * in.h * in.w, out);
}

constexpr std::size_t kNumOps = 9;

// Samples the magnitude for op `id` at the given severity and applies it.
void apply_op(std::size_t id, const ImageView& in, double* out, int severity, Rng& rng) {
  const double level = static_cast<double>(severity) / 3.0;
  auto signed_mag = [&](double max_at_full) {
    const double m = rng.uniform(0.0, max_at_full * level);
    return rng.bernoulli(0.5) ? m : -m;
  };
  switch (id) {
    case 0:
      op_autocontrast(in, out, 0.0);
      break;
    case 1:
      op_equalize(in, out, 0.0);
      break;
    case 2: {
      const auto max_drop = static_cast<std::uint64_t>(std::lround(4.0 * level));
      const double bits = 8.0 - static_cast<double>(rng.uniform_int(max_drop + 1));
      op_posterize(in, out, bits);
      break;
    }
    case 3:
      op_solarize(in, out, rng.uniform(1.0 - 0.5 * level, 1.0));
      break;
    case 4:
      op_rotate(in, out, signed_mag(30.0));
      break;
    case 5:
      op_shear_x(in, out, signed_mag(0.3));
      break;
    case 6:
      op_shear_y(in, out, signed_mag(0.3));
      break;
    case 7:
      op_translate_x(in, out, signed_mag(static_cast<double>(in.w) / 3.0));
      break;
    case 8:
      op_translate_y(in, out, signed_mag(static_cast<double>(in.h) / 3.0));
      break;
    default:
      throw TensorError("augmix: bad op id");
  }
}

}  // namespace

Tensor difp_augmix(const Tensor& batch, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (batch.rank() != 4) {
    throw TensorError("difp: expected [B,C,H,W], got " + shape_to_string(batch.shape()));
  }
  const auto px = batch.data();
  for (double v : px) {
    if (v < -kRangeSlack || v > 1.0 + kRangeSlack) {
      throw TensorError("difp: input pixel " + std::to_string(v) +
                        " outside [0,1]; caller must pre-normalize");
    }
  }
  const std::size_t b = batch.shape()[0], c = batch.shape()[1];
  const std::size_t h = batch.shape()[2], w = batch.shape()[3];
  const std::size_t chw = c * h * w;

  std::vector<double> out(batch.size());
  std::vector<double> clean(chw), mixed(chw), buf_a(chw), buf_b(chw);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t s = 0; s < chw; ++s) clean[s] = std::clamp(px[i * chw + s], 0.0, 1.0);
    std::fill(mixed.begin(), mixed.end(), 0.0);

    const std::size_t num_chains = 1 + rng.uniform_int(3);
    const std::vector<double> weights = rng.dirichlet(cfg.beta, num_chains);
    for (std::size_t chain = 0; chain < num_chains; ++chain) {
      std::array<std::size_t, 3> ops{};
      for (auto& id : ops) id = rng.uniform_int(kNumOps);
      const std::size_t depth = 1 + rng.uniform_int(3);
      const double* cur = clean.data();
      double* nxt = buf_a.data();
      for (std::size_t d = 0; d < depth; ++d) {
        const ImageView view{cur, c, h, w};
        if (cfg.identity_ops) {
          op_identity(view, nxt, 0.0);
        } else {
          apply_op(ops[d], view, nxt, cfg.severity, rng);
        }
        cur = nxt;
        nxt = (nxt == buf_a.data()) ? buf_b.data() : buf_a.data();
      }
      for (std::size_t s = 0; s < chw; ++s) mixed[s] += weights[chain] * cur[s];
    }

    const double m = cfg.forced_mix ? *cfg.forced_mix : rng.beta(cfg.beta, cfg.beta);
    double* dst = &out[i * chw];
    for (std::size_t s = 0; s < chw; ++s) {
      dst[s] = std::clamp(m * clean[s] + (1.0 - m) * mixed[s], 0.0, 1.0);
    }
  }
  return Tensor::from_data(batch.shape(), std::move(out));
}

Tensor feature_extension(const Tensor& batch, const StatisticsPool& pool_view,
                         const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor stage = cfg.ccdt_enabled ? ccdt(batch, pool_view, cfg, rng) : batch.detach();
  if (!cfg.difp_enabled) return stage;
  if (cfg.ccdt_enabled) {
    // CCDT can leave the unit range; DIFP operates on [0,1].
    auto d = stage.mutable_data();
    for (auto& v : d) v = std::clamp(v, 0.0, 1.0);
  }
  return difp_augmix(stage, cfg, rng);
}

std::size_t statistics_entry_wire_size(std::size_t channels) { return 4 + 2 + 16 * channels; }

std::vector<std::uint8_t> serialize_statistics(const std::vector<SampleStatistics>& entries) {
  std::vector<std::uint8_t> out;
  for (const auto& e : entries) {
    if (e.mean.size() != e.std.size()) throw FormatError("statistics entry: mean/std length mismatch");
    put_u32(out, e.origin_client);
    put_u16(out, static_cast<std::uint16_t>(e.mean.size()));
    for (double v : e.mean) put_f64(out, v);
    for (double v : e.std) put_f64(out, v);
  }
  return out;
}

std::vector<SampleStatistics> deserialize_statistics(std::span<const std::uint8_t> bytes) {
  WireReader r(bytes);
  std::vector<SampleStatistics> out;
  while (!r.done()) {
    SampleStatistics e;
    e.origin_client = r.u32();
    const std::uint16_t c = r.u16();
    e.mean.resize(c);
    e.std.resize(c);
    for (auto& v : e.mean) v = r.f64();
    for (auto& v : e.std) v = r.f64();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace fedccrl
