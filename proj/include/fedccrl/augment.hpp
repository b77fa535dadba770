#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedccrl/data.hpp"
#include "fedccrl/rng.hpp"
#include "fedccrl/tensor.hpp"

namespace fedccrl {

/// Per-sample channel-wise image statistics; the only sample-derived payload
/// that ever leaves a client.
struct SampleStatistics {
  std::vector<double> mean;  // length C
  std::vector<double> std;   // length C, entries >= 0
  std::uint32_t origin_client = 0;
};

/// Server-side collection of uploaded statistics. Clients receive the pool
/// minus their own contributions.
struct StatisticsPool {
  std::vector<SampleStatistics> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  /// Pool view for a client: every entry except those it uploaded.
  StatisticsPool view_for(std::uint32_t client_id) const;
};

struct AugmentConfig {
  double alpha = 0.1;    // Beta shape for the style mixing coefficient
  double beta = 1.0;     // Dirichlet/Beta shape for chain mixing
  int severity = 3;      // op intensity level, 1..3
  bool ccdt_enabled = true;
  bool difp_enabled = true;
  // Algorithm-literal variant where the mixed mean scales and the mixed std
  // shifts; off by default (see ccdt()).
  bool ccdt_literal_variant = false;

  // Test hooks: pin the stochastic mixing knobs.
  std::optional<double> forced_lambda;  // CCDT lambda
  std::optional<double> forced_mix;     // DIFP final mixing weight m
  bool identity_ops = false;            // DIFP chains become identity

  void validate() const;
};

/// Channel-wise mean and population std (divisor H*W) of one [C,H,W] image.
SampleStatistics channel_stats(const Tensor& image);

/// Statistics of ceil(r * n) distinct samples drawn uniformly without
/// replacement; r in (0,1).
std::vector<SampleStatistics> select_statistics(const ClientShard& shard, double upload_ratio,
                                                Rng& rng);

/// Cross-client domain transfer on a batch [B,C,H,W]. Per sample: normalize
/// channel-wise, draw a donor (mu', sigma') uniformly from the pool view and
/// lambda ~ Beta(alpha, alpha), then denormalize with the lambda-mixed
/// statistics so that channel_stats(output) is exactly the lambda-mix of the
/// own and donor statistics. Output is detached; values may leave [0,1].
Tensor ccdt(const Tensor& batch, const StatisticsPool& pool_view, const AugmentConfig& cfg,
            Rng& rng);

/// Domain-invariant feature perturbation: AugMix-style chain mixing on a
/// batch in [0,1]. Output is clamped to [0,1] and detached.
Tensor difp_augmix(const Tensor& batch, const AugmentConfig& cfg, Rng& rng);

/// The cross-client feature extension M = DIFP after CCDT, honoring the
/// enabled flags. The intermediate is clamped to [0,1] before DIFP.
Tensor feature_extension(const Tensor& batch, const StatisticsPool& pool_view,
                         const AugmentConfig& cfg, Rng& rng);

// Statistics wire format: per entry, client id (u32), C (u16), then C means
// and C stds as float64, all little-endian.
std::vector<std::uint8_t> serialize_statistics(const std::vector<SampleStatistics>& entries);
std::vector<SampleStatistics> deserialize_statistics(std::span<const std::uint8_t> bytes);
std::size_t statistics_entry_wire_size(std::size_t channels);

}  // namespace fedccrl
