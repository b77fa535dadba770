#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedccrl/augment.hpp"
#include "fedccrl/data.hpp"
#include "fedccrl/losses.hpp"
#include "fedccrl/model.hpp"

namespace fedccrl {

enum class Method { kFedCcrl, kFedAvg };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct FederationConfig {
  ModelConfig model;  // input dims and class count are filled from the data
  std::size_t clients_per_domain = 2;  // K
  std::size_t rounds = 10;             // T
  std::size_t local_epochs = 3;        // E
  std::size_t batch_size = 10;
  double upload_ratio = 0.1;           // r
  LossWeights loss;                    // lambda1, lambda2, tau
  double alpha = 0.1;
  double beta = 1.0;
  int severity = 3;
  bool ccdt_literal_variant = false;
  double lr_init = 0.001;
  Method method = Method::kFedCcrl;
  // Ablation switches (fedccrl only; fedavg ignores them).
  bool ccdt_on = true;
  bool difp_on = true;
  bool ra_on = true;
  bool js_on = true;
  std::uint64_t global_seed = 1;

  void validate(std::size_t num_domains) const;
  AugmentConfig augment_config() const;
  ScheduleConfig schedule() const;
};

enum class PayloadKind { kParameters, kStatistics };
enum class Direction { kClientToServer, kServerToClient };

struct MessageRecord {
  std::size_t round = 0;
  Direction direction = Direction::kClientToServer;
  std::uint32_t client_id = 0;
  PayloadKind kind = PayloadKind::kParameters;
  std::size_t bytes = 0;
};

// The complete set of payloads a client can legally upload. Raw samples and
// labels have no representation here by construction.
struct ParameterPayload {
  std::uint32_t client_id = 0;
  std::vector<std::uint8_t> bytes;
};
struct StatisticsPayload {
  std::uint32_t client_id = 0;
  std::vector<std::uint8_t> bytes;
};
using UplinkMessage = std::variant<ParameterPayload, StatisticsPayload>;

struct ClientState {
  std::uint32_t client_id = 0;
  ClientShard shard;
  ModelParameters params;  // private copy, refreshed each round
  AdamState optimizer;
  StatisticsPool pool_view;
};

struct ServerState {
  ModelParameters global_params;
  StatisticsPool stats_pool;
  std::size_t round = 0;
  std::vector<MessageRecord> message_log;
};

struct RoundMetrics {
  std::size_t round = 0;
  double loss_cls = 0.0;
  double loss_ra = 0.0;
  double loss_js = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t params_bytes_up = 0;
  std::uint64_t params_bytes_down = 0;
  std::uint64_t stats_bytes_up = 0;
  std::uint64_t pool_bytes_down = 0;
  std::size_t stats_entries_uploaded = 0;
};

/// One line of the metrics stream: training means of the round plus the
/// post-aggregation accuracy on the held-out domain.
struct RoundRecord {
  std::size_t round = 0;
  std::uint32_t target_domain = 0;
  double accuracy = 0.0;
  double loss_cls = 0.0;
  double loss_ra = 0.0;
  double loss_js = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

struct TargetRunResult {
  std::uint32_t target_domain = 0;
  std::vector<RoundRecord> rounds;
  double final_accuracy = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t params_bytes_up = 0;
  std::uint64_t params_bytes_down = 0;
  std::uint64_t stats_bytes_up = 0;
  std::uint64_t pool_bytes_down = 0;
  std::vector<MessageRecord> message_log;
};

struct ExperimentReport {
  std::vector<TargetRunResult> targets;
};

/// Percentage of correctly classified samples.
double evaluate_accuracy(const ModelConfig& cfg, const ModelParameters& params,
                         const DomainDataset& dataset);

/// Sample-count-weighted parameter average. Inputs are reduced in a canonical
/// content order with extended-precision accumulation, so the result is
/// invariant under permutation of the input list and averaging identical sets
/// reproduces them bit-exactly. Version is incremented.
ModelParameters fedavg_aggregate(const std::vector<std::pair<std::uint64_t, ModelParameters>>& param_sets);

/// One communication round: parameter broadcast, statistics exchange
/// (fedccrl), E local epochs per client, weighted aggregation.
RoundMetrics run_round(ServerState& server, std::vector<ClientState>& clients,
                       const FederationConfig& cfg);

/// One local epoch over the client's shard. Accumulates per-batch loss sums
/// and the batch count into the metrics.
void local_train_epoch(ClientState& client, const StatisticsPool& pool_view,
                       const FederationConfig& cfg, std::size_t schedule_step, Rng& shuffle_rng,
                       Rng& augment_rng, double& sum_cls, double& sum_ra, double& sum_js,
                       std::size_t& batches);

/// Full leave-one-domain-out run against a single held-out domain.
TargetRunResult run_single_target(const FederationConfig& cfg,
                                  const std::vector<DomainDataset>& data,
                                  std::uint32_t target_domain);

/// Every domain held out once.
ExperimentReport run_experiment(const FederationConfig& cfg,
                                const std::vector<DomainDataset>& data);

}  // namespace fedccrl
