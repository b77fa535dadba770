#include "fedccrl/federation.hpp"

#include <algorithm>
#include <cmath>

namespace fedccrl {

namespace {
// Purpose tags for deriving independent per-client round streams.
constexpr std::uint64_t kStreamShuffle = 0x73687566ULL;
constexpr std::uint64_t kStreamAugment = 0x6175676dULL;
constexpr std::uint64_t kStreamSelect = 0x73656c63ULL;
constexpr std::uint64_t kStreamPartition = 0x70617274ULL;
constexpr std::uint64_t kStreamInit = 0x696e6974ULL;
}  // namespace

std::string method_name(Method m) { return m == Method::kFedCcrl ? "fedccrl" : "fedavg"; }

Method parse_method(const std::string& name) {
  if (name == "fedccrl") return Method::kFedCcrl;
  if (name == "fedavg") return Method::kFedAvg;
  throw TensorError("unknown method '" + name + "' (expected fedccrl or fedavg)");
}

void FederationConfig::validate(std::size_t num_domains) const {
  if (rounds < 1) throw TensorError("federation: rounds must be >= 1");
  if (local_epochs < 1) throw TensorError("federation: local_epochs must be >= 1");
  if (batch_size < 1) throw TensorError("federation: batch_size must be >= 1");
  if (!(upload_ratio > 0.0 && upload_ratio < 1.0)) {
    throw TensorError("federation: upload_ratio must lie in (0,1)");
  }
  if (!(lr_init > 0.0)) throw TensorError("federation: lr must be positive");
  if (clients_per_domain < 1) throw TensorError("federation: clients_per_domain must be >= 1");
  if (num_domains * clients_per_domain < 2) {
    throw TensorError("federation: num_domains * clients_per_domain must be >= 2");
  }
  loss.validate();
  augment_config().validate();
}

AugmentConfig FederationConfig::augment_config() const {
  AugmentConfig a;
  a.alpha = alpha;
  a.beta = beta;
  a.severity = severity;
  a.ccdt_literal_variant = ccdt_literal_variant;
  a.ccdt_enabled = ccdt_on;
  a.difp_enabled = difp_on;
  return a;
}

ScheduleConfig FederationConfig::schedule() const { return {lr_init, rounds, local_epochs}; }

double evaluate_accuracy(const ModelConfig& cfg, const ModelParameters& params,
                         const DomainDataset& dataset) {
  if (dataset.size() == 0) throw DataError("evaluate_accuracy: empty dataset");
  const std::size_t chunk = 256;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t b = std::min(chunk, dataset.size() - start);
    std::vector<double> px;
    px.reserve(b * cfg.input_size());
    for (std::size_t i = 0; i < b; ++i) {
      const auto d = dataset.images[start + i].data();
      px.insert(px.end(), d.begin(), d.end());
    }
    Tensor x = Tensor::from_data({b, cfg.channels, cfg.height, cfg.width}, std::move(px));
    const auto predicted = predict_labels(classify(cfg, params, encode(cfg, params, x)));
    for (std::size_t i = 0; i < b; ++i) {
      if (predicted[i] == dataset.labels[start + i]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(dataset.size());
}

ModelParameters fedavg_aggregate(const std::vector<std::pair<std::uint64_t, ModelParameters>>& param_sets) {
  if (param_sets.empty()) throw TensorError("fedavg_aggregate: no parameter sets");
  const ModelParameters& ref = param_sets[0].second;
  for (std::size_t i = 0; i < param_sets.size(); ++i) {
    const auto& [n, p] = param_sets[i];
    if (n == 0) throw TensorError("fedavg_aggregate: client " + std::to_string(i) + " has weight 0");
    if (p.entries.size() != ref.entries.size()) {
      throw TensorError("fedavg_aggregate: client " + std::to_string(i) +
                        " has a different parameter count");
    }
    for (std::size_t e = 0; e < ref.entries.size(); ++e) {
      if (p.entries[e].first != ref.entries[e].first ||
          p.entries[e].second.shape() != ref.entries[e].second.shape()) {
        throw TensorError("fedavg_aggregate: parameter '" + ref.entries[e].first +
                          "' mismatches between client 0 and client " + std::to_string(i));
      }
    }
  }

  // Canonical content order: any permutation of the same multiset reduces in
  // the same sequence, so the output is bitwise identical.
  std::vector<std::size_t> order(param_sets.size());
  std::vector<std::vector<std::uint8_t>> keys(param_sets.size());
  for (std::size_t i = 0; i < param_sets.size(); ++i) {
    order[i] = i;
    keys[i] = serialize_parameters(param_sets[i].second);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (param_sets[a].first != param_sets[b].first) return param_sets[a].first < param_sets[b].first;
    return keys[a] < keys[b];
  });

  long double total_weight = 0.0L;
  for (const auto& [n, p] : param_sets) total_weight += static_cast<long double>(n);

  ModelParameters out;
  out.version = ref.version + 1;
  out.entries.reserve(ref.entries.size());
  for (std::size_t e = 0; e < ref.entries.size(); ++e) {
    const std::size_t count = ref.entries[e].second.size();
    std::vector<double> data(count);
    for (std::size_t j = 0; j < count; ++j) {
      long double acc = 0.0L;
      for (std::size_t oi : order) {
        acc += static_cast<long double>(param_sets[oi].first) *
               static_cast<long double>(param_sets[oi].second.entries[e].second.at(j));
      }
      data[j] = static_cast<double>(acc / total_weight);
    }
    out.entries.emplace_back(ref.entries[e].first,
                             Tensor::from_data(ref.entries[e].second.shape(), std::move(data)));
  }
  return out;
}

namespace {

std::size_t payload_size(const UplinkMessage& msg) {
  return std::visit([](const auto& p) { return p.bytes.size(); }, msg);
}

std::uint32_t payload_client(const UplinkMessage& msg) {
  return std::visit([](const auto& p) { return p.client_id; }, msg);
}

PayloadKind payload_kind(const UplinkMessage& msg) {
  return std::holds_alternative<ParameterPayload>(msg) ? PayloadKind::kParameters
                                                       : PayloadKind::kStatistics;
}

void log_uplink(ServerState& server, const UplinkMessage& msg) {
  server.message_log.push_back(
      {server.round, Direction::kClientToServer, payload_client(msg), payload_kind(msg),
       payload_size(msg)});
}

void log_downlink(ServerState& server, std::uint32_t client, PayloadKind kind, std::size_t bytes) {
  server.message_log.push_back({server.round, Direction::kServerToClient, client, kind, bytes});
}

Tensor assemble_batch(const ClientShard& shard, const std::vector<std::size_t>& order,
                      std::size_t start, std::size_t count, const ModelConfig& mc,
                      std::vector<std::size_t>& labels_out) {
  std::vector<double> px;
  px.reserve(count * mc.input_size());
  labels_out.clear();
  labels_out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t idx = order[start + i];
    const auto d = shard.images[idx].data();
    px.insert(px.end(), d.begin(), d.end());
    labels_out.push_back(shard.labels[idx]);
  }
  return Tensor::from_data({count, mc.channels, mc.height, mc.width}, std::move(px));
}

}  // namespace

void local_train_epoch(ClientState& client, const StatisticsPool& pool_view,
                       const FederationConfig& cfg, std::size_t schedule_step, Rng& shuffle_rng,
                       Rng& augment_rng, double& sum_cls, double& sum_ra, double& sum_js,
                       std::size_t& batches) {
  const double lr = cosine_lr(schedule_step / cfg.local_epochs, schedule_step % cfg.local_epochs,
                              cfg.schedule());
  const bool triple_path = cfg.method == Method::kFedCcrl &&
                           (cfg.ccdt_on || cfg.difp_on || cfg.ra_on || cfg.js_on);
  AugmentConfig aug = cfg.augment_config();
  // A client whose pool view is empty falls back to identity CCDT this round.
  if (aug.ccdt_enabled && pool_view.empty()) aug.ccdt_enabled = false;

  std::vector<std::size_t> order(client.shard.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_rng.shuffle(order);

  std::vector<std::size_t> labels;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t b = std::min(cfg.batch_size, order.size() - start);
    Tensor x = assemble_batch(client.shard, order, start, b, cfg.model, labels);

    Tensor loss;
    if (triple_path) {
      Tensor x1 = feature_extension(x, pool_view, aug, augment_rng);
      Tensor x2 = feature_extension(x, pool_view, aug, augment_rng);
      BatchTriple t;
      t.labels = labels;
      t.z = encode(cfg.model, client.params, x);
      t.z1 = encode(cfg.model, client.params, x1);
      t.z2 = encode(cfg.model, client.params, x2);
      t.yhat = classify(cfg.model, client.params, t.z);
      t.yhat1 = classify(cfg.model, client.params, t.z1);
      t.yhat2 = classify(cfg.model, client.params, t.z2);

      loss = classification_loss(t.yhat, t.yhat1, t.yhat2, t.labels);
      sum_cls += loss.item();
      if (cfg.ra_on) {
        Tensor ra = representation_alignment(t.z, t.z1, t.z2, t.labels, cfg.loss.tau);
        sum_ra += ra.item();
        loss = add(loss, mul(ra, cfg.loss.lambda1));
      }
      if (cfg.js_on) {
        Tensor js = js_alignment(t.yhat, t.yhat1, t.yhat2);
        sum_js += js.item();
        loss = add(loss, mul(js, cfg.loss.lambda2));
      }
    } else {
      // Plain FedAvg-style step; also taken by fedccrl with every flag off so
      // the two configurations coincide bit for bit.
      Tensor yhat = classify(cfg.model, client.params, encode(cfg.model, client.params, x));
      loss = cross_entropy(yhat, labels);
      sum_cls += loss.item();
    }
    ++batches;

    client.params.zero_grads();
    backward(loss);
    adam_step(client.params, client.optimizer, lr);
  }
}

RoundMetrics run_round(ServerState& server, std::vector<ClientState>& clients,
                       const FederationConfig& cfg) {
  RoundMetrics metrics;
  metrics.round = server.round;
  for (const auto& c : clients) {
    if (c.shard.size() == 0) {
      throw TensorError("run_round: client " + std::to_string(c.client_id) + " has an empty shard");
    }
  }

  // Broadcast current global parameters.
  const auto broadcast = serialize_parameters(server.global_params);
  for (auto& client : clients) {
    log_downlink(server, client.client_id, PayloadKind::kParameters, broadcast.size());
    metrics.params_bytes_down += broadcast.size();
    client.params = deserialize_parameters(broadcast);
    client.params.set_requires_grad(true);
    client.optimizer = make_adam_state(client.params);  // fresh moments each round
    client.pool_view = StatisticsPool{};
  }

  const bool exchange_stats = cfg.method == Method::kFedCcrl && cfg.ccdt_on;
  if (exchange_stats) {
    // Clients upload F_i; the server assembles the pool.
    server.stats_pool = StatisticsPool{};
    for (auto& client : clients) {
      Rng select_rng(mix_seed(cfg.global_seed, kStreamSelect, server.round, client.client_id));
      auto entries = select_statistics(client.shard, cfg.upload_ratio, select_rng);
      UplinkMessage msg = StatisticsPayload{client.client_id, serialize_statistics(entries)};
      log_uplink(server, msg);
      metrics.stats_bytes_up += payload_size(msg);
      auto received = deserialize_statistics(std::get<StatisticsPayload>(msg).bytes);
      metrics.stats_entries_uploaded += received.size();
      server.stats_pool.entries.insert(server.stats_pool.entries.end(), received.begin(),
                                       received.end());
    }
    // Per-client views exclude the client's own uploads.
    for (auto& client : clients) {
      StatisticsPool view = server.stats_pool.view_for(client.client_id);
      for (const auto& e : view.entries) {
        if (e.origin_client == client.client_id) {
          throw TensorError("run_round: pool view for client " + std::to_string(client.client_id) +
                            " contains its own statistics");
        }
      }
      const auto bytes = serialize_statistics(view.entries);
      log_downlink(server, client.client_id, PayloadKind::kStatistics, bytes.size());
      metrics.pool_bytes_down += bytes.size();
      client.pool_view.entries = deserialize_statistics(bytes);
    }
  }

  double sum_cls = 0.0, sum_ra = 0.0, sum_js = 0.0;
  std::size_t batches = 0;
  for (auto& client : clients) {
    Rng shuffle_rng(mix_seed(cfg.global_seed, kStreamShuffle, server.round, client.client_id));
    Rng augment_rng(mix_seed(cfg.global_seed, kStreamAugment, server.round, client.client_id));
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
      local_train_epoch(client, client.pool_view, cfg, server.round * cfg.local_epochs + epoch,
                        shuffle_rng, augment_rng, sum_cls, sum_ra, sum_js, batches);
    }
  }
  if (batches > 0) {
    metrics.loss_cls = sum_cls / static_cast<double>(batches);
    metrics.loss_ra = sum_ra / static_cast<double>(batches);
    metrics.loss_js = sum_js / static_cast<double>(batches);
  }

  // Upload and aggregate.
  std::vector<std::pair<std::uint64_t, ModelParameters>> param_sets;
  param_sets.reserve(clients.size());
  for (auto& client : clients) {
    UplinkMessage msg = ParameterPayload{client.client_id, serialize_parameters(client.params)};
    log_uplink(server, msg);
    metrics.params_bytes_up += payload_size(msg);
    param_sets.emplace_back(client.shard.size(),
                            deserialize_parameters(std::get<ParameterPayload>(msg).bytes));
  }
  server.global_params = fedavg_aggregate(param_sets);
  server.round += 1;

  metrics.bytes_up = metrics.params_bytes_up + metrics.stats_bytes_up;
  metrics.bytes_down = metrics.params_bytes_down + metrics.pool_bytes_down;
  return metrics;
}

TargetRunResult run_single_target(const FederationConfig& cfg,
                                  const std::vector<DomainDataset>& data,
                                  std::uint32_t target_domain) {
  if (data.size() < 2) throw DataError("run_single_target: need at least 2 domains");
  cfg.validate(data.size());

  auto [train_domains, test] = leave_one_domain_out(data, target_domain);

  ModelConfig model_cfg = cfg.model;
  const auto& dims = test.images.at(0).shape();
  model_cfg.channels = dims[0];
  model_cfg.height = dims[1];
  model_cfg.width = dims[2];
  model_cfg.num_classes = test.num_classes;
  model_cfg.seed = mix_seed(cfg.global_seed, kStreamInit);

  FederationConfig run_cfg = cfg;
  run_cfg.model = model_cfg;

  std::vector<ClientState> clients;
  std::uint32_t next_id = 0;
  for (const auto& domain : train_domains) {
    Rng part_rng(mix_seed(cfg.global_seed, kStreamPartition, domain.domain_id));
    for (auto& shard : partition_clients(domain, cfg.clients_per_domain, part_rng)) {
      ClientState c;
      c.client_id = next_id++;
      shard.client_id = c.client_id;
      c.shard = std::move(shard);
      clients.push_back(std::move(c));
    }
  }

  ServerState server;
  server.global_params = init_parameters(model_cfg);

  TargetRunResult result;
  result.target_domain = target_domain;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    const RoundMetrics m = run_round(server, clients, run_cfg);
    RoundRecord rec;
    rec.round = round;
    rec.target_domain = target_domain;
    rec.accuracy = evaluate_accuracy(model_cfg, server.global_params, test);
    rec.loss_cls = m.loss_cls;
    rec.loss_ra = m.loss_ra;
    rec.loss_js = m.loss_js;
    rec.bytes_up = m.bytes_up;
    rec.bytes_down = m.bytes_down;
    result.rounds.push_back(rec);

    result.bytes_up += m.bytes_up;
    result.bytes_down += m.bytes_down;
    result.params_bytes_up += m.params_bytes_up;
    result.params_bytes_down += m.params_bytes_down;
    result.stats_bytes_up += m.stats_bytes_up;
    result.pool_bytes_down += m.pool_bytes_down;
  }
  result.final_accuracy = result.rounds.back().accuracy;
  result.message_log = server.message_log;
  return result;
}

ExperimentReport run_experiment(const FederationConfig& cfg,
                                const std::vector<DomainDataset>& data) {
  if (data.size() < 2) throw DataError("run_experiment: need at least 2 domains");
  ExperimentReport report;
  report.targets.reserve(data.size());
  for (const auto& domain : data) {
    report.targets.push_back(run_single_target(cfg, data, domain.domain_id));
  }
  return report;
}

}  // namespace fedccrl
