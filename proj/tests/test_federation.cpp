#include <doctest.h>

#include <cmath>

#include "fedccrl/federation.hpp"
#include "oracles.hpp"

using namespace fedccrl;
using oracles::random_tensor;

namespace {

FederationConfig tiny_fed_config() {
  FederationConfig cfg;
  cfg.model.hidden_sizes = {8};
  cfg.model.representation_dim = 4;
  cfg.rounds = 2;
  cfg.local_epochs = 1;
  cfg.batch_size = 8;
  cfg.clients_per_domain = 2;
  cfg.global_seed = 1;
  return cfg;
}

SyntheticConfig tiny_data_config() {
  SyntheticConfig cfg;
  cfg.num_domains = 2;
  cfg.num_classes = 3;
  cfg.samples_per_domain = 24;
  cfg.channels = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.seed = 9;
  return cfg;
}

ModelParameters named_params(std::initializer_list<std::pair<const char*, std::vector<double>>> init) {
  ModelParameters p;
  for (const auto& [name, values] : init) {
    p.entries.emplace_back(name, Tensor::from_data({values.size()}, values));
  }
  return p;
}

}  // namespace

TEST_CASE("aggregating identical parameter sets reproduces them bit for bit") {
  Rng rng(3);
  ModelConfig mc;
  mc.channels = 1;
  mc.height = 2;
  mc.width = 2;
  mc.hidden_sizes = {3};
  mc.representation_dim = 2;
  mc.num_classes = 2;
  mc.seed = 5;
  ModelParameters p = init_parameters(mc);
  const auto agg = fedavg_aggregate({{5, p.clone()}, {3, p.clone()}, {9, p.clone()}});
  CHECK(agg.version == p.version + 1);
  for (std::size_t e = 0; e < p.entries.size(); ++e) {
    for (std::size_t j = 0; j < p.entries[e].second.size(); ++j) {
      CHECK(agg.entries[e].second.at(j) == p.entries[e].second.at(j));
    }
  }
}

TEST_CASE("scalar aggregation computes the weighted mean") {
  ModelParameters a = named_params({{"theta", {0.0}}});
  ModelParameters b = named_params({{"theta", {4.0}}});
  const auto agg = fedavg_aggregate({{1, a}, {3, b}});
  CHECK(agg.entries[0].second.at(0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("aggregation matches an elementwise oracle and ignores client order") {
  Rng rng(17);
  std::vector<std::pair<std::uint64_t, ModelParameters>> sets;
  const std::vector<std::uint64_t> weights = {3, 7, 11, 2};
  for (std::size_t i = 0; i < weights.size(); ++i) {
    ModelParameters p;
    p.entries.emplace_back("w", random_tensor({4, 3}, rng));
    p.entries.emplace_back("b", random_tensor({3}, rng));
    sets.emplace_back(weights[i], std::move(p));
  }
  const auto agg = fedavg_aggregate(sets);

  const double total = 23.0;
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t j = 0; j < sets[0].second.entries[e].second.size(); ++j) {
      double expect = 0.0;
      for (const auto& [n, p] : sets) {
        expect += static_cast<double>(n) * p.entries[e].second.at(j);
      }
      expect /= total;
      CHECK(std::fabs(agg.entries[e].second.at(j) - expect) < 1e-12);
    }
  }

  // Any permutation gives bitwise identical output.
  std::vector<std::pair<std::uint64_t, ModelParameters>> shuffled = {sets[2], sets[0], sets[3],
                                                                     sets[1]};
  const auto agg2 = fedavg_aggregate(shuffled);
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t j = 0; j < agg.entries[e].second.size(); ++j) {
      CHECK(agg.entries[e].second.at(j) == agg2.entries[e].second.at(j));
    }
  }
}

TEST_CASE("aggregation validates inputs") {
  ModelParameters a = named_params({{"theta", {0.0}}});
  ModelParameters b = named_params({{"other", {1.0}}});
  CHECK_THROWS_WITH_AS(fedavg_aggregate({{1, a}, {1, b}}), doctest::Contains("theta"), TensorError);
  CHECK_THROWS_AS(fedavg_aggregate({{0, a}}), TensorError);
  CHECK_THROWS_AS(fedavg_aggregate({}), TensorError);
}

TEST_CASE("two clients with identical single-sample shards train identically") {
  FederationConfig cfg = tiny_fed_config();
  cfg.method = Method::kFedAvg;
  cfg.model.channels = 1;
  cfg.model.height = 2;
  cfg.model.width = 2;
  cfg.rounds = 1;

  Tensor img = Tensor::from_data({1, 2, 2}, {0.2, 0.8, 0.4, 0.6});
  std::vector<ClientState> clients(2);
  for (std::uint32_t i = 0; i < 2; ++i) {
    clients[i].client_id = i;
    clients[i].shard.client_id = i;
    clients[i].shard.images = {img};
    clients[i].shard.labels = {1};
  }
  ServerState server;
  ModelConfig mc = cfg.model;
  mc.num_classes = 3;
  mc.seed = 11;
  server.global_params = init_parameters(mc);
  FederationConfig run_cfg = cfg;
  run_cfg.model = mc;

  run_round(server, clients, run_cfg);

  // Single-sample shards leave nothing for the shuffle to reorder, so both
  // clients perform the same computation and aggregation returns it exactly.
  for (std::size_t e = 0; e < clients[0].params.entries.size(); ++e) {
    for (std::size_t j = 0; j < clients[0].params.entries[e].second.size(); ++j) {
      CHECK(clients[0].params.entries[e].second.at(j) ==
            clients[1].params.entries[e].second.at(j));
      CHECK(server.global_params.entries[e].second.at(j) ==
            clients[0].params.entries[e].second.at(j));
    }
  }
  CHECK(server.global_params.version == 1);
}

TEST_CASE("a fedavg round aggregates the locally updated parameters") {
  const auto data = generate_synthetic(tiny_data_config());
  FederationConfig cfg = tiny_fed_config();
  cfg.method = Method::kFedAvg;
  cfg.rounds = 1;
  cfg.clients_per_domain = 2;

  ModelConfig mc = cfg.model;
  mc.channels = 2;
  mc.height = 4;
  mc.width = 4;
  mc.num_classes = 3;
  mc.seed = 21;
  FederationConfig run_cfg = cfg;
  run_cfg.model = mc;

  Rng prt(5);
  auto shards = partition_clients(data[0], 2, prt);
  std::vector<ClientState> clients(2);
  for (std::uint32_t i = 0; i < 2; ++i) {
    clients[i].client_id = i;
    shards[i].client_id = i;
    clients[i].shard = shards[i];
  }
  ServerState server;
  server.global_params = init_parameters(mc);

  run_round(server, clients, run_cfg);

  // Hand-rolled two-client trace: weighted average of the local results.
  const double n0 = static_cast<double>(clients[0].shard.size());
  const double n1 = static_cast<double>(clients[1].shard.size());
  for (std::size_t e = 0; e < server.global_params.entries.size(); ++e) {
    for (std::size_t j = 0; j < server.global_params.entries[e].second.size(); ++j) {
      const double expect = (n0 * clients[0].params.entries[e].second.at(j) +
                             n1 * clients[1].params.entries[e].second.at(j)) /
                            (n0 + n1);
      CHECK(std::fabs(server.global_params.entries[e].second.at(j) - expect) < 1e-12);
    }
  }
}

TEST_CASE("fedccrl rounds upload the expected statistics") {
  const auto data = generate_synthetic(tiny_data_config());
  FederationConfig cfg = tiny_fed_config();
  cfg.rounds = 1;
  const auto result = run_single_target(cfg, data, 1);

  // One statistics upload per client per round, ceil(r * n_i) entries each.
  const std::size_t clients = 2;  // 1 training domain x K=2
  const std::size_t shard = 12;
  const std::size_t entries_each = static_cast<std::size_t>(std::ceil(0.1 * shard));
  std::size_t stat_uploads = 0;
  std::uint64_t stat_bytes = 0;
  for (const auto& rec : result.message_log) {
    CHECK((rec.kind == PayloadKind::kParameters || rec.kind == PayloadKind::kStatistics));
    if (rec.kind == PayloadKind::kStatistics && rec.direction == Direction::kClientToServer) {
      ++stat_uploads;
      stat_bytes += rec.bytes;
    }
  }
  CHECK(stat_uploads == clients);
  CHECK(stat_bytes == clients * entries_each * statistics_entry_wire_size(2));
  CHECK(result.stats_bytes_up == stat_bytes);
}

TEST_CASE("pool views never contain the client's own statistics") {
  StatisticsPool pool;
  for (std::uint32_t c = 0; c < 4; ++c) {
    for (int i = 0; i < 3; ++i) pool.entries.push_back({{0.1 * c}, {0.2}, c});
  }
  for (std::uint32_t c = 0; c < 4; ++c) {
    const auto view = pool.view_for(c);
    CHECK(view.size() == 9);
    for (const auto& e : view.entries) CHECK(e.origin_client != c);
  }
}

TEST_CASE("augmented branches are detached from the raw pixels") {
  Rng rng(31);
  Tensor x = random_tensor({2, 2, 4, 4}, rng, 0.0, 1.0).set_requires_grad(true);
  StatisticsPool pool;
  pool.entries.push_back({{0.5, 0.4}, {0.1, 0.2}, 99});
  AugmentConfig aug;
  Rng arng(12);
  Tensor x1 = feature_extension(x, pool, aug, arng);
  CHECK_FALSE(x1.attached());

  ModelConfig mc;
  mc.channels = 2;
  mc.height = 4;
  mc.width = 4;
  mc.hidden_sizes = {6};
  mc.representation_dim = 3;
  mc.num_classes = 3;
  mc.seed = 2;
  ModelParameters params = init_parameters(mc);
  params.set_requires_grad(true);
  Tensor loss = cross_entropy(classify(mc, params, encode(mc, params, x1)), {0, 1});
  backward(loss);
  CHECK_FALSE(x.has_grad());  // nothing flowed into the raw batch
  CHECK(params.entries[0].second.has_grad());
}

TEST_CASE("local training reduces the loss on a separable shard") {
  // Two well-separated classes, one client, plain path.
  ClientState client;
  client.client_id = 0;
  Rng rng(8);
  for (int i = 0; i < 16; ++i) {
    const std::size_t label = i % 2;
    std::vector<double> px(4);
    for (auto& v : px) v = (label == 0 ? 0.15 : 0.85) + rng.uniform(-0.05, 0.05);
    client.shard.images.push_back(Tensor::from_data({1, 2, 2}, std::move(px)));
    client.shard.labels.push_back(label);
  }

  FederationConfig cfg = tiny_fed_config();
  cfg.method = Method::kFedAvg;
  cfg.rounds = 1;
  cfg.local_epochs = 10;
  cfg.batch_size = 16;
  cfg.lr_init = 0.01;
  cfg.model.channels = 1;
  cfg.model.height = 2;
  cfg.model.width = 2;
  cfg.model.num_classes = 2;
  cfg.model.seed = 3;

  client.params = init_parameters(cfg.model);
  client.params.set_requires_grad(true);
  client.optimizer = make_adam_state(client.params);

  StatisticsPool empty;
  Rng shuffle_rng(1), augment_rng(2);
  double first = 0.0, last = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    double cls = 0.0, ra = 0.0, js = 0.0;
    std::size_t batches = 0;
    local_train_epoch(client, empty, cfg, epoch, shuffle_rng, augment_rng, cls, ra, js, batches);
    const double mean_loss = cls / static_cast<double>(batches);
    if (epoch == 0) first = mean_loss;
    last = mean_loss;
  }
  CHECK(last < first);
}

TEST_CASE("fedccrl with every flag off matches fedavg bit for bit") {
  const auto data = generate_synthetic(tiny_data_config());
  FederationConfig fedavg_cfg = tiny_fed_config();
  fedavg_cfg.method = Method::kFedAvg;
  FederationConfig off_cfg = tiny_fed_config();
  off_cfg.method = Method::kFedCcrl;
  off_cfg.ccdt_on = off_cfg.difp_on = off_cfg.ra_on = off_cfg.js_on = false;

  const auto a = run_single_target(fedavg_cfg, data, 0);
  const auto b = run_single_target(off_cfg, data, 0);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t r = 0; r < a.rounds.size(); ++r) {
    CHECK(a.rounds[r].accuracy == b.rounds[r].accuracy);
    CHECK(a.rounds[r].loss_cls == b.rounds[r].loss_cls);
    CHECK(a.rounds[r].bytes_up == b.rounds[r].bytes_up);
  }
}

TEST_CASE("experiments are deterministic end to end") {
  const auto data = generate_synthetic(tiny_data_config());
  const FederationConfig cfg = tiny_fed_config();
  const auto a = run_single_target(cfg, data, 0);
  const auto b = run_single_target(cfg, data, 0);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t r = 0; r < a.rounds.size(); ++r) {
    CHECK(a.rounds[r].accuracy == b.rounds[r].accuracy);
    CHECK(a.rounds[r].loss_cls == b.rounds[r].loss_cls);
    CHECK(a.rounds[r].loss_ra == b.rounds[r].loss_ra);
    CHECK(a.rounds[r].loss_js == b.rounds[r].loss_js);
  }
}

TEST_CASE("the experiment report covers every domain and the byte ledger closes") {
  const auto data = generate_synthetic(tiny_data_config());
  FederationConfig fedccrl_cfg = tiny_fed_config();
  FederationConfig fedavg_cfg = tiny_fed_config();
  fedavg_cfg.method = Method::kFedAvg;

  const auto ccrl = run_experiment(fedccrl_cfg, data);
  const auto avg = run_experiment(fedavg_cfg, data);
  REQUIRE(ccrl.targets.size() == data.size());
  REQUIRE(avg.targets.size() == data.size());

  for (std::size_t t = 0; t < data.size(); ++t) {
    CHECK(ccrl.targets[t].bytes_up ==
          avg.targets[t].bytes_up + ccrl.targets[t].stats_bytes_up);
    CHECK(ccrl.targets[t].bytes_down ==
          avg.targets[t].bytes_down + ccrl.targets[t].pool_bytes_down);
    CHECK(ccrl.targets[t].stats_bytes_up > 0);
  }
}

TEST_CASE("setup errors are reported") {
  const auto data = generate_synthetic(tiny_data_config());
  FederationConfig cfg = tiny_fed_config();
  cfg.clients_per_domain = 200;  // more clients than samples in a domain
  CHECK_THROWS_AS(run_single_target(cfg, data, 0), DataError);

  FederationConfig bad = tiny_fed_config();
  bad.upload_ratio = 1.5;
  CHECK_THROWS_AS(run_single_target(bad, data, 0), TensorError);

  std::vector<ClientState> empty_clients(1);
  empty_clients[0].client_id = 0;
  ServerState server;
  server.global_params = init_parameters(ModelConfig{});
  CHECK_THROWS_AS(run_round(server, empty_clients, tiny_fed_config()), TensorError);
}
