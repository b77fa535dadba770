// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavy benchmark runs are shared between the last three criteria.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fedccrl/augment.hpp"
#include "fedccrl/config.hpp"
#include "fedccrl/federation.hpp"
#include "fedccrl/harness.hpp"
#include "fedccrl/losses.hpp"
#include "fedccrl/model.hpp"
#include "../oracles.hpp"

using namespace fedccrl;
namespace fs = std::filesystem;
using oracles::random_tensor;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Gradient correctness: 20 random instances per op and per loss, < 1e-5.
Outcome criterion_gradients() {
  const double t0 = now_seconds();
  Rng rng(20240001);
  double worst = 0.0;
  auto run = [&](const std::function<Tensor(const std::vector<Tensor>&)>& f,
                 const std::function<std::vector<Tensor>()>& gen) {
    for (int i = 0; i < 20; ++i) worst = std::max(worst, oracles::max_grad_rel_error(f, gen()));
  };

  // Elementwise and structural ops.
  run([](const auto& in) { return sum(add(in[0], in[1])); },
      [&] { return std::vector<Tensor>{random_tensor({2, 3}, rng), random_tensor({3}, rng)}; });
  run([](const auto& in) { return sum(mul(sub(in[0], in[1]), in[0])); },
      [&] { return std::vector<Tensor>{random_tensor({4}, rng), random_tensor({4}, rng)}; });
  run([](const auto& in) { return sum(divide(in[0], in[1])); },
      [&] {
        return std::vector<Tensor>{random_tensor({5}, rng), random_tensor({5}, rng, 0.3, 2.0)};
      });
  run([](const auto& in) { return sum(exp(in[0])); },
      [&] { return std::vector<Tensor>{random_tensor({6}, rng)}; });
  run([](const auto& in) { return sum(log(in[0])); },
      [&] { return std::vector<Tensor>{random_tensor({6}, rng, 0.1, 2.0)}; });
  run([](const auto& in) { return sum(sqrt(in[0])); },
      [&] { return std::vector<Tensor>{random_tensor({6}, rng, 0.2, 2.0)}; });
  run([](const auto& in) { return sum(mul(relu(in[0]), in[1])); },
      [&] { return std::vector<Tensor>{random_tensor({8}, rng), random_tensor({8}, rng)}; });
  run([](const auto& in) { return sum(matmul(in[0], in[1])); },
      [&] {
        return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
      });
  run([](const auto& in) { return sum(mul(transpose(in[0]), Tensor::full({4, 3}, 0.5))); },
      [&] { return std::vector<Tensor>{random_tensor({3, 4}, rng)}; });
  run([](const auto& in) { return mean(mul(in[0], in[0])); },
      [&] { return std::vector<Tensor>{random_tensor({7}, rng)}; });
  run([](const auto& in) { return sum(mul(sum_last_axis(in[0]), sum_last_axis(in[0]))); },
      [&] { return std::vector<Tensor>{random_tensor({3, 4}, rng)}; });
  run([](const auto& in) { return sum(mul(softmax(in[0]), in[1])); },
      [&] {
        return std::vector<Tensor>{random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)};
      });
  run([](const auto& in) {
        return sum(mul(concat({in[0], in[1]}, 0), concat({in[0], in[1]}, 0)));
      },
      [&] {
        return std::vector<Tensor>{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
      });
  run([](const auto& in) { return sum(mul(narrow(in[0], 0, 1, 2), Tensor::full({2, 3}, 1.5))); },
      [&] { return std::vector<Tensor>{random_tensor({4, 3}, rng)}; });
  run([](const auto& in) { return sum(mul(index_select(in[0], 0, {0, 2, 2, 1}), in[1])); },
      [&] {
        return std::vector<Tensor>{random_tensor({3, 2}, rng), random_tensor({4, 2}, rng)};
      });
  run([](const auto& in) { return sum(mul(reshape(in[0], {6}), reshape(in[0], {6}))); },
      [&] { return std::vector<Tensor>{random_tensor({2, 3}, rng)}; });

  // Losses, through softmax so predictions are valid distributions.
  auto labels3 = [&] {
    std::vector<std::size_t> y(3);
    for (auto& v : y) v = rng.uniform_int(3);
    return y;
  };
  {
    const auto y = labels3();
    run([&](const auto& in) { return sup_contrastive(in[0], in[1], y, y, 0.2); },
        [&] {
          return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
        });
    run([&](const auto& in) { return representation_alignment(in[0], in[1], in[2], y, 0.2); },
        [&] {
          return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                                     random_tensor({3, 4}, rng)};
        });
    run([](const auto& in) {
          return js_alignment(softmax(in[0]), softmax(in[1]), softmax(in[2]));
        },
        [&] {
          return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                                     random_tensor({3, 4}, rng)};
        });
    run([&](const auto& in) {
          return classification_loss(softmax(in[0]), softmax(in[1]), softmax(in[2]), y);
        },
        [&] {
          return std::vector<Tensor>{random_tensor({3, 3}, rng), random_tensor({3, 3}, rng),
                                     random_tensor({3, 3}, rng)};
        });
    run([&](const auto& in) {
          BatchTriple t;
          t.labels = y;
          t.z = in[0];
          t.z1 = in[1];
          t.z2 = in[2];
          t.yhat = softmax(in[3]);
          t.yhat1 = softmax(in[4]);
          t.yhat2 = softmax(in[5]);
          return overall_loss(t, LossWeights{0.1, 1.0, 0.2});
        },
        [&] {
          std::vector<Tensor> v;
          for (int k = 0; k < 3; ++k) v.push_back(random_tensor({3, 4}, rng));
          for (int k = 0; k < 3; ++k) v.push_back(random_tensor({3, 3}, rng));
          return v;
        });
  }

  const double elapsed = now_seconds() - t0;
  Outcome out;
  out.pass = worst < 1e-5 && elapsed < 30.0;
  std::ostringstream ss;
  ss << "max rel err " << worst << ", " << elapsed << " s";
  out.detail = ss.str();
  return out;
}

// ---------------------------------------------------------------------------
// 2. CCDT statistics-transfer law on 1000 random triples.
Outcome criterion_ccdt_law() {
  Rng data_rng(20240002);
  Rng lambda_rng(20240003);
  double worst = 0.0;
  bool identity_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 1 + lambda_rng.uniform_int(3);
    const std::size_t h = 2 + lambda_rng.uniform_int(7);
    const std::size_t w = 2 + lambda_rng.uniform_int(7);
    Tensor batch = random_tensor({1, c, h, w}, data_rng, 0.0, 1.0);
    StatisticsPool pool;
    SampleStatistics donor;
    donor.origin_client = 77;
    for (std::size_t ch = 0; ch < c; ++ch) {
      donor.mean.push_back(lambda_rng.uniform(0.0, 1.0));
      donor.std.push_back(lambda_rng.uniform(0.005, 0.4));
    }
    pool.entries.push_back(donor);

    // Half the draws cover [0,1] uniformly; half follow Beta(0.1, 0.1).
    const double lambda =
        trial % 2 == 0 ? lambda_rng.uniform() : lambda_rng.beta(0.1, 0.1);
    AugmentConfig cfg;
    cfg.forced_lambda = lambda;
    Rng op_rng(trial);
    Tensor out = ccdt(batch, pool, cfg, op_rng);

    const std::size_t hw = h * w;
    std::vector<double> sample(batch.data().begin(), batch.data().end());
    const auto own = channel_stats(Tensor::from_data({c, h, w}, sample));
    std::vector<double> result(out.data().begin(), out.data().end());
    const auto got = channel_stats(Tensor::from_data({c, h, w}, result));
    (void)hw;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double want_mean = lambda * donor.mean[ch] + (1.0 - lambda) * own.mean[ch];
      const double want_std = lambda * donor.std[ch] + (1.0 - lambda) * own.std[ch];
      worst = std::max(worst, std::fabs(got.mean[ch] - want_mean));
      worst = std::max(worst, std::fabs(got.std[ch] - want_std));
    }

    if (trial % 10 == 0) {
      AugmentConfig id_cfg;
      id_cfg.forced_lambda = 0.0;
      Rng id_rng(trial);
      Tensor same = ccdt(batch, pool, id_cfg, id_rng);
      for (std::size_t i = 0; i < same.size(); ++i) {
        identity_ok = identity_ok && same.at(i) == batch.at(i);
      }
    }
  }
  Outcome out;
  out.pass = worst < 1e-9 && identity_ok;
  std::ostringstream ss;
  ss << "max stats deviation " << worst << ", lambda=0 bitwise "
     << (identity_ok ? "yes" : "NO");
  out.detail = ss.str();
  return out;
}

// ---------------------------------------------------------------------------
// 3. Loss oracles.
Outcome criterion_loss_oracles() {
  Rng rng(20240004);
  double worst_sc = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.uniform_int(6);
    const std::size_t v = 1 + rng.uniform_int(8);
    Tensor z1 = random_tensor({b, v}, rng);
    Tensor z2 = random_tensor({b, v}, rng);
    std::vector<std::size_t> y1(b), y2(b);
    for (auto& y : y1) y = rng.uniform_int(3);
    for (auto& y : y2) y = rng.uniform_int(3);
    const double tau = rng.uniform(0.05, 1.0);

    std::vector<std::vector<double>> r1(b, std::vector<double>(v)), r2(b, std::vector<double>(v));
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t cc = 0; cc < v; ++cc) {
        r1[r][cc] = z1.at(r * v + cc);
        r2[r][cc] = z2.at(r * v + cc);
      }
    }
    const double expected = oracles::sup_contrastive_bruteforce(r1, r2, y1, y2, tau);
    worst_sc = std::max(worst_sc, std::fabs(sup_contrastive(z1, z2, y1, y2, tau).item() - expected));
  }

  auto probs = [&](std::size_t b, std::size_t k) {
    std::vector<double> data(b * k);
    for (std::size_t r = 0; r < b; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        data[r * k + c] = rng.uniform(1e-4, 1.0);
        total += data[r * k + c];
      }
      for (std::size_t c = 0; c < k; ++c) data[r * k + c] /= total;
    }
    return Tensor::from_data({b, k}, std::move(data));
  };

  Tensor same = probs(4, 5);
  const double js_same = js_alignment(same, same, same).item();

  Tensor a = Tensor::from_data({1, 3}, {1.0, 0.0, 0.0});
  Tensor b2 = Tensor::from_data({1, 3}, {0.0, 1.0, 0.0});
  Tensor c2 = Tensor::from_data({1, 3}, {0.0, 0.0, 1.0});
  const double js_onehot = js_alignment(a, b2, c2).item();

  bool bounds_ok = true;
  double js_min = 1e300, js_max = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 1 + rng.uniform_int(5);
    const std::size_t k = 2 + rng.uniform_int(6);
    const double v = js_alignment(probs(b, k), probs(b, k), probs(b, k)).item();
    js_min = std::min(js_min, v);
    js_max = std::max(js_max, v);
    bounds_ok = bounds_ok && v >= -1e-9 && v <= std::log(3.0) + 1e-9;
  }

  Outcome out;
  out.pass = worst_sc < 1e-9 && std::fabs(js_same) < 1e-12 &&
             std::fabs(js_onehot - std::log(3.0)) < 1e-9 && bounds_ok;
  std::ostringstream ss;
  ss << "sup-contrastive max dev " << worst_sc << ", js(identical) " << js_same
     << ", js(one-hot) - log3 " << js_onehot - std::log(3.0) << ", js range [" << js_min << ", "
     << js_max << "]";
  out.detail = ss.str();
  return out;
}

// ---------------------------------------------------------------------------
// 4. Aggregation oracle, permutation invariance, aggregate-of-equals.
Outcome criterion_aggregation() {
  Rng rng(20240005);
  double worst = 0.0;
  bool perm_bitwise = true;
  bool equals_bitwise = true;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t clients = 2 + rng.uniform_int(5);
    std::vector<std::pair<std::uint64_t, ModelParameters>> sets;
    for (std::size_t i = 0; i < clients; ++i) {
      ModelParameters p;
      p.entries.emplace_back("w", random_tensor({3, 4}, rng));
      p.entries.emplace_back("b", random_tensor({4}, rng));
      sets.emplace_back(1 + rng.uniform_int(250), std::move(p));
    }
    const auto agg = fedavg_aggregate(sets);

    double total = 0.0;
    for (const auto& [n, p] : sets) total += static_cast<double>(n);
    for (std::size_t e = 0; e < 2; ++e) {
      for (std::size_t j = 0; j < agg.entries[e].second.size(); ++j) {
        double expect = 0.0;
        for (const auto& [n, p] : sets) {
          expect += static_cast<double>(n) * p.entries[e].second.at(j);
        }
        expect /= total;
        worst = std::max(worst, std::fabs(agg.entries[e].second.at(j) - expect));
      }
    }

    auto shuffled = sets;
    rng.shuffle(shuffled);
    const auto agg2 = fedavg_aggregate(shuffled);
    for (std::size_t e = 0; e < 2; ++e) {
      for (std::size_t j = 0; j < agg.entries[e].second.size(); ++j) {
        perm_bitwise = perm_bitwise && agg.entries[e].second.at(j) == agg2.entries[e].second.at(j);
      }
    }

    ModelParameters base;
    base.entries.emplace_back("w", random_tensor({5, 2}, rng));
    std::vector<std::pair<std::uint64_t, ModelParameters>> equals;
    for (std::size_t i = 0; i < clients; ++i) {
      equals.emplace_back(1 + rng.uniform_int(250), base.clone());
    }
    const auto agg3 = fedavg_aggregate(equals);
    for (std::size_t j = 0; j < base.entries[0].second.size(); ++j) {
      equals_bitwise = equals_bitwise && agg3.entries[0].second.at(j) == base.entries[0].second.at(j);
    }
  }
  Outcome out;
  out.pass = worst < 1e-12 && perm_bitwise && equals_bitwise;
  std::ostringstream ss;
  ss << "max dev " << worst << ", permutation bitwise " << (perm_bitwise ? "yes" : "NO")
     << ", equals bitwise " << (equals_bitwise ? "yes" : "NO");
  out.detail = ss.str();
  return out;
}

// ---------------------------------------------------------------------------
// 5. Protocol and privacy invariants on a full 2-domain x K=2 run.
Outcome criterion_protocol() {
  SyntheticConfig syn;
  syn.num_domains = 2;
  syn.samples_per_domain = 100;
  const auto data = generate_synthetic(syn);

  FederationConfig cfg;
  cfg.model.hidden_sizes = {16};
  cfg.model.representation_dim = 8;
  cfg.clients_per_domain = 2;
  cfg.rounds = 4;
  cfg.global_seed = 1;
  FederationConfig avg_cfg = cfg;
  avg_cfg.method = Method::kFedAvg;

  const auto ccrl = run_single_target(cfg, data, 1);
  const auto avg = run_single_target(avg_cfg, data, 1);

  bool kinds_ok = true;
  for (const auto& rec : ccrl.message_log) {
    kinds_ok = kinds_ok &&
               (rec.kind == PayloadKind::kParameters || rec.kind == PayloadKind::kStatistics);
  }

  // Expected statistics bytes from first principles: 2 clients x ceil(0.1*50)
  // entries x wire size, per round. (Pool views never contain own entries;
  // run_round asserts that internally on every round.)
  const std::uint64_t per_round_stats =
      2ull * static_cast<std::uint64_t>(std::ceil(0.1 * 50)) * statistics_entry_wire_size(3);
  const std::uint64_t expect_stats = per_round_stats * cfg.rounds;
  const bool ledger_ok = ccrl.stats_bytes_up == expect_stats &&
                         ccrl.bytes_up == avg.bytes_up + ccrl.stats_bytes_up &&
                         ccrl.bytes_down == avg.bytes_down + ccrl.pool_bytes_down;

  Outcome out;
  out.pass = kinds_ok && ledger_ok;
  std::ostringstream ss;
  ss << "payload kinds " << (kinds_ok ? "parameters/statistics only" : "UNEXPECTED") << ", bytes "
     << ccrl.bytes_up << " = " << avg.bytes_up << " + " << ccrl.stats_bytes_up
     << (ledger_ok ? " (exact)" : " (MISMATCH)");
  out.detail = ss.str();
  return out;
}

// ---------------------------------------------------------------------------
// 6. Determinism of the compare verb.
Outcome criterion_determinism() {
  const fs::path base = fs::temp_directory_path() / "fedccrl_acceptance_det";
  fs::remove_all(base);
  RunSpec spec;
  spec.overrides = {"synthetic.num_domains=2", "synthetic.samples_per_domain=60",
                    "federation.rounds=3"};
  spec.seeds = {1, 2, 3};

  auto read = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };

  spec.out_dir = (base / "a").string();
  run_comparison(spec);
  spec.out_dir = (base / "b").string();
  run_comparison(spec);
  const std::string a = read(base / "a" / "summary.csv");
  const std::string b = read(base / "b" / "summary.csv");
  fs::remove_all(base);

  Outcome out;
  out.pass = !a.empty() && a == b;
  out.detail = out.pass ? "summary.csv byte-identical across executions"
                        : "summary.csv differs between executions";
  return out;
}

// ---------------------------------------------------------------------------
// Shared benchmark grid for criteria 7-9.
struct BenchmarkResults {
  // label -> mean accuracy over targets and seeds
  std::map<std::string, double> mean_accuracy;
  double seconds_comparison = 0.0;  // fedavg + fedccrl portion only
};

BenchmarkResults run_benchmark_grid() {
  const ResolvedConfig resolved = parse_config_text("");  // committed defaults
  const auto data = resolved.load_data();
  const std::vector<std::uint64_t> seeds = {1, 2, 3};

  struct Task {
    std::string label;
    FederationConfig cfg;
    std::uint32_t target;
  };
  std::vector<Task> tasks;
  auto push_config = [&](const std::string& label, const FederationConfig& cfg) {
    for (const auto& domain : data) {
      for (const auto seed : seeds) {
        FederationConfig c = cfg;
        c.global_seed = seed;
        tasks.push_back({label, c, domain.domain_id});
      }
    }
  };

  FederationConfig fedavg = resolved.federation;
  fedavg.method = Method::kFedAvg;
  push_config("fedavg", fedavg);
  push_config("fedccrl", resolved.federation);
  FederationConfig noalign = resolved.federation;
  noalign.ra_on = false;
  noalign.js_on = false;
  push_config("noalign", noalign);
  FederationConfig r_low = resolved.federation;
  r_low.upload_ratio = 0.05;
  push_config("r0.05", r_low);
  FederationConfig r_high = resolved.federation;
  r_high.upload_ratio = 0.5;
  push_config("r0.5", r_high);

  std::vector<double> acc(tasks.size(), 0.0);
  std::vector<double> task_seconds(tasks.size(), 0.0);
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const auto t0 = std::chrono::steady_clock::now();
        acc[i] = run_single_target(tasks[i].cfg, data, tasks[i].target).final_accuracy;
        task_seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      } catch (...) {
        std::scoped_lock lk(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  BenchmarkResults results;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& s = sums[tasks[i].label];
    s.first += acc[i];
    s.second += 1;
    if (tasks[i].label == "fedavg" || tasks[i].label == "fedccrl") {
      results.seconds_comparison += task_seconds[i];
    }
  }
  for (const auto& [label, s] : sums) {
    results.mean_accuracy[label] = s.first / static_cast<double>(s.second);
  }
  return results;
}

Outcome criterion_improvement(const BenchmarkResults& bench) {
  const double fedavg = bench.mean_accuracy.at("fedavg");
  const double fedccrl = bench.mean_accuracy.at("fedccrl");
  Outcome out;
  out.pass = fedccrl >= fedavg + 3.0 && bench.seconds_comparison < 600.0;
  std::ostringstream ss;
  ss << "fedccrl " << fedccrl << " vs fedavg " << fedavg << " (margin " << fedccrl - fedavg
     << " >= 3.0), comparison work " << bench.seconds_comparison << " s of CPU time";
  out.detail = ss.str();
  return out;
}

Outcome criterion_ablation_direction(const BenchmarkResults& bench) {
  const double fedavg = bench.mean_accuracy.at("fedavg");
  const double noalign = bench.mean_accuracy.at("noalign");
  const double full = bench.mean_accuracy.at("fedccrl");
  Outcome out;
  out.pass = full >= noalign - 0.5 && noalign >= fedavg - 0.5;
  std::ostringstream ss;
  ss << "full " << full << " >= no-alignment " << noalign << " >= fedavg " << fedavg
     << " (0.5-point tie tolerance)";
  out.detail = ss.str();
  return out;
}

Outcome criterion_upload_ratio(const BenchmarkResults& bench) {
  const double r05 = bench.mean_accuracy.at("r0.05");
  const double r10 = bench.mean_accuracy.at("fedccrl");
  const double r50 = bench.mean_accuracy.at("r0.5");
  const double spread = std::max({r05, r10, r50}) - std::min({r05, r10, r50});
  Outcome out;
  out.pass = spread < 3.0;
  std::ostringstream ss;
  ss << "accuracy at r=0.05/0.1/0.5: " << r05 << "/" << r10 << "/" << r50 << ", spread " << spread
     << " < 3.0";
  out.detail = ss.str();
  return out;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("[%s] criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "gradient correctness", criterion_gradients());
  report(2, "ccdt statistics-transfer law", criterion_ccdt_law());
  report(3, "loss oracles", criterion_loss_oracles());
  report(4, "weighted aggregation", criterion_aggregation());
  report(5, "protocol and privacy invariants", criterion_protocol());
  report(6, "compare determinism", criterion_determinism());

  const BenchmarkResults bench = run_benchmark_grid();
  report(7, "relative improvement benchmark", criterion_improvement(bench));
  report(8, "ablation direction", criterion_ablation_direction(bench));
  report(9, "upload-ratio robustness", criterion_upload_ratio(bench));

  if (failures == 0) {
    std::printf("all acceptance criteria satisfied\n");
  } else {
    std::printf("%d criterion(s) failed\n", failures);
  }
  return failures;
}
