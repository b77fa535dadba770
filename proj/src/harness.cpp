#include "fedccrl/harness.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

namespace fs = std::filesystem;

namespace fedccrl {

namespace {

void RunSpecCheckSeeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("run spec: need at least one seed");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("run spec: seeds must be distinct");
}

struct GridTask {
  std::string label;
  FederationConfig cfg;
  std::uint32_t target = 0;
  std::uint64_t seed = 0;
};

// Runs all tasks, possibly on several workers; results keep task order, so
// serial and parallel execution produce identical reports.
std::vector<RunOutput> run_grid(const std::vector<GridTask>& tasks,
                                const std::vector<DomainDataset>& data) {
  std::vector<RunOutput> results(tasks.size());
  const std::size_t workers =
      std::min<std::size_t>(tasks.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        RunOutput out;
        out.label = tasks[i].label;
        out.target = tasks[i].target;
        out.seed = tasks[i].seed;
        out.result = run_single_target(tasks[i].cfg, data, tasks[i].target);
        results[i] = std::move(out);
      } catch (...) {
        std::scoped_lock lk(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    body();
  } else {
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::string fmt4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

CellStats stats_over(const std::vector<double>& xs) {
  CellStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(xs.size() - 1));
  }
  return s;
}

// Final accuracy of (label, target, seed); the grid guarantees presence.
double final_accuracy(const std::vector<RunOutput>& runs, const std::string& label,
                      std::uint32_t target, std::uint64_t seed) {
  for (const auto& r : runs) {
    if (r.label == label && r.target == target && r.seed == seed) {
      return r.result.final_accuracy;
    }
  }
  throw ConfigError("harness: missing run " + label);
}

SummaryRow summarize_label(const std::string& label, const std::vector<RunOutput>& runs,
                           const std::vector<std::uint32_t>& domain_ids,
                           const std::vector<std::uint64_t>& seeds) {
  SummaryRow row;
  row.label = label;
  for (auto target : domain_ids) {
    std::vector<double> per_seed;
    for (auto seed : seeds) per_seed.push_back(final_accuracy(runs, label, target, seed));
    row.per_domain.push_back(stats_over(per_seed));
  }
  std::vector<double> avg_per_seed;
  for (auto seed : seeds) {
    double acc = 0.0;
    for (auto target : domain_ids) acc += final_accuracy(runs, label, target, seed);
    avg_per_seed.push_back(acc / static_cast<double>(domain_ids.size()));
  }
  row.average = stats_over(avg_per_seed);
  return row;
}

std::string summary_csv_text(const std::vector<std::string>& domain_names,
                             const std::vector<SummaryRow>& rows) {
  std::string out = "method";
  for (const auto& n : domain_names) out += "," + n;
  out += ",Avg.";
  for (const auto& n : domain_names) out += "," + n + "_std";
  out += ",Avg._std\n";
  for (const auto& row : rows) {
    out += row.label;
    for (const auto& c : row.per_domain) out += "," + fmt4(c.mean);
    out += "," + fmt4(row.average.mean);
    for (const auto& c : row.per_domain) out += "," + fmt4(c.stddev);
    out += "," + fmt4(row.average.stddev) + "\n";
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("harness: cannot write '" + path.string() + "'");
  f << text;
}

void write_run_stream(const fs::path& dir, const RunOutput& run) {
  nlohmann::ordered_json line;
  std::string text;
  for (const auto& rec : run.result.rounds) {
    line = nlohmann::ordered_json{{"round", rec.round},
                                  {"target_domain", rec.target_domain},
                                  {"accuracy", rec.accuracy},
                                  {"loss_cls", rec.loss_cls},
                                  {"loss_ra", rec.loss_ra},
                                  {"loss_js", rec.loss_js},
                                  {"bytes_up", rec.bytes_up},
                                  {"bytes_down", rec.bytes_down}};
    text += line.dump();
    text += "\n";
  }
  write_file(dir / (run.label + "_t" + std::to_string(run.target) + "_s" +
                    std::to_string(run.seed) + ".jsonl"),
             text);
}

std::vector<std::uint32_t> resolve_targets(const RunSpec& spec,
                                           const std::vector<DomainDataset>& data) {
  std::vector<std::uint32_t> ids;
  if (!spec.target_domain || *spec.target_domain == "all") {
    for (const auto& d : data) ids.push_back(d.domain_id);
    return ids;
  }
  std::uint64_t wanted = 0;
  try {
    wanted = std::stoull(*spec.target_domain);
  } catch (const std::logic_error&) {
    throw ConfigError("run spec: target domain must be 'all' or a numeric id, got '" +
                      *spec.target_domain + "'");
  }
  for (const auto& d : data) {
    if (d.domain_id == wanted) {
      ids.push_back(d.domain_id);
      return ids;
    }
  }
  throw ConfigError("run spec: no domain with id " + std::to_string(wanted));
}

std::vector<std::string> domain_names_for(const std::vector<DomainDataset>& data,
                                          const std::vector<std::uint32_t>& ids) {
  std::vector<std::string> names;
  for (auto id : ids) {
    for (const auto& d : data) {
      if (d.domain_id == id) names.push_back(d.name);
    }
  }
  return names;
}

HarnessReport run_methods(const RunSpec& spec, const std::vector<Method>& methods) {
  spec.validate();
  const ResolvedConfig cfg = parse_config(spec.config_path, spec.overrides);
  const auto data = cfg.load_data();
  const auto targets = resolve_targets(spec, data);

  std::vector<GridTask> tasks;
  for (const auto method : methods) {
    for (const auto target : targets) {
      for (const auto seed : spec.seeds) {
        GridTask t;
        t.label = method_name(method);
        t.cfg = cfg.federation;
        t.cfg.method = method;
        t.cfg.global_seed = seed;
        t.target = target;
        t.seed = seed;
        tasks.push_back(std::move(t));
      }
    }
  }

  HarnessReport report;
  report.domain_ids = targets;
  report.domain_names = domain_names_for(data, targets);
  report.runs = run_grid(tasks, data);
  for (const auto method : methods) {
    report.rows.push_back(summarize_label(method_name(method), report.runs, targets, spec.seeds));
  }
  report.summary_csv = summary_csv_text(report.domain_names, report.rows);

  const fs::path out(spec.out_dir);
  for (const auto& run : report.runs) write_run_stream(out / "runs", run);
  write_file(out / "summary.csv", report.summary_csv);
  write_file(out / "config.resolved", cfg.canonical_text());
  return report;
}

}  // namespace

void RunSpec::validate() const { RunSpecCheckSeeds(seeds); }

HarnessReport run_comparison(const RunSpec& spec) {
  return run_methods(spec, {Method::kFedAvg, Method::kFedCcrl});
}

HarnessReport run_train(const RunSpec& spec) {
  const ResolvedConfig cfg = parse_config(spec.config_path, spec.overrides);
  const Method m = spec.method.value_or(cfg.federation.method);
  RunSpec adjusted = spec;
  adjusted.overrides.push_back("federation.method=" + method_name(m));
  return run_methods(adjusted, {m});
}

AblationReport run_ablation(const RunSpec& spec) {
  spec.validate();
  const ResolvedConfig cfg = parse_config(spec.config_path, spec.overrides);
  const auto data = cfg.load_data();
  const auto targets = resolve_targets(spec, data);

  // Table layout: augmentation blocks {CCDT, DIFP, CCDT+DIFP}, each crossed
  // with {none, RA, JS, RA+JS}.
  const std::array<std::pair<bool, bool>, 3> aug = {{{true, false}, {false, true}, {true, true}}};
  const std::array<std::pair<bool, bool>, 4> align = {
      {{false, false}, {true, false}, {false, true}, {true, true}}};

  std::vector<GridTask> tasks;
  std::vector<AblationRow> rows;
  for (const auto& [ccdt, difp] : aug) {
    for (const auto& [ra, js] : align) {
      AblationRow row;
      row.ccdt = ccdt;
      row.difp = difp;
      row.ra = ra;
      row.js = js;
      rows.push_back(row);
      const std::string label = std::string("ccdt") + (ccdt ? "1" : "0") + "_difp" +
                                (difp ? "1" : "0") + "_ra" + (ra ? "1" : "0") + "_js" +
                                (js ? "1" : "0");
      for (const auto target : targets) {
        for (const auto seed : spec.seeds) {
          GridTask t;
          t.label = label;
          t.cfg = cfg.federation;
          t.cfg.method = Method::kFedCcrl;
          t.cfg.ccdt_on = ccdt;
          t.cfg.difp_on = difp;
          t.cfg.ra_on = ra;
          t.cfg.js_on = js;
          t.cfg.global_seed = seed;
          t.target = target;
          t.seed = seed;
          tasks.push_back(std::move(t));
        }
      }
    }
  }

  AblationReport report;
  report.runs = run_grid(tasks, data);
  std::string csv = "ccdt,difp,ra,js,accuracy,stddev\n";
  for (auto& row : rows) {
    const std::string label = std::string("ccdt") + (row.ccdt ? "1" : "0") + "_difp" +
                              (row.difp ? "1" : "0") + "_ra" + (row.ra ? "1" : "0") + "_js" +
                              (row.js ? "1" : "0");
    std::vector<double> avg_per_seed;
    for (const auto seed : spec.seeds) {
      double acc = 0.0;
      for (const auto target : targets) acc += final_accuracy(report.runs, label, target, seed);
      avg_per_seed.push_back(acc / static_cast<double>(targets.size()));
    }
    row.accuracy = stats_over(avg_per_seed);
    csv += std::string(row.ccdt ? "on" : "off") + "," + (row.difp ? "on" : "off") + "," +
           (row.ra ? "on" : "off") + "," + (row.js ? "on" : "off") + "," + fmt4(row.accuracy.mean) +
           "," + fmt4(row.accuracy.stddev) + "\n";
  }
  report.rows = std::move(rows);
  report.csv = csv;

  const fs::path out(spec.out_dir);
  for (const auto& run : report.runs) write_run_stream(out / "runs", run);
  write_file(out / "ablation.csv", report.csv);
  write_file(out / "config.resolved", cfg.canonical_text());
  return report;
}

SweepReport run_sweep(const RunSpec& spec, const std::string& parameter,
                      const std::vector<double>& values) {
  spec.validate();
  if (values.empty()) throw ConfigError("sweep: need at least one value");
  std::string key;
  std::vector<std::string> partner;
  if (parameter == "r") {
    key = "federation.upload_ratio";
  } else if (parameter == "lambda1") {
    key = "federation.lambda1";
    partner = {"federation.lambda2=1"};  // fixed-partner convention
  } else if (parameter == "lambda2") {
    key = "federation.lambda2";
    partner = {"federation.lambda1=0.1"};
  } else {
    throw ConfigError("sweep: parameter must be one of r, lambda1, lambda2, got '" + parameter +
                      "'");
  }

  SweepReport report;
  report.parameter = parameter;
  report.values = values;
  std::string csv;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    char valbuf[48];
    std::snprintf(valbuf, sizeof(valbuf), "%.17g", values[vi]);
    RunSpec sub = spec;
    sub.out_dir = (fs::path(spec.out_dir) / (parameter + "_" + valbuf)).string();
    for (const auto& p : partner) sub.overrides.push_back(p);
    sub.overrides.push_back(key + "=" + valbuf);
    HarnessReport hr = run_comparison(sub);
    if (vi == 0) {
      csv = "parameter,value,method";
      for (const auto& n : hr.domain_names) csv += "," + n;
      csv += ",Avg.";
      for (const auto& n : hr.domain_names) csv += "," + n + "_std";
      csv += ",Avg._std\n";
    }
    for (const auto& row : hr.rows) {
      csv += parameter + std::string(",") + valbuf + "," + row.label;
      for (const auto& c : row.per_domain) csv += "," + fmt4(c.mean);
      csv += "," + fmt4(row.average.mean);
      for (const auto& c : row.per_domain) csv += "," + fmt4(c.stddev);
      csv += "," + fmt4(row.average.stddev) + "\n";
    }
    report.per_value.push_back(std::move(hr));
  }
  report.csv = csv;
  write_file(fs::path(spec.out_dir) / "sweep.csv", report.csv);
  return report;
}

void run_gen_data(const RunSpec& spec) {
  const ResolvedConfig cfg = parse_config(spec.config_path, spec.overrides);
  if (cfg.source != DataSource::kSynthetic) {
    throw ConfigError("gen-data: requires data.source=synthetic");
  }
  const auto data = generate_synthetic(cfg.synthetic);
  save_domains_folder(data, spec.out_dir);
  write_file(fs::path(spec.out_dir) / "config.resolved", cfg.canonical_text());
}

}  // namespace fedccrl
