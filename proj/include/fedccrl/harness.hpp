#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedccrl/config.hpp"
#include "fedccrl/federation.hpp"

namespace fedccrl {

/// One harness invocation: which config, which seeds, where results go.
struct RunSpec {
  std::string config_path;             // empty -> built-in defaults
  std::vector<std::string> overrides;  // section.key=value
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::optional<std::string> target_domain;  // "all" (default) or a numeric id
  std::optional<Method> method;              // train only

  void validate() const;
};

/// Result of one training run inside a grid.
struct RunOutput {
  std::string label;  // method or variant name
  std::uint32_t target = 0;
  std::uint64_t seed = 0;
  TargetRunResult result;
};

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev across seeds (0 for a single seed)
};

/// One summary row: per-target means plus the cross-target average.
struct SummaryRow {
  std::string label;
  std::vector<CellStats> per_domain;
  CellStats average;
};

struct HarnessReport {
  std::vector<std::string> domain_names;
  std::vector<std::uint32_t> domain_ids;
  std::vector<SummaryRow> rows;
  std::vector<RunOutput> runs;
  std::string summary_csv;  // exact bytes written to disk
};

/// Ablation grid row: flag combination plus its averaged accuracy.
struct AblationRow {
  bool ccdt = false, difp = false, ra = false, js = false;
  CellStats accuracy;  // averaged over targets, stats across seeds
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<RunOutput> runs;
  std::string csv;
};

struct SweepReport {
  std::string parameter;
  std::vector<double> values;
  std::vector<HarnessReport> per_value;
  std::string csv;
};

/// fedccrl vs fedavg over all requested leave-one-domain-out splits and seeds.
/// Writes runs/*.jsonl, summary.csv and config.resolved under spec.out_dir.
HarnessReport run_comparison(const RunSpec& spec);

/// Single-method run (spec.method or the config's method).
HarnessReport run_train(const RunSpec& spec);

/// The 12-row grid {CCDT, DIFP, both} x {no alignment, RA, JS, RA+JS}.
AblationReport run_ablation(const RunSpec& spec);

/// One full comparison per value of r, lambda1 or lambda2; the non-swept
/// partner is pinned to its reference value (lambda2=1 when sweeping lambda1,
/// lambda1=0.1 when sweeping lambda2).
SweepReport run_sweep(const RunSpec& spec, const std::string& parameter,
                      const std::vector<double>& values);

/// Materializes the configured synthetic dataset as an image folder tree.
void run_gen_data(const RunSpec& spec);

}  // namespace fedccrl
