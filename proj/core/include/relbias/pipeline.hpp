#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relbias/io.hpp"
#include "relbias/metrics.hpp"
#include "relbias/priors.hpp"
#include "relbias/types.hpp"

namespace relbias::pipeline {

struct TauSetting {
  bool fit = false;
  double value = 1.0;
};

struct PipelineConfig {
  std::string manifest;
  priors::TargetMode target = priors::TargetMode::uniform;
  std::string target_file;  // for TargetMode::file
  priors::SolverConfig solver;
  TauSetting tau_zs;
  TauSetting tau_sg;
  double ensemble_scale = 1.0;
  std::vector<int> cutoffs{20, 50, 100};
  std::vector<std::string> splits{"all", "seen", "unseen"};
  std::string buckets = "auto";  // auto | none | "<t_frequent>,<t_medium>"
  bool graph_constraint = true;
  std::string out_dir;
  uint64_t seed = 0;
  bool quiet = false;

  void validate() const;

  /// Canonical JSON of everything that determines artifact content.
  /// Output location and verbosity are deliberately excluded so the same
  /// inputs hash identically wherever they are written.
  std::string canonical_json() const;
  std::string config_hash() const;
};

PipelineConfig config_from_json_file(const std::string& path);

struct PipelineResult {
  std::string pi_sg_path;
  std::string pi_pt_path;
  std::string trace_path;
  std::string adjusted_zs_path;
  std::string adjusted_sg_path;
  std::string ensemble_path;
  std::string report_path;
  std::string distribution_path;
  bool solver_cached = false;
  metrics::MetricReport report;
};

/// Runs estimate -> adjust -> ensemble -> eval over the manifest's data
/// and writes every artifact under cfg.out_dir. The prior estimate is
/// cached keyed on (zs table bytes, counted prior, solver config); a rerun
/// that changes only the target leaves pi_pt.json untouched. Stage
/// failures raise StageError with the stage name and offending input.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// Joins a prediction table to the dataset by sample_id. Rows are
/// converted to relation scores: probability tables keep their values
/// (background column, when present, scales nothing further since stored
/// relation entries are already composed); logit tables are softmaxed.
metrics::PredictionSet predictions_from_table(const Dataset& ds,
                                              const io::LogitTable& table);

struct EvalOptions {
  metrics::ReportOptions report;
  std::string expect_config;  // refuse tables stamped differently
  bool allow_config_mismatch = false;
};

metrics::MetricReport evaluate_table(const Dataset& ds,
                                     const io::LogitTable& pred,
                                     const EvalOptions& opts);

struct Provenance {
  std::string manifest;
  std::string pred;
  std::string config_hash;
  std::string pred_config_hash;
};

void write_report_file(const std::string& path,
                       const metrics::MetricReport& report,
                       const Provenance& prov);

/// Signed delta table between two report files ("+2.0" means two points
/// of whatever metric; reports store fractions). Throws on mismatched
/// cutoffs or splits.
std::string diff_reports(const std::string& path_a, const std::string& path_b);

}  // namespace relbias::pipeline
