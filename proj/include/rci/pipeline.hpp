#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rci/inference_plan.hpp"
#include "rci/model_client.hpp"
#include "rci/rci_engine.hpp"
#include "rci/report.hpp"

namespace rci {

struct AuditConfig {
  std::filesystem::path manifest;
  ModelRef model;
  std::vector<int> grids{2, 3};
  int repetitions = 1;
  double delta = kDefaultDelta;
  std::optional<BootstrapConfig> bootstrap;
  std::filesystem::path output_dir = "rci-out";
  std::filesystem::path cache_dir = "rci-cache";
  std::optional<ScorerId> scorer_override;

  /// Throws Error on unsorted / duplicate / out-of-range grids or bad counts.
  void check() const;
  std::vector<GridSpec> grid_specs() const;
};

/// Paths inside the config resolve against the config file's directory.
AuditConfig parse_audit_config(const std::string& json_text, const std::filesystem::path& base_dir);
AuditConfig load_audit_config(const std::filesystem::path& path);

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitInvalid = 2 };

struct AuditOutcome {
  AuditReport report;
  PlanStats plan;
  int exit_code = kExitOk;
  std::vector<std::filesystem::path> written;
};

/// Inference (cached) -> matrix -> RCI/validity/bands -> contributions -> files.
/// `predictor` overrides the one built from config.model.
AuditOutcome run_audit(const AuditConfig& config, Predictor* predictor = nullptr);

/// Same outputs from the cache alone; throws MissingCellError on a cold cache.
AuditOutcome run_score(const AuditConfig& config);

/// Builds the report for an assembled matrix.
AuditReport build_report(const BenchmarkManifest& manifest, const EvalMatrix& matrix, ScorerId scorer,
                         const AuditConfig& config);

/// Writes report.json, report.csv, report.txt and heatmap_n<k>.svg files.
std::vector<std::filesystem::path> write_report_files(const AuditReport& report,
                                                       const std::filesystem::path& output_dir);

std::string utc_timestamp();

}  // namespace rci
