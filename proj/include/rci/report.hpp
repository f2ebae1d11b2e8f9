#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "rci/rci_engine.hpp"
#include "rci/scoring.hpp"
#include "rci/spatial_bias.hpp"

namespace rci {

inline constexpr const char* kReportSchema = "rci-report/1";

struct AuditReport {
  std::string schema = kReportSchema;
  std::string manifest_name;
  std::string model_id;
  ScorerId scorer = ScorerId::OPEN_EXACT;
  ChanceFloor chance;
  int repetitions = 1;
  std::string prompt_template_version;
  std::size_t item_count = 0;
  std::vector<RciResult> results;                // ascending n
  std::vector<PatchContribution> contributions;  // ascending n
  std::string started_at;
  std::string finished_at;

  const RciResult* result(int n) const;
  const PatchContribution* contribution(int n) const;
  bool all_valid() const;
  bool operator==(const AuditReport&) const = default;
};

nlohmann::json to_json(const AuditReport& report);
AuditReport report_from_json(const nlohmann::json& doc);
AuditReport load_report(const std::filesystem::path& path);

enum class ReportFormat { Json, Csv, Terminal };
ReportFormat parse_report_format(std::string_view text);

inline constexpr const char* kCsvHeader = "dataset,model,n,fip,mpp,rci,band,valid,chance,delta_min,se_fip";
inline constexpr const char* kInvalidFlag = "INVALID (FIP ≤ chance+Δ)";

std::string render_report(const AuditReport& report, ReportFormat format);
/// CSV over several reports under one header.
std::string render_csv(const std::vector<AuditReport>& reports);

/// Fixed 3-decimal rendering used by the CSV and terminal tables.
std::string format_fixed3(double value);

/// Standalone SVG 1.1 heatmap of the n x n contribution shares.
std::string render_heatmap_svg(const PatchContribution& contribution, const std::string& title = "");
void render_heatmap(const PatchContribution& contribution, const std::filesystem::path& out,
                    const std::string& title = "");

/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// -- Cross-model agreement

class StatsError : public Error {
 public:
  using Error::Error;
};

/// Sample Pearson correlation. Throws StatsError on length mismatch, fewer
/// than two points, or a constant input.
template <typename DerivedX, typename DerivedY>
double pearson_r(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) throw StatsError("pearson_r: length mismatch");
  if (x.size() < 2) throw StatsError("pearson_r: need at least two points");
  const Eigen::ArrayXd dx = x.template cast<double>().array() - x.template cast<double>().mean();
  const Eigen::ArrayXd dy = y.template cast<double>().array() - y.template cast<double>().mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw StatsError("pearson_r: zero variance");
  const double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

/// RCI_n per dataset for one model.
struct ModelSeries {
  std::string model_id;
  std::map<std::string, double> rci_by_dataset;
};

struct CorrelationMatrix {
  int n = 0;
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  Eigen::MatrixXd r;
  Eigen::MatrixXi dataset_counts;
};

class CoverageMismatchError : public Error {
 public:
  using Error::Error;
};

CorrelationMatrix compare_models(const std::vector<ModelSeries>& series, int n);

/// Groups reports by model id; requires identical dataset lists and valid
/// cells at granularity n.
CorrelationMatrix compare_models(const std::vector<AuditReport>& reports, int n);

std::string render_correlation(const CorrelationMatrix& m);
nlohmann::json correlation_to_json(const CorrelationMatrix& m);

// -- Published reference values (13 benchmarks x 3 models x n in {2, 3})

struct ReferenceCell {
  std::string dataset;
  std::string model;
  int n = 0;
  double rci = 0.0;
  InterpretationBand expected_band = InterpretationBand::BALANCED;
};

std::vector<ReferenceCell> load_reference_table(const std::filesystem::path& csv_path);
std::vector<ModelSeries> reference_series(const std::vector<ReferenceCell>& cells, int n);

}  // namespace rci
