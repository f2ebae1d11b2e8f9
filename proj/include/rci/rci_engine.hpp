#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rci/dataset.hpp"
#include "rci/inference_cache.hpp"
#include "rci/patch_grid.hpp"
#include "rci/scoring.hpp"

namespace rci {

/// Item-by-region score matrix. Rows follow item_ids everywhere; each patch
/// block is N x n^2 with column k holding patch_id k + 1.
struct EvalMatrix {
  std::string manifest_name;
  std::string model_id;
  std::vector<std::string> item_ids;
  Eigen::VectorXd full_scores;
  std::map<int, Eigen::MatrixXd> patch_scores;  // keyed by n

  Eigen::Index item_count() const { return full_scores.size(); }
  const Eigen::MatrixXd& patches(int n) const;
};

class MissingCellError : public Error {
 public:
  MissingCellError(const std::string& what, std::vector<std::string> missing)
      : Error(what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// Scores every cached cell and averages repetitions per cell.
EvalMatrix assemble_matrix(const BenchmarkManifest& manifest, const InferenceCache& cache,
                           const std::string& model_id, ScorerId scorer, const std::vector<GridSpec>& grids,
                           int repetitions);

// -- Aggregate math. Templated on the scalar so the same routines serve
// -- plain vectors, matrix blocks and bootstrap-resampled expressions.

/// Full image performance: mean of the per-item full-image scores.
template <typename Derived>
typename Derived::Scalar fip(const Eigen::MatrixBase<Derived>& full_scores) {
  return full_scores.mean();
}

/// Maximum patch performance: mean over items of the best patch score.
template <typename Derived>
typename Derived::Scalar mpp(const Eigen::MatrixBase<Derived>& patch_scores) {
  return patch_scores.rowwise().maxCoeff().mean();
}

class ZeroFipError : public Error {
 public:
  using Error::Error;
};

template <typename Scalar>
Scalar rci(Scalar fip_value, Scalar mpp_value) {
  if (!(fip_value > Scalar(0))) throw ZeroFipError("RCI undefined: full image performance is zero");
  return Scalar(1) - mpp_value / fip_value;
}

double fip(const EvalMatrix& matrix);
/// Throws Error for a granularity not present in the matrix.
double mpp(const EvalMatrix& matrix, int n);

/// Lowest patch_id among the item's best patches (the patch whose answer MPP
/// selects for that item).
std::vector<int> winning_patches(const EvalMatrix& matrix, int n);

inline constexpr double kDefaultDelta = 0.01;

struct Validity {
  bool valid = false;
  double delta_min = kDefaultDelta;
};

/// delta_min = delta, or max(delta, 2 se) when se is known; the comparison
/// fip >= chance + delta_min is inclusive.
Validity validity(double fip_value, const ChanceFloor& chance, std::optional<double> se_fip,
                  double delta = kDefaultDelta);

enum class InterpretationBand { STRONG_LOCAL, MODERATE_LOCAL, BALANCED, MODERATE_GLOBAL, STRONG_GLOBAL };

std::string_view to_string(InterpretationBand b);
InterpretationBand parse_band(std::string_view text);

/// <= -0.30 | (-0.30, -0.10] | (-0.10, 0.10] | (0.10, 0.30] | > 0.30
InterpretationBand band(double rci_value);

// -- Bootstrap

struct BootstrapStatistic {
  enum class Kind { Fip, Rci };
  Kind kind = Kind::Fip;
  int n = 0;  // granularity for Rci

  static BootstrapStatistic full_image() { return {Kind::Fip, 0}; }
  static BootstrapStatistic rci_at(int n) { return {Kind::Rci, n}; }
};

class DegenerateBootstrapError : public Error {
 public:
  using Error::Error;
};

struct BootstrapResult {
  double se = 0.0;
  double ci_low = 0.0;   // 2.5th percentile
  double ci_high = 0.0;  // 97.5th percentile
  int resamples = 0;
  int skipped = 0;
};

/// Item-level nonparametric bootstrap. Resample b draws from its own stream
/// seeded by (seed, b), so the result does not depend on evaluation order.
/// RCI resamples recompute fip and mpp jointly; resamples with zero fip are
/// skipped, and more than 10% skipped raises DegenerateBootstrapError.
BootstrapResult bootstrap(const EvalMatrix& matrix, BootstrapStatistic statistic, int resamples,
                          std::uint64_t seed);

double bootstrap_se(const EvalMatrix& matrix, BootstrapStatistic statistic, int resamples, std::uint64_t seed);

// -- Per-granularity result

struct BootstrapConfig {
  int resamples = 1000;
  std::uint64_t seed = 0;
};

struct RciResult {
  int n = 0;
  double fip = 0.0;
  double mpp = 0.0;
  std::optional<double> rci;  // absent only when fip is zero
  ChanceFloor chance;
  double delta_min = kDefaultDelta;
  bool valid = false;
  std::optional<double> se_fip;
  std::optional<std::pair<double, double>> rci_ci;
  std::optional<InterpretationBand> band;

  bool operator==(const RciResult&) const = default;
};

std::vector<RciResult> compute_results(const EvalMatrix& matrix, const ChanceFloor& chance,
                                       double delta = kDefaultDelta,
                                       std::optional<BootstrapConfig> bootstrap_config = std::nullopt);

}  // namespace rci
