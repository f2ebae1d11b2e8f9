#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rci/dataset.hpp"
#include "rci/inference_cache.hpp"
#include "rci/model_client.hpp"
#include "rci/patch_grid.hpp"

namespace rci {

/// One (sample, region, repetition) cell of an inference plan.
struct PlanCell {
  std::string sample_id;
  RegionRef region;
  int repetition = 0;
  std::string prompt;
  std::string key;
};

/// Cells in deterministic order: samples in manifest order, then the full
/// image followed by each grid's patches, then repetitions.
std::vector<PlanCell> plan_cells(const std::string& model_id, const BenchmarkManifest& manifest,
                                 const std::vector<GridSpec>& grids, int repetitions);

struct PlanStats {
  std::size_t total_cells = 0;
  std::size_t cached_cells = 0;
  std::size_t completed_cells = 0;  // newly inferred during this run
  std::size_t model_calls = 0;      // predict() invocations, retries included
};

class PartialCoverageError : public Error {
 public:
  PartialCoverageError(const std::string& what, PlanStats stats, std::vector<std::string> failures)
      : Error(what), stats_(stats), failures_(std::move(failures)) {}
  const PlanStats& stats() const { return stats_; }
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  PlanStats stats_;
  std::vector<std::string> failures_;
};

/// Ensures every plan cell has a cached record. At most model.max_in_flight
/// predictions run concurrently; each completed cell is persisted before the
/// next is dispatched on that worker. On the first cell that exhausts its
/// retries no further cells are dispatched and PartialCoverageError is thrown
/// after in-flight work drains.
PlanStats run_inference_plan(const ModelRef& model, Predictor& predictor, const BenchmarkManifest& manifest,
                             const std::vector<GridSpec>& grids, int repetitions, InferenceCache& cache);

}  // namespace rci
