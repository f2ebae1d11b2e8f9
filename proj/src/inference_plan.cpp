#include "rci/inference_plan.hpp"

#include <fmt/format.h>

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "rci/image.hpp"
#include "rci/pipeline.hpp"

namespace rci {

std::vector<PlanCell> plan_cells(const std::string& model_id, const BenchmarkManifest& manifest,
                                 const std::vector<GridSpec>& grids, int repetitions) {
  if (repetitions < 1) throw Error("repetitions must be >= 1");
  std::vector<PlanCell> cells;
  std::size_t per_sample = 1;
  for (const auto& g : grids) per_sample += static_cast<std::size_t>(g.patch_count());
  cells.reserve(manifest.samples.size() * per_sample * static_cast<std::size_t>(repetitions));

  for (const auto& s : manifest.samples) {
    const std::string prompt = build_prompt(s, manifest.task_type);
    std::vector<RegionRef> regions{RegionRef::full()};
    for (const auto& g : grids)
      for (int id = 1; id <= g.patch_count(); ++id) {
        PatchRegion p;
        p.patch_id = id;
        regions.push_back(RegionRef::of(g.n, p));
      }
    for (const auto& region : regions)
      for (int rep = 0; rep < repetitions; ++rep)
        cells.push_back({s.id, region, rep, prompt, cache_key(model_id, s.id, region, prompt, rep)});
  }
  return cells;
}

PlanStats run_inference_plan(const ModelRef& model, Predictor& predictor, const BenchmarkManifest& manifest,
                             const std::vector<GridSpec>& grids, int repetitions, InferenceCache& cache) {
  model.check();
  const auto cells = plan_cells(model.model_id, manifest, grids, repetitions);
  PlanStats stats;
  stats.total_cells = cells.size();

  // Work units are samples, so each image is decoded once per run.
  std::map<std::string, std::vector<const PlanCell*>> pending_by_sample;
  std::vector<std::string> unit_order;
  for (const auto& c : cells) {
    if (cache.contains(c.key)) {
      ++stats.cached_cells;
      continue;
    }
    auto [it, inserted] = pending_by_sample.try_emplace(c.sample_id);
    if (inserted) unit_order.push_back(c.sample_id);
    it->second.push_back(&c);
  }
  if (unit_order.empty()) return stats;

  const std::size_t calls_before = predictor.call_count();
  std::atomic<std::size_t> next_unit{0};
  std::atomic<std::size_t> completed{0};
  std::atomic<bool> abort{false};
  std::mutex failure_mutex;
  std::vector<std::string> failures;

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t u = next_unit.fetch_add(1);
      if (u >= unit_order.size()) return;
      const SampleRecord& sample = manifest.sample(unit_order[u]);
      const auto& unit_cells = pending_by_sample.at(sample.id);
      try {
        const Raster image = read_image(manifest.image_path(sample));
        std::map<int, std::vector<PatchRegion>> regions;
        for (const auto& g : grids) regions.emplace(g.n, grid_regions(image.width, image.height, g));

        for (const PlanCell* cell : unit_cells) {
          if (abort.load()) return;
          InferenceRequest req;
          req.sample_id = sample.id;
          req.prompt = cell->prompt;
          req.task_type = manifest.task_type;
          req.region = cell->region;
          if (!req.region.is_full())
            req.region.patch = regions.at(req.region.n).at(static_cast<std::size_t>(req.region.patch.patch_id - 1));
          if (predictor.needs_pixels())
            req.image_bytes = encode_png(req.region.is_full() ? image : extract_patch(image, req.region.patch));

          const Prediction prediction = predictor.predict(req);
          InferenceRecord rec;
          rec.cache_key = cell->key;
          rec.answer_text = prediction.answer;
          rec.model_id = model.model_id;
          rec.sample_id = sample.id;
          rec.region = cell->region.descriptor();
          rec.repetition = cell->repetition;
          rec.created_at = utc_timestamp();
          rec.attempt_count = prediction.attempts;
          cache.put(rec);
          ++completed;
        }
      } catch (const std::exception& e) {
        abort.store(true);
        std::lock_guard lock(failure_mutex);
        failures.push_back(fmt::format("{}: {}", sample.id, e.what()));
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(model.max_in_flight), unit_order.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  stats.completed_cells = completed.load();
  stats.model_calls = predictor.call_count() - calls_before;
  if (!failures.empty()) {
    const std::size_t missing = stats.total_cells - stats.cached_cells - stats.completed_cells;
    throw PartialCoverageError(
        fmt::format("inference aborted: {} of {} cells covered, {} missing; first failure: {}",
                    stats.cached_cells + stats.completed_cells, stats.total_cells, missing, failures.front()),
        stats, failures);
  }
  return stats;
}

}  // namespace rci
