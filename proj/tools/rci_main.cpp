#include <fmt/format.h>

#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rci/inference_cache.hpp"
#include "rci/pipeline.hpp"
#include "rci/report.hpp"
#include "rci/synth.hpp"

namespace {

struct Overrides {
  std::string output_dir;
  std::string cache_dir;
  std::vector<int> grids;
  int repetitions = 0;
  int bootstrap = 0;
  std::uint64_t seed = 0;
  std::string scorer;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--output-dir", o.output_dir, "Directory for report files");
  cmd->add_option("--cache-dir", o.cache_dir, "Inference cache directory");
  cmd->add_option("--grids", o.grids, "Patch granularities, e.g. --grids 2,3")
      ->expected(1, -1)
      ->delimiter(',');
  cmd->add_option("--repetitions", o.repetitions, "Repetitions per cell");
  cmd->add_option("--bootstrap", o.bootstrap, "Bootstrap resamples (0 = off)");
  cmd->add_option("--seed", o.seed, "Bootstrap seed");
  cmd->add_option("--scorer", o.scorer, "Scorer override (MCQ_EXACT, YES_NO, OPEN_EXACT, OPEN_CONSENSUS, RELAXED_NUMERIC)");
}

rci::AuditConfig apply(rci::AuditConfig c, const Overrides& o) {
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (!o.cache_dir.empty()) c.cache_dir = o.cache_dir;
  if (!o.grids.empty()) c.grids = o.grids;
  if (o.repetitions > 0) c.repetitions = o.repetitions;
  if (o.bootstrap > 0) c.bootstrap = rci::BootstrapConfig{o.bootstrap, o.seed};
  if (!o.scorer.empty()) c.scorer_override = rci::parse_scorer_id(o.scorer);
  c.check();
  return c;
}

int finish_audit(const rci::AuditOutcome& out) {
  std::cout << rci::render_report(out.report, rci::ReportFormat::Terminal);
  std::cout << fmt::format("\ncells {} (cached {}, new {}), model calls {}\n", out.plan.total_cells,
                           out.plan.cached_cells, out.plan.completed_cells, out.plan.model_calls);
  for (const auto& p : out.written) std::cout << "wrote " << p.string() << "\n";
  if (out.exit_code == rci::kExitInvalid)
    std::cerr << "warning: at least one granularity is outside the validity domain\n";
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region comprehension audit for vision-language benchmarks"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides audit_overrides;
  auto* audit = app.add_subcommand("audit", "Run inference (cached) and compute the audit report");
  audit->add_option("--config", config_path, "Audit config JSON")->required()->check(CLI::ExistingFile);
  add_overrides(audit, audit_overrides);

  Overrides score_overrides;
  auto* score = app.add_subcommand("score", "Re-score cached inferences without calling the model");
  score->add_option("--config", config_path, "Audit config JSON")->required()->check(CLI::ExistingFile);
  add_overrides(score, score_overrides);

  std::vector<std::string> report_files;
  std::string report_format = "terminal";
  std::string heatmap_dir;
  bool aggregate = false;
  auto* report = app.add_subcommand("report", "Render saved JSON reports");
  report->add_option("reports", report_files, "report.json files")->required()->check(CLI::ExistingFile);
  report->add_option("--format", report_format, "json | csv | terminal");
  report->add_option("--heatmap-dir", heatmap_dir, "Write heatmap SVGs here");
  report->add_flag("--aggregate", aggregate, "Average contribution shares across reports (equal dataset weight)");

  std::vector<std::string> compare_files;
  std::string reference_table;
  std::string compare_out;
  int compare_n = 2;
  auto* compare = app.add_subcommand("compare", "Cross-model Pearson correlation of RCI");
  compare->add_option("reports", compare_files, "report.json files")->check(CLI::ExistingFile);
  compare->add_option("--reference", reference_table, "Reference RCI table (CSV) instead of reports")
      ->check(CLI::ExistingFile);
  compare->add_option("--n", compare_n, "Granularity")->default_val(2);
  compare->add_option("--out", compare_out, "Also write the matrix as JSON");

  std::string spec_path;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark with a matching oracle");
  synth->add_option("--spec", spec_path, "Synth spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();

  std::string cache_dir = "rci-cache";
  auto* cache = app.add_subcommand("cache", "Inspect or clear the inference cache");
  cache->require_subcommand(1);
  auto* cache_stats = cache->add_subcommand("stats", "List cache files and record counts");
  auto* cache_clear = cache->add_subcommand("clear", "Delete all cache files");
  cache->add_option("--cache-dir", cache_dir, "Cache directory");
  cache_stats->fallthrough();
  cache_clear->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : rci::kExitFailure;
  }

  try {
    if (*audit) return finish_audit(rci::run_audit(apply(rci::load_audit_config(config_path), audit_overrides)));

    if (*score) return finish_audit(rci::run_score(apply(rci::load_audit_config(config_path), score_overrides)));

    if (*report) {
      std::vector<rci::AuditReport> reports;
      for (const auto& f : report_files) reports.push_back(rci::load_report(f));
      const auto format = rci::parse_report_format(report_format);
      if (format == rci::ReportFormat::Csv) {
        std::cout << rci::render_csv(reports);
      } else {
        for (const auto& r : reports) std::cout << rci::render_report(r, format);
      }
      if (!heatmap_dir.empty()) {
        for (const auto& r : reports)
          for (const auto& c : r.contributions)
            rci::render_heatmap(c, std::filesystem::path(heatmap_dir) /
                                       fmt::format("{}__{}__n{}.svg", r.manifest_name, r.model_id, c.n));
      }
      if (aggregate) {
        std::map<int, std::vector<rci::PatchContribution>> by_n;
        for (const auto& r : reports)
          for (const auto& c : r.contributions) by_n[c.n].push_back(c);
        for (const auto& [n, list] : by_n) {
          const auto avg = rci::average_contributions(list);
          std::cout << fmt::format("aggregate n={} over {} datasets:", n, list.size());
          for (Eigen::Index k = 0; k < avg.shares.size(); ++k) std::cout << fmt::format(" {:.1f}%", 100 * avg.shares[k]);
          std::cout << "\n";
          if (!heatmap_dir.empty())
            rci::render_heatmap(avg, std::filesystem::path(heatmap_dir) / fmt::format("aggregate_n{}.svg", n),
                                fmt::format("Aggregate patch contribution, n={}", n));
        }
      }
      return rci::kExitOk;
    }

    if (*compare) {
      rci::CorrelationMatrix m;
      if (!reference_table.empty()) {
        m = rci::compare_models(rci::reference_series(rci::load_reference_table(reference_table), compare_n), compare_n);
      } else {
        std::vector<rci::AuditReport> reports;
        for (const auto& f : compare_files) reports.push_back(rci::load_report(f));
        m = rci::compare_models(reports, compare_n);
      }
      std::cout << rci::render_correlation(m);
      if (!compare_out.empty()) rci::write_file_atomic(compare_out, rci::correlation_to_json(m).dump(2) + "\n");
      return rci::kExitOk;
    }

    if (*synth) {
      const auto spec = rci::load_synth_spec(spec_path);
      const auto out = rci::generate(spec, synth_out);
      nlohmann::json config = {{"manifest", "manifest.jsonl"},
                               {"model", {{"model_id", "oracle:oracle.json"}, {"max_in_flight", 4}}},
                               {"grids", {2, 3}},
                               {"repetitions", 1},
                               {"output_dir", "report"},
                               {"cache_dir", "cache"}};
      rci::write_file_atomic(std::filesystem::path(synth_out) / "audit.json", config.dump(2) + "\n");
      std::cout << fmt::format("wrote {} items to {}\n", out.manifest.samples.size(), synth_out);
      for (int n : {2, 3}) {
        const auto e = rci::expected_metrics(spec, n);
        std::cout << fmt::format("expected n={}: fip {:.3f}", n, e.fip);
        if (e.mpp) std::cout << fmt::format(", mpp {:.3f}", *e.mpp);
        if (e.rci) std::cout << fmt::format(", rci {:.3f}", *e.rci);
        std::cout << "\n";
      }
      return rci::kExitOk;
    }

    if (*cache_stats) {
      for (const auto& s : rci::cache_stats(cache_dir))
        std::cout << fmt::format("{}  {} records  {} bytes\n", s.path.string(), s.records, s.bytes);
      return rci::kExitOk;
    }
    if (*cache_clear) {
      std::cout << fmt::format("removed {} cache files\n", rci::cache_clear(cache_dir));
      return rci::kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return rci::kExitFailure;
  }
  return rci::kExitFailure;
}
