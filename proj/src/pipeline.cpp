#include "rci/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rci {

using nlohmann::json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void AuditConfig::check() const {
  model.check();
  if (grids.empty()) throw Error("grids must not be empty");
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i] < 2 || grids[i] > kMaxGranularity)
      throw Error(fmt::format("grid n={} outside [2, {}]; the full image is always evaluated", grids[i],
                              kMaxGranularity));
    if (i && grids[i] <= grids[i - 1]) throw Error("grids must be sorted ascending and unique");
  }
  if (repetitions < 1) throw Error("repetitions must be >= 1");
  if (!(delta >= 0.0 && delta <= 1.0)) throw Error("delta must lie in [0, 1]");
  if (bootstrap && bootstrap->resamples < 2) throw Error("bootstrap resamples must be >= 2");
}

std::vector<GridSpec> AuditConfig::grid_specs() const {
  std::vector<GridSpec> out;
  for (int n : grids) out.emplace_back(n);
  return out;
}

AuditConfig parse_audit_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  AuditConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    const json j = json::parse(json_text);
    c.manifest = resolve(j.at("manifest").get<std::string>());
    const json& m = j.at("model");
    c.model.model_id = m.at("model_id").get<std::string>();
    if (m.contains("endpoint") && !m.at("endpoint").is_null()) c.model.endpoint = m.at("endpoint").get<std::string>();
    if (m.contains("oracle") && !m.at("oracle").is_null()) c.model.oracle = resolve(m.at("oracle").get<std::string>());
    else if (c.model.model_id.starts_with("oracle:")) c.model.oracle = resolve(c.model.model_id.substr(7));
    c.model.auth_env = m.value("auth_env", std::string());
    c.model.request_timeout = m.value("request_timeout", c.model.request_timeout);
    c.model.max_retries = m.value("max_retries", c.model.max_retries);
    c.model.max_in_flight = m.value("max_in_flight", c.model.max_in_flight);
    c.model.backoff_base = m.value("backoff_base", c.model.backoff_base);
    if (j.contains("grids")) c.grids = j.at("grids").get<std::vector<int>>();
    c.repetitions = j.value("repetitions", c.repetitions);
    c.delta = j.value("delta", c.delta);
    if (auto it = j.find("bootstrap"); it != j.end() && !it->is_null() && *it != false) {
      BootstrapConfig b;
      b.resamples = it->value("resamples", b.resamples);
      b.seed = it->value("seed", b.seed);
      c.bootstrap = b;
    }
    c.output_dir = resolve(j.value("output_dir", std::string("rci-out")));
    c.cache_dir = resolve(j.value("cache_dir", std::string("rci-cache")));
    if (j.contains("scorer") && !j.at("scorer").is_null())
      c.scorer_override = parse_scorer_id(j.at("scorer").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(fmt::format("audit config: {}", e.what()));
  }
  c.check();
  return c;
}

AuditConfig load_audit_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_audit_config(buf.str(), path.parent_path());
}

AuditReport build_report(const BenchmarkManifest& manifest, const EvalMatrix& matrix, ScorerId scorer,
                         const AuditConfig& config) {
  AuditReport report;
  report.manifest_name = manifest.name;
  report.model_id = matrix.model_id;
  report.scorer = scorer;
  report.chance = chance_floor(manifest, label_stats(manifest), scorer);
  report.repetitions = config.repetitions;
  report.prompt_template_version = kPromptTemplateVersion;
  report.item_count = manifest.samples.size();
  report.results = compute_results(matrix, report.chance, config.delta, config.bootstrap);
  for (const auto& [n, block] : matrix.patch_scores) report.contributions.push_back(patch_contributions(matrix, n));
  return report;
}

std::vector<std::filesystem::path> write_report_files(const AuditReport& report,
                                                       const std::filesystem::path& output_dir) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& p, const std::string& content) {
    write_file_atomic(p, content);
    written.push_back(p);
  };
  put(output_dir / "report.json", render_report(report, ReportFormat::Json));
  put(output_dir / "report.csv", render_report(report, ReportFormat::Csv));
  put(output_dir / "report.txt", render_report(report, ReportFormat::Terminal));
  for (const auto& c : report.contributions) {
    const auto path = output_dir / fmt::format("heatmap_n{}.svg", c.n);
    render_heatmap(c, path, fmt::format("{} / {}: patch contribution, n={}", report.manifest_name, report.model_id, c.n));
    written.push_back(path);
  }
  return written;
}

namespace {

ScorerId effective_scorer(const AuditConfig& config, const BenchmarkManifest& manifest) {
  const ScorerId scorer = config.scorer_override.value_or(manifest.scorer);
  if (!scorer_compatible(scorer, manifest.task_type))
    throw Error(fmt::format("scorer {} is incompatible with task type {}", to_string(scorer),
                            to_string(manifest.task_type)));
  return scorer;
}

AuditOutcome finish(const AuditConfig& config, const BenchmarkManifest& manifest, const InferenceCache& cache,
                    ScorerId scorer, std::string started_at) {
  AuditOutcome out;
  const EvalMatrix matrix =
      assemble_matrix(manifest, cache, config.model.model_id, scorer, config.grid_specs(), config.repetitions);
  out.report = build_report(manifest, matrix, scorer, config);
  out.report.started_at = std::move(started_at);
  out.report.finished_at = utc_timestamp();
  out.written = write_report_files(out.report, config.output_dir);
  out.exit_code = out.report.all_valid() ? kExitOk : kExitInvalid;
  return out;
}

}  // namespace

AuditOutcome run_audit(const AuditConfig& config, Predictor* predictor) {
  config.check();
  const std::string started = utc_timestamp();
  const BenchmarkManifest manifest = load_manifest(config.manifest);
  const ScorerId scorer = effective_scorer(config, manifest);

  std::unique_ptr<Predictor> owned;
  if (!predictor) {
    if (config.model.oracle) {
      const auto problems = validate_oracle_config(load_oracle_config(*config.model.oracle), manifest);
      if (!problems.empty()) throw Error("invalid oracle config: " + problems.front());
    }
    owned = make_predictor(config.model, manifest);
    predictor = owned.get();
  }

  InferenceCache cache(config.cache_dir, config.model.model_id, manifest.name);
  const PlanStats stats =
      run_inference_plan(config.model, *predictor, manifest, config.grid_specs(), config.repetitions, cache);
  AuditOutcome out = finish(config, manifest, cache, scorer, started);
  out.plan = stats;
  return out;
}

AuditOutcome run_score(const AuditConfig& config) {
  config.check();
  const std::string started = utc_timestamp();
  const BenchmarkManifest manifest = load_manifest(config.manifest);
  const ScorerId scorer = effective_scorer(config, manifest);
  InferenceCache cache(config.cache_dir, config.model.model_id, manifest.name);
  return finish(config, manifest, cache, scorer, started);
}

}  // namespace rci
