#include "doctest.h"
#include "rci/pipeline.hpp"
#include "rci/synth.hpp"
#include "test_support.hpp"

using namespace rci;
using rci::test::TempDir;

namespace {

/// Counts calls and delegates to an oracle.
class CountingPredictor : public Predictor {
 public:
  explicit CountingPredictor(std::unique_ptr<Predictor> inner) : inner_(std::move(inner)) {}
  Prediction predict(const InferenceRequest& r) override {
    count_call();
    return inner_->predict(r);
  }
  bool needs_pixels() const override { return false; }

 private:
  std::unique_ptr<Predictor> inner_;
};

AuditConfig synth_config(const TempDir& dir, const SynthOutput& out, std::vector<int> grids) {
  AuditConfig c;
  c.manifest = out.manifest_path;
  c.model.model_id = "oracle";
  c.model.oracle = out.oracle_path;
  c.grids = std::move(grids);
  c.output_dir = dir / "report";
  c.cache_dir = dir / "cache";
  return c;
}

SynthOutput local_fixture(const TempDir& dir) {
  SynthSpec s;
  s.name = "local-advantage";
  s.item_count = 20;
  s.composition = {{EvidenceKind::LOCAL_ONLY, 12, {}}, {EvidenceKind::FULL_AND_LOCAL, 8, {}}};
  s.seed = 3;
  return generate(s, dir / "data");
}

nlohmann::json without_timestamps(nlohmann::json j) {
  j.erase("timestamps");
  return j;
}

}  // namespace

TEST_CASE("parse_audit_config resolves relative paths and the oracle shorthand") {
  const auto c = parse_audit_config(R"({
    "manifest": "data/m.jsonl",
    "model": {"model_id": "oracle:data/oracle.json"},
    "grids": [2, 4], "repetitions": 2, "delta": 0.02,
    "bootstrap": {"resamples": 50, "seed": 5},
    "output_dir": "out", "scorer": "RELAXED_NUMERIC"
  })", "/base");
  CHECK(c.manifest == std::filesystem::path("/base/data/m.jsonl"));
  CHECK(c.model.oracle == std::filesystem::path("/base/data/oracle.json"));
  CHECK(c.grids == std::vector<int>{2, 4});
  CHECK(c.repetitions == 2);
  CHECK(c.delta == 0.02);
  CHECK(c.bootstrap->resamples == 50);
  CHECK(c.bootstrap->seed == 5);
  CHECK(c.output_dir == std::filesystem::path("/base/out"));
  CHECK(c.cache_dir == std::filesystem::path("/base/rci-cache"));
  CHECK(c.scorer_override == ScorerId::RELAXED_NUMERIC);

  const std::string model = R"("model": {"model_id": "x", "endpoint": "http://h/v1"})";
  CHECK_NOTHROW(parse_audit_config(R"({"manifest": "m", )" + model + "}", "/"));
  CHECK_THROWS(parse_audit_config(R"({"manifest": "m", )" + model + R"(, "grids": [3, 2]})", "/"));
  CHECK_THROWS(parse_audit_config(R"({"manifest": "m", )" + model + R"(, "grids": [1, 2]})", "/"));
  CHECK_THROWS(parse_audit_config(R"({"manifest": "m", )" + model + R"(, "grids": [2, 9]})", "/"));
  CHECK_THROWS(parse_audit_config(R"({"manifest": "m", )" + model + R"(, "grids": [2, 2]})", "/"));
  CHECK_THROWS(parse_audit_config(R"({"manifest": "m", )" + model + R"(, "repetitions": 0})", "/"));
  CHECK_THROWS(parse_audit_config(R"({"manifest": "m", "model": {"model_id": "x"}})", "/"));
  CHECK_THROWS(parse_audit_config("not json", "/"));
}

TEST_CASE("run_audit writes every artifact and exits 0 when all cells are valid") {
  TempDir dir;
  const auto out = local_fixture(dir);
  const auto outcome = run_audit(synth_config(dir, out, {2, 3}));
  CHECK(outcome.exit_code == kExitOk);
  for (const char* f : {"report.json", "report.csv", "report.txt", "heatmap_n2.svg", "heatmap_n3.svg"})
    CHECK(std::filesystem::exists(dir / (std::string("report/") + f)));
  const auto loaded = load_report(dir / "report/report.json");
  CHECK(loaded == outcome.report);
  CHECK(loaded.result(2)->fip == doctest::Approx(0.4));
  CHECK(*loaded.result(2)->rci == doctest::Approx(-1.5));
  CHECK(loaded.chance.method == ChanceFloor::Method::MajorityOpen);
  CHECK(loaded.prompt_template_version == "prompt-v1");
}

TEST_CASE("second audit is served from the cache and reproduces the report") {
  TempDir dir;
  const auto out = local_fixture(dir);
  const auto config = synth_config(dir, out, {2, 3});
  CountingPredictor first(make_predictor(config.model, out.manifest));
  const auto a = run_audit(config, &first);
  CHECK(first.call_count() == a.plan.total_cells);
  const std::string json_a = rci::test::read_text(dir / "report/report.json");

  CountingPredictor second(make_predictor(config.model, out.manifest));
  const auto b = run_audit(config, &second);
  CHECK(second.call_count() == 0);
  CHECK(b.plan.cached_cells == b.plan.total_cells);
  const std::string json_b = rci::test::read_text(dir / "report/report.json");
  CHECK(without_timestamps(nlohmann::json::parse(json_a)) == without_timestamps(nlohmann::json::parse(json_b)));

  // Scoring from the cache alone matches too.
  const auto s = run_score(config);
  CHECK(without_timestamps(to_json(s.report)) == without_timestamps(nlohmann::json::parse(json_a)));
}

TEST_CASE("run_score on a cold cache names the missing cells") {
  TempDir dir;
  const auto out = local_fixture(dir);
  try {
    run_score(synth_config(dir, out, {2}));
    FAIL("expected MissingCellError");
  } catch (const MissingCellError& e) {
    CHECK(e.missing().size() == 20 * 5);
  }
}

TEST_CASE("all-invalid audit exits 2") {
  TempDir dir;
  SynthSpec s;
  s.name = "hopeless";
  s.item_count = 10;
  s.composition = {{EvidenceKind::UNSOLVABLE, 9, {}}, {EvidenceKind::LOCAL_ONLY, 1, {}}};
  const auto out = generate(s, dir / "data");
  const auto outcome = run_audit(synth_config(dir, out, {2}));
  CHECK(outcome.exit_code == kExitInvalid);
  CHECK_FALSE(outcome.report.result(2)->rci.has_value());
}

TEST_CASE("scorer override: relaxed numeric credits near misses") {
  TempDir dir;
  std::vector<SampleRecord> samples;
  OracleConfig oracle;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "n" + std::to_string(i);
    samples.push_back({id, id + ".png", "How many?", {}, {"100"}, {}});
    rci::test::write_test_image(dir / ("images/" + id + ".png"), 40, 40);
    OracleEntry e;
    e.answer_boxes = {Box{2, 2, 10, 10}};
    e.wrong_answer = "103";  // 3% off
    e.full_image_behavior = i < 3 ? FullImageBehavior::CORRECT : FullImageBehavior::WRONG;
    oracle.entries[id] = e;
  }
  rci::test::write_text(dir / "m.jsonl",
                        rci::test::manifest_text("count", TaskType::OPEN_ENDED, ScorerId::OPEN_EXACT, samples));
  rci::test::write_text(dir / "oracle.json", serialize_oracle_config(oracle));

  AuditConfig c;
  c.manifest = dir / "m.jsonl";
  c.model.model_id = "oracle";
  c.model.oracle = dir / "oracle.json";
  c.grids = {2};
  c.output_dir = dir / "out";
  c.cache_dir = dir / "cache";
  const auto exact = run_audit(c);
  c.scorer_override = ScorerId::RELAXED_NUMERIC;
  const auto relaxed = run_score(c);
  CHECK(exact.report.result(2)->fip == 0.5);
  CHECK(relaxed.report.result(2)->fip == 1.0);
  CHECK(relaxed.report.result(2)->fip >= exact.report.result(2)->fip);
  CHECK(relaxed.report.scorer == ScorerId::RELAXED_NUMERIC);

  c.scorer_override = ScorerId::YES_NO;
  CHECK_THROWS(run_score(c));
}

TEST_CASE("bootstrap in the pipeline is reproducible") {
  TempDir dir;
  const auto out = local_fixture(dir);
  auto config = synth_config(dir, out, {2});
  config.bootstrap = BootstrapConfig{200, 11};
  const auto a = run_audit(config);
  const auto b = run_score(config);
  REQUIRE(a.report.results[0].se_fip.has_value());
  CHECK(a.report.results[0].se_fip == b.report.results[0].se_fip);
  CHECK(a.report.results[0].rci_ci == b.report.results[0].rci_ci);
}

TEST_CASE("an oracle config that contradicts the manifest is rejected") {
  TempDir dir;
  const auto out = local_fixture(dir);
  auto oracle = out.oracle;
  oracle.entries.begin()->second.answer_boxes = {Box{200, 200, 100, 100}};
  rci::test::write_text(dir / "bad_oracle.json", serialize_oracle_config(oracle));
  auto config = synth_config(dir, out, {2});
  config.model.oracle = dir / "bad_oracle.json";
  CHECK_THROWS(run_audit(config));
}
