// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rci/pipeline.hpp"
#include "rci/report.hpp"
#include "rci/synth.hpp"
#include "test_support.hpp"

using namespace rci;
using rci::test::TempDir;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Check()> run;
};

class CountingPredictor : public Predictor {
 public:
  explicit CountingPredictor(std::unique_ptr<Predictor> inner) : inner_(std::move(inner)) {}
  Prediction predict(const InferenceRequest& r) override {
    count_call();
    return inner_->predict(r);
  }
  bool needs_pixels() const override { return inner_->needs_pixels(); }

 private:
  std::unique_ptr<Predictor> inner_;
};

AuditConfig oracle_config(const SynthOutput& out, const TempDir& dir, std::vector<int> grids) {
  AuditConfig c;
  c.manifest = out.manifest_path;
  c.model.model_id = "oracle";
  c.model.oracle = out.oracle_path;
  c.grids = std::move(grids);
  c.output_dir = dir / "report";
  c.cache_dir = dir / "cache";
  return c;
}

SynthSpec make_spec(const std::string& name, std::vector<CompositionGroup> groups, int n_design, std::uint64_t seed) {
  SynthSpec s;
  s.name = name;
  for (const auto& g : groups) s.item_count += g.count;
  s.composition = std::move(groups);
  s.n_design = n_design;
  s.seed = seed;
  return s;
}

Check c1_rci_exactness() {
  Check c;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> fip_d(0.01, 1.0), mpp_d(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double f = fip_d(rng), m = mpp_d(rng);
    const double got = rci::rci(f, m);
    c.expect(std::abs(got - (1.0 - m / f)) <= 1e-12, fmt::format("pair {} ({}, {}) gave {}", i, f, m, got));
  }
  return c;
}

Check c2_mpp_brute_force() {
  Check c;
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const int items = 1 + static_cast<int>(rng() % 50);
    const int n = 1 + static_cast<int>(rng() % 3);
    std::vector<std::vector<double>> rows(std::size_t(items), std::vector<double>(std::size_t(n * n)));
    for (auto& row : rows)
      for (auto& v : row) v = double(rng() % 4) / 3.0;
    const EvalMatrix m = rci::test::matrix_from(std::vector<double>(std::size_t(items), 1.0), {{n, rows}});
    double sum = 0.0;
    for (const auto& row : rows) {
      double best = 0.0;
      for (double v : row)
        if (v > best) best = v;
      sum += best;
    }
    const double expected = sum / items;
    c.expect(std::abs(mpp(m, n) - expected) <= 1e-12, fmt::format("matrix {}: {} vs {}", t, mpp(m, n), expected));
  }
  return c;
}

Check c3_local_fixture() {
  Check c;
  TempDir dir("rci-acc3");
  const auto spec = make_spec("local-advantage",
                              {{EvidenceKind::LOCAL_ONLY, 60, {}}, {EvidenceKind::FULL_AND_LOCAL, 40, {}}}, 2, 7);
  const auto out = generate(spec, dir / "data");
  const auto outcome = run_audit(oracle_config(out, dir, {2}));
  const RciResult* r = outcome.report.result(2);
  c.expect(r != nullptr, "no n=2 result");
  if (!r) return c;
  // 40/100 and 100/100 as doubles; rci = 1 - 1.0/0.4.
  c.expect(r->fip == 40.0 / 100.0, fmt::format("fip {}", r->fip));
  c.expect(r->mpp == 1.0, fmt::format("mpp_2 {}", r->mpp));
  c.expect(r->rci && std::abs(*r->rci - (-1.5)) <= 1e-12, fmt::format("rci_2 {}", r->rci.value_or(NAN)));
  c.expect(r->band == InterpretationBand::STRONG_LOCAL, "band");
  c.detail = c.ok ? fmt::format("fip {:.3f} mpp_2 {:.3f} rci_2 {:.3f}", r->fip, r->mpp, *r->rci) : c.detail;
  return c;
}

Check c4_global_fixture() {
  Check c;
  TempDir dir("rci-acc4");
  const auto spec = make_spec("global-only", {{EvidenceKind::GLOBAL_ONLY, 50, {}}}, 2, 4);
  const auto out = generate(spec, dir / "data");
  const auto outcome = run_audit(oracle_config(out, dir, {2, 3}));
  for (int n : {2, 3}) {
    const RciResult* r = outcome.report.result(n);
    c.expect(r != nullptr, fmt::format("no n={} result", n));
    if (!r) continue;
    c.expect(r->fip == 1.0, fmt::format("n={} fip {}", n, r->fip));
    c.expect(r->mpp == 0.0, fmt::format("n={} mpp {}", n, r->mpp));
    c.expect(r->rci && *r->rci == 1.0, fmt::format("n={} rci {}", n, r->rci.value_or(NAN)));
    c.expect(r->band == InterpretationBand::STRONG_GLOBAL, fmt::format("n={} band", n));
  }
  return c;
}

Check c5_reference_bands() {
  Check c;
  const auto cells = load_reference_table(rci::test::data_dir() / "reference_rci_table.csv");
  c.expect(cells.size() == 78, fmt::format("{} cells", cells.size()));
  for (const auto& cell : cells)
    c.expect(band(cell.rci) == cell.expected_band,
             fmt::format("{} {} n={} rci {} -> {} (table {})", cell.dataset, cell.model, cell.n, cell.rci,
                         to_string(band(cell.rci)), to_string(cell.expected_band)));
  c.expect(band(-0.516) == InterpretationBand::STRONG_LOCAL, "-0.516");
  c.expect(band(0.290) == InterpretationBand::MODERATE_GLOBAL, "0.290");
  c.expect(band(-0.028) == InterpretationBand::BALANCED, "-0.028");
  return c;
}

Check c6_cross_model_correlation() {
  Check c;
  const auto cells = load_reference_table(rci::test::data_dir() / "reference_rci_table.csv");
  const auto m = compare_models(reference_series(cells, 2), 2);
  c.expect(m.models.size() == 3, "expected three models");
  std::string rs;
  for (Eigen::Index a = 0; a < m.r.rows(); ++a)
    for (Eigen::Index b = a + 1; b < m.r.cols(); ++b) {
      c.expect(m.r(a, b) > 0.9, fmt::format("{} vs {}: r = {:.4f}", m.models[std::size_t(a)],
                                            m.models[std::size_t(b)], m.r(a, b)));
      rs += fmt::format("{}{:.3f}", rs.empty() ? "" : ", ", m.r(a, b));
    }
  if (c.ok) c.detail = "r = " + rs;
  return c;
}

Check c7_validity() {
  Check c;
  const ChanceFloor half{0.50, ChanceFloor::Method::MajorityYesNo};
  c.expect(validity(0.51, half, std::nullopt, 0.01).valid, "0.51 should be valid");
  c.expect(!validity(0.505, half, std::nullopt, 0.01).valid, "0.505 should be invalid");
  const auto with_se = validity(0.53, half, 0.02, 0.01);
  c.expect(std::abs(with_se.delta_min - 0.04) <= 1e-15, fmt::format("delta_min {}", with_se.delta_min));
  c.expect(!with_se.valid, "0.53 with se 0.02 should be invalid");
  c.expect(validity(0.54, half, 0.02, 0.01).valid, "0.54 with se 0.02 should be valid");
  return c;
}

Check c8_chance_floors() {
  Check c;
  BenchmarkManifest mcq;
  mcq.task_type = TaskType::MCQ;
  mcq.scorer = ScorerId::MCQ_EXACT;
  for (int i = 0; i < 20; ++i) mcq.samples.push_back({std::to_string(i), "x", "q", {"a", "b", "c", "d"}, {"B"}, {}});
  const double f_mcq = chance_floor(mcq, label_stats(mcq)).value;
  c.expect(f_mcq == 0.25, fmt::format("MCQ {}", f_mcq));

  BenchmarkManifest yn;
  yn.task_type = TaskType::YES_NO;
  yn.scorer = ScorerId::YES_NO;
  for (int i = 0; i < 100; ++i) yn.samples.push_back({std::to_string(i), "x", "q", {}, {i < 70 ? "yes" : "no"}, {}});
  const double f_yn = chance_floor(yn, label_stats(yn)).value;
  c.expect(std::abs(f_yn - 0.70) <= 1e-15, fmt::format("YES_NO {}", f_yn));

  BenchmarkManifest open;
  open.task_type = TaskType::OPEN_ENDED;
  open.scorer = ScorerId::OPEN_EXACT;
  for (int i = 0; i < 10; ++i) open.samples.push_back({std::to_string(i), "x", "q", {}, {"w" + std::to_string(i)}, {}});
  const double f_open = chance_floor(open, label_stats(open)).value;
  c.expect(std::abs(f_open - 0.10) <= 1e-15, fmt::format("open {}", f_open));
  if (c.ok) c.detail = fmt::format("{:.2f} / {:.2f} / {:.2f}", f_mcq, f_yn, f_open);
  return c;
}

Check c9_contributions() {
  Check c;
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int items = 1 + static_cast<int>(rng() % 40);
    std::vector<std::vector<double>> rows(std::size_t(items), std::vector<double>(std::size_t(n * n), 0.0));
    for (auto& row : rows)
      for (auto& v : row) v = (rng() % 3 == 0) ? double(rng() % 4) / 3.0 : 0.0;
    const auto pc = patch_contributions(rci::test::matrix_from(std::vector<double>(std::size_t(items), 1.0), {{n, rows}}), n);
    if (pc.zero_mass)
      c.expect(pc.shares.sum() == 0.0, fmt::format("matrix {}: zero-mass shares nonzero", t));
    else
      c.expect(std::abs(pc.shares.sum() - 1.0) <= 1e-9, fmt::format("matrix {}: sum {}", t, pc.shares.sum()));
  }
  const auto tie = patch_contributions(rci::test::matrix_from({1}, {{2, {{1, 1, 0, 0}}}}), 2);
  c.expect(tie.shares(0) == 0.5 && tie.shares(1) == 0.5 && tie.shares(2) == 0.0 && tie.shares(3) == 0.0,
           "tie split");
  std::vector<std::vector<double>> centered(10, std::vector<double>(9, 0.0));
  for (auto& row : centered) row[4] = 1.0;
  const auto center = patch_contributions(rci::test::matrix_from(std::vector<double>(10, 1.0), {{3, centered}}), 3);
  c.expect(center.shares(4) == 1.0 && center_bias_share(center) == 1.0, "all-center share(5)");
  return c;
}

Check c10_bootstrap() {
  Check c;
  std::vector<double> full(100, 0.0);
  for (int i = 0; i < 50; ++i) full[std::size_t(i)] = 1.0;
  const auto m = rci::test::matrix_from(full, {{2, std::vector<std::vector<double>>(100, {1, 0, 0, 0})}});
  const auto a = bootstrap(m, BootstrapStatistic::full_image(), 1000, 2024);
  const auto b = bootstrap(m, BootstrapStatistic::full_image(), 1000, 2024);
  const double analytic = std::sqrt(0.5 * 0.5 / 100.0);
  c.expect(std::abs(a.se - analytic) <= 0.2 * analytic, fmt::format("se {} vs {}", a.se, analytic));
  c.expect(a.se == b.se && a.ci_low == b.ci_low && a.ci_high == b.ci_high, "rerun differs");
  if (c.ok) c.detail = fmt::format("se {:.4f} (analytic {:.4f})", a.se, analytic);
  return c;
}

Check c11_tiling() {
  Check c;
  std::vector<unsigned char> cover;
  for (int n = 2; n <= 5; ++n)
    for (int w = n; w <= 64; ++w)
      for (int h = n; h <= 64; ++h) {
        const auto regions = grid_regions(w, h, GridSpec(n));
        cover.assign(std::size_t(w * h), 0);
        long long area = 0;
        bool ok = regions.size() == std::size_t(n * n);
        for (const auto& r : regions) {
          area += r.area();
          for (int y = r.y; y < r.y + r.height; ++y)
            for (int x = r.x; x < r.x + r.width; ++x) {
              if (x < 0 || y < 0 || x >= w || y >= h) {
                ok = false;
                continue;
              }
              ok = ok && cover[std::size_t(y * w + x)] == 0;  // disjoint
              cover[std::size_t(y * w + x)] = 1;
            }
        }
        ok = ok && area == static_cast<long long>(w) * h;
        for (unsigned char v : cover) ok = ok && v == 1;
        c.expect(ok, fmt::format("w={} h={} n={}", w, h, n));
      }
  return c;
}

Check c12_cache_idempotence() {
  Check c;
  TempDir dir("rci-acc12");
  const auto spec = make_spec("idempotence",
                              {{EvidenceKind::LOCAL_ONLY, 30, {}},
                               {EvidenceKind::FULL_AND_LOCAL, 20, {}},
                               {EvidenceKind::GLOBAL_ONLY, 10, {}}},
                              2, 12);
  const auto out = generate(spec, dir / "data");
  const auto config = oracle_config(out, dir, {2, 3});
  auto strip = [](nlohmann::json j) {
    j.erase("timestamps");
    return j;
  };

  CountingPredictor first(make_predictor(config.model, out.manifest));
  const auto a = run_audit(config, &first);
  const auto json_a = nlohmann::json::parse(rci::test::read_text(config.output_dir / "report.json"));
  CountingPredictor second(make_predictor(config.model, out.manifest));
  const auto b = run_audit(config, &second);
  const auto json_b = nlohmann::json::parse(rci::test::read_text(config.output_dir / "report.json"));

  c.expect(first.call_count() == a.plan.total_cells, fmt::format("first run made {} calls", first.call_count()));
  c.expect(second.call_count() == 0, fmt::format("second run made {} calls", second.call_count()));
  c.expect(strip(json_a) == strip(json_b), "reports differ beyond timestamps");
  if (c.ok) c.detail = fmt::format("{} cells, second run 0 calls", b.plan.total_cells);
  return c;
}

Check c13_fragmentation() {
  Check c;
  TempDir dir("rci-acc13");
  // 80 px boxes inside 100 px design patches: they fit one n=3 patch but
  // cannot reach 90% coverage inside any 60 px patch of the n=5 grid.
  auto spec = make_spec("fragmentation", {{EvidenceKind::FULL_AND_LOCAL, 40, {}}}, 3, 13);
  spec.image_width = 300;
  spec.image_height = 300;
  spec.box_fraction = 0.8;
  const auto out = generate(spec, dir / "data");
  const auto outcome = run_audit(oracle_config(out, dir, {3, 5}));
  const RciResult* r3 = outcome.report.result(3);
  const RciResult* r5 = outcome.report.result(5);
  c.expect(r3 && r5 && r3->rci && r5->rci, "missing results");
  if (!c.ok) return c;
  c.expect(*r5->rci > *r3->rci, fmt::format("rci_5 {} <= rci_3 {}", *r5->rci, *r3->rci));
  if (c.ok) c.detail = fmt::format("rci_3 {:.3f} < rci_5 {:.3f}", *r3->rci, *r5->rci);
  return c;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "RCI equals 1 - MPP/FIP on 1000 random pairs", 1, c1_rci_exactness},
      {2, "MPP matches brute-force max/mean on 200 matrices", 5, c2_mpp_brute_force},
      {3, "local-advantage synthetic fixture", 30, c3_local_fixture},
      {4, "global-only synthetic fixture", 30, c4_global_fixture},
      {5, "reference table bands", 1, c5_reference_bands},
      {6, "cross-model correlation at n=2 exceeds 0.9", 1, c6_cross_model_correlation},
      {7, "validity rule boundaries", 1, c7_validity},
      {8, "chance floors", 1, c8_chance_floors},
      {9, "contribution conservation, ties and center share", 5, c9_contributions},
      {10, "bootstrap SE and seeded reproducibility", 10, c10_bootstrap},
      {11, "exhaustive grid tiling", 10, c11_tiling},
      {12, "cache idempotence", 60, c12_cache_idempotence},
      {13, "patch fragmentation raises RCI", 60, c13_fragmentation},
  };
  int failures = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Check result;
    try {
      result = cr.run();
    } catch (const std::exception& e) {
      result.ok = false;
      result.detail = fmt::format("exception: {}", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (result.ok && secs > cr.budget_s) {
      result.ok = false;
      result.detail = fmt::format("took {:.2f}s, budget {}s", secs, cr.budget_s);
    }
    failures += result.ok ? 0 : 1;
    fmt::print("{} criterion {:>2}: {} [{:.3f}s]{}\n", result.ok ? "PASS" : "FAIL", cr.id, cr.title, secs,
               result.detail.empty() ? "" : " - " + result.detail);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - std::size_t(failures), criteria.size());
  return failures == 0 ? 0 : 1;
}
