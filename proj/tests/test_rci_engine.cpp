#include "doctest.h"
#include "rci/inference_plan.hpp"
#include "rci/rci_engine.hpp"
#include "test_support.hpp"

#include <cmath>
#include <random>

using namespace rci;
using rci::test::matrix_from;
using rci::test::TempDir;

namespace {

ChanceFloor floor_of(double v) { return {v, ChanceFloor::Method::DeclaredOverride}; }

/// Brute-force reference for MPP: explicit loops, no Eigen reductions.
double mpp_reference(const std::vector<std::vector<double>>& rows) {
  double sum = 0.0;
  for (const auto& row : rows) {
    double best = row[0];
    for (double v : row) best = v > best ? v : best;
    sum += best;
  }
  return sum / static_cast<double>(rows.size());
}

}  // namespace

TEST_CASE("fip, mpp and rci on a small matrix") {
  // Three items, n=2.
  const auto m = matrix_from({1, 1, 0}, {{2, {{1, 0, 0, 0}, {0, 0, 0, 0}, {0, 1, 1, 0}}}});
  CHECK(fip(m) == doctest::Approx(2.0 / 3.0));
  CHECK(mpp(m, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(rci::rci(fip(m), mpp(m, 2)) == doctest::Approx(0.0));
  CHECK(winning_patches(m, 2) == std::vector<int>{1, 1, 2});
  CHECK_THROWS(mpp(m, 3));
}

TEST_CASE("rci examples") {
  CHECK(rci::rci(0.40, 1.00) == doctest::Approx(-1.5));
  CHECK(rci::rci(0.80, 0.40) == doctest::Approx(0.5));
  CHECK(rci::rci(0.5, 0.5) == 0.0);
  CHECK_THROWS_AS(rci::rci(0.0, 0.3), ZeroFipError);
}

TEST_CASE("validity boundaries") {
  const auto mcq = floor_of(0.25);
  CHECK(validity(0.26, mcq, std::nullopt).valid);  // 0.26 >= 0.25 + 0.01
  CHECK_FALSE(validity(0.2599999, mcq, std::nullopt).valid);
  CHECK_FALSE(validity(0.25, mcq, std::nullopt).valid);
  const auto with_se = validity(0.30, mcq, 0.03);  // delta_min = max(0.01, 0.06)
  CHECK(with_se.delta_min == doctest::Approx(0.06));
  CHECK_FALSE(with_se.valid);
  CHECK(validity(0.31, mcq, 0.03).valid);
  CHECK(validity(0.30, mcq, 0.001).delta_min == 0.01);
}

TEST_CASE("band thresholds") {
  CHECK(band(-1.5) == InterpretationBand::STRONG_LOCAL);
  CHECK(band(-0.30) == InterpretationBand::STRONG_LOCAL);
  CHECK(band(-0.2999) == InterpretationBand::MODERATE_LOCAL);
  CHECK(band(-0.10) == InterpretationBand::MODERATE_LOCAL);
  CHECK(band(-0.0999) == InterpretationBand::BALANCED);
  CHECK(band(0.0) == InterpretationBand::BALANCED);
  CHECK(band(0.10) == InterpretationBand::BALANCED);
  CHECK(band(0.1001) == InterpretationBand::MODERATE_GLOBAL);
  CHECK(band(0.30) == InterpretationBand::MODERATE_GLOBAL);
  CHECK(band(0.3001) == InterpretationBand::STRONG_GLOBAL);
  for (auto b : {InterpretationBand::STRONG_LOCAL, InterpretationBand::MODERATE_LOCAL, InterpretationBand::BALANCED,
                 InterpretationBand::MODERATE_GLOBAL, InterpretationBand::STRONG_GLOBAL})
    CHECK(parse_band(to_string(b)) == b);
  CHECK_THROWS(parse_band("SIDEWAYS"));
}

TEST_CASE("property: rci equals 1 - mpp/fip; mpp matches brute force; mpp is monotone in patch scores") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int items = 1 + static_cast<int>(rng() % 20);
    const int n = 2 + static_cast<int>(rng() % 4);
    std::vector<double> full(static_cast<std::size_t>(items));
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(items), std::vector<double>(std::size_t(n * n)));
    for (auto& v : full) v = u(rng) < 0.5 ? 1.0 : 0.0;
    full[0] = 1.0;
    for (auto& row : rows)
      for (auto& v : row) v = std::floor(u(rng) * 4.0) / 3.0;
    const auto m = matrix_from(full, {{n, rows}});
    const double f = fip(m);
    const double p = mpp(m, n);
    CHECK(std::abs(p - mpp_reference(rows)) <= 1e-12);
    CHECK(std::abs(rci::rci(f, p) - (1.0 - p / f)) <= 1e-12);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);

    // Raising any single cell never lowers mpp.
    auto bumped = rows;
    auto& cell = bumped[rng() % bumped.size()][rng() % std::size_t(n * n)];
    cell = std::min(1.0, cell + 0.5);
    CHECK(mpp(matrix_from(full, {{n, bumped}}), n) >= p - 1e-15);
  }
}

TEST_CASE("bootstrap SE of fip for a 50% Bernoulli sample approximates sqrt(p(1-p)/N)") {
  std::vector<double> full(100, 0.0);
  for (int i = 0; i < 50; ++i) full[std::size_t(i)] = 1.0;
  const auto m = matrix_from(full, {{2, std::vector<std::vector<double>>(100, {1, 0, 0, 0})}});
  const double expected = std::sqrt(0.5 * 0.5 / 100.0);  // 0.05
  const auto r = bootstrap(m, BootstrapStatistic::full_image(), 1000, 42);
  CHECK(std::abs(r.se - expected) <= 0.2 * expected);
  CHECK(r.ci_low < 0.5);
  CHECK(r.ci_high > 0.5);
  CHECK(r.resamples == 1000);
  CHECK(r.skipped == 0);

  const auto again = bootstrap(m, BootstrapStatistic::full_image(), 1000, 42);
  CHECK(again.se == r.se);
  CHECK(again.ci_low == r.ci_low);
  CHECK(again.ci_high == r.ci_high);
  CHECK(bootstrap(m, BootstrapStatistic::full_image(), 1000, 43).se != r.se);
  CHECK(bootstrap_se(m, BootstrapStatistic::full_image(), 1000, 42) == r.se);
}

TEST_CASE("bootstrap of rci") {
  std::vector<double> full(40, 0.0);
  std::vector<std::vector<double>> rows(40, std::vector<double>(4, 0.0));
  for (int i = 0; i < 40; ++i) {
    full[std::size_t(i)] = i % 2 ? 1.0 : 0.0;
    rows[std::size_t(i)][std::size_t(i % 4)] = 1.0;
  }
  const auto m = matrix_from(full, {{2, rows}});
  const auto r = bootstrap(m, BootstrapStatistic::rci_at(2), 200, 1);
  CHECK(r.se > 0.0);
  CHECK(r.ci_low <= -1.0 + 1e-9);  // point estimate 1 - 1/0.5 = -1
  CHECK(r.ci_high >= -1.0 - 1e-9);

  // Mostly-zero fip makes most resamples degenerate.
  std::vector<double> sparse(40, 0.0);
  sparse[0] = 1.0;
  CHECK_THROWS_AS(bootstrap(matrix_from(sparse, {{2, rows}}), BootstrapStatistic::rci_at(2), 200, 1),
                  DegenerateBootstrapError);
}

TEST_CASE("compute_results") {
  const auto m = matrix_from({1, 1, 0, 0}, {{2, {{1, 0, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}}},
                                            {3, {{1, 0, 0, 0, 0, 0, 0, 0, 0},
                                                 {0, 0, 0, 0, 0, 0, 0, 0, 0},
                                                 {0, 0, 0, 0, 0, 0, 0, 0, 0},
                                                 {0, 0, 0, 0, 0, 0, 0, 0, 0}}}});
  const auto results = compute_results(m, floor_of(0.25), 0.01);
  REQUIRE(results.size() == 2);
  CHECK(results[0].n == 2);
  CHECK(results[0].fip == 0.5);
  CHECK(results[0].mpp == 0.75);
  CHECK(*results[0].rci == doctest::Approx(-0.5));
  CHECK(results[0].band == InterpretationBand::STRONG_LOCAL);
  CHECK(results[0].valid);
  CHECK(results[1].mpp == 0.25);
  CHECK(*results[1].rci == doctest::Approx(0.5));
  CHECK(results[1].band == InterpretationBand::STRONG_GLOBAL);

  const auto invalid = compute_results(m, floor_of(0.495), 0.01);
  CHECK_FALSE(invalid[0].valid);
  CHECK(invalid[0].rci.has_value());  // raw value kept; renderings suppress it

  const auto zero = compute_results(matrix_from({0, 0}, {{2, {{1, 0, 0, 0}, {0, 0, 0, 0}}}}), floor_of(0.25));
  CHECK_FALSE(zero[0].rci.has_value());
  CHECK_FALSE(zero[0].valid);

  const auto boot = compute_results(m, floor_of(0.25), 0.01, BootstrapConfig{200, 9});
  REQUIRE(boot[0].se_fip.has_value());
  CHECK(boot[0].delta_min == doctest::Approx(std::max(0.01, 2.0 * *boot[0].se_fip)));
  CHECK(boot[0].rci_ci.has_value());
}

TEST_CASE("assemble_matrix scores cached cells and averages repetitions") {
  TempDir dir;
  BenchmarkManifest manifest;
  manifest.name = "asm";
  manifest.task_type = TaskType::OPEN_ENDED;
  manifest.scorer = ScorerId::OPEN_EXACT;
  manifest.image_root = "images";
  manifest.base_dir = dir.path();
  manifest.samples = {{"a", "a.png", "q", {}, {"cat"}, {}}, {"b", "b.png", "q", {}, {"dog"}, {}}};
  for (const auto& s : manifest.samples) rci::test::write_test_image(dir / ("images/" + s.image_ref), 10, 10);

  InferenceCache cache(dir / "cache", "m", manifest.name);
  const auto cells = plan_cells("m", manifest, {GridSpec(2)}, 2);
  for (const auto& c : cells) {
    InferenceRecord r;
    r.cache_key = c.key;
    r.model_id = "m";
    r.sample_id = c.sample_id;
    r.region = c.region.descriptor();
    r.repetition = c.repetition;
    const auto& gt = manifest.sample(c.sample_id).ground_truths[0];
    // Item a: full correct; patch 1 correct on repetition 0 only. Item b: all wrong.
    const bool correct = c.sample_id == "a" && (c.region.is_full() || (c.region.patch.patch_id == 1 && c.repetition == 0));
    r.answer_text = correct ? gt : "nope";
    cache.put(r);
  }
  const auto m = assemble_matrix(manifest, cache, "m", manifest.scorer, {GridSpec(2)}, 2);
  CHECK(m.item_ids == std::vector<std::string>{"a", "b"});
  CHECK(m.full_scores(0) == 1.0);
  CHECK(m.full_scores(1) == 0.0);
  CHECK(m.patches(2)(0, 0) == 0.5);
  CHECK(m.patches(2).row(1).sum() == 0.0);

  CHECK_THROWS_AS(assemble_matrix(manifest, cache, "m", manifest.scorer, {GridSpec(3)}, 1), MissingCellError);
  try {
    assemble_matrix(manifest, cache, "m", manifest.scorer, {GridSpec(2)}, 3);
  } catch (const MissingCellError& e) {
    CHECK(e.missing().size() == 2 * 5);
  }
}
