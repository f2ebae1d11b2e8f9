#include "rci/rci_engine.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rci/model_client.hpp"

namespace rci {

const Eigen::MatrixXd& EvalMatrix::patches(int n) const {
  auto it = patch_scores.find(n);
  if (it == patch_scores.end()) throw Error(fmt::format("granularity n={} not present in the score matrix", n));
  return it->second;
}

EvalMatrix assemble_matrix(const BenchmarkManifest& manifest, const InferenceCache& cache,
                           const std::string& model_id, ScorerId scorer, const std::vector<GridSpec>& grids,
                           int repetitions) {
  if (repetitions < 1) throw Error("repetitions must be >= 1");
  const auto n_items = static_cast<Eigen::Index>(manifest.samples.size());
  EvalMatrix m;
  m.manifest_name = manifest.name;
  m.model_id = model_id;
  m.full_scores = Eigen::VectorXd::Zero(n_items);
  for (const auto& g : grids) m.patch_scores.emplace(g.n, Eigen::MatrixXd::Zero(n_items, g.patch_count()));

  std::vector<std::string> missing;
  auto cell_score = [&](const SampleRecord& s, const std::string& prompt, const RegionRef& region,
                        std::string label) -> double {
    double sum = 0.0;
    for (int rep = 0; rep < repetitions; ++rep) {
      auto rec = cache.find(cache_key(model_id, s.id, region, prompt, rep));
      if (!rec) {
        missing.push_back(repetitions > 1 ? fmt::format("{} rep={}", label, rep) : label);
        continue;
      }
      sum += score_item(rec->answer_text, s, manifest.task_type, scorer);
    }
    return sum / repetitions;
  };

  for (Eigen::Index i = 0; i < n_items; ++i) {
    const SampleRecord& s = manifest.samples[static_cast<std::size_t>(i)];
    m.item_ids.push_back(s.id);
    const std::string prompt = build_prompt(s, manifest.task_type);
    m.full_scores[i] = cell_score(s, prompt, RegionRef::full(), fmt::format("(\"{}\", full)", s.id));
    for (const auto& g : grids) {
      auto& block = m.patch_scores.at(g.n);
      for (int id = 1; id <= g.patch_count(); ++id) {
        PatchRegion p;
        p.patch_id = id;
        block(i, id - 1) = cell_score(s, prompt, RegionRef::of(g.n, p), fmt::format("(\"{}\", n={}, {})", s.id, g.n, id));
      }
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t k = 0; k < missing.size() && k < 20; ++k) list += (k ? ", " : "") + missing[k];
    if (missing.size() > 20) list += fmt::format(", ... ({} total)", missing.size());
    throw MissingCellError(fmt::format("missing inference cells: {}", list), std::move(missing));
  }
  return m;
}

double fip(const EvalMatrix& matrix) {
  if (matrix.item_count() == 0) throw Error("empty score matrix");
  return fip(matrix.full_scores);
}

double mpp(const EvalMatrix& matrix, int n) {
  const auto& block = matrix.patches(n);
  if (block.rows() == 0) throw Error("empty score matrix");
  return mpp(block);
}

std::vector<int> winning_patches(const EvalMatrix& matrix, int n) {
  const auto& block = matrix.patches(n);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(block.rows()));
  for (Eigen::Index i = 0; i < block.rows(); ++i) {
    Eigen::Index best = 0;
    block.row(i).maxCoeff(&best);  // first maximal coefficient
    out.push_back(static_cast<int>(best) + 1);
  }
  return out;
}

Validity validity(double fip_value, const ChanceFloor& chance, std::optional<double> se_fip, double delta) {
  Validity v;
  v.delta_min = se_fip ? std::max(delta, 2.0 * *se_fip) : delta;
  v.valid = fip_value >= chance.value + v.delta_min;
  return v;
}

std::string_view to_string(InterpretationBand b) {
  switch (b) {
    case InterpretationBand::STRONG_LOCAL: return "STRONG_LOCAL";
    case InterpretationBand::MODERATE_LOCAL: return "MODERATE_LOCAL";
    case InterpretationBand::BALANCED: return "BALANCED";
    case InterpretationBand::MODERATE_GLOBAL: return "MODERATE_GLOBAL";
    case InterpretationBand::STRONG_GLOBAL: return "STRONG_GLOBAL";
  }
  return "?";
}

InterpretationBand parse_band(std::string_view text) {
  using B = InterpretationBand;
  for (B b : {B::STRONG_LOCAL, B::MODERATE_LOCAL, B::BALANCED, B::MODERATE_GLOBAL, B::STRONG_GLOBAL})
    if (to_string(b) == text) return b;
  throw Error(fmt::format("unknown interpretation band '{}'", text));
}

InterpretationBand band(double rci_value) {
  // +0.30 itself is MODERATE_GLOBAL; only values strictly above are STRONG_GLOBAL.
  if (rci_value <= -0.30) return InterpretationBand::STRONG_LOCAL;
  if (rci_value <= -0.10) return InterpretationBand::MODERATE_LOCAL;
  if (rci_value <= 0.10) return InterpretationBand::BALANCED;
  if (rci_value <= 0.30) return InterpretationBand::MODERATE_GLOBAL;
  return InterpretationBand::STRONG_GLOBAL;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

BootstrapResult bootstrap(const EvalMatrix& matrix, BootstrapStatistic statistic, int resamples,
                          std::uint64_t seed) {
  const Eigen::Index n_items = matrix.item_count();
  if (n_items < 2) throw Error("bootstrap needs at least two items");
  if (resamples < 2) throw Error("bootstrap needs at least two resamples");
  Eigen::VectorXd best;
  if (statistic.kind == BootstrapStatistic::Kind::Rci) best = matrix.patches(statistic.n).rowwise().maxCoeff();

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  int skipped = 0;
  for (int b = 0; b < resamples; ++b) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(b))));
    double full_sum = 0.0;
    double best_sum = 0.0;
    for (Eigen::Index k = 0; k < n_items; ++k) {
      const auto idx = static_cast<Eigen::Index>((static_cast<unsigned __int128>(rng()) * n_items) >> 64);
      full_sum += matrix.full_scores[idx];
      if (best.size()) best_sum += best[idx];
    }
    const double f = full_sum / static_cast<double>(n_items);
    if (statistic.kind == BootstrapStatistic::Kind::Fip) {
      values.push_back(f);
    } else if (f > 0.0) {
      values.push_back(1.0 - (best_sum / static_cast<double>(n_items)) / f);
    } else {
      ++skipped;
    }
  }
  if (skipped * 10 > resamples)
    throw DegenerateBootstrapError(
        fmt::format("bootstrap degenerate: {} of {} resamples had zero full-image performance", skipped, resamples));

  BootstrapResult r;
  r.resamples = resamples;
  r.skipped = skipped;
  const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  r.se = values.size() > 1 ? std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  r.ci_low = percentile(values, 0.025);
  r.ci_high = percentile(values, 0.975);
  return r;
}

double bootstrap_se(const EvalMatrix& matrix, BootstrapStatistic statistic, int resamples, std::uint64_t seed) {
  return bootstrap(matrix, statistic, resamples, seed).se;
}

std::vector<RciResult> compute_results(const EvalMatrix& matrix, const ChanceFloor& chance, double delta,
                                       std::optional<BootstrapConfig> bootstrap_config) {
  const double full = fip(matrix);
  std::optional<double> se_fip;
  if (bootstrap_config)
    se_fip = bootstrap_se(matrix, BootstrapStatistic::full_image(), bootstrap_config->resamples,
                          bootstrap_config->seed);
  const Validity v = validity(full, chance, se_fip, delta);

  std::vector<RciResult> out;
  for (const auto& [n, block] : matrix.patch_scores) {
    RciResult r;
    r.n = n;
    r.fip = full;
    r.mpp = mpp(matrix, n);
    r.chance = chance;
    r.delta_min = v.delta_min;
    r.valid = v.valid;
    r.se_fip = se_fip;
    if (full > 0.0) {
      r.rci = rci(full, r.mpp);
      r.band = band(*r.rci);
    }
    if (bootstrap_config && full > 0.0) {
      try {
        const auto b = bootstrap(matrix, BootstrapStatistic::rci_at(n), bootstrap_config->resamples,
                                 bootstrap_config->seed);
        r.rci_ci = std::make_pair(b.ci_low, b.ci_high);
      } catch (const DegenerateBootstrapError&) {
        // interval stays absent
      }
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace rci
