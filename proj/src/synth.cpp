#include "rci/synth.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "rci/image.hpp"
#include "rci/patch_grid.hpp"
#include "rci/report.hpp"

namespace rci {

using nlohmann::json;

std::string_view to_string(EvidenceKind k) {
  switch (k) {
    case EvidenceKind::LOCAL_ONLY: return "LOCAL_ONLY";
    case EvidenceKind::FULL_AND_LOCAL: return "FULL_AND_LOCAL";
    case EvidenceKind::GLOBAL_ONLY: return "GLOBAL_ONLY";
    case EvidenceKind::UNSOLVABLE: return "UNSOLVABLE";
  }
  return "?";
}

EvidenceKind parse_evidence_kind(std::string_view text) {
  using K = EvidenceKind;
  for (K k : {K::LOCAL_ONLY, K::FULL_AND_LOCAL, K::GLOBAL_ONLY, K::UNSOLVABLE})
    if (to_string(k) == text) return k;
  throw Error(fmt::format("unknown evidence kind '{}'", text));
}

namespace {

// Patch id when the placement puts all mass on one patch.
std::optional<int> single_patch(const Placement& p) {
  if (p.uniform_random) return std::nullopt;
  std::optional<int> found;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    if (p.weights[i] <= 0.0) continue;
    if (found) return std::nullopt;
    found = static_cast<int>(i) + 1;
  }
  return found;
}

}  // namespace

void SynthSpec::check() const {
  if (item_count < 1) throw Error("synth: item_count must be >= 1");
  if (n_design < 2 || n_design > kMaxGranularity)
    throw Error(fmt::format("synth: n_design must lie in [2, {}]", kMaxGranularity));
  if (image_width < 4 * n_design || image_height < 4 * n_design)
    throw Error("synth: image too small for the design grid");
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0))
    throw Error("synth: coverage_threshold must lie in (0, 1]");
  if (!(box_fraction > 0.0 && box_fraction <= 1.0)) throw Error("synth: box_fraction must lie in (0, 1]");
  int total = 0;
  for (const auto& g : composition) {
    if (g.count < 0) throw Error("synth: negative composition count");
    total += g.count;
    if (!g.placement.uniform_random) {
      if (g.placement.weights.size() != static_cast<std::size_t>(n_design * n_design))
        throw Error(fmt::format("synth: placement needs {} weights for n_design={}", n_design * n_design, n_design));
      double sum = 0.0;
      for (double w : g.placement.weights) {
        if (w < 0.0) throw Error("synth: negative placement weight");
        sum += w;
      }
      if (!(sum > 0.0)) throw Error("synth: placement weights sum to zero");
    }
  }
  if (total != item_count)
    throw Error(fmt::format("synth: composition counts sum to {}, expected {}", total, item_count));
}

SynthSpec parse_synth_spec(const std::string& json_text) {
  SynthSpec spec;
  try {
    const json j = json::parse(json_text);
    spec.name = j.value("name", spec.name);
    spec.item_count = j.at("item_count").get<int>();
    if (auto it = j.find("image_size"); it != j.end()) {
      spec.image_width = it->at(0).get<int>();
      spec.image_height = it->at(1).get<int>();
    }
    spec.n_design = j.value("n_design", spec.n_design);
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.coverage_threshold = j.value("coverage_threshold", spec.coverage_threshold);
    spec.box_fraction = j.value("box_fraction", spec.box_fraction);
    for (const auto& g : j.at("composition")) {
      CompositionGroup group;
      group.kind = parse_evidence_kind(g.at("kind").get<std::string>());
      group.count = g.at("count").get<int>();
      const json placement = g.value("placement", json("UNIFORM_RANDOM"));
      if (placement.is_string()) {
        if (placement.get<std::string>() != "UNIFORM_RANDOM")
          throw Error(fmt::format("synth: unknown placement '{}'", placement.get<std::string>()));
      } else if (placement.contains("patch")) {
        const int patch = placement.at("patch").get<int>();
        if (patch < 1 || patch > spec.n_design * spec.n_design)
          throw Error(fmt::format("synth: placement patch {} outside the n_design grid", patch));
        group.placement.uniform_random = false;
        group.placement.weights.assign(static_cast<std::size_t>(spec.n_design * spec.n_design), 0.0);
        group.placement.weights[static_cast<std::size_t>(patch - 1)] = 1.0;
      } else {
        group.placement.uniform_random = false;
        group.placement.weights = placement.at("weights").get<std::vector<double>>();
      }
      spec.composition.push_back(std::move(group));
    }
  } catch (const json::exception& e) {
    throw Error(fmt::format("synth spec: {}", e.what()));
  }
  spec.check();
  return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open synth spec {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_synth_spec(buf.str());
}

namespace {

class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) : rng_(seed) {}
  // mt19937_64 output is fully specified, unlike the std distributions.
  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng_()) * bound) >> 64);
  }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

 private:
  std::mt19937_64 rng_;
};

int draw_patch(const Placement& p, int n, SeededStream& rng) {
  if (p.uniform_random) return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n * n)));
  double total = 0.0;
  for (double w : p.weights) total += w;
  const double u = rng.unit() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    acc += p.weights[i];
    if (u < acc && p.weights[i] > 0.0) return static_cast<int>(i) + 1;
  }
  for (std::size_t i = p.weights.size(); i-- > 0;)
    if (p.weights[i] > 0.0) return static_cast<int>(i) + 1;
  return 1;
}

// Partner for a conjunctive pair: point reflection, or opposite corners when
// the reflection is the patch itself or shares an edge with it.
int partner_patch(int patch, int n) {
  const int row = (patch - 1) / n;
  const int col = (patch - 1) % n;
  const int partner = n * n + 1 - patch;
  const int prow = (partner - 1) / n;
  const int pcol = (partner - 1) % n;
  const int manhattan = std::abs(row - prow) + std::abs(col - pcol);
  if (partner != patch && manhattan > 1) return partner;
  return row < n / 2 ? n * n : 1;
}

struct Axis {
  int lo;  // first allowed start coordinate
  int hi;  // last allowed start coordinate
};

// Placement range for a box of `side` pixels inside [start, start + extent).
Axis box_axis(int start, int extent, int side, double tau, const std::string& where) {
  const int margin = std::max(2, static_cast<int>(std::ceil((1.0 - tau) * side)));
  const Axis a{start + margin, start + extent - margin - side};
  if (a.hi < a.lo)
    throw InfeasiblePlacementError(
        fmt::format("{}: a {}px box with {}px margins does not fit a {}px patch", where, side, margin, extent));
  return a;
}

Box place_box(const PatchRegion& r, const SynthSpec& spec, SeededStream& rng, int toward_x, int toward_y,
              const std::string& where) {
  const int bw = std::max(1, static_cast<int>(std::floor(spec.box_fraction * r.width)));
  const int bh = std::max(1, static_cast<int>(std::floor(spec.box_fraction * r.height)));
  const Axis ax = box_axis(r.x, r.width, bw, spec.coverage_threshold, where);
  const Axis ay = box_axis(r.y, r.height, bh, spec.coverage_threshold, where);
  // toward < 0 pins the box to the low edge, > 0 to the high edge, 0 draws uniformly.
  const int x = toward_x < 0 ? ax.lo : toward_x > 0 ? ax.hi : rng.between(ax.lo, ax.hi);
  const int y = toward_y < 0 ? ay.lo : toward_y > 0 ? ay.hi : rng.between(ay.lo, ay.hi);
  return {x, y, bw, bh};
}

bool covered_by_single_patch(const std::vector<Box>& boxes, int width, int height, int n, double tau) {
  for (const auto& region : grid_regions(width, height, GridSpec(n))) {
    const bool all = std::all_of(boxes.begin(), boxes.end(),
                                 [&](const Box& b) { return box_coverage(b, region) >= tau - 1e-12; });
    if (all) return true;
  }
  return false;
}

void fill_box(Raster& img, const Box& b, std::uint8_t r, std::uint8_t g, std::uint8_t bl) {
  for (int y = b.y; y < b.y + b.height; ++y)
    for (int x = b.x; x < b.x + b.width; ++x) {
      std::uint8_t* p = img.at(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = bl;
    }
}

}  // namespace

SynthOutput generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.check();
  const auto image_dir = out_dir / "images";
  std::filesystem::create_directories(image_dir);
  SeededStream rng(spec.seed);
  const auto design = grid_regions(spec.image_width, spec.image_height, GridSpec(spec.n_design));
  const int n = spec.n_design;

  SynthOutput out;
  out.manifest.name = spec.name;
  out.manifest.task_type = TaskType::OPEN_ENDED;
  out.manifest.scorer = ScorerId::OPEN_EXACT;
  out.manifest.image_root = "images";
  out.manifest.base_dir = out_dir;

  int index = 0;
  for (const auto& group : spec.composition) {
    for (int c = 0; c < group.count; ++c) {
      ++index;
      const std::string id = fmt::format("syn-{:04d}", index);
      const std::string where = fmt::format("{} ({})", id, to_string(group.kind));
      OracleEntry entry;
      entry.coverage_threshold = spec.coverage_threshold;
      entry.wrong_answer = "none";
      int design_patch = 0;

      switch (group.kind) {
        case EvidenceKind::LOCAL_ONLY:
        case EvidenceKind::FULL_AND_LOCAL: {
          design_patch = draw_patch(group.placement, n, rng);
          entry.answer_boxes.push_back(
              place_box(design[static_cast<std::size_t>(design_patch - 1)], spec, rng, 0, 0, where));
          entry.full_image_behavior = group.kind == EvidenceKind::LOCAL_ONLY ? FullImageBehavior::WRONG
                                                                              : FullImageBehavior::CORRECT;
          break;
        }
        case EvidenceKind::GLOBAL_ONLY: {
          design_patch = draw_patch(group.placement, n, rng);
          const int partner = partner_patch(design_patch, n);
          const int r0 = (design_patch - 1) / n, c0 = (design_patch - 1) % n;
          const int r1 = (partner - 1) / n, c1 = (partner - 1) % n;
          auto sign = [](int v) { return (v > 0) - (v < 0); };
          // Each box sits on the side of its patch facing away from the other.
          entry.answer_boxes.push_back(place_box(design[static_cast<std::size_t>(design_patch - 1)], spec, rng,
                                                 sign(c0 - c1) == 0 ? 0 : -sign(c1 - c0),
                                                 sign(r0 - r1) == 0 ? 0 : -sign(r1 - r0), where));
          entry.answer_boxes.push_back(place_box(design[static_cast<std::size_t>(partner - 1)], spec, rng,
                                                 sign(c1 - c0) == 0 ? 0 : -sign(c0 - c1),
                                                 sign(r1 - r0) == 0 ? 0 : -sign(r0 - r1), where));
          entry.full_image_behavior = FullImageBehavior::CORRECT;
          for (int g = 2; g <= kMaxGranularity && g <= std::min(spec.image_width, spec.image_height); ++g)
            if (covered_by_single_patch(entry.answer_boxes, spec.image_width, spec.image_height, g,
                                        spec.coverage_threshold))
              throw InfeasiblePlacementError(
                  fmt::format("{}: both answer boxes fit one patch at n={}", where, g));
          break;
        }
        case EvidenceKind::UNSOLVABLE:
          entry.unsolvable = true;
          entry.full_image_behavior = FullImageBehavior::WRONG;
          break;
      }

      Raster img(spec.image_width, spec.image_height, 3);
      std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{200});
      const auto base = static_cast<std::uint8_t>(rng.below(128));
      for (std::size_t b = 0; b < entry.answer_boxes.size(); ++b)
        fill_box(img, entry.answer_boxes[b], static_cast<std::uint8_t>(base + 40 * b),
                 static_cast<std::uint8_t>((index * 37) % 128), static_cast<std::uint8_t>(255 - base));
      const std::string file = fmt::format("img-{:04d}.png", index);
      write_png(img, image_dir / file);

      SampleRecord s;
      s.id = id;
      s.image_ref = file;
      s.question = "What is the code name of the marked object?";
      s.ground_truths = {fmt::format("code-{:04d}", index)};
      s.meta = {{"kind", std::string(to_string(group.kind))}, {"design_patch", std::to_string(design_patch)}};
      out.manifest.samples.push_back(std::move(s));
      out.oracle.entries.emplace(id, std::move(entry));
      out.kinds.emplace_back(to_string(group.kind));
      out.design_patches.push_back(design_patch);
    }
  }

  out.manifest_path = out_dir / "manifest.jsonl";
  out.oracle_path = out_dir / "oracle.json";
  write_file_atomic(out.manifest_path, serialize_manifest(out.manifest));
  write_file_atomic(out.oracle_path, serialize_oracle_config(out.oracle));
  return out;
}

SynthExpectation expected_metrics(const SynthSpec& spec, int n) {
  int local_only = 0, full_and_local = 0, global_only = 0;
  std::vector<double> mass(static_cast<std::size_t>(spec.n_design * spec.n_design), 0.0);
  bool shares_known = true;
  for (const auto& g : spec.composition) {
    switch (g.kind) {
      case EvidenceKind::LOCAL_ONLY: local_only += g.count; break;
      case EvidenceKind::FULL_AND_LOCAL: full_and_local += g.count; break;
      case EvidenceKind::GLOBAL_ONLY: global_only += g.count; break;
      case EvidenceKind::UNSOLVABLE: break;
    }
    if ((g.kind == EvidenceKind::LOCAL_ONLY || g.kind == EvidenceKind::FULL_AND_LOCAL) && g.count > 0) {
      if (auto p = single_patch(g.placement)) mass[static_cast<std::size_t>(*p - 1)] += g.count;
      else shares_known = false;
    }
  }
  const double total = spec.item_count;
  SynthExpectation e;
  e.fip = (full_and_local + global_only) / total;
  const int local = local_only + full_and_local;
  // Local evidence is only guaranteed to fit one patch of the design grid;
  // conjunctive pairs never fit a single patch at any n.
  if (n == spec.n_design) e.mpp = local / total;
  else if (local == 0) e.mpp = 0.0;
  if (e.mpp && e.fip > 0.0) e.rci = 1.0 - *e.mpp / e.fip;
  if (n == spec.n_design && shares_known) {
    std::vector<double> shares(mass.size(), 0.0);
    if (local > 0)
      for (std::size_t k = 0; k < mass.size(); ++k) shares[k] = mass[k] / local;
    e.shares = shares;
  }
  return e;
}

}  // namespace rci
