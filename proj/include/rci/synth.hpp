#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rci/dataset.hpp"
#include "rci/model_client.hpp"

namespace rci {

enum class EvidenceKind { LOCAL_ONLY, FULL_AND_LOCAL, GLOBAL_ONLY, UNSOLVABLE };

std::string_view to_string(EvidenceKind k);
EvidenceKind parse_evidence_kind(std::string_view text);

/// Where the evidence of a composition group sits on the design grid.
struct Placement {
  bool uniform_random = true;
  std::vector<double> weights;  // n_design^2 weights by patch_id - 1 when not uniform
};

struct CompositionGroup {
  EvidenceKind kind = EvidenceKind::LOCAL_ONLY;
  int count = 0;
  Placement placement;
};

struct SynthSpec {
  std::string name = "synthetic";
  int item_count = 0;
  int image_width = 224;
  int image_height = 224;
  std::vector<CompositionGroup> composition;
  int n_design = 2;
  std::uint64_t seed = 0;
  double coverage_threshold = 0.9;
  /// Answer box side as a fraction of the design patch side.
  double box_fraction = 0.4;

  /// Throws Error when counts do not sum to item_count or placements are malformed.
  void check() const;
};

SynthSpec parse_synth_spec(const std::string& json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);

struct SynthOutput {
  BenchmarkManifest manifest;
  OracleConfig oracle;
  std::filesystem::path manifest_path;
  std::filesystem::path oracle_path;
  std::vector<std::string> kinds;  // per item, manifest order
  std::vector<int> design_patches; // per item: patch_id holding the (first) box, 0 for UNSOLVABLE
};

class InfeasiblePlacementError : public Error {
 public:
  using Error::Error;
};

/// Writes images/, manifest.jsonl and oracle.json under out_dir.
SynthOutput generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Closed-form expectations derived from the composition alone.
struct SynthExpectation {
  double fip = 0.0;
  std::optional<double> mpp;  // known for n_design, or for any n when no local evidence is present
  std::optional<double> rci;
  std::optional<std::vector<double>> shares;  // at n_design when placements are single patches
};

SynthExpectation expected_metrics(const SynthSpec& spec, int n);

}  // namespace rci
