#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rci/types.hpp"

namespace rci {

inline constexpr const char* kManifestSchema = "rci-manifest/1";

struct BenchmarkManifest {
  std::string name;
  TaskType task_type = TaskType::OPEN_ENDED;
  ScorerId scorer = ScorerId::OPEN_EXACT;
  std::string image_root;            // as written in the header, relative to base_dir
  std::filesystem::path base_dir;    // directory of the manifest file; not serialized
  std::vector<SampleRecord> samples;
  std::optional<double> declared_chance;

  std::filesystem::path image_path(const SampleRecord& s) const {
    return base_dir / image_root / s.image_ref;
  }
  const SampleRecord& sample(const std::string& id) const;

  bool operator==(const BenchmarkManifest& o) const {
    return name == o.name && task_type == o.task_type && scorer == o.scorer &&
           image_root == o.image_root && samples == o.samples &&
           declared_chance == o.declared_chance;
  }
};

class ManifestError : public Error {
 public:
  enum class Kind { Parse, DuplicateId, Incompatible, MissingImage, Invalid };
  ManifestError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Violation {
  std::string sample_id;  // empty for manifest-level violations
  std::string message;
};
using ValidationReport = std::vector<Violation>;

/// Parses the line-delimited manifest, canonicalizes ground truths (MCQ option
/// text to label, yes/no variants to bare tokens) and enforces every invariant.
BenchmarkManifest load_manifest(const std::filesystem::path& path);

/// Same as load_manifest but over an in-memory document; images resolve
/// against base_dir.
BenchmarkManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);

std::string serialize_manifest(const BenchmarkManifest& manifest);
void write_manifest(const BenchmarkManifest& manifest, const std::filesystem::path& path);

/// Enumerates every invariant violation. Never throws, never mutates.
ValidationReport validate_manifest(const BenchmarkManifest& manifest);

struct LabelStats {
  std::map<std::string, std::size_t> frequencies;  // normalized first ground truth
  std::string majority_answer;                     // ties: lexicographically smallest
  double majority_fraction = 0.0;
  std::optional<double> mean_inverse_option_count;  // MCQ only
  std::size_t item_count = 0;
};

LabelStats label_stats(const BenchmarkManifest& manifest);

}  // namespace rci
