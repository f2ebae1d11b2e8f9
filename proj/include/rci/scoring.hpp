#pragma once

#include <span>
#include <string>
#include <string_view>

#include "rci/dataset.hpp"
#include "rci/types.hpp"

namespace rci {

/// Lowercase, trim, collapse whitespace, strip terminal . , ! ? and a leading
/// article ("a", "an", "the").
std::string normalize_answer(std::string_view text);

/// Relative tolerance of RELAXED_NUMERIC.
inline constexpr double kRelaxedNumericTolerance = 0.05;
/// Number of matching annotator answers that earns full OPEN_CONSENSUS credit.
inline constexpr int kConsensusDenominator = 3;

/// Per-item score in [0, 1]. Throws Error when the scorer does not fit the task type.
double score_item(std::string_view prediction, const SampleRecord& sample, TaskType task_type, ScorerId scorer);

/// Index of the option the prediction selects, or -1. Works on the normalized
/// prediction: exact label, exact option text, then the first standalone
/// letter that names an option.
int extract_option(std::string_view prediction, const SampleRecord& sample);

double aggregate_mean(std::span<const double> scores);

struct ChanceFloor {
  enum class Method { UniformMcq, MajorityYesNo, MajorityOpen, DeclaredOverride };
  double value = 0.0;
  Method method = Method::UniformMcq;

  bool operator==(const ChanceFloor&) const = default;
};

std::string_view to_string(ChanceFloor::Method m);
ChanceFloor::Method parse_chance_method(std::string_view text);

ChanceFloor chance_floor(const BenchmarkManifest& manifest, const LabelStats& stats);

/// Chance floor computed as if the manifest were scored with `scorer`.
ChanceFloor chance_floor(const BenchmarkManifest& manifest, const LabelStats& stats, ScorerId scorer);

}  // namespace rci
