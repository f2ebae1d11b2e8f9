#include "rci/scoring.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>

namespace rci {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_terminal_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?'; }

void trim_right(std::string& s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
}

std::optional<double> parse_number(std::string_view text) {
  if (!text.empty() && text.back() == '%') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool starts_with_token(std::string_view text, std::string_view token) {
  if (!text.starts_with(token)) return false;
  return text.size() == token.size() || !is_alnum(text[token.size()]);
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty() && is_terminal_punct(out.back())) {
    out.pop_back();
    trim_right(out);
  }
  for (std::string_view article : {"a ", "an ", "the "}) {
    if (out.size() > article.size() && std::string_view(out).starts_with(article)) {
      out.erase(0, article.size());
      break;
    }
  }
  return out;
}

int extract_option(std::string_view prediction, const SampleRecord& sample) {
  const std::string norm = normalize_answer(prediction);
  const auto count = static_cast<int>(sample.options.size());
  auto letter_index = [&](char c) { return (c >= 'a' && c <= 'z' && c - 'a' < count) ? c - 'a' : -1; };

  if (norm.size() == 1 && letter_index(norm[0]) >= 0) return letter_index(norm[0]);
  for (int i = 0; i < count; ++i)
    if (normalize_answer(sample.options[i]) == norm) return i;
  for (std::size_t j = 0; j < norm.size(); ++j) {
    const bool left = j == 0 || !is_alnum(norm[j - 1]);
    const bool right = j + 1 == norm.size() || !is_alnum(norm[j + 1]);
    if (left && right && letter_index(norm[j]) >= 0) return letter_index(norm[j]);
  }
  return -1;
}

double score_item(std::string_view prediction, const SampleRecord& sample, TaskType task_type, ScorerId scorer) {
  if (!scorer_compatible(scorer, task_type))
    throw Error(fmt::format("scorer {} is incompatible with task type {}", to_string(scorer), to_string(task_type)));
  const std::string pred = normalize_answer(prediction);

  switch (scorer) {
    case ScorerId::MCQ_EXACT: {
      if (sample.ground_truths.empty()) return 0.0;
      const int chosen = extract_option(prediction, sample);
      return chosen >= 0 && option_label(static_cast<std::size_t>(chosen)) == sample.ground_truths.front() ? 1.0
                                                                                                          : 0.0;
    }
    case ScorerId::YES_NO: {
      if (sample.ground_truths.empty()) return 0.0;
      return starts_with_token(pred, normalize_answer(sample.ground_truths.front())) ? 1.0 : 0.0;
    }
    case ScorerId::OPEN_EXACT: {
      for (const auto& gt : sample.ground_truths)
        if (normalize_answer(gt) == pred) return 1.0;
      return 0.0;
    }
    case ScorerId::OPEN_CONSENSUS: {
      const auto matches = std::count_if(sample.ground_truths.begin(), sample.ground_truths.end(),
                                         [&](const std::string& gt) { return normalize_answer(gt) == pred; });
      return std::min(static_cast<double>(matches) / kConsensusDenominator, 1.0);
    }
    case ScorerId::RELAXED_NUMERIC: {
      const auto p = parse_number(pred);
      for (const auto& gt : sample.ground_truths) {
        const std::string g = normalize_answer(gt);
        const auto gv = parse_number(g);
        if (p && gv) {
          const bool hit = *gv == 0.0 ? *p == 0.0 : std::abs(*p - *gv) <= kRelaxedNumericTolerance * std::abs(*gv);
          if (hit) return 1.0;
        } else if (g == pred) {
          return 1.0;
        }
      }
      return 0.0;
    }
  }
  return 0.0;
}

double aggregate_mean(std::span<const double> scores) {
  if (scores.empty()) throw Error("aggregate_mean: empty input");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

std::string_view to_string(ChanceFloor::Method m) {
  switch (m) {
    case ChanceFloor::Method::UniformMcq: return "uniform_mcq";
    case ChanceFloor::Method::MajorityYesNo: return "majority_yesno";
    case ChanceFloor::Method::MajorityOpen: return "majority_open";
    case ChanceFloor::Method::DeclaredOverride: return "declared_override";
  }
  return "?";
}

ChanceFloor::Method parse_chance_method(std::string_view text) {
  using M = ChanceFloor::Method;
  for (M m : {M::UniformMcq, M::MajorityYesNo, M::MajorityOpen, M::DeclaredOverride})
    if (to_string(m) == text) return m;
  throw Error(fmt::format("unknown chance method '{}'", text));
}

ChanceFloor chance_floor(const BenchmarkManifest& manifest, const LabelStats& stats) {
  return chance_floor(manifest, stats, manifest.scorer);
}

ChanceFloor chance_floor(const BenchmarkManifest& manifest, const LabelStats& stats, ScorerId scorer) {
  using M = ChanceFloor::Method;
  if (manifest.declared_chance) return {*manifest.declared_chance, M::DeclaredOverride};
  switch (manifest.task_type) {
    case TaskType::MCQ: {
      double value = 0.0;
      if (stats.mean_inverse_option_count) {
        value = *stats.mean_inverse_option_count;
      } else {
        for (const auto& s : manifest.samples) value += 1.0 / static_cast<double>(s.options.size());
        value /= static_cast<double>(manifest.samples.size());
      }
      return {value, M::UniformMcq};
    }
    case TaskType::YES_NO:
      return {std::max(0.5, stats.majority_fraction), M::MajorityYesNo};
    case TaskType::OPEN_ENDED: {
      std::vector<double> scores;
      scores.reserve(manifest.samples.size());
      for (const auto& s : manifest.samples)
        scores.push_back(score_item(stats.majority_answer, s, TaskType::OPEN_ENDED, scorer));
      return {scores.empty() ? 0.0 : aggregate_mean(scores), M::MajorityOpen};
    }
  }
  return {};
}

}  // namespace rci
