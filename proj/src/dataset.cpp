#include "rci/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rci/scoring.hpp"

namespace rci {

using nlohmann::json;

std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::MCQ: return "MCQ";
    case TaskType::YES_NO: return "YES_NO";
    case TaskType::OPEN_ENDED: return "OPEN_ENDED";
  }
  return "?";
}

std::string_view to_string(ScorerId s) {
  switch (s) {
    case ScorerId::MCQ_EXACT: return "MCQ_EXACT";
    case ScorerId::YES_NO: return "YES_NO";
    case ScorerId::OPEN_EXACT: return "OPEN_EXACT";
    case ScorerId::OPEN_CONSENSUS: return "OPEN_CONSENSUS";
    case ScorerId::RELAXED_NUMERIC: return "RELAXED_NUMERIC";
  }
  return "?";
}

TaskType parse_task_type(std::string_view text) {
  for (auto t : {TaskType::MCQ, TaskType::YES_NO, TaskType::OPEN_ENDED})
    if (to_string(t) == text) return t;
  throw Error(fmt::format("unknown task type '{}'", text));
}

ScorerId parse_scorer_id(std::string_view text) {
  for (auto s : {ScorerId::MCQ_EXACT, ScorerId::YES_NO, ScorerId::OPEN_EXACT, ScorerId::OPEN_CONSENSUS,
                 ScorerId::RELAXED_NUMERIC})
    if (to_string(s) == text) return s;
  throw Error(fmt::format("unknown scorer '{}'", text));
}

bool scorer_compatible(ScorerId scorer, TaskType task) {
  switch (scorer) {
    case ScorerId::MCQ_EXACT: return task == TaskType::MCQ;
    case ScorerId::YES_NO: return task == TaskType::YES_NO;
    case ScorerId::OPEN_EXACT:
    case ScorerId::OPEN_CONSENSUS:
    case ScorerId::RELAXED_NUMERIC: return task == TaskType::OPEN_ENDED;
  }
  return false;
}

std::string option_label(std::size_t index) {
  return std::string(1, static_cast<char>('A' + index));
}

const SampleRecord& BenchmarkManifest::sample(const std::string& id) const {
  auto it = std::find_if(samples.begin(), samples.end(), [&](const SampleRecord& s) { return s.id == id; });
  if (it == samples.end()) throw Error(fmt::format("manifest '{}' has no sample '{}'", name, id));
  return *it;
}

namespace {

using Kind = ManifestError::Kind;

struct TaggedViolation {
  Kind kind;
  Violation violation;
};

// Label index an MCQ ground truth refers to, by label or by option text.
std::optional<std::size_t> mcq_ground_truth_index(const SampleRecord& s) {
  if (s.ground_truths.size() != 1) return std::nullopt;
  const std::string& gt = s.ground_truths.front();
  for (std::size_t i = 0; i < s.options.size(); ++i)
    if (gt == option_label(i)) return i;
  const std::string norm = normalize_answer(gt);
  for (std::size_t i = 0; i < s.options.size(); ++i)
    if (normalize_answer(s.options[i]) == norm) return i;
  return std::nullopt;
}

std::vector<TaggedViolation> collect_violations(const BenchmarkManifest& m) {
  std::vector<TaggedViolation> out;
  auto add = [&](Kind k, std::string id, std::string msg) { out.push_back({k, {std::move(id), std::move(msg)}}); };

  if (m.name.empty()) add(Kind::Invalid, "", "manifest name must be non-empty");
  if (m.samples.empty()) add(Kind::Invalid, "", "manifest must contain at least one sample");
  if (!scorer_compatible(m.scorer, m.task_type))
    add(Kind::Incompatible, "",
        fmt::format("scorer {} is incompatible with task type {}", to_string(m.scorer), to_string(m.task_type)));
  if (m.declared_chance && !(*m.declared_chance >= 0.0 && *m.declared_chance <= 1.0))
    add(Kind::Invalid, "", "declared_chance must lie in [0, 1]");

  std::set<std::string> seen;
  std::set<std::string> reported;
  for (const auto& s : m.samples) {
    if (s.id.empty()) add(Kind::Invalid, s.id, "sample id must be non-empty");
    if (!seen.insert(s.id).second && reported.insert(s.id).second)
      add(Kind::DuplicateId, s.id, fmt::format("duplicate id \"{}\"", s.id));
    if (s.image_ref.empty()) add(Kind::Invalid, s.id, "image_ref must be non-empty");
    if (s.ground_truths.empty()) add(Kind::Invalid, s.id, "ground_truths must be non-empty");

    switch (m.task_type) {
      case TaskType::MCQ:
        if (s.options.size() < 2) add(Kind::Invalid, s.id, "MCQ requires ≥2 options");
        if (s.options.size() > 26) add(Kind::Invalid, s.id, "MCQ supports at most 26 options");
        if (s.ground_truths.size() > 1) add(Kind::Invalid, s.id, "MCQ requires exactly one ground truth");
        if (s.ground_truths.size() == 1 && s.options.size() >= 2 && !mcq_ground_truth_index(s))
          add(Kind::Invalid, s.id,
              fmt::format("MCQ ground truth \"{}\" matches no option label or text", s.ground_truths.front()));
        break;
      case TaskType::YES_NO:
        for (const auto& gt : s.ground_truths) {
          const std::string norm = normalize_answer(gt);
          if (norm != "yes" && norm != "no")
            add(Kind::Invalid, s.id, fmt::format("YES_NO ground truth \"{}\" is not yes/no", gt));
        }
        if (!s.options.empty()) add(Kind::Invalid, s.id, "options are only allowed for MCQ");
        break;
      case TaskType::OPEN_ENDED:
        if (!s.options.empty()) add(Kind::Invalid, s.id, "options are only allowed for MCQ");
        break;
    }

    if (!s.image_ref.empty()) {
      std::error_code ec;
      if (!std::filesystem::is_regular_file(m.image_path(s), ec))
        add(Kind::MissingImage, s.id, fmt::format("image not found: {}", s.image_ref));
    }
  }
  return out;
}

std::string join_messages(const std::vector<TaggedViolation>& vs, Kind kind) {
  std::string out;
  for (const auto& v : vs) {
    if (v.kind != kind) continue;
    if (!out.empty()) out += "; ";
    out += v.violation.sample_id.empty() ? v.violation.message
                                         : fmt::format("{}: {}", v.violation.sample_id, v.violation.message);
  }
  return out;
}

void canonicalize(BenchmarkManifest& m) {
  for (auto& s : m.samples) {
    if (m.task_type == TaskType::MCQ) {
      if (auto idx = mcq_ground_truth_index(s)) s.ground_truths = {option_label(*idx)};
    } else if (m.task_type == TaskType::YES_NO) {
      for (auto& gt : s.ground_truths) {
        std::string norm = normalize_answer(gt);
        if (norm == "yes" || norm == "no") gt = std::move(norm);
      }
    }
  }
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw ManifestError(Kind::Parse, fmt::format("manifest line {}: {}", line, what));
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) parse_fail(line, fmt::format("missing string field '{}'", key));
  return it->get<std::string>();
}

std::vector<std::string> string_list(const json& obj, const char* key, std::size_t line) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) parse_fail(line, fmt::format("field '{}' must be an array of strings", key));
  for (const auto& v : *it) {
    if (!v.is_string()) parse_fail(line, fmt::format("field '{}' must be an array of strings", key));
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

BenchmarkManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  BenchmarkManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      parse_fail(line_no, e.what());
    }
    if (!obj.is_object()) parse_fail(line_no, "expected a JSON object");

    if (!have_header) {
      if (obj.value("schema", "") != kManifestSchema)
        parse_fail(line_no, fmt::format("header must declare \"schema\":\"{}\"", kManifestSchema));
      m.name = require_string(obj, "name", line_no);
      try {
        m.task_type = parse_task_type(require_string(obj, "task_type", line_no));
        m.scorer = parse_scorer_id(require_string(obj, "scorer", line_no));
      } catch (const ManifestError&) {
        throw;
      } catch (const Error& e) {
        parse_fail(line_no, e.what());
      }
      m.image_root = obj.value("image_root", std::string("."));
      if (auto it = obj.find("declared_chance"); it != obj.end() && !it->is_null()) {
        if (!it->is_number()) parse_fail(line_no, "declared_chance must be a number");
        m.declared_chance = it->get<double>();
      }
      have_header = true;
      continue;
    }

    SampleRecord s;
    s.id = require_string(obj, "id", line_no);
    s.image_ref = require_string(obj, "image_ref", line_no);
    s.question = require_string(obj, "question", line_no);
    s.options = string_list(obj, "options", line_no);
    s.ground_truths = string_list(obj, "ground_truths", line_no);
    if (auto it = obj.find("meta"); it != obj.end() && !it->is_null()) {
      if (!it->is_object()) parse_fail(line_no, "meta must be an object");
      for (const auto& [k, v] : it->items()) s.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    m.samples.push_back(std::move(s));
  }
  if (!have_header) throw ManifestError(Kind::Parse, "manifest line 1: missing header record");

  canonicalize(m);

  const auto violations = collect_violations(m);
  for (Kind k : {Kind::DuplicateId, Kind::Incompatible, Kind::MissingImage, Kind::Invalid}) {
    std::string msg = join_messages(violations, k);
    if (msg.empty()) continue;
    switch (k) {
      case Kind::DuplicateId: throw ManifestError(k, msg);
      case Kind::Incompatible: throw ManifestError(k, msg);
      case Kind::MissingImage: throw ManifestError(k, "unresolved image references: " + msg);
      default: throw ManifestError(k, "invalid manifest: " + msg);
    }
  }
  return m;
}

BenchmarkManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError(Kind::Parse, fmt::format("cannot open manifest {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

std::string serialize_manifest(const BenchmarkManifest& m) {
  std::string out;
  json header = {{"schema", kManifestSchema},
                 {"name", m.name},
                 {"task_type", to_string(m.task_type)},
                 {"scorer", to_string(m.scorer)},
                 {"image_root", m.image_root}};
  if (m.declared_chance) header["declared_chance"] = *m.declared_chance;
  out += header.dump() + "\n";
  for (const auto& s : m.samples) {
    json rec = {{"id", s.id}, {"image_ref", s.image_ref}, {"question", s.question},
                {"ground_truths", s.ground_truths}};
    if (!s.options.empty()) rec["options"] = s.options;
    if (!s.meta.empty()) rec["meta"] = s.meta;
    out += rec.dump() + "\n";
  }
  return out;
}

void write_manifest(const BenchmarkManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write manifest {}", path.string()));
  out << serialize_manifest(manifest);
}

ValidationReport validate_manifest(const BenchmarkManifest& manifest) {
  ValidationReport report;
  for (auto& v : collect_violations(manifest)) report.push_back(std::move(v.violation));
  return report;
}

LabelStats label_stats(const BenchmarkManifest& manifest) {
  LabelStats stats;
  stats.item_count = manifest.samples.size();
  double inverse_sum = 0.0;
  for (const auto& s : manifest.samples) {
    if (!s.ground_truths.empty()) ++stats.frequencies[normalize_answer(s.ground_truths.front())];
    if (!s.options.empty()) inverse_sum += 1.0 / static_cast<double>(s.options.size());
  }
  std::size_t best = 0;
  for (const auto& [answer, count] : stats.frequencies) {
    if (count > best) {  // std::map order makes ties resolve to the smallest answer
      best = count;
      stats.majority_answer = answer;
    }
  }
  if (stats.item_count > 0) stats.majority_fraction = static_cast<double>(best) / stats.item_count;
  if (manifest.task_type == TaskType::MCQ && stats.item_count > 0)
    stats.mean_inverse_option_count = inverse_sum / static_cast<double>(stats.item_count);
  return stats;
}

}  // namespace rci
