#include "rci/inference_cache.hpp"

#include <fmt/format.h>

#include <sstream>

#include "json.hpp"
#include "rci/digest.hpp"

namespace rci {

using nlohmann::json;

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out.substr(0, 80);
}

json record_to_json(const InferenceRecord& r) {
  return {{"key", r.cache_key},      {"answer", r.answer_text}, {"model_id", r.model_id},
          {"sample_id", r.sample_id}, {"region", r.region},      {"repetition", r.repetition},
          {"created_at", r.created_at}, {"attempts", r.attempt_count}};
}

InferenceRecord record_from_json(const json& j) {
  InferenceRecord r;
  r.cache_key = j.at("key").get<std::string>();
  r.answer_text = j.at("answer").get<std::string>();
  r.model_id = j.value("model_id", "");
  r.sample_id = j.value("sample_id", "");
  r.region = j.value("region", "");
  r.repetition = j.value("repetition", 0);
  r.created_at = j.value("created_at", "");
  r.attempt_count = j.value("attempts", 1);
  return r;
}

}  // namespace

std::filesystem::path InferenceCache::file_for(const std::filesystem::path& cache_dir, const std::string& model_id,
                                               const std::string& manifest_name) {
  const std::string tag = sha256_hex(model_id + '\x1f' + manifest_name).substr(0, 8);
  return cache_dir / fmt::format("{}__{}__{}.jsonl", sanitize(model_id), sanitize(manifest_name), tag);
}

InferenceCache::InferenceCache(const std::filesystem::path& cache_dir, const std::string& model_id,
                               const std::string& manifest_name)
    : path_(file_for(cache_dir, model_id, manifest_name)) {
  std::filesystem::create_directories(cache_dir);
  load();
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(fmt::format("cannot open cache file {} for append", path_.string()));
}

void InferenceCache::load() {
  std::error_code ec;
  if (!std::filesystem::exists(path_, ec)) return;
  std::string content;
  {
    std::ifstream in(path_, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    content = buf.str();
  }
  // Drop a torn trailing record so later appends start on a fresh line.
  const auto last_newline = content.rfind('\n');
  const std::size_t complete = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (complete != content.size()) {
    content.resize(complete);
    std::filesystem::resize_file(path_, complete);
  }
  std::istringstream lines(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    InferenceRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(fmt::format("{}:{}: corrupt cache record: {}", path_.string(), line_no, e.what()));
    }
    auto [it, inserted] = records_.emplace(r.cache_key, r);
    if (inserted) {
      order_.push_back(r.cache_key);
    } else if (it->second.answer_text != r.answer_text) {
      throw CacheConflictError(
          fmt::format("{}:{}: conflicting answers stored under key {}", path_.string(), line_no, r.cache_key));
    }
  }
}

std::optional<InferenceRecord> InferenceCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = records_.find(key);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

bool InferenceCache::contains(const std::string& key) const {
  std::lock_guard lock(mutex_);
  return records_.count(key) != 0;
}

void InferenceCache::put(const InferenceRecord& record) {
  std::lock_guard lock(mutex_);
  if (auto it = records_.find(record.cache_key); it != records_.end()) {
    if (it->second.answer_text == record.answer_text) return;
    throw CacheConflictError(fmt::format("conflicting answer for cache key {} ({} {})", record.cache_key,
                                         record.sample_id, record.region));
  }
  out_ << record_to_json(record).dump() << '\n';
  out_.flush();
  if (!out_) throw Error(fmt::format("write to cache file {} failed", path_.string()));
  records_.emplace(record.cache_key, record);
  order_.push_back(record.cache_key);
}

std::size_t InferenceCache::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<InferenceRecord> InferenceCache::records() const {
  std::lock_guard lock(mutex_);
  std::vector<InferenceRecord> out;
  out.reserve(order_.size());
  for (const auto& key : order_) out.push_back(records_.at(key));
  return out;
}

std::vector<CacheFileStats> cache_stats(const std::filesystem::path& cache_dir) {
  std::vector<CacheFileStats> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(cache_dir, ec)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(cache_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
    CacheFileStats s;
    s.path = entry.path();
    s.bytes = static_cast<std::size_t>(entry.file_size());
    std::ifstream in(entry.path(), std::ios::binary);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty() && !in.eof()) ++s.records;
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return out;
}

std::size_t cache_clear(const std::filesystem::path& cache_dir) {
  std::size_t removed = 0;
  for (const auto& s : cache_stats(cache_dir))
    if (std::filesystem::remove(s.path)) ++removed;
  return removed;
}

}  // namespace rci
