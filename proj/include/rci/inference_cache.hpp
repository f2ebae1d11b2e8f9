#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rci/model_client.hpp"

namespace rci {

class CacheConflictError : public Error {
 public:
  using Error::Error;
};

/// Append-only line-delimited JSON store, one file per (model_id, manifest).
/// Writes are serialized and flushed record by record; an unterminated final
/// line left by an interrupted run is ignored on load.
class InferenceCache {
 public:
  InferenceCache(const std::filesystem::path& cache_dir, const std::string& model_id,
                 const std::string& manifest_name);

  static std::filesystem::path file_for(const std::filesystem::path& cache_dir, const std::string& model_id,
                                        const std::string& manifest_name);

  std::optional<InferenceRecord> find(const std::string& key) const;
  bool contains(const std::string& key) const;

  /// Appends a record. Re-inserting an identical answer is a no-op; a
  /// different answer under an existing key throws CacheConflictError.
  void put(const InferenceRecord& record);

  std::size_t size() const;
  std::vector<InferenceRecord> records() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void load();

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, InferenceRecord> records_;
  std::vector<std::string> order_;
  std::ofstream out_;
};

struct CacheFileStats {
  std::filesystem::path path;
  std::size_t records = 0;
  std::size_t bytes = 0;
};

std::vector<CacheFileStats> cache_stats(const std::filesystem::path& cache_dir);
/// Removes every cache file in the directory; returns the number removed.
std::size_t cache_clear(const std::filesystem::path& cache_dir);

}  // namespace rci
