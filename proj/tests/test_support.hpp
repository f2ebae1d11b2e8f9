#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rci/dataset.hpp"
#include "rci/rci_engine.hpp"

namespace rci::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rci");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

/// Solid gray PNG of the given size.
void write_test_image(const std::filesystem::path& path, int width, int height);

/// Writes images for every sample under dir/images and returns the manifest
/// text for the given header + samples.
std::string manifest_text(const std::string& name, TaskType task, ScorerId scorer,
                          const std::vector<SampleRecord>& samples);

/// Builds a matrix directly from score arrays (rows = items).
EvalMatrix matrix_from(const std::vector<double>& full, const std::map<int, std::vector<std::vector<double>>>& patches);

std::filesystem::path data_dir();

}  // namespace rci::test
