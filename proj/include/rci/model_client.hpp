#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rci/dataset.hpp"
#include "rci/patch_grid.hpp"
#include "rci/types.hpp"

namespace rci {

inline constexpr const char* kPromptTemplateVersion = "prompt-v1";

/// Either the full image or patch `patch.patch_id` of the n x n grid.
struct RegionRef {
  int n = 0;  // 0 means the full image
  PatchRegion patch;

  static RegionRef full() { return {}; }
  static RegionRef of(int n, const PatchRegion& p) { return {n, p}; }
  bool is_full() const { return n == 0; }
  /// "full" or "n<grid>/p<patch_id>".
  std::string descriptor() const;
};

struct ModelRef {
  std::string model_id;
  std::optional<std::string> endpoint;            // base URL, e.g. https://host/v1
  std::optional<std::filesystem::path> oracle;    // oracle config path
  std::string auth_env;                           // name of the env var holding the bearer token
  double request_timeout = 60.0;                  // seconds
  int max_retries = 3;
  int max_in_flight = 4;
  double backoff_base = 1.0;                      // seconds; doubles per retry, plus jitter

  /// Throws Error unless exactly one of endpoint / oracle is set and limits are sane.
  void check() const;
};

struct InferenceRequest {
  std::string sample_id;
  RegionRef region;
  std::vector<std::uint8_t> image_bytes;  // PNG; empty when the predictor does not need pixels
  std::string prompt;
  TaskType task_type = TaskType::OPEN_ENDED;
};

struct InferenceRecord {
  std::string cache_key;
  std::string answer_text;
  std::string model_id;
  std::string sample_id;
  std::string region;   // RegionRef::descriptor()
  int repetition = 0;
  std::string created_at;
  int attempt_count = 1;
};

std::string build_prompt(const SampleRecord& sample, TaskType task_type);

/// Stable hex digest over model, sample, region descriptor, prompt digest,
/// prompt template version and repetition index.
std::string cache_key(const std::string& model_id, const std::string& sample_id, const RegionRef& region,
                      const std::string& prompt, int repetition);

// ---------------------------------------------------------------------------
// Oracle

struct Box {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  long long area() const { return static_cast<long long>(width) * height; }
  bool operator==(const Box&) const = default;
};

enum class FullImageBehavior { CORRECT, WRONG };

struct OracleEntry {
  std::vector<Box> answer_boxes;  // all required
  double coverage_threshold = 0.9;
  FullImageBehavior full_image_behavior = FullImageBehavior::CORRECT;
  std::string wrong_answer;
  bool unsolvable = false;  // answers wrong_answer everywhere

  bool operator==(const OracleEntry&) const = default;
};

struct OracleConfig {
  std::map<std::string, OracleEntry> entries;

  bool operator==(const OracleConfig&) const = default;
};

OracleConfig load_oracle_config(const std::filesystem::path& path);
OracleConfig parse_oracle_config(const std::string& text);
std::string serialize_oracle_config(const OracleConfig& config);

/// Checks boxes against image bounds (image sizes read from the manifest's
/// images) and wrong answers against ground truths. Empty means valid.
std::vector<std::string> validate_oracle_config(const OracleConfig& config, const BenchmarkManifest& manifest);

/// Fraction of the box's area inside the region.
double box_coverage(const Box& box, const PatchRegion& region);

// ---------------------------------------------------------------------------
// Predictors

class TransportError : public Error {
 public:
  using Error::Error;
};
class MalformedResponseError : public Error {
 public:
  using Error::Error;
};

struct Prediction {
  std::string answer;
  int attempts = 1;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const InferenceRequest& request) = 0;
  /// Whether requests must carry encoded pixels.
  virtual bool needs_pixels() const = 0;
  /// Number of predict() invocations, including retries.
  std::size_t call_count() const { return calls_.load(); }

 protected:
  void count_call() { ++calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Region-aware test double: answers the first ground truth iff every
/// required box has at least coverage_threshold of its area inside the
/// queried region.
class OraclePredictor : public Predictor {
 public:
  OraclePredictor(OracleConfig config, const BenchmarkManifest& manifest);
  Prediction predict(const InferenceRequest& request) override;
  bool needs_pixels() const override { return false; }

 private:
  OracleConfig config_;
  std::map<std::string, std::string> answers_;
};

/// Vision-chat completion endpoint. One user message carrying the prompt and
/// the image as a base64 data URL, temperature 0.
class EndpointPredictor : public Predictor {
 public:
  explicit EndpointPredictor(ModelRef model);
  Prediction predict(const InferenceRequest& request) override;
  bool needs_pixels() const override { return true; }

  /// Request body sent for `request`; exposed for wire-format tests.
  std::string request_body(const InferenceRequest& request) const;

 private:
  std::string send_once(const std::string& body);

  ModelRef model_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Builds the predictor named by the model reference.
std::unique_ptr<Predictor> make_predictor(const ModelRef& model, const BenchmarkManifest& manifest);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace rci
