#include "rci/model_client.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "rci/digest.hpp"
#include "rci/image.hpp"
#include "rci/scoring.hpp"

namespace rci {

using nlohmann::json;

std::string RegionRef::descriptor() const {
  return is_full() ? std::string("full") : fmt::format("n{}/p{}", n, patch.patch_id);
}

void ModelRef::check() const {
  if (model_id.empty()) throw Error("model_id must be non-empty");
  if (endpoint.has_value() == oracle.has_value())
    throw Error(fmt::format("model '{}' must name exactly one of endpoint or oracle config", model_id));
  if (max_in_flight < 1) throw Error("max_in_flight must be >= 1");
  if (max_retries < 0) throw Error("max_retries must be >= 0");
  if (!(request_timeout > 0.0)) throw Error("request_timeout must be positive");
  if (backoff_base < 0.0) throw Error("backoff_base must be non-negative");
}

std::string build_prompt(const SampleRecord& sample, TaskType task_type) {
  std::string prompt = sample.question;
  switch (task_type) {
    case TaskType::MCQ:
      for (std::size_t i = 0; i < sample.options.size(); ++i)
        prompt += fmt::format("\n{}. {}", option_label(i), sample.options[i]);
      prompt += "\nAnswer with the option letter only.";
      break;
    case TaskType::YES_NO:
      prompt += "\nAnswer yes or no.";
      break;
    case TaskType::OPEN_ENDED:
      prompt += "\nAnswer with a single word or short phrase.";
      break;
  }
  return prompt;
}

std::string cache_key(const std::string& model_id, const std::string& sample_id, const RegionRef& region,
                      const std::string& prompt, int repetition) {
  // Unit separators keep field boundaries unambiguous.
  const std::string material = fmt::format("{}\x1f{}\x1f{}\x1f{}\x1f{}\x1f{}", model_id, sample_id, region.descriptor(),
                                           sha256_hex(prompt), kPromptTemplateVersion, repetition);
  return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

Box box_from_json(const json& j) {
  if (j.is_array() && j.size() == 4) return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (j.is_object()) return {j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
  throw Error("answer box must be {x,y,w,h} or [x,y,w,h]");
}

json box_to_json(const Box& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.width}, {"h", b.height}}; }

}  // namespace

OracleConfig parse_oracle_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(fmt::format("oracle config: {}", e.what()));
  }
  if (!doc.is_object()) throw Error("oracle config must be a JSON object keyed by sample id");
  OracleConfig config;
  for (const auto& [id, j] : doc.items()) {
    try {
      OracleEntry e;
      if (j.contains("answer_box")) e.answer_boxes.push_back(box_from_json(j.at("answer_box")));
      if (j.contains("answer_boxes"))
        for (const auto& b : j.at("answer_boxes")) e.answer_boxes.push_back(box_from_json(b));
      e.coverage_threshold = j.value("coverage_threshold", 0.9);
      const std::string behavior = j.value("full_image_behavior", std::string("CORRECT"));
      if (behavior == "CORRECT") e.full_image_behavior = FullImageBehavior::CORRECT;
      else if (behavior == "WRONG") e.full_image_behavior = FullImageBehavior::WRONG;
      else throw Error(fmt::format("unknown full_image_behavior '{}'", behavior));
      e.wrong_answer = j.at("wrong_answer").get<std::string>();
      e.unsolvable = j.value("unsolvable", false);
      if (!(e.coverage_threshold > 0.0 && e.coverage_threshold <= 1.0))
        throw Error("coverage_threshold must lie in (0, 1]");
      if (e.answer_boxes.empty() && !e.unsolvable) throw Error("entry needs answer_box(es) or unsolvable=true");
      config.entries.emplace(id, std::move(e));
    } catch (const json::exception& ex) {
      throw Error(fmt::format("oracle config entry '{}': {}", id, ex.what()));
    } catch (const Error& ex) {
      throw Error(fmt::format("oracle config entry '{}': {}", id, ex.what()));
    }
  }
  return config;
}

OracleConfig load_oracle_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open oracle config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_oracle_config(buf.str());
}

std::string serialize_oracle_config(const OracleConfig& config) {
  json doc = json::object();
  for (const auto& [id, e] : config.entries) {
    json j;
    json boxes = json::array();
    for (const auto& b : e.answer_boxes) boxes.push_back(box_to_json(b));
    j["answer_boxes"] = std::move(boxes);
    j["coverage_threshold"] = e.coverage_threshold;
    j["full_image_behavior"] = e.full_image_behavior == FullImageBehavior::CORRECT ? "CORRECT" : "WRONG";
    j["wrong_answer"] = e.wrong_answer;
    if (e.unsolvable) j["unsolvable"] = true;
    doc[id] = std::move(j);
  }
  return doc.dump(1) + "\n";
}

std::vector<std::string> validate_oracle_config(const OracleConfig& config, const BenchmarkManifest& manifest) {
  std::vector<std::string> problems;
  for (const auto& s : manifest.samples) {
    auto it = config.entries.find(s.id);
    if (it == config.entries.end()) {
      problems.push_back(fmt::format("{}: no oracle entry", s.id));
      continue;
    }
    const OracleEntry& e = it->second;
    const std::string wrong = normalize_answer(e.wrong_answer);
    for (const auto& gt : s.ground_truths)
      if (normalize_answer(gt) == wrong) problems.push_back(fmt::format("{}: wrong_answer equals a ground truth", s.id));
    if (manifest.task_type == TaskType::MCQ && !s.ground_truths.empty()) {
      const int chosen = extract_option(e.wrong_answer, s);
      if (chosen >= 0 && option_label(static_cast<std::size_t>(chosen)) == s.ground_truths.front())
        problems.push_back(fmt::format("{}: wrong_answer selects the correct option", s.id));
    }
    if (e.answer_boxes.empty()) continue;
    Raster img;
    try {
      img = read_image(manifest.image_path(s));
    } catch (const Error& ex) {
      problems.push_back(fmt::format("{}: {}", s.id, ex.what()));
      continue;
    }
    for (const auto& b : e.answer_boxes)
      if (b.x < 0 || b.y < 0 || b.width < 1 || b.height < 1 || b.x + b.width > img.width ||
          b.y + b.height > img.height)
        problems.push_back(fmt::format("{}: answer box ({},{},{},{}) outside {}x{} image", s.id, b.x, b.y, b.width,
                                       b.height, img.width, img.height));
  }
  return problems;
}

double box_coverage(const Box& box, const PatchRegion& region) {
  if (box.area() <= 0) return 0.0;
  const long long ix = std::max(0, std::min(box.x + box.width, region.x + region.width) - std::max(box.x, region.x));
  const long long iy =
      std::max(0, std::min(box.y + box.height, region.y + region.height) - std::max(box.y, region.y));
  return static_cast<double>(ix * iy) / static_cast<double>(box.area());
}

OraclePredictor::OraclePredictor(OracleConfig config, const BenchmarkManifest& manifest)
    : config_(std::move(config)) {
  for (const auto& s : manifest.samples)
    if (!s.ground_truths.empty()) answers_[s.id] = s.ground_truths.front();
}

Prediction OraclePredictor::predict(const InferenceRequest& request) {
  count_call();
  auto it = config_.entries.find(request.sample_id);
  if (it == config_.entries.end())
    throw Error(fmt::format("oracle config has no entry for sample '{}'", request.sample_id));
  const OracleEntry& e = it->second;
  auto answer = answers_.find(request.sample_id);
  if (answer == answers_.end()) throw Error(fmt::format("oracle has no ground truth for '{}'", request.sample_id));

  bool correct = false;
  if (e.unsolvable) {
    correct = false;
  } else if (request.region.is_full()) {
    correct = e.full_image_behavior == FullImageBehavior::CORRECT;
  } else {
    // Tolerance absorbs the rounding of area ratios computed in double.
    correct = std::all_of(e.answer_boxes.begin(), e.answer_boxes.end(), [&](const Box& b) {
      return box_coverage(b, request.region.patch) >= e.coverage_threshold - 1e-12;
    });
  }
  return {correct ? answer->second : e.wrong_answer, 1};
}

// ---------------------------------------------------------------------------
// Endpoint

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

EndpointPredictor::EndpointPredictor(ModelRef model) : model_(std::move(model)) {
  if (!model_.endpoint) throw Error("EndpointPredictor requires an endpoint URL");
  const std::string& url = *model_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(fmt::format("endpoint '{}' lacks a scheme", url));
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  std::string base = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  path_ = base + "/chat/completions";
}

std::string EndpointPredictor::request_body(const InferenceRequest& request) const {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  content.push_back(
      {{"type", "image_url"},
       {"image_url", {{"url", "data:image/png;base64," + base64_encode(request.image_bytes)}}}});
  json body = {{"model", model_.model_id},
               {"temperature", 0},
               {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};
  return body.dump();
}

namespace {

struct RetryableError : TransportError {
  using TransportError::TransportError;
};

}  // namespace

std::string EndpointPredictor::send_once(const std::string& body) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(model_.request_timeout);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!model_.auth_env.empty()) {
    if (const char* token = std::getenv(model_.auth_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw RetryableError(fmt::format("request to {} failed: {}", scheme_host_port_, httplib::to_string(res.error())));
  if (res->status == 429 || res->status >= 500)
    throw RetryableError(fmt::format("endpoint returned HTTP {}", res->status));
  if (res->status != 200) throw TransportError(fmt::format("endpoint returned HTTP {}: {}", res->status, res->body));
  return res->body;
}

Prediction EndpointPredictor::predict(const InferenceRequest& request) {
  const std::string body = request_body(request);
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(0.0, 0.25);

  for (int attempt = 0;; ++attempt) {
    count_call();
    std::string response;
    try {
      response = send_once(body);
    } catch (const RetryableError& e) {
      if (attempt >= model_.max_retries)
        throw TransportError(fmt::format("{} (after {} attempts)", e.what(), attempt + 1));
      const double delay = model_.backoff_base * std::pow(2.0, attempt) * (1.0 + jitter(jitter_rng));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      continue;
    }
    json doc;
    try {
      doc = json::parse(response);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      if (content.is_string()) return {content.get<std::string>(), attempt + 1};
      // Some servers answer with a list of content parts.
      std::string text;
      for (const auto& part : content)
        if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
      return {text, attempt + 1};
    } catch (const json::exception& e) {
      throw MalformedResponseError(fmt::format("malformed endpoint response: {}", e.what()));
    }
  }
}

std::unique_ptr<Predictor> make_predictor(const ModelRef& model, const BenchmarkManifest& manifest) {
  model.check();
  if (model.oracle) return std::make_unique<OraclePredictor>(load_oracle_config(*model.oracle), manifest);
  return std::make_unique<EndpointPredictor>(model);
}

}  // namespace rci
