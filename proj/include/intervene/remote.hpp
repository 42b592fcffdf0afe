#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "intervene/adapter.hpp"
#include "intervene/scoring.hpp"
#include "intervene/uncertainty.hpp"

namespace intervene {

/// "http://host:port/base" split into the part httplib connects to and a path prefix.
struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "" or "/base" without trailing slash
};

Endpoint parse_endpoint(const std::string& url);

/// Adapter sidecar over HTTP: POST {url}/generate with a GenerationRequest body; the
/// reply is one trace in the .traces.jsonl line schema.
class HttpAdapter : public ModelAdapter {
 public:
  HttpAdapter(std::string url, std::string model_id, int timeout_seconds = 600);
  InferenceTrace generate(const GenerationRequest& request) const override;
  std::string model_id() const override { return model_id_; }
  std::string description() const override { return url_; }

 private:
  std::string url_;
  Endpoint endpoint_;
  std::string model_id_;
  int timeout_seconds_;
};

/// NLI backend over HTTP: POST {url}/entail {"premise", "hypothesis"} -> {"label"}.
class RemoteEntailmentOracle : public EntailmentOracle {
 public:
  explicit RemoteEntailmentOracle(std::string url);
  Entailment judge(const std::string& premise, const std::string& hypothesis) override;

 private:
  Endpoint endpoint_;
};

/// OpenAI-compatible chat-completions judge. Sends the rubric text plus the image as a
/// data URL at temperature 0. Every exchange is appended to `log_path` (when set) with
/// the API key redacted.
class HttpJudgeClient : public JudgeClient {
 public:
  HttpJudgeClient(std::string url, std::string api_key, std::string model = "gpt-4o",
                  std::optional<std::filesystem::path> log_path = std::nullopt);
  std::string complete(const JudgeRequest& request) override;
  std::string model_name() const override { return model_; }

  /// Builds the client from JUDGE_URL, JUDGE_API_KEY and JUDGE_MODEL. Throws
  /// JudgeUnavailable when JUDGE_URL is unset.
  static std::shared_ptr<HttpJudgeClient> from_environment(std::optional<std::filesystem::path> log_path = std::nullopt);

 private:
  Endpoint endpoint_;
  std::string api_key_;
  std::string model_;
  std::optional<std::filesystem::path> log_path_;
  std::mutex log_mutex_;
};

std::optional<std::string> env_string(const char* name);

}  // namespace intervene
