#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/dataset.hpp"
#include "intervene/scoring.hpp"
#include "intervene/trace.hpp"

namespace intervene {

inline constexpr std::string_view kAttentionAggregation = "mean_layers_heads_v1";

struct GenerationRequest {
  AssembledInput input;
  Task task = Task::kAnswer;
  std::size_t n_samples = 10;
  double temperature = 0.9;
  bool need_attention = true;
  bool need_logprobs = true;
  std::uint64_t seed = 0;
  /// Reasoning requests only: the greedy answer the explanation follows.
  std::optional<std::string> greedy_answer;
};

nlohmann::json to_json(const GenerationRequest& request);
GenerationRequest generation_request_from_json(const nlohmann::json& j);

/// Produces inference traces for assembled inputs. Implementations must be safe to
/// call from several threads at once.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  /// Throws AdapterError carrying the sample and configuration on failure.
  virtual InferenceTrace generate(const GenerationRequest& request) const = 0;
  virtual std::string model_id() const = 0;
  virtual std::string description() const = 0;
};

/// Relative attention weight per prompt region, before per-position jitter.
struct AttentionProfile {
  double image = 4.0;
  double question = 2.0;
  double context = 1.5;
  double other = 0.5;
};

struct ScenarioEntry {
  std::optional<std::string> answer;
  std::vector<std::string> answer_samples;
  std::optional<std::string> reasoning;
  std::vector<std::string> reasoning_samples;
  std::optional<int> judge_score;
  std::optional<AttentionProfile> attention;
};

/// Script for the in-process mock adapter: per (sample, configuration) outputs, with
/// defaults for anything not listed.
struct Scenario {
  std::string model_id = "mock-vlm";
  std::size_t image_tokens = 16;
  std::size_t system_tokens = 3;
  std::string default_answer = "Yes";
  std::string default_reasoning = "The image shows the relevant detail.";
  int default_judge_score = 7;
  AttentionProfile default_attention;
  std::map<std::pair<std::string, std::string>, ScenarioEntry> entries;

  const ScenarioEntry* find(const std::string& sample_id, ConfigId config) const;
};

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);

/// Splits text into tokens, attaching the separating whitespace to the following token,
/// so that concatenating the tokens restores the text.
std::vector<std::string> mock_tokenize(std::string_view text);

/// Deterministic in-process backend driven by a Scenario. Token log-likelihoods and
/// attention rows are drawn from a generator keyed on (seed, sample, config, task,
/// sample index), so identical requests give identical traces.
class MockAdapter : public ModelAdapter {
 public:
  explicit MockAdapter(Scenario scenario) : scenario_(std::move(scenario)) {}
  InferenceTrace generate(const GenerationRequest& request) const override;
  std::string model_id() const override { return scenario_.model_id; }
  std::string description() const override { return "mock"; }
  const Scenario& scenario() const { return scenario_; }

 private:
  Scenario scenario_;
};

/// Judge backed by a scenario's scripted scores. Keys requests by their idempotency
/// key "<sample_id>|<config_id>".
class ScenarioJudge : public JudgeClient {
 public:
  explicit ScenarioJudge(Scenario scenario) : scenario_(std::move(scenario)) {}
  std::string complete(const JudgeRequest& request) override;
  std::string model_name() const override { return "scenario-judge"; }

 private:
  Scenario scenario_;
};

std::string judge_idempotency_key(const std::string& sample_id, ConfigId config);

/// FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t stable_hash(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace intervene
