#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/adapter.hpp"
#include "intervene/dataset.hpp"
#include "intervene/metrics.hpp"
#include "intervene/scoring.hpp"
#include "intervene/trace.hpp"
#include "intervene/uncertainty.hpp"

namespace intervene {

inline constexpr std::string_view kEngineVersion = "0.3.0";

enum class OracleKind { kExact, kRemote };
enum class JudgeKind { kAuto, kMock, kRemote, kNone };

/// Everything a benchmark run depends on. Serialized verbatim into run.json.
struct RunSpec {
  std::filesystem::path dataset_path;
  std::vector<ConfigId> config_ids{kAllConfigIds.begin(), kAllConfigIds.end()};
  /// Image used by the Q configuration: black, noise or none.
  ImageVariant baseline_image = ImageVariant::kBlack;
  ImageSize baseline_size{256, 256};
  double noise_sigma = kDefaultNoiseSigma;
  PromptStyle prompt_style = PromptStyle::kStandard;
  /// Feed each sample's image_description to the model.
  bool image_description = false;
  std::string model_id = "mock-vlm";
  /// "mock" or the adapter's base URL.
  std::string adapter_endpoint = "mock";
  std::optional<std::filesystem::path> scenario_path;
  std::size_t n_samples = 10;
  double temperature = 0.9;
  OracleKind oracle = OracleKind::kExact;
  std::optional<std::string> oracle_url;
  Estimator estimator = Estimator::kDiscrete;
  bool nli_question_prefix = true;
  JudgeKind judge = JudgeKind::kAuto;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";
  std::size_t workers = 4;
  std::size_t adapter_concurrency = 4;
  std::size_t judge_concurrency = 4;

  /// Throws Error when an invariant does not hold.
  void validate() const;
};

/// Relative paths resolve against `base_dir`. Throws ParseError.
RunSpec run_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunSpec load_run_spec(const std::filesystem::path& path);
nlohmann::json to_json(const RunSpec& spec);

/// Everything needed to execute jobs: the dataset plus concrete backends.
struct RunContext {
  RunSpec spec;
  std::vector<Sample> samples;
  std::shared_ptr<ModelAdapter> adapter;
  std::shared_ptr<EntailmentOracle> oracle;
  std::shared_ptr<JudgeClient> judge;  // may be null: no reasoning scores
};

/// Builds backends from the spec: mock or HTTP adapter, exact or remote oracle, and the
/// judge (ADAPTER_URL / JUDGE_URL / JUDGE_API_KEY read from the environment).
RunContext make_run_context(const RunSpec& spec);

/// The configuration a run uses for one sample.
ModalityConfiguration configuration_for(const RunSpec& spec, const Sample& sample, ConfigId id);

/// Answer trace then reasoning trace for one (sample, configuration), with the ground
/// truth and prompts recorded in metadata.
std::pair<InferenceTrace, InferenceTrace> generate_job(const RunContext& ctx, const AssembledInput& input,
                                                       const Sample& sample);

struct RunOptions {
  /// Polled between jobs; returning true stops the run with PartialRun.
  std::function<bool(std::size_t completed_jobs)> should_stop;
};

/// Runs every (sample, configuration) job, persists traces, scores reasoning, computes
/// metrics and writes the report bundle. Resumes from traces already on disk. Returns
/// the report document. Throws PartialRun when stopped early and AdapterError when the
/// backend fails.
nlohmann::json run_benchmark(const RunContext& ctx, const RunOptions& options = {});
nlohmann::json run_benchmark(const RunSpec& spec, const RunOptions& options = {});

/// Metrics over persisted trace files, as `bench metrics` reports them.
std::vector<TraceMetrics> metrics_for_traces(const std::vector<InferenceTrace>& traces,
                                             EntailmentOracle& oracle, const MetricOptions& options,
                                             std::size_t workers = 1);

/// Dataset-wide means of entropy and relevance, per task, over a report's sample rows.
nlohmann::json report_averages(const nlohmann::json& report);

}  // namespace intervene
