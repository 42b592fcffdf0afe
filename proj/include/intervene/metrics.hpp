#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/attention.hpp"
#include "intervene/risk.hpp"
#include "intervene/scoring.hpp"
#include "intervene/trace.hpp"
#include "intervene/uncertainty.hpp"

namespace intervene {

/// Everything the engine derives from one trace.
struct TraceMetrics {
  std::string sample_id;
  ConfigId config_id = ConfigId::kQ;
  Task task = Task::kAnswer;
  std::string model_id;
  std::string greedy_text;
  std::optional<RelevanceScores> relevance;
  std::optional<std::string> relevance_error;
  std::optional<UncertaintyReport> uncertainty;
  std::optional<std::string> uncertainty_error;
  /// Answer traces only.
  std::optional<ParsedAnswer> parsed;
  std::optional<Answer> ground_truth;
};

struct MetricOptions {
  Estimator estimator = Estimator::kDiscrete;
  /// Prepend the question (trace metadata "question") to texts sent to the oracle.
  bool question_prefix = true;
};

/// Ground truth recorded in trace metadata ("ground_truth": "Yes" | "No"), if any.
std::optional<Answer> trace_ground_truth(const InferenceTrace& trace);

TraceMetrics compute_trace_metrics(const InferenceTrace& trace, EntailmentOracle& oracle,
                                   const MetricOptions& options);

/// Mean and linearly interpolated quartiles.
struct Distribution {
  std::size_t n = 0;
  double mean = 0.0, min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Order-independent: values are sorted before summation.
Distribution summarize(std::vector<double> values);
nlohmann::json to_json(const Distribution& d);

nlohmann::json to_json(const RelevanceScores& r);
nlohmann::json to_json(const AttentionDifferences& d);
nlohmann::json to_json(const RiskCoverageCurve& c);

/// Mean R_I, R_Q, R_C over a batch, summed in sorted order.
struct MeanRelevance {
  std::size_t n = 0;
  double image = 0.0, question = 0.0, context = 0.0;
};
MeanRelevance mean_relevance(std::span<const RelevanceScores> batch);
nlohmann::json to_json(const MeanRelevance& m);

/// Risk outcomes for answer traces: failure = greedy verdict differs from the truth,
/// uncertainty = semantic entropy. Skips records lacking either.
std::vector<ScoredOutcome> risk_outcomes(std::span<const TraceMetrics> metrics);

/// Groups metrics by (config, task), in canonical configuration order.
struct MetricGroup {
  ConfigId config_id;
  Task task;
  std::vector<const TraceMetrics*> members;
};
std::vector<MetricGroup> group_metrics(std::span<const TraceMetrics> metrics);

/// Per-group aggregates shared by `bench run` reports and `bench metrics`.
nlohmann::json attention_summary(const MetricGroup& group);
nlohmann::json uncertainty_summary(const MetricGroup& group);
/// Answer groups only; null when no outcome has both a verdict and an entropy.
nlohmann::json risk_summary(const MetricGroup& group);
/// Answer groups only.
nlohmann::json score_summary(const MetricGroup& group);

}  // namespace intervene
