#include "intervene/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "intervene/errors.hpp"

namespace intervene {

using nlohmann::json;

namespace {

double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum;
}

double quantile(const std::vector<double>& sorted, double p) {
  double pos = p * double(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - double(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::optional<Answer> trace_ground_truth(const InferenceTrace& trace) {
  auto it = trace.metadata.find("ground_truth");
  if (it == trace.metadata.end() || !it->is_string()) return std::nullopt;
  if (*it == "Yes") return Answer::kYes;
  if (*it == "No") return Answer::kNo;
  return std::nullopt;
}

TraceMetrics compute_trace_metrics(const InferenceTrace& trace, EntailmentOracle& oracle,
                                   const MetricOptions& options) {
  TraceMetrics m;
  m.sample_id = trace.sample_id;
  m.config_id = trace.config_id;
  m.task = trace.task();
  m.model_id = trace.model_id;
  m.greedy_text = trace.greedy.text();
  try {
    m.relevance = relevance(trace.greedy);
  } catch (const Error& e) {
    m.relevance_error = e.what();
  }
  std::optional<std::string> question;
  if (options.question_prefix) {
    if (auto it = trace.metadata.find("question"); it != trace.metadata.end() && it->is_string()) {
      question = it->get<std::string>();
    }
  }
  try {
    m.uncertainty = uncertainty_for_trace(trace, oracle, options.estimator, question);
  } catch (const OracleFailure&) {
    throw;
  } catch (const Error& e) {
    m.uncertainty_error = e.what();
  }
  if (m.task == Task::kAnswer) {
    m.parsed = parse_answer(m.greedy_text);
    m.ground_truth = trace_ground_truth(trace);
  }
  return m;
}

Distribution summarize(std::vector<double> values) {
  Distribution d;
  d.n = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  d.mean = sorted_sum(values) / double(values.size());
  d.min = values.front();
  d.max = values.back();
  d.q1 = quantile(values, 0.25);
  d.median = quantile(values, 0.5);
  d.q3 = quantile(values, 0.75);
  return d;
}

json to_json(const Distribution& d) {
  if (d.n == 0) return {{"n", 0}};
  return {{"n", d.n}, {"mean", d.mean}, {"min", d.min}, {"q1", d.q1},
          {"median", d.median}, {"q3", d.q3}, {"max", d.max}};
}

json to_json(const RelevanceScores& r) {
  return {{"R_I", r.image},
          {"R_Q", r.question},
          {"R_C", r.context},
          {"has_context", r.has_context},
          {"raw_mass",
           {{"image", r.raw_mass.image},
            {"question", r.raw_mass.question},
            {"context", r.raw_mass.context},
            {"other", r.raw_mass.other}}}};
}

json to_json(const AttentionDifferences& d) {
  return {{"mean_image_minus_question", d.mean_image_minus_question},
          {"mean_image_minus_context", opt_number(d.mean_image_minus_context)},
          {"image_minus_question", d.image_minus_question},
          {"image_minus_context", d.image_minus_context}};
}

json to_json(const RiskCoverageCurve& c) {
  json points = json::array();
  for (const auto& p : c.points) points.push_back({{"coverage", p.coverage}, {"joint_risk", p.joint_risk}});
  return {{"augrc", c.augrc}, {"points", std::move(points)}};
}

MeanRelevance mean_relevance(std::span<const RelevanceScores> batch) {
  MeanRelevance m;
  m.n = batch.size();
  if (batch.empty()) return m;
  std::vector<double> image, question, context;
  for (const auto& r : batch) {
    image.push_back(r.image);
    question.push_back(r.question);
    context.push_back(r.context);
  }
  double n = double(batch.size());
  m.image = sorted_sum(image) / n;
  m.question = sorted_sum(question) / n;
  m.context = sorted_sum(context) / n;
  return m;
}

json to_json(const MeanRelevance& m) {
  if (m.n == 0) return {{"n", 0}};
  return {{"n", m.n}, {"R_I", m.image}, {"R_Q", m.question}, {"R_C", m.context}};
}

std::vector<ScoredOutcome> risk_outcomes(std::span<const TraceMetrics> metrics) {
  std::vector<ScoredOutcome> out;
  for (const TraceMetrics& m : metrics) {
    if (m.task != Task::kAnswer || !m.parsed || !m.ground_truth || !m.uncertainty) continue;
    out.push_back({m.sample_id, !is_correct(*m.parsed, *m.ground_truth), m.uncertainty->entropy});
  }
  return out;
}

std::vector<MetricGroup> group_metrics(std::span<const TraceMetrics> metrics) {
  std::vector<MetricGroup> groups;
  for (ConfigId config : kAllConfigIds) {
    for (Task task : {Task::kAnswer, Task::kReasoning}) {
      MetricGroup g{config, task, {}};
      for (const TraceMetrics& m : metrics) {
        if (m.config_id == config && m.task == task) g.members.push_back(&m);
      }
      if (!g.members.empty()) {
        std::sort(g.members.begin(), g.members.end(),
                  [](const TraceMetrics* a, const TraceMetrics* b) { return a->sample_id < b->sample_id; });
        groups.push_back(std::move(g));
      }
    }
  }
  return groups;
}

json attention_summary(const MetricGroup& group) {
  std::vector<RelevanceScores> scores;
  std::size_t errors = 0;
  for (const TraceMetrics* m : group.members) {
    if (m->relevance) {
      scores.push_back(*m->relevance);
    } else {
      ++errors;
    }
  }
  json out = {{"mean", to_json(mean_relevance(scores))}, {"n_errors", errors}};
  if (!scores.empty()) {
    auto diffs = attention_differences(scores);
    // Means are re-derived in sorted order so that they do not depend on sample order.
    diffs.mean_image_minus_question = sorted_sum(diffs.image_minus_question) / double(diffs.image_minus_question.size());
    if (!diffs.image_minus_context.empty()) {
      diffs.mean_image_minus_context = sorted_sum(diffs.image_minus_context) / double(diffs.image_minus_context.size());
    }
    out["differences"] = to_json(diffs);
  } else {
    out["differences"] = nullptr;
  }
  return out;
}

json uncertainty_summary(const MetricGroup& group) {
  std::vector<double> entropies;
  std::vector<double> clusters;
  std::size_t errors = 0;
  for (const TraceMetrics* m : group.members) {
    if (m->uncertainty) {
      entropies.push_back(m->uncertainty->entropy);
      clusters.push_back(double(m->uncertainty->n_clusters));
    } else {
      ++errors;
    }
  }
  return {{"entropy", to_json(summarize(entropies))},
          {"n_clusters", to_json(summarize(clusters))},
          {"n_errors", errors}};
}

json risk_summary(const MetricGroup& group) {
  if (group.task != Task::kAnswer) return nullptr;
  std::vector<ScoredOutcome> outcomes;
  for (const TraceMetrics* m : group.members) {
    auto one = risk_outcomes(std::span<const TraceMetrics>(m, 1));
    outcomes.insert(outcomes.end(), one.begin(), one.end());
  }
  if (outcomes.empty()) return nullptr;
  json out = to_json(grc_curve(outcomes));
  out["n"] = outcomes.size();
  return out;
}

json score_summary(const MetricGroup& group) {
  if (group.task != Task::kAnswer) return nullptr;
  std::vector<ParsedAnswer> parsed;
  std::vector<Answer> truths;
  std::size_t missing = 0;
  for (const TraceMetrics* m : group.members) {
    if (!m->parsed || !m->ground_truth) {
      ++missing;
      continue;
    }
    parsed.push_back(*m->parsed);
    truths.push_back(*m->ground_truth);
  }
  json out = to_json(score_answers(parsed, truths));
  out["n_missing_ground_truth"] = missing;
  return out;
}

}  // namespace intervene
