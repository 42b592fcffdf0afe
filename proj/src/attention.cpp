#include "intervene/attention.hpp"

#include "intervene/errors.hpp"

namespace intervene {

std::vector<double> average_attention_vector(const GenerationRecord& record) {
  const std::size_t prefix = record.span_map.prefix_length();
  const auto& rows = record.attention_rows;
  if (rows.empty()) throw EmptyInput("record has no output tokens");

  // Every prefix position exists in every row, so the per-position mean runs over all
  // rows. Positions past the prefix (earlier output tokens) are dropped.
  std::vector<double> average(prefix, 0.0);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    double total = 0.0;
    for (double a : rows[t]) total += a;
    if (!(total > 0.0)) throw DegenerateRow(t);
    for (std::size_t i = 0; i < prefix; ++i) average[i] += rows[t][i] / total;
  }
  const double count = static_cast<double>(rows.size());
  for (double& v : average) v /= count;
  return average;
}

RelevanceScores relevance_from_average(std::span<const double> average, const SpanMap& spans) {
  RelevanceScores out;
  out.has_context = spans.context.has_value();
  for (std::size_t i = 0; i < average.size(); ++i) {
    if (spans.image.contains(i)) {
      out.raw_mass.image += average[i];
    } else if (spans.question.contains(i)) {
      out.raw_mass.question += average[i];
    } else if (spans.context && spans.context->contains(i)) {
      out.raw_mass.context += average[i];
    } else {
      out.raw_mass.other += average[i];
    }
  }
  const double total = out.raw_mass.image + out.raw_mass.question + out.raw_mass.context;
  if (!(total > 0.0)) throw EmptySpans("image, question and context spans carry no attention mass");
  out.image = out.raw_mass.image / total;
  out.question = out.raw_mass.question / total;
  out.context = out.raw_mass.context / total;
  return out;
}

RelevanceScores relevance(const GenerationRecord& record) {
  return relevance_from_average(average_attention_vector(record), record.span_map);
}

AttentionDifferences attention_differences(std::span<const RelevanceScores> batch) {
  if (batch.empty()) throw EmptyBatch("attention differences need at least one record");
  AttentionDifferences out;
  double sum_q = 0.0;
  double sum_c = 0.0;
  for (const RelevanceScores& r : batch) {
    out.image_minus_question.push_back(r.image - r.question);
    sum_q += r.image - r.question;
    if (r.has_context) {
      out.image_minus_context.push_back(r.image - r.context);
      sum_c += r.image - r.context;
    }
  }
  out.mean_image_minus_question = sum_q / static_cast<double>(batch.size());
  if (!out.image_minus_context.empty()) {
    out.mean_image_minus_context = sum_c / static_cast<double>(out.image_minus_context.size());
  }
  return out;
}

}  // namespace intervene
