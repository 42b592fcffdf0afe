#pragma once

#include <span>
#include <vector>

#include "intervene/trace.hpp"

namespace intervene {

/// Averaged attention mass per modality, before relative normalization.
struct AttentionMass {
  double image = 0.0;
  double question = 0.0;
  double context = 0.0;
  /// Everything outside the three spans: system prompt, description, answer tokens.
  double other = 0.0;
};

struct RelevanceScores {
  double image = 0.0;     // R_I
  double question = 0.0;  // R_Q
  double context = 0.0;   // R_C, 0 without a context span
  bool has_context = false;
  AttentionMass raw_mass;
};

/// Normalizes each attention row to sum to one and averages them position-wise over
/// the prompt prefix. The result has length span_map.prefix_length().
/// Throws DegenerateRow for a zero-sum row and EmptyInput when there are no rows.
std::vector<double> average_attention_vector(const GenerationRecord& record);

/// Relative relevance of image, question and context. Throws EmptySpans when the three
/// spans carry no mass.
RelevanceScores relevance(const GenerationRecord& record);
RelevanceScores relevance_from_average(std::span<const double> average, const SpanMap& spans);

struct AttentionDifferences {
  double mean_image_minus_question = 0.0;
  /// Mean over the records that have a context span; nullopt when none do.
  std::optional<double> mean_image_minus_context;
  std::vector<double> image_minus_question;
  /// One entry per context-bearing record, in batch order.
  std::vector<double> image_minus_context;
};

/// Throws EmptyBatch for an empty batch.
AttentionDifferences attention_differences(std::span<const RelevanceScores> batch);

}  // namespace intervene
