#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/dataset.hpp"

namespace intervene {

inline constexpr int kTraceVersion = 1;

/// Half-open token index range [start, end).
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool empty() const { return start == end; }
  bool contains(std::size_t i) const { return i >= start && i < end; }
  bool overlaps(const TokenSpan& o) const { return start < o.end && o.start < end; }
  bool operator==(const TokenSpan&) const = default;
};

struct SpanMap {
  TokenSpan image;
  TokenSpan question;
  std::optional<TokenSpan> context;
  std::optional<TokenSpan> description;
  /// Reasoning traces only: the greedy answer tokens, starting at n0.
  std::optional<TokenSpan> answer;
  /// Prompt length including image, question and context tokens.
  std::size_t n0 = 0;
  /// Reasoning traces only: length of the explanation prompt.
  std::optional<std::size_t> n1;

  /// n0 for answers, n0 + answer length + n1 for reasoning.
  std::size_t prefix_length() const;
  bool operator==(const SpanMap&) const = default;
};

enum class Task { kAnswer, kReasoning };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct Sampling {
  double temperature = 0.0;
  std::int64_t index = 0;
  bool operator==(const Sampling&) const = default;
};

struct GenerationRecord {
  Task task = Task::kAnswer;
  std::vector<std::string> output_tokens;
  std::vector<double> token_logprobs;
  /// attention_rows[t] covers every position before output token t, so its length is
  /// prefix_length + t. Averaged over layers and heads by the producer; unnormalized.
  std::vector<std::vector<double>> attention_rows;
  SpanMap span_map;
  Sampling sampling;

  /// Concatenated output tokens.
  std::string text() const;
  /// Sum of token log-likelihoods.
  double sequence_logprob() const;
  bool operator==(const GenerationRecord&) const = default;
};

struct InferenceTrace {
  std::string sample_id;
  ConfigId config_id = ConfigId::kQ;
  std::string model_id;
  GenerationRecord greedy;
  std::vector<GenerationRecord> samples;
  /// Free-form producer metadata: adapter version, quantization, prompts, seeds.
  nlohmann::json metadata = nlohmann::json::object();

  Task task() const { return greedy.task; }
  bool operator==(const InferenceTrace&) const = default;
};

/// Throws SchemaError naming the first field that breaks an invariant.
void validate(const GenerationRecord& record, const std::string& field_prefix = "greedy");
void validate(const InferenceTrace& trace);

nlohmann::json to_json(const GenerationRecord& record);
nlohmann::json to_json(const InferenceTrace& trace);
/// Schema-checks and validates; throws SchemaError.
InferenceTrace trace_from_json(const nlohmann::json& j);

/// One trace per line, canonical serialization, trailing newline.
void write_trace(const InferenceTrace& trace, std::ostream& sink);
std::string serialize_trace(const InferenceTrace& trace);

/// Lazy JSON-Lines reader. Holds at most one trace at a time.
class TraceReader {
 public:
  explicit TraceReader(std::istream& source) : source_(source) {}

  /// Next trace, or nullopt at end of stream. Blank lines are skipped.
  /// Throws ParseError / SchemaError carrying the 1-based line number.
  std::optional<InferenceTrace> next();

  std::size_t line() const { return line_; }
  /// Byte offset of the line the last returned trace came from.
  std::uint64_t offset() const { return last_offset_; }

 private:
  std::istream& source_;
  std::size_t line_ = 0;
  std::uint64_t position_ = 0;
  std::uint64_t last_offset_ = 0;
};

std::vector<InferenceTrace> read_traces(std::istream& source);
std::vector<InferenceTrace> read_trace_file(const std::string& path);

}  // namespace intervene
