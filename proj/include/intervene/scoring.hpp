#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/dataset.hpp"

namespace intervene {

enum class Verdict { kYes, kNo, kUnparseable };

std::string_view to_string(Verdict v);

struct ParsedAnswer {
  Verdict verdict = Verdict::kUnparseable;
  std::string matched_text;
  std::string source;
};

/// Looks for a standalone "yes" or "no" (any case) in the first sentence, then in the
/// whole text. The first match wins. Total and deterministic.
ParsedAnswer parse_answer(std::string_view text);

bool is_correct(const ParsedAnswer& parsed, Answer truth);

/// "Yes" is the positive class. Unparseable answers are counted separately and are
/// wrong: they stay in the accuracy denominator.
struct ConfusionMatrix {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0, n_unparseable = 0;

  std::size_t total() const { return tp + tn + fp + fn + n_unparseable; }
  double accuracy() const;
  std::optional<double> tpr() const;
  std::optional<double> tnr() const;
};

/// Throws LengthMismatch when the two lists differ in length.
ConfusionMatrix score_answers(std::span<const ParsedAnswer> parsed, std::span<const Answer> truths);

nlohmann::json to_json(const ConfusionMatrix& m);

inline constexpr std::string_view kJudgePrompt =
    "Rate the explanation's quality from 0 to 10. Give 10 for detailed, well-argued, and correct "
    "explanations. Give 0 for a poorly reasoned, wrong, or single-word explanation based on the "
    "question and image. Don't rate too harshly, use the full scale and output only the final score";

inline constexpr int kJudgeAttempts = 3;

struct JudgeItem {
  std::string question;
  Bytes image_png;
  std::string answer;
  std::string reasoning;
  /// Stable per-item key so a retried request is recognizable server-side.
  std::string idempotency_key;
};

struct JudgeRequest {
  std::string prompt;  // rubric followed by the item text
  Bytes image_png;
  std::string idempotency_key;
  int attempt = 1;
};

/// Reasoning-quality judge endpoint. Returns the raw reply text. Throws
/// JudgeUnavailable when the service cannot be reached.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const JudgeRequest& request) = 0;
  virtual std::string model_name() const = 0;
};

/// Returns a fixed list of replies in order, repeating the last one.
class ScriptedJudge : public JudgeClient {
 public:
  explicit ScriptedJudge(std::vector<std::string> replies, std::string model = "scripted-judge")
      : replies_(std::move(replies)), model_(std::move(model)) {}
  std::string complete(const JudgeRequest& request) override;
  std::string model_name() const override { return model_; }
  std::size_t calls() const { return calls_; }
  const std::vector<JudgeRequest>& requests() const { return requests_; }

 private:
  std::vector<std::string> replies_;
  std::string model_;
  std::size_t calls_ = 0;
  std::vector<JudgeRequest> requests_;
};

struct JudgeScore {
  int score = 0;
  std::string raw_response;
  std::string judge_model;
  int attempts = 1;
};

/// First integer in the reply, when it lies in [0, 10].
std::optional<int> extract_judge_score(std::string_view reply);

std::string judge_prompt_for(const JudgeItem& item);

/// Sends the rubric and the item to the judge, retrying on malformed replies for up to
/// kJudgeAttempts calls. Throws Error for empty reasoning, MalformedJudgeReply after the
/// last malformed reply, and lets JudgeUnavailable through.
JudgeScore judge_reasoning(const JudgeItem& item, JudgeClient& client);

struct ScoreHistogram {
  std::array<std::size_t, 11> counts{};
  std::size_t total() const;
  /// Most frequent score (lowest on ties); nullopt when empty.
  std::optional<int> mode() const;
  std::optional<double> mean() const;
};

ScoreHistogram score_histogram(std::span<const int> scores);
nlohmann::json to_json(const ScoreHistogram& h);

/// Pearson correlation. Throws LengthMismatch for unequal or too-short inputs and
/// DegenerateVariance when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace intervene
