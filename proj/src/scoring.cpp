#include "intervene/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "intervene/errors.hpp"

namespace intervene {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kYes: return "yes";
    case Verdict::kNo: return "no";
    case Verdict::kUnparseable: return "unparseable";
  }
  return "?";
}

namespace {

// Non-ASCII bytes count as word characters so that "yes" glued to other script is
// not a standalone match.
bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::optional<ParsedAnswer> scan(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(text[j])) ++j;
    std::string_view word = text.substr(i, j - i);
    if (iequals(word, "yes")) return ParsedAnswer{Verdict::kYes, std::string(word), {}};
    if (iequals(word, "no")) return ParsedAnswer{Verdict::kNo, std::string(word), {}};
    i = j;
  }
  return std::nullopt;
}

}  // namespace

ParsedAnswer parse_answer(std::string_view text) {
  std::size_t end = text.find_first_of(".!?\n");
  std::string_view first = end == std::string_view::npos ? text : text.substr(0, end);
  auto found = scan(first);
  if (!found) found = scan(text);
  ParsedAnswer out = found.value_or(ParsedAnswer{});
  out.source = std::string(text);
  return out;
}

bool is_correct(const ParsedAnswer& parsed, Answer truth) {
  return (parsed.verdict == Verdict::kYes && truth == Answer::kYes) ||
         (parsed.verdict == Verdict::kNo && truth == Answer::kNo);
}

double ConfusionMatrix::accuracy() const {
  std::size_t n = total();
  return n == 0 ? 0.0 : double(tp + tn) / double(n);
}

std::optional<double> ConfusionMatrix::tpr() const {
  if (tp + fn == 0) return std::nullopt;
  return double(tp) / double(tp + fn);
}

std::optional<double> ConfusionMatrix::tnr() const {
  if (tn + fp == 0) return std::nullopt;
  return double(tn) / double(tn + fp);
}

ConfusionMatrix score_answers(std::span<const ParsedAnswer> parsed, std::span<const Answer> truths) {
  if (parsed.size() != truths.size()) {
    throw LengthMismatch("got " + std::to_string(parsed.size()) + " answers for " +
                         std::to_string(truths.size()) + " ground truths");
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    bool truth_yes = truths[i] == Answer::kYes;
    switch (parsed[i].verdict) {
      case Verdict::kYes: truth_yes ? ++m.tp : ++m.fp; break;
      case Verdict::kNo: truth_yes ? ++m.fn : ++m.tn; break;
      case Verdict::kUnparseable: ++m.n_unparseable; break;
    }
  }
  return m;
}

nlohmann::json to_json(const ConfusionMatrix& m) {
  auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"tp", m.tp},
          {"tn", m.tn},
          {"fp", m.fp},
          {"fn", m.fn},
          {"n_unparseable", m.n_unparseable},
          {"n", m.total()},
          {"accuracy", m.accuracy()},
          {"tpr", opt(m.tpr())},
          {"tnr", opt(m.tnr())}};
}

std::string ScriptedJudge::complete(const JudgeRequest& request) {
  requests_.push_back(request);
  if (replies_.empty()) throw JudgeUnavailable("scripted judge has no replies");
  return replies_[std::min(calls_++, replies_.size() - 1)];
}

std::optional<int> extract_judge_score(std::string_view reply) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    bool negative = i > 0 && reply[i - 1] == '-';
    std::size_t j = i;
    while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
    std::string_view digits = reply.substr(i, j - i);
    if (negative || digits.size() > 2) return std::nullopt;
    int value = std::stoi(std::string(digits));
    if (value > 10) return std::nullopt;
    return value;
  }
  return std::nullopt;
}

std::string judge_prompt_for(const JudgeItem& item) {
  return std::string(kJudgePrompt) + "\n\nQuestion: " + item.question + "\nAnswer: " + item.answer +
         "\nExplanation: " + item.reasoning;
}

JudgeScore judge_reasoning(const JudgeItem& item, JudgeClient& client) {
  if (item.reasoning.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error("cannot judge empty reasoning");
  }
  JudgeRequest request{judge_prompt_for(item), item.image_png, item.idempotency_key, 1};
  std::string last;
  for (int attempt = 1; attempt <= kJudgeAttempts; ++attempt) {
    request.attempt = attempt;
    last = client.complete(request);
    if (auto score = extract_judge_score(last)) {
      return JudgeScore{*score, last, client.model_name(), attempt};
    }
  }
  throw MalformedJudgeReply("no score in [0, 10] after " + std::to_string(kJudgeAttempts) +
                            " attempts; last reply: " + last);
}

std::size_t ScoreHistogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::optional<int> ScoreHistogram::mode() const {
  if (total() == 0) return std::nullopt;
  return int(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::optional<double> ScoreHistogram::mean() const {
  std::size_t n = total();
  if (n == 0) return std::nullopt;
  double sum = 0.0;
  for (std::size_t s = 0; s < counts.size(); ++s) sum += double(s * counts[s]);
  return sum / double(n);
}

ScoreHistogram score_histogram(std::span<const int> scores) {
  ScoreHistogram h;
  for (int s : scores) {
    if (s < 0 || s > 10) throw Error("judge score out of range: " + std::to_string(s));
    ++h.counts[std::size_t(s)];
  }
  return h;
}

nlohmann::json to_json(const ScoreHistogram& h) {
  auto mode = h.mode();
  auto mean = h.mean();
  return {{"counts", h.counts},
          {"n", h.total()},
          {"mode", mode ? nlohmann::json(*mode) : nlohmann::json(nullptr)},
          {"mean", mean ? nlohmann::json(*mean) : nlohmann::json(nullptr)}};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson inputs differ in length");
  if (x.size() < 2) throw LengthMismatch("pearson needs at least two points");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateVariance("pearson input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace intervene
