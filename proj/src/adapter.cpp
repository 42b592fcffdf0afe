#include "intervene/adapter.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <random>

#include "intervene/errors.hpp"

namespace intervene {

using nlohmann::json;

std::uint64_t stable_hash(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string judge_idempotency_key(const std::string& sample_id, ConfigId config) {
  return sample_id + "|" + std::string(to_string(config));
}

json to_json(const GenerationRequest& r) {
  json j = {{"input", to_json(r.input)},
            {"task", to_string(r.task)},
            {"n_samples", r.n_samples},
            {"temperature", r.temperature},
            {"need_attention", r.need_attention},
            {"need_logprobs", r.need_logprobs},
            {"seed", r.seed}};
  if (r.greedy_answer) j["greedy_answer"] = *r.greedy_answer;
  return j;
}

GenerationRequest generation_request_from_json(const json& j) {
  try {
    GenerationRequest r;
    r.input = assembled_input_from_json(j.at("input"));
    r.task = parse_task(j.at("task").get<std::string>());
    r.n_samples = j.value("n_samples", std::size_t{10});
    r.temperature = j.value("temperature", 0.9);
    r.need_attention = j.value("need_attention", true);
    r.need_logprobs = j.value("need_logprobs", true);
    r.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("greedy_answer")) r.greedy_answer = j["greedy_answer"].get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed generation request: ") + e.what());
  }
}

const ScenarioEntry* Scenario::find(const std::string& sample_id, ConfigId config) const {
  auto it = entries.find({sample_id, std::string(to_string(config))});
  return it == entries.end() ? nullptr : &it->second;
}

namespace {

AttentionProfile profile_from_json(const json& j) {
  AttentionProfile p;
  p.image = j.value("image", p.image);
  p.question = j.value("question", p.question);
  p.context = j.value("context", p.context);
  p.other = j.value("other", p.other);
  if (p.image < 0 || p.question < 0 || p.context < 0 || p.other < 0) {
    throw ParseError("scenario attention weights must be nonnegative");
  }
  return p;
}

json profile_to_json(const AttentionProfile& p) {
  return {{"image", p.image}, {"question", p.question}, {"context", p.context}, {"other", p.other}};
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (auto it = j.find(key); it != j.end()) {
    for (const json& s : *it) {
      std::string text = s.get<std::string>();
      if (text.empty()) throw ParseError(std::string("scenario '") + key + "' entries must be nonempty");
      out.push_back(std::move(text));
    }
  }
  return out;
}

std::optional<std::string> opt_text(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  std::string text = it->get<std::string>();
  if (text.empty()) throw ParseError(std::string("scenario '") + key + "' must be nonempty");
  return text;
}

class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return double(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

struct PromptLayout {
  SpanMap spans;
  std::size_t prompt_end = 0;  // n0 or the reasoning prefix length
};

std::size_t word_count(std::string_view text) { return std::max<std::size_t>(1, mock_tokenize(text).size()); }

}  // namespace

Scenario scenario_from_json(const json& j) {
  try {
    if (j.value("scenario_version", 0) != 1) throw ParseError("scenario_version must be 1");
    Scenario s;
    s.model_id = j.value("model_id", s.model_id);
    s.image_tokens = j.value("image_tokens", s.image_tokens);
    s.system_tokens = j.value("system_tokens", s.system_tokens);
    if (auto it = j.find("defaults"); it != j.end()) {
      s.default_answer = opt_text(*it, "answer").value_or(s.default_answer);
      s.default_reasoning = opt_text(*it, "reasoning").value_or(s.default_reasoning);
      s.default_judge_score = it->value("judge_score", s.default_judge_score);
      if (it->contains("attention")) s.default_attention = profile_from_json((*it)["attention"]);
    }
    for (const json& e : j.value("entries", json::array())) {
      std::string sample_id = e.at("sample_id").get<std::string>();
      ConfigId config = parse_config_id(e.at("config_id").get<std::string>());
      ScenarioEntry entry;
      entry.answer = opt_text(e, "answer");
      entry.answer_samples = string_list(e, "answer_samples");
      entry.reasoning = opt_text(e, "reasoning");
      entry.reasoning_samples = string_list(e, "reasoning_samples");
      if (e.contains("judge_score")) entry.judge_score = e["judge_score"].get<int>();
      if (e.contains("attention")) entry.attention = profile_from_json(e["attention"]);
      s.entries[{sample_id, std::string(to_string(config))}] = std::move(entry);
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scenario: ") + e.what());
  }
}

json to_json(const Scenario& s) {
  json entries = json::array();
  for (const auto& [key, e] : s.entries) {
    json j = {{"sample_id", key.first}, {"config_id", key.second}};
    if (e.answer) j["answer"] = *e.answer;
    if (!e.answer_samples.empty()) j["answer_samples"] = e.answer_samples;
    if (e.reasoning) j["reasoning"] = *e.reasoning;
    if (!e.reasoning_samples.empty()) j["reasoning_samples"] = e.reasoning_samples;
    if (e.judge_score) j["judge_score"] = *e.judge_score;
    if (e.attention) j["attention"] = profile_to_json(*e.attention);
    entries.push_back(std::move(j));
  }
  return {{"scenario_version", 1},
          {"model_id", s.model_id},
          {"image_tokens", s.image_tokens},
          {"system_tokens", s.system_tokens},
          {"defaults",
           {{"answer", s.default_answer},
            {"reasoning", s.default_reasoning},
            {"judge_score", s.default_judge_score},
            {"attention", profile_to_json(s.default_attention)}}},
          {"entries", std::move(entries)}};
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario " + path.string());
  try {
    return scenario_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("malformed scenario " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> mock_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word && !current.empty() && !std::isspace(static_cast<unsigned char>(current.back()))) {
      tokens.push_back(std::move(current));
      current.clear();
    }
    if (space && in_word) {
      tokens.push_back(std::move(current));
      current.clear();
    }
    current += c;
    in_word = !space;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

InferenceTrace MockAdapter::generate(const GenerationRequest& request) const {
  const AssembledInput& in = request.input;
  const std::string config_name(to_string(in.config_id));
  if (request.task == Task::kReasoning && !request.greedy_answer) {
    throw AdapterError(in.sample_id, config_name, "reasoning request without a greedy answer");
  }
  const ScenarioEntry* entry = scenario_.find(in.sample_id, in.config_id);
  const bool answer_task = request.task == Task::kAnswer;

  std::string greedy_text;
  std::vector<std::string> sample_texts;
  if (answer_task) {
    greedy_text = entry && entry->answer ? *entry->answer : scenario_.default_answer;
    if (entry) sample_texts = entry->answer_samples;
  } else {
    greedy_text = entry && entry->reasoning ? *entry->reasoning : scenario_.default_reasoning;
    if (entry) sample_texts = entry->reasoning_samples;
  }
  if (sample_texts.empty()) sample_texts.push_back(greedy_text);
  const AttentionProfile profile = entry && entry->attention ? *entry->attention : scenario_.default_attention;

  // Prompt layout: system, image, description, context, question, answer prompt.
  SpanMap spans;
  std::size_t pos = scenario_.system_tokens;
  std::size_t image_tokens = in.image_bytes.empty() ? 0 : scenario_.image_tokens;
  spans.image = {pos, pos + image_tokens};
  pos += image_tokens;
  if (in.description_text) {
    spans.description = TokenSpan{pos, pos + word_count(*in.description_text)};
    pos = spans.description->end;
  }
  if (in.context_text) {
    spans.context = TokenSpan{pos, pos + word_count(*in.context_text)};
    pos = spans.context->end;
  }
  spans.question = {pos, pos + word_count(in.question_text)};
  pos = spans.question.end + word_count(in.answer_prompt);
  spans.n0 = pos;
  if (!answer_task) {
    spans.answer = TokenSpan{pos, pos + mock_tokenize(*request.greedy_answer).size()};
    spans.n1 = word_count(in.reasoning_prompt);
  }
  const std::size_t prefix = spans.prefix_length();

  auto region_weight = [&](std::size_t i) {
    if (spans.image.contains(i)) return profile.image;
    if (spans.question.contains(i)) return profile.question;
    if (spans.context && spans.context->contains(i)) return profile.context;
    return profile.other;
  };

  auto make_record = [&](const std::string& text, double temperature, std::int64_t index) {
    std::string key = in.sample_id + "|" + config_name + "|" + std::string(to_string(request.task)) +
                      "|" + std::to_string(temperature > 0.0 ? index + 1 : 0);
    Uniform uniform(stable_hash(key, request.seed ^ 0x9e3779b97f4a7c15ULL));
    GenerationRecord r;
    r.task = request.task;
    r.output_tokens = mock_tokenize(text);
    r.span_map = spans;
    r.sampling = {temperature, index};
    for (std::size_t t = 0; t < r.output_tokens.size(); ++t) {
      r.token_logprobs.push_back(request.need_logprobs ? std::log(0.5 + 0.5 * uniform()) : 0.0);
      std::vector<double> row(prefix + t);
      for (std::size_t i = 0; i < row.size(); ++i) {
        double w = request.need_attention ? region_weight(i) * (0.5 + uniform()) : 1.0;
        // Keep every row strictly positive even under an all-zero profile.
        row[i] = w + 1e-6;
      }
      r.attention_rows.push_back(std::move(row));
    }
    return r;
  };

  InferenceTrace trace;
  trace.sample_id = in.sample_id;
  trace.config_id = in.config_id;
  trace.model_id = scenario_.model_id;
  trace.greedy = make_record(greedy_text, 0.0, 0);
  for (std::size_t i = 0; i < request.n_samples; ++i) {
    trace.samples.push_back(make_record(sample_texts[i % sample_texts.size()], request.temperature,
                                        static_cast<std::int64_t>(i)));
  }
  trace.metadata = {{"adapter", "mock"},
                    {"adapter_version", "mock-1"},
                    {"attention_aggregation", kAttentionAggregation},
                    {"quantization", "none"},
                    {"n_samples", request.n_samples},
                    {"temperature", request.temperature},
                    {"seed", request.seed},
                    {"question", in.question_text},
                    {"answer_prompt", in.answer_prompt},
                    {"reasoning_prompt", in.reasoning_prompt},
                    {"image_variant", to_string(in.image_variant)},
                    {"context_variant", to_string(in.context_variant)}};
  if (in.noise_seed) trace.metadata["noise_seed"] = *in.noise_seed;
  if (in.noise_sigma) trace.metadata["noise_sigma"] = *in.noise_sigma;
  return trace;
}

std::string ScenarioJudge::complete(const JudgeRequest& request) {
  auto bar = request.idempotency_key.rfind('|');
  if (bar == std::string::npos) return std::to_string(scenario_.default_judge_score);
  std::string sample_id = request.idempotency_key.substr(0, bar);
  ConfigId config = parse_config_id(request.idempotency_key.substr(bar + 1));
  const ScenarioEntry* entry = scenario_.find(sample_id, config);
  return std::to_string(entry && entry->judge_score ? *entry->judge_score : scenario_.default_judge_score);
}

}  // namespace intervene
