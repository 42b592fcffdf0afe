#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/trace.hpp"

namespace testgen {

/// A valid answer trace with a context span and one sample.
inline intervene::InferenceTrace small_trace() {
  using namespace intervene;
  InferenceTrace t;
  t.sample_id = "kettle";
  t.config_id = ConfigId::kQI;
  t.model_id = "mock-vlm";
  t.greedy.output_tokens = {"Yes", "."};
  t.greedy.token_logprobs = {-0.1, -0.01};
  t.greedy.span_map.image = {1, 3};
  t.greedy.span_map.question = {3, 5};
  t.greedy.span_map.n0 = 6;
  t.greedy.attention_rows = {{1, 2, 3, 4, 5, 6}, {1, 1, 1, 1, 1, 1, 1}};
  return t;
}

struct TraceMutation {
  bool reasoning;  // applies to the reasoning base instead of the answer base
  std::function<void(nlohmann::json&)> mutate;
  std::string field;  // field the rejection must name
};

/// Valid answer and reasoning documents, each one edit away from every mutation below.
inline std::pair<nlohmann::json, nlohmann::json> mutation_bases() {
  using namespace intervene;
  InferenceTrace answer = small_trace();
  answer.greedy.span_map.context = TokenSpan{5, 6};
  GenerationRecord s = answer.greedy;
  s.sampling = {0.9, 0};
  answer.samples.push_back(s);

  InferenceTrace reasoning = answer;
  for (GenerationRecord* r : {&reasoning.greedy, &reasoning.samples[0]}) {
    r->task = Task::kReasoning;
    r->span_map.answer = TokenSpan{6, 7};
    r->span_map.n1 = 2;
    r->attention_rows = {std::vector<double>(9, 1.0), std::vector<double>(10, 1.0)};
  }
  return {to_json(answer), to_json(reasoning)};
}

/// One violation per invariant of the trace format.
inline std::vector<TraceMutation> trace_mutations() {
  using nlohmann::json;
  const bool a = false, r = true;
  return {
      {a, [](json& j) { j["trace_version"] = 2; }, "trace_version"},
      {a, [](json& j) { j.erase("trace_version"); }, "trace_version"},
      {a, [](json& j) { j["sample_id"] = ""; }, "sample_id"},
      {a, [](json& j) { j["sample_id"] = 5; }, "sample_id"},
      {a, [](json& j) { j["model_id"] = ""; }, "model_id"},
      {a, [](json& j) { j["config_id"] = "Q+Z"; }, "config_id"},
      {a, [](json& j) { j["metadata"] = json::array(); }, "metadata"},
      {a, [](json& j) { j["samples"] = json::object(); }, "samples"},
      {a, [](json& j) { j.erase("greedy"); }, "greedy"},
      {a, [](json& j) { j["greedy"]["task"] = "caption"; }, "greedy.task"},
      {a, [](json& j) { j["greedy"]["output_tokens"][0] = 1; }, "greedy.output_tokens"},
      {a, [](json& j) { j["greedy"]["token_logprobs"].erase(0); }, "greedy.token_logprobs"},
      {a, [](json& j) { j["greedy"]["token_logprobs"][0] = 0.5; }, "greedy.token_logprobs"},
      {a, [](json& j) { j["greedy"]["token_logprobs"][0] = nullptr; }, "greedy.token_logprobs"},
      {a, [](json& j) { j["greedy"]["attention_rows"].erase(0); }, "greedy.attention_rows"},
      {a, [](json& j) { j["greedy"]["attention_rows"][0].push_back(1.0); }, "greedy.attention_rows"},
      {a, [](json& j) { j["greedy"]["attention_rows"][1][2] = -1.0; }, "greedy.attention_rows"},
      {a, [](json& j) { j["greedy"]["attention_rows"][1][2] = "x"; }, "greedy.attention_rows"},
      {a, [](json& j) { j["greedy"]["span_map"]["image_span"] = {3, 1}; }, "greedy.span_map.image_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["image_span"] = {1, 9}; }, "greedy.span_map.image_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["question_span"] = {2, 5}; }, "greedy.span_map.question_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["context_span"] = {4, 6}; }, "greedy.span_map.context_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["context_span"] = {5}; }, "greedy.span_map.context_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["description_span"] = {0, 2}; },
       "greedy.span_map.description_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["n0"] = -1; }, "greedy.span_map.n0"},
      {a, [](json& j) { j["greedy"]["span_map"]["answer_span"] = {6, 7}; }, "greedy.span_map.answer_span"},
      {a, [](json& j) { j["greedy"]["span_map"]["n1"] = 1; }, "greedy.span_map.n1"},
      {a, [](json& j) { j["greedy"]["sampling"]["temperature"] = -0.5; }, "greedy.sampling.temperature"},
      {a, [](json& j) { j["greedy"]["sampling"]["index"] = -1; }, "greedy.sampling.index"},
      {a, [](json& j) { j["greedy"]["sampling"]["index"] = 0.5; }, "greedy.sampling.index"},
      {a, [](json& j) { j["samples"][0]["task"] = "reasoning"; }, "samples[0].task"},
      {a, [](json& j) { j["samples"][0]["token_logprobs"][1] = 1.0; }, "samples[0].token_logprobs"},
      {r, [](json& j) { j["greedy"]["span_map"].erase("answer_span"); }, "greedy.span_map.answer_span"},
      {r, [](json& j) { j["greedy"]["span_map"].erase("n1"); }, "greedy.span_map.n1"},
      {r, [](json& j) { j["greedy"]["span_map"]["answer_span"] = {5, 7}; }, "greedy.span_map.answer_span"},
      {r, [](json& j) { j["greedy"]["span_map"]["n1"] = 3; }, "greedy.span_map.n1"},
      {r, [](json& j) { j["samples"][0]["attention_rows"][0].erase(0); }, "samples[0].attention_rows"},
    };
}

}  // namespace testgen
