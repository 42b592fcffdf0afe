#include <doctest.h>

#include <functional>
#include <random>
#include <sstream>

#include "intervene/errors.hpp"
#include "intervene/trace.hpp"
#include "support/generators.hpp"
#include "support/trace_mutations.hpp"

using namespace intervene;
using nlohmann::json;
using testgen::small_trace;

namespace {

void expect_schema_error(const json& j, const std::string& field) {
  try {
    trace_from_json(j);
    FAIL("expected SchemaError for " << field);
  } catch (const SchemaError& e) {
    CHECK_MESSAGE(e.field() == field, "got field " << e.field());
  }
}

}  // namespace

TEST_CASE("empty stream") {
  std::istringstream in("");
  CHECK(read_traces(in).empty());
}

TEST_CASE("one line, one trace") {
  std::istringstream in(serialize_trace(small_trace()));
  auto traces = read_traces(in);
  REQUIRE(traces.size() == 1);
  CHECK(traces[0] == small_trace());
}

TEST_CASE("optional spans are omitted when absent") {
  json j = to_json(small_trace());
  CHECK_FALSE(j["greedy"]["span_map"].contains("context_span"));
  CHECK_FALSE(j["greedy"]["span_map"].contains("n1"));
  CHECK(trace_from_json(j) == small_trace());
}

TEST_CASE("ten samples serialize as ten") {
  InferenceTrace t = small_trace();
  for (int i = 0; i < 10; ++i) {
    GenerationRecord s = t.greedy;
    s.sampling = {0.9, i};
    t.samples.push_back(s);
  }
  CHECK(to_json(t)["samples"].size() == 10);
}

TEST_CASE("randomized traces round trip bit for bit") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    InferenceTrace t = testgen::random_trace(rng, i % 2 == 0);
    std::string line = serialize_trace(t);
    InferenceTrace back = trace_from_json(json::parse(line));
    CHECK(back == t);
    CHECK(serialize_trace(back) == line);
  }
}

TEST_CASE("reader reports line numbers and offsets") {
  std::string first = serialize_trace(small_trace());
  std::istringstream in(first + "\n" + first + "{\"trace_version\": 1}\n");
  TraceReader reader(in);
  REQUIRE(reader.next().has_value());
  CHECK(reader.offset() == 0);
  REQUIRE(reader.next().has_value());
  CHECK(reader.line() == 3);
  CHECK(reader.offset() == first.size() + 1);
  try {
    reader.next();
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 4);
  }
  std::istringstream broken("{not json\n");
  TraceReader r2(broken);
  CHECK_THROWS_AS(r2.next(), ParseError);
}

TEST_CASE("attention row count mismatch names attention_rows") {
  json j = to_json(small_trace());
  j["greedy"]["attention_rows"].erase(1);
  expect_schema_error(j, "greedy.attention_rows");
}

TEST_CASE("every single-field violation is rejected") {
  auto [a, r] = testgen::mutation_bases();
  REQUIRE_NOTHROW(trace_from_json(a));
  REQUIRE_NOTHROW(trace_from_json(r));
  for (const auto& m : testgen::trace_mutations()) {
    json j = m.reasoning ? r : a;
    m.mutate(j);
    expect_schema_error(j, m.field);
  }
}

TEST_CASE("sample task must match the greedy task") {
  InferenceTrace t = small_trace();
  GenerationRecord s = t.greedy;
  s.task = Task::kReasoning;
  s.span_map.answer = TokenSpan{6, 6};
  s.span_map.n1 = 0;
  t.samples.push_back(s);
  try {
    validate(t);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.field() == "samples[0].task");
  }
  CHECK_THROWS_AS(serialize_trace(t), SchemaError);
}

TEST_CASE("non-finite values are rejected before serialization") {
  InferenceTrace t = small_trace();
  t.greedy.attention_rows[0][0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate(t), SchemaError);
  t = small_trace();
  t.greedy.token_logprobs[0] = std::nan("");
  CHECK_THROWS_AS(validate(t), SchemaError);
}
