#include "intervene/trace.hpp"

#include <cmath>
#include <fstream>

#include "intervene/errors.hpp"

namespace intervene {

using nlohmann::json;

std::size_t SpanMap::prefix_length() const {
  if (!answer) return n0;
  return answer->end + n1.value_or(0);
}

std::string_view to_string(Task task) { return task == Task::kAnswer ? "answer" : "reasoning"; }

Task parse_task(std::string_view text) {
  if (text == "answer") return Task::kAnswer;
  if (text == "reasoning") return Task::kReasoning;
  throw ParseError("unknown task '" + std::string(text) + "'");
}

std::string GenerationRecord::text() const {
  std::string out;
  for (const auto& token : output_tokens) out += token;
  return out;
}

double GenerationRecord::sequence_logprob() const {
  double sum = 0.0;
  for (double lp : token_logprobs) sum += lp;
  return sum;
}

namespace {

void check_prefix_span(const TokenSpan& span, std::size_t n0, const std::string& field) {
  if (span.start > span.end) throw SchemaError(field, "start exceeds end");
  if (span.end > n0) throw SchemaError(field, "extends past n0");
}

}  // namespace

void validate(const GenerationRecord& r, const std::string& prefix) {
  const SpanMap& m = r.span_map;
  std::string sm = prefix + ".span_map.";
  check_prefix_span(m.image, m.n0, sm + "image_span");
  check_prefix_span(m.question, m.n0, sm + "question_span");
  if (m.context) check_prefix_span(*m.context, m.n0, sm + "context_span");
  if (m.description) check_prefix_span(*m.description, m.n0, sm + "description_span");
  std::vector<std::pair<const TokenSpan*, const char*>> spans = {{&m.image, "image_span"},
                                                                 {&m.question, "question_span"}};
  if (m.context) spans.emplace_back(&*m.context, "context_span");
  if (m.description) spans.emplace_back(&*m.description, "description_span");
  for (std::size_t i = 0; i < spans.size(); ++i) {
    for (std::size_t j = i + 1; j < spans.size(); ++j) {
      if (spans[i].first->overlaps(*spans[j].first)) {
        throw SchemaError(sm + spans[j].second, std::string("overlaps ") + spans[i].second);
      }
    }
  }
  if (r.task == Task::kReasoning) {
    if (!m.answer) throw SchemaError(sm + "answer_span", "required for reasoning traces");
    if (!m.n1) throw SchemaError(sm + "n1", "required for reasoning traces");
    if (m.answer->start != m.n0 || m.answer->end < m.answer->start) {
      throw SchemaError(sm + "answer_span", "must start at n0");
    }
  } else {
    if (m.answer) throw SchemaError(sm + "answer_span", "only allowed in reasoning traces");
    if (m.n1) throw SchemaError(sm + "n1", "only allowed in reasoning traces");
  }

  const std::size_t n = r.output_tokens.size();
  if (r.token_logprobs.size() != n) {
    throw SchemaError(prefix + ".token_logprobs", "length differs from output_tokens");
  }
  if (r.attention_rows.size() != n) {
    throw SchemaError(prefix + ".attention_rows", "length differs from output_tokens");
  }
  for (double lp : r.token_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw SchemaError(prefix + ".token_logprobs", "entries must be finite and <= 0");
    }
  }
  const std::size_t base = m.prefix_length();
  for (std::size_t t = 0; t < n; ++t) {
    if (r.attention_rows[t].size() != base + t) {
      throw SchemaError(prefix + ".attention_rows",
                        "row " + std::to_string(t) + " must have length " + std::to_string(base + t));
    }
    for (double a : r.attention_rows[t]) {
      if (!std::isfinite(a) || a < 0.0) {
        throw SchemaError(prefix + ".attention_rows", "entries must be finite and >= 0");
      }
    }
  }
  if (!std::isfinite(r.sampling.temperature) || r.sampling.temperature < 0.0) {
    throw SchemaError(prefix + ".sampling.temperature", "must be finite and >= 0");
  }
  if (r.sampling.index < 0) throw SchemaError(prefix + ".sampling.index", "must be >= 0");
}

void validate(const InferenceTrace& t) {
  if (t.sample_id.empty()) throw SchemaError("sample_id", "must be nonempty");
  if (t.model_id.empty()) throw SchemaError("model_id", "must be nonempty");
  if (!t.metadata.is_object()) throw SchemaError("metadata", "must be an object");
  validate(t.greedy, "greedy");
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    std::string prefix = "samples[" + std::to_string(i) + "]";
    if (t.samples[i].task != t.greedy.task) throw SchemaError(prefix + ".task", "differs from greedy.task");
    validate(t.samples[i], prefix);
  }
}

namespace {

json span_json(const TokenSpan& s) { return json::array({s.start, s.end}); }

json span_map_json(const SpanMap& m) {
  json j = {{"image_span", span_json(m.image)}, {"question_span", span_json(m.question)}, {"n0", m.n0}};
  if (m.context) j["context_span"] = span_json(*m.context);
  if (m.description) j["description_span"] = span_json(*m.description);
  if (m.answer) j["answer_span"] = span_json(*m.answer);
  if (m.n1) j["n1"] = *m.n1;
  return j;
}

// Typed accessors that report the dotted field path on schema mismatches.
const json& member(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

std::string path_of(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

std::string get_string(const json& obj, const std::string& key, const std::string& parent) {
  const json& v = member(obj, key, parent);
  if (!v.is_string()) throw SchemaError(path_of(parent, key), "must be a string");
  return v.get<std::string>();
}

std::size_t get_index(const json& v, const std::string& path) {
  if (!v.is_number_unsigned()) throw SchemaError(path, "must be a nonnegative integer");
  return v.get<std::size_t>();
}

double get_real(const json& v, const std::string& path) {
  if (!v.is_number()) throw SchemaError(path, "must be a number");
  return v.get<double>();
}

TokenSpan get_span(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) throw SchemaError(path, "must be a [start, end] pair");
  return {get_index(v[0], path), get_index(v[1], path)};
}

std::optional<TokenSpan> opt_span(const json& obj, const char* key, const std::string& parent) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return get_span(*it, path_of(parent, key));
}

GenerationRecord record_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "must be an object");
  GenerationRecord r;
  try {
    r.task = parse_task(get_string(j, "task", path));
  } catch (const ParseError&) {
    throw SchemaError(path + ".task", "must be \"answer\" or \"reasoning\"");
  }

  const json& tokens = member(j, "output_tokens", path);
  if (!tokens.is_array()) throw SchemaError(path + ".output_tokens", "must be an array");
  for (const json& t : tokens) {
    if (!t.is_string()) throw SchemaError(path + ".output_tokens", "entries must be strings");
    r.output_tokens.push_back(t.get<std::string>());
  }
  const json& lps = member(j, "token_logprobs", path);
  if (!lps.is_array()) throw SchemaError(path + ".token_logprobs", "must be an array");
  for (const json& v : lps) r.token_logprobs.push_back(get_real(v, path + ".token_logprobs"));

  const json& rows = member(j, "attention_rows", path);
  if (!rows.is_array()) throw SchemaError(path + ".attention_rows", "must be an array");
  r.attention_rows.reserve(rows.size());
  for (const json& row : rows) {
    if (!row.is_array()) throw SchemaError(path + ".attention_rows", "rows must be arrays");
    std::vector<double> values;
    values.reserve(row.size());
    for (const json& v : row) values.push_back(get_real(v, path + ".attention_rows"));
    r.attention_rows.push_back(std::move(values));
  }

  std::string sp = path + ".span_map";
  const json& sm = member(j, "span_map", path);
  if (!sm.is_object()) throw SchemaError(sp, "must be an object");
  r.span_map.image = get_span(member(sm, "image_span", sp), sp + ".image_span");
  r.span_map.question = get_span(member(sm, "question_span", sp), sp + ".question_span");
  r.span_map.context = opt_span(sm, "context_span", sp);
  r.span_map.description = opt_span(sm, "description_span", sp);
  r.span_map.answer = opt_span(sm, "answer_span", sp);
  r.span_map.n0 = get_index(member(sm, "n0", sp), sp + ".n0");
  if (auto it = sm.find("n1"); it != sm.end() && !it->is_null()) r.span_map.n1 = get_index(*it, sp + ".n1");

  const json& sampling = member(j, "sampling", path);
  r.sampling.temperature = get_real(member(sampling, "temperature", path + ".sampling"),
                                    path + ".sampling.temperature");
  const json& index = member(sampling, "index", path + ".sampling");
  if (!index.is_number_integer()) throw SchemaError(path + ".sampling.index", "must be an integer");
  r.sampling.index = index.get<std::int64_t>();
  return r;
}

}  // namespace

json to_json(const GenerationRecord& r) {
  return {{"task", to_string(r.task)},
          {"output_tokens", r.output_tokens},
          {"token_logprobs", r.token_logprobs},
          {"attention_rows", r.attention_rows},
          {"span_map", span_map_json(r.span_map)},
          {"sampling", {{"temperature", r.sampling.temperature}, {"index", r.sampling.index}}}};
}

json to_json(const InferenceTrace& t) {
  json samples = json::array();
  for (const auto& s : t.samples) samples.push_back(to_json(s));
  return {{"trace_version", kTraceVersion},
          {"sample_id", t.sample_id},
          {"config_id", to_string(t.config_id)},
          {"model_id", t.model_id},
          {"greedy", to_json(t.greedy)},
          {"samples", std::move(samples)},
          {"metadata", t.metadata}};
}

InferenceTrace trace_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("trace", "must be an object");
  const json& version = member(j, "trace_version", "");
  if (!version.is_number_integer() || version.get<int>() != kTraceVersion) {
    throw SchemaError("trace_version", "must be 1");
  }
  InferenceTrace t;
  t.sample_id = get_string(j, "sample_id", "");
  try {
    t.config_id = parse_config_id(get_string(j, "config_id", ""));
  } catch (const ParseError& e) {
    throw SchemaError("config_id", e.what());
  }
  t.model_id = get_string(j, "model_id", "");
  t.greedy = record_from_json(member(j, "greedy", ""), "greedy");
  const json& samples = member(j, "samples", "");
  if (!samples.is_array()) throw SchemaError("samples", "must be an array");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    t.samples.push_back(record_from_json(samples[i], "samples[" + std::to_string(i) + "]"));
  }
  if (auto it = j.find("metadata"); it != j.end()) {
    if (!it->is_object()) throw SchemaError("metadata", "must be an object");
    t.metadata = *it;
  }
  validate(t);
  return t;
}

std::string serialize_trace(const InferenceTrace& trace) {
  validate(trace);
  return to_json(trace).dump() + "\n";
}

void write_trace(const InferenceTrace& trace, std::ostream& sink) {
  sink << serialize_trace(trace);
  if (!sink) throw Error("I/O error while writing trace");
}

std::optional<InferenceTrace> TraceReader::next() {
  std::string text;
  while (true) {
    std::uint64_t start = position_;
    if (!std::getline(source_, text)) return std::nullopt;
    ++line_;
    position_ += text.size() + 1;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    last_offset_ = start;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line_);
    }
    try {
      return trace_from_json(j);
    } catch (const SchemaError& e) {
      throw e.at_line(line_);
    }
  }
}

std::vector<InferenceTrace> read_traces(std::istream& source) {
  TraceReader reader(source);
  std::vector<InferenceTrace> out;
  while (auto t = reader.next()) out.push_back(std::move(*t));
  return out;
}

std::vector<InferenceTrace> read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace file " + path);
  return read_traces(in);
}

}  // namespace intervene
