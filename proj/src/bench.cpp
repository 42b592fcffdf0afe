#include "intervene/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <semaphore>
#include <set>
#include <sstream>
#include <thread>

#include "intervene/errors.hpp"
#include "intervene/remote.hpp"

namespace intervene {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kAnswerTraceFile = "traces/answer.traces.jsonl";
constexpr const char* kReasoningTraceFile = "traces/reasoning.traces.jsonl";
constexpr const char* kJournalFile = "traces/journal.traces.jsonl";
constexpr const char* kJudgeFile = "logs/judge_scores.jsonl";
constexpr const char* kJudgeExchangeLog = "logs/judge_requests.jsonl";

std::string_view to_string(OracleKind k) { return k == OracleKind::kExact ? "exact" : "remote"; }

std::string_view to_string(JudgeKind k) {
  switch (k) {
    case JudgeKind::kAuto: return "auto";
    case JudgeKind::kMock: return "mock";
    case JudgeKind::kRemote: return "remote";
    case JudgeKind::kNone: return "none";
  }
  return "?";
}

JudgeKind parse_judge_kind(std::string_view text) {
  for (auto k : {JudgeKind::kAuto, JudgeKind::kMock, JudgeKind::kRemote, JudgeKind::kNone}) {
    if (to_string(k) == text) return k;
  }
  throw ParseError("unknown judge kind '" + std::string(text) + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  }
  return v.dump();
}

const json& at_path(const json& j, std::initializer_list<const char*> path) {
  static const json null_value;
  const json* cur = &j;
  for (const char* key : path) {
    if (!cur->is_object() || !cur->contains(key)) return null_value;
    cur = &(*cur)[key];
  }
  return *cur;
}

void write_text_file(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("I/O error writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

using TraceKey = std::tuple<std::string, ConfigId, Task>;

TraceKey key_of(const InferenceTrace& t) { return {t.sample_id, t.config_id, t.task()}; }

// Reads a trace file, ignoring an unreadable final line left by an interrupted writer.
void read_tolerant(const fs::path& path, std::map<TraceKey, InferenceTrace>& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      InferenceTrace t = trace_from_json(json::parse(lines[i]));
      out[key_of(t)] = std::move(t);
    } catch (const std::exception&) {
      if (i + 1 == lines.size()) break;
      throw ParseError("corrupt trace journal " + path.string(), i + 1);
    }
  }
}

/// Runs `body(i)` for i in [0, n) on a bounded pool. The first exception stops the
/// pool and is rethrown after every worker has joined.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body,
                  const std::function<bool()>& stop = {}) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (!failed) {
      if (stop && stop()) return;
      std::size_t i = next++;
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::size_t count = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < count; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

class CountingGate {
 public:
  explicit CountingGate(std::size_t n) : sem_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, n))) {}
  template <typename F>
  auto run(F&& f) {
    sem_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{sem_};
    return f();
  }

 private:
  std::counting_semaphore<> sem_;
};

struct TraceLocation {
  std::string file;
  std::size_t line = 0;
  std::uint64_t offset = 0;
};

struct JudgeResult {
  std::optional<int> score;
  std::string raw;
  std::string model;
  int attempts = 0;
  std::optional<std::string> error;
};

json judge_result_json(const std::string& key, const JudgeResult& r) {
  json j = {{"key", key}, {"raw_response", r.raw}, {"judge_model", r.model}, {"attempts", r.attempts}};
  j["score"] = r.score ? json(*r.score) : json(nullptr);
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j;
}

std::map<std::string, JudgeResult> load_judge_cache(const fs::path& path) {
  std::map<std::string, JudgeResult> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    try {
      json j = json::parse(line);
      JudgeResult r;
      if (j["score"].is_number_integer()) r.score = j["score"].get<int>();
      r.raw = j.value("raw_response", "");
      r.model = j.value("judge_model", "");
      r.attempts = j.value("attempts", 0);
      // Failed judgments are retried on the next run.
      if (!j["error"].is_null()) continue;
      out[j.at("key").get<std::string>()] = std::move(r);
    } catch (const std::exception&) {
      continue;
    }
  }
  return out;
}

double correctness(const TraceMetrics& m) {
  return m.parsed && m.ground_truth && is_correct(*m.parsed, *m.ground_truth) ? 1.0 : 0.0;
}

json correlation(const std::vector<double>& x, const std::vector<double>& y) {
  try {
    return pearson(x, y);
  } catch (const Error& e) {
    return nullptr;
  }
}

json correlations_for(const std::vector<const TraceMetrics*>& members) {
  std::vector<double> image, question, context, correct;
  for (const TraceMetrics* m : members) {
    if (!m->relevance || !m->parsed || !m->ground_truth) continue;
    image.push_back(m->relevance->image);
    question.push_back(m->relevance->question);
    context.push_back(m->relevance->context);
    correct.push_back(correctness(*m));
  }
  return {{"n", correct.size()},
          {"pcc_image", correlation(image, correct)},
          {"pcc_question", correlation(question, correct)},
          {"pcc_context", correlation(context, correct)}};
}

}  // namespace

void RunSpec::validate() const {
  if (n_samples < 1) throw Error("n_samples must be at least 1");
  if (n_samples > 1 && !(temperature > 0.0)) throw Error("temperature must be positive when n_samples > 1");
  if (config_ids.empty()) throw Error("config_ids must not be empty");
  std::set<ConfigId> unique(config_ids.begin(), config_ids.end());
  if (unique.size() != config_ids.size()) throw Error("config_ids must be distinct");
  if (baseline_image != ImageVariant::kBlack && baseline_image != ImageVariant::kNoise &&
      baseline_image != ImageVariant::kNone) {
    throw Error("baseline_image must be black, noise or none");
  }
  if (baseline_size.width < 1 || baseline_size.height < 1) throw InvalidSize("baseline_size must be positive");
  if (noise_sigma < 0.0) throw Error("noise_sigma must be non-negative");
  if (workers < 1 || adapter_concurrency < 1 || judge_concurrency < 1) {
    throw Error("worker and concurrency bounds must be at least 1");
  }
  if (model_id.empty()) throw Error("model_id must not be empty");
}

RunSpec run_spec_from_json(const json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path = p;
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    RunSpec s;
    s.dataset_path = resolve(j.at("dataset").get<std::string>());
    if (j.contains("configs")) {
      s.config_ids.clear();
      for (const json& c : j["configs"]) s.config_ids.push_back(parse_config_id(c.get<std::string>()));
    }
    if (j.contains("baseline_image")) s.baseline_image = parse_image_variant(j["baseline_image"].get<std::string>());
    if (j.contains("baseline_size")) {
      s.baseline_size = {j["baseline_size"].at(0).get<int>(), j["baseline_size"].at(1).get<int>()};
    }
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    if (j.contains("prompt_style")) s.prompt_style = parse_prompt_style(j["prompt_style"].get<std::string>());
    s.image_description = j.value("image_description", s.image_description);
    s.model_id = j.value("model_id", s.model_id);
    s.adapter_endpoint = j.value("adapter", s.adapter_endpoint);
    if (j.contains("scenario")) s.scenario_path = resolve(j["scenario"].get<std::string>());
    s.n_samples = j.value("n_samples", s.n_samples);
    s.temperature = j.value("temperature", s.temperature);
    if (j.contains("oracle")) {
      std::string o = j["oracle"].get<std::string>();
      if (o == "exact") {
        s.oracle = OracleKind::kExact;
      } else if (o == "remote") {
        s.oracle = OracleKind::kRemote;
      } else {
        throw ParseError("oracle must be exact or remote");
      }
    }
    if (j.contains("oracle_url")) s.oracle_url = j["oracle_url"].get<std::string>();
    if (j.contains("estimator")) s.estimator = parse_estimator(j["estimator"].get<std::string>());
    s.nli_question_prefix = j.value("nli_question_prefix", s.nli_question_prefix);
    if (j.contains("judge")) s.judge = parse_judge_kind(j["judge"].get<std::string>());
    s.seed = j.value("seed", s.seed);
    s.output_dir = resolve(j.value("output_dir", s.output_dir.string()));
    s.workers = j.value("workers", s.workers);
    s.adapter_concurrency = j.value("adapter_concurrency", s.adapter_concurrency);
    s.judge_concurrency = j.value("judge_concurrency", s.judge_concurrency);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run spec: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("invalid run spec: ") + e.what());
  }
}

RunSpec load_run_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open run spec " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed run spec " + path.string() + ": " + e.what());
  }
  return run_spec_from_json(j, fs::absolute(path).parent_path());
}

json to_json(const RunSpec& s) {
  json configs = json::array();
  for (ConfigId c : s.config_ids) configs.push_back(to_string(c));
  json j = {{"dataset", s.dataset_path.string()},
            {"configs", configs},
            {"baseline_image", to_string(s.baseline_image)},
            {"baseline_size", {s.baseline_size.width, s.baseline_size.height}},
            {"noise_sigma", s.noise_sigma},
            {"prompt_style", to_string(s.prompt_style)},
            {"image_description", s.image_description},
            {"model_id", s.model_id},
            {"adapter", s.adapter_endpoint},
            {"n_samples", s.n_samples},
            {"temperature", s.temperature},
            {"oracle", to_string(s.oracle)},
            {"estimator", to_string(s.estimator)},
            {"nli_question_prefix", s.nli_question_prefix},
            {"judge", to_string(s.judge)},
            {"seed", s.seed},
            {"output_dir", s.output_dir.string()},
            {"workers", s.workers},
            {"adapter_concurrency", s.adapter_concurrency},
            {"judge_concurrency", s.judge_concurrency}};
  if (s.scenario_path) j["scenario"] = s.scenario_path->string();
  if (s.oracle_url) j["oracle_url"] = *s.oracle_url;
  return j;
}

RunContext make_run_context(const RunSpec& spec) {
  spec.validate();
  RunContext ctx;
  ctx.spec = spec;
  ctx.samples = load_manifest(spec.dataset_path);

  std::optional<Scenario> scenario;
  std::string endpoint = spec.adapter_endpoint;
  if (endpoint == "env") {
    endpoint = env_string("ADAPTER_URL").value_or("");
    if (endpoint.empty()) throw Error("adapter is \"env\" but ADAPTER_URL is not set");
  }
  if (endpoint == "mock") {
    scenario = spec.scenario_path ? load_scenario(*spec.scenario_path) : Scenario{};
    scenario->model_id = spec.model_id;
    ctx.adapter = std::make_shared<MockAdapter>(*scenario);
  } else {
    ctx.adapter = std::make_shared<HttpAdapter>(endpoint, spec.model_id);
  }

  if (spec.oracle == OracleKind::kExact) {
    ctx.oracle = std::make_shared<ExactMatchOracle>();
  } else {
    std::string url = spec.oracle_url.value_or(env_string("ADAPTER_URL").value_or(endpoint));
    if (url == "mock" || url.empty()) throw Error("remote oracle needs oracle_url or ADAPTER_URL");
    ctx.oracle = std::make_shared<CachingOracle>(std::make_shared<RemoteEntailmentOracle>(url));
  }

  JudgeKind judge = spec.judge;
  if (judge == JudgeKind::kAuto) {
    judge = scenario ? JudgeKind::kMock : env_string("JUDGE_URL") ? JudgeKind::kRemote : JudgeKind::kNone;
  }
  if (judge == JudgeKind::kMock) {
    ctx.judge = std::make_shared<ScenarioJudge>(scenario.value_or(Scenario{}));
  } else if (judge == JudgeKind::kRemote) {
    fs::create_directories(spec.output_dir / "logs");
    ctx.judge = HttpJudgeClient::from_environment(spec.output_dir / kJudgeExchangeLog);
  }
  return ctx;
}

ModalityConfiguration configuration_for(const RunSpec& spec, const Sample& sample, ConfigId id) {
  ModalityConfiguration c = ModalityConfiguration::canonical(id, spec.baseline_image);
  c.prompt_style = spec.prompt_style;
  c.baseline_size = spec.baseline_size;
  c.noise_sigma = spec.noise_sigma;
  if (c.image_variant == ImageVariant::kNoise) c.noise_seed = stable_hash(sample.id, spec.seed);
  if (spec.image_description) c.image_description = sample.image_description;
  return c;
}

std::pair<InferenceTrace, InferenceTrace> generate_job(const RunContext& ctx, const AssembledInput& input,
                                                       const Sample& sample) {
  const std::string config(to_string(input.config_id));
  GenerationRequest request;
  request.input = input;
  request.n_samples = ctx.spec.n_samples;
  request.temperature = ctx.spec.temperature;
  request.seed = ctx.spec.seed;

  auto annotate = [&](InferenceTrace& t, Task task) {
    if (t.sample_id != input.sample_id || t.config_id != input.config_id || t.task() != task) {
      throw AdapterError(input.sample_id, config, "adapter returned a trace for a different request");
    }
    t.metadata["ground_truth"] = to_string(sample.ground_truth);
    t.metadata["question"] = input.question_text;
    t.metadata["answer_prompt"] = input.answer_prompt;
    t.metadata["reasoning_prompt"] = input.reasoning_prompt;
    t.metadata["image_variant"] = to_string(input.image_variant);
    t.metadata["context_variant"] = to_string(input.context_variant);
    if (input.noise_seed) t.metadata["noise_seed"] = *input.noise_seed;
    if (input.noise_sigma) t.metadata["noise_sigma"] = *input.noise_sigma;
    validate(t);
  };

  request.task = Task::kAnswer;
  InferenceTrace answer = ctx.adapter->generate(request);
  annotate(answer, Task::kAnswer);

  request.task = Task::kReasoning;
  request.greedy_answer = answer.greedy.text();
  InferenceTrace reasoning = ctx.adapter->generate(request);
  annotate(reasoning, Task::kReasoning);
  return {std::move(answer), std::move(reasoning)};
}

std::vector<TraceMetrics> metrics_for_traces(const std::vector<InferenceTrace>& traces, EntailmentOracle& oracle,
                                             const MetricOptions& options, std::size_t workers) {
  std::vector<TraceMetrics> out(traces.size());
  parallel_for(traces.size(), workers,
               [&](std::size_t i) { out[i] = compute_trace_metrics(traces[i], oracle, options); });
  return out;
}

json report_averages(const json& report) {
  json out = json::object();
  for (const char* task : {"answer", "reasoning"}) {
    std::vector<double> entropy, image, question, context;
    for (const json& row : report.at("samples")) {
      if (row.at("task") != task) continue;
      if (row.at("entropy").is_number()) entropy.push_back(row["entropy"].get<double>());
      if (row.at("R_I").is_number()) {
        image.push_back(row["R_I"].get<double>());
        question.push_back(row["R_Q"].get<double>());
        context.push_back(row["R_C"].get<double>());
      }
    }
    auto mean = [](std::vector<double> v) -> json {
      if (v.empty()) return nullptr;
      std::sort(v.begin(), v.end());
      double sum = 0.0;
      for (double x : v) sum += x;
      return sum / double(v.size());
    };
    out[task] = {{"n", entropy.size()},
                 {"mean_entropy", mean(entropy)},
                 {"mean_R_I", mean(image)},
                 {"mean_R_Q", mean(question)},
                 {"mean_R_C", mean(context)}};
  }
  return out;
}

json run_benchmark(const RunSpec& spec, const RunOptions& options) {
  return run_benchmark(make_run_context(spec), options);
}

json run_benchmark(const RunContext& ctx, const RunOptions& options) {
  const RunSpec& spec = ctx.spec;
  spec.validate();
  const fs::path out_dir = spec.output_dir;
  fs::create_directories(out_dir / "traces");
  fs::create_directories(out_dir / "report");
  fs::create_directories(out_dir / "logs");

  const json spec_json = to_json(spec);
  if (std::ifstream existing(out_dir / "run.json"); existing) {
    json previous = json::parse(existing, nullptr, false);
    if (!previous.is_discarded() && previous.contains("spec") && previous["spec"] != spec_json) {
      throw Error("output directory " + out_dir.string() + " holds a run with a different spec");
    }
  }
  json run_json = {{"status", "partial"}, {"engine_version", kEngineVersion}, {"spec", spec_json}};
  write_text_file(out_dir / "run.json", run_json.dump(2) + "\n");

  // Jobs in canonical order: samples by id, configurations in spec order.
  std::vector<const Sample*> samples;
  for (const Sample& s : ctx.samples) samples.push_back(&s);
  std::sort(samples.begin(), samples.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });
  struct Job {
    const Sample* sample;
    ConfigId config;
  };
  std::vector<Job> jobs;
  for (const Sample* s : samples) {
    for (ConfigId c : spec.config_ids) jobs.push_back({s, c});
  }

  std::map<TraceKey, InferenceTrace> traces;
  read_tolerant(out_dir / kAnswerTraceFile, traces);
  read_tolerant(out_dir / kReasoningTraceFile, traces);
  read_tolerant(out_dir / kJournalFile, traces);

  std::vector<Job> pending;
  for (const Job& job : jobs) {
    if (!traces.count({job.sample->id, job.config, Task::kAnswer}) ||
        !traces.count({job.sample->id, job.config, Task::kReasoning})) {
      pending.push_back(job);
    }
  }

  {
    std::mutex journal_mutex;
    std::ofstream journal(out_dir / kJournalFile, std::ios::binary | std::ios::app);
    if (!journal) throw Error("cannot open trace journal in " + out_dir.string());
    std::atomic<std::size_t> completed{0};
    std::atomic<bool> stopped{false};
    CountingGate adapter_gate(spec.adapter_concurrency);
    auto stop = [&] {
      if (!stopped && options.should_stop && options.should_stop(completed.load())) stopped = true;
      return stopped.load();
    };
    parallel_for(
        pending.size(), spec.workers,
        [&](std::size_t i) {
          const Job& job = pending[i];
          AssembledInput input = expand(*job.sample, configuration_for(spec, *job.sample, job.config));
          auto [answer, reasoning] = adapter_gate.run([&] { return generate_job(ctx, input, *job.sample); });
          std::string text = serialize_trace(answer) + serialize_trace(reasoning);
          std::lock_guard lock(journal_mutex);
          journal << text;
          journal.flush();
          if (!journal) throw Error("I/O error writing trace journal");
          traces[key_of(answer)] = std::move(answer);
          traces[key_of(reasoning)] = std::move(reasoning);
          ++completed;
        },
        stop);
    if (stopped) {
      throw PartialRun("run stopped after " + std::to_string(completed.load()) + " of " +
                       std::to_string(pending.size()) + " pending jobs; rerun to resume");
    }
  }

  // Canonical trace files, then drop the journal. Traces of other runs' configurations
  // that happen to sit in the directory are not carried over.
  for (Task task : {Task::kAnswer, Task::kReasoning}) {
    std::string text;
    for (const Job& job : jobs) text += serialize_trace(traces.at({job.sample->id, job.config, task}));
    write_text_file(out_dir / (task == Task::kAnswer ? kAnswerTraceFile : kReasoningTraceFile), text);
  }
  fs::remove(out_dir / kJournalFile);

  // Re-read the persisted traces: every metric is computed from what is on disk.
  std::vector<InferenceTrace> persisted;
  std::vector<TraceLocation> locations;
  for (const char* file : {kAnswerTraceFile, kReasoningTraceFile}) {
    std::ifstream in(out_dir / file, std::ios::binary);
    TraceReader reader(in);
    while (auto t = reader.next()) {
      persisted.push_back(std::move(*t));
      locations.push_back({file, reader.line(), reader.offset()});
    }
  }

  // Reasoning quality, cached across resumptions.
  std::map<std::string, JudgeResult> judged;
  if (ctx.judge) {
    judged = load_judge_cache(out_dir / kJudgeFile);
    std::map<std::pair<std::string, ConfigId>, const InferenceTrace*> answers;
    for (const auto& t : persisted) {
      if (t.task() == Task::kAnswer) answers[{t.sample_id, t.config_id}] = &t;
    }
    std::map<std::string, const Sample*> by_id;
    for (const Sample* s : samples) by_id[s->id] = s;
    std::vector<const InferenceTrace*> todo;
    for (const auto& t : persisted) {
      if (t.task() == Task::kReasoning && !judged.count(judge_idempotency_key(t.sample_id, t.config_id))) {
        todo.push_back(&t);
      }
    }
    std::vector<JudgeResult> results(todo.size());
    parallel_for(todo.size(), spec.judge_concurrency, [&](std::size_t i) {
      const InferenceTrace& t = *todo[i];
      const Sample& sample = *by_id.at(t.sample_id);
      AssembledInput input = expand(sample, configuration_for(spec, sample, t.config_id));
      JudgeItem item{sample.question, input.image_bytes, answers.at({t.sample_id, t.config_id})->greedy.text(),
                     t.greedy.text(), judge_idempotency_key(t.sample_id, t.config_id)};
      JudgeResult& r = results[i];
      try {
        JudgeScore score = judge_reasoning(item, *ctx.judge);
        r.score = score.score;
        r.raw = score.raw_response;
        r.model = score.judge_model;
        r.attempts = score.attempts;
      } catch (const JudgeUnavailable&) {
        throw;
      } catch (const Error& e) {
        r.model = ctx.judge->model_name();
        r.error = e.what();
      }
    });
    for (std::size_t i = 0; i < todo.size(); ++i) {
      judged[judge_idempotency_key(todo[i]->sample_id, todo[i]->config_id)] = results[i];
    }
    std::string text;
    for (const auto& [key, r] : judged) text += judge_result_json(key, r).dump() + "\n";
    write_text_file(out_dir / kJudgeFile, text);
  }

  MetricOptions metric_options{spec.estimator, spec.nli_question_prefix};
  std::vector<TraceMetrics> metrics = metrics_for_traces(persisted, *ctx.oracle, metric_options, spec.workers);

  // Per-sample rows.
  json rows = json::array();
  std::map<const TraceMetrics*, std::size_t> index_of;
  for (std::size_t i = 0; i < metrics.size(); ++i) index_of[&metrics[i]] = i;
  auto groups = group_metrics(metrics);
  json errors = json::array();
  for (const MetricGroup& g : groups) {
    for (const TraceMetrics* m : g.members) {
      const TraceLocation& loc = locations[index_of[m]];
      json row = {{"sample_id", m->sample_id},
                  {"config_id", to_string(m->config_id)},
                  {"task", to_string(m->task)},
                  {"trace", {{"file", loc.file}, {"line", loc.line}, {"offset", loc.offset}}},
                  {"greedy_text", m->greedy_text}};
      row["entropy"] = m->uncertainty ? json(m->uncertainty->entropy) : json(nullptr);
      row["n_clusters"] = m->uncertainty ? json(m->uncertainty->n_clusters) : json(nullptr);
      row["R_I"] = m->relevance ? json(m->relevance->image) : json(nullptr);
      row["R_Q"] = m->relevance ? json(m->relevance->question) : json(nullptr);
      row["R_C"] = m->relevance ? json(m->relevance->context) : json(nullptr);
      if (m->task == Task::kAnswer) {
        row["verdict"] = to_string(m->parsed->verdict);
        row["ground_truth"] = m->ground_truth ? json(to_string(*m->ground_truth)) : json(nullptr);
        row["correct"] = correctness(*m) == 1.0;
      } else if (ctx.judge) {
        const JudgeResult& r = judged.at(judge_idempotency_key(m->sample_id, m->config_id));
        row["judge_score"] = r.score ? json(*r.score) : json(nullptr);
        if (r.error) errors.push_back({{"sample_id", m->sample_id}, {"config_id", to_string(m->config_id)},
                                       {"kind", "judge"}, {"detail", *r.error}});
      }
      if (m->relevance_error) errors.push_back({{"sample_id", m->sample_id}, {"config_id", to_string(m->config_id)},
                                                {"task", to_string(m->task)}, {"kind", "relevance"},
                                                {"detail", *m->relevance_error}});
      if (m->uncertainty_error) errors.push_back({{"sample_id", m->sample_id}, {"config_id", to_string(m->config_id)},
                                                  {"task", to_string(m->task)}, {"kind", "uncertainty"},
                                                  {"detail", *m->uncertainty_error}});
      rows.push_back(std::move(row));
    }
  }

  // Per-configuration aggregates.
  json configurations = json::array();
  json correlations = json::array();
  std::vector<const TraceMetrics*> all_answers;
  for (ConfigId config : spec.config_ids) {
    json entry = {{"config_id", to_string(config)}};
    for (const MetricGroup& g : groups) {
      if (g.config_id != config) continue;
      json task_json = {{"uncertainty", uncertainty_summary(g)}, {"attention", attention_summary(g)}};
      if (g.task == Task::kAnswer) {
        task_json["confusion"] = score_summary(g);
        task_json["accuracy"] = task_json["confusion"]["accuracy"];
        task_json["risk"] = risk_summary(g);
        json corr = correlations_for(g.members);
        corr["config_id"] = to_string(config);
        correlations.push_back(std::move(corr));
        all_answers.insert(all_answers.end(), g.members.begin(), g.members.end());
      } else if (ctx.judge) {
        std::vector<int> scores;
        for (const TraceMetrics* m : g.members) {
          const JudgeResult& r = judged.at(judge_idempotency_key(m->sample_id, m->config_id));
          if (r.score) scores.push_back(*r.score);
        }
        task_json["judge"] = to_json(score_histogram(scores));
      }
      entry[std::string(to_string(g.task))] = std::move(task_json);
    }
    configurations.push_back(std::move(entry));
  }
  std::sort(all_answers.begin(), all_answers.end(), [](const TraceMetrics* a, const TraceMetrics* b) {
    return std::tie(a->sample_id, a->config_id) < std::tie(b->sample_id, b->config_id);
  });
  json pooled = correlations_for(all_answers);
  pooled["config_id"] = "all";
  correlations.push_back(std::move(pooled));

  std::string attention_aggregation = "unknown";
  std::string adapter_version = "unknown";
  if (!persisted.empty()) {
    attention_aggregation = persisted.front().metadata.value("attention_aggregation", attention_aggregation);
    adapter_version = persisted.front().metadata.value("adapter_version", adapter_version);
  }
  json flags = json::array();
  if (spec.baseline_image == ImageVariant::kNone &&
      std::find(spec.config_ids.begin(), spec.config_ids.end(), ConfigId::kQ) != spec.config_ids.end()) {
    flags.push_back("no_image_token_baseline: Q runs without image tokens, outputs are expected to be degenerate");
  }

  json prompts = {{"standard", {{"answer", kStandardAnswerPrompt}, {"reasoning", kStandardReasoningPrompt}}},
                  {"context_emphasis",
                   {{"answer", kContextEmphasisAnswerPrompt}, {"reasoning", kContextEmphasisReasoningPrompt}}},
                  {"judge", kJudgePrompt}};
  json run_meta = {{"engine_version", kEngineVersion},
                   {"model_id", spec.model_id},
                   {"adapter", ctx.adapter->description()},
                   {"adapter_version", adapter_version},
                   {"attention_aggregation", attention_aggregation},
                   {"dataset", spec.dataset_path.filename().string()},
                   {"n_dataset_samples", samples.size()},
                   {"configs", spec_json["configs"]},
                   {"n_samples", spec.n_samples},
                   {"temperature", spec.temperature},
                   {"seed", spec.seed},
                   {"oracle", to_string(spec.oracle)},
                   {"estimator", to_string(spec.estimator)},
                   {"nli_question_prefix", spec.nli_question_prefix},
                   {"judge", ctx.judge ? json(ctx.judge->model_name()) : json(nullptr)},
                   {"judge_temperature", 0},
                   {"judge_attempts", kJudgeAttempts},
                   {"baseline_image", to_string(spec.baseline_image)},
                   {"baseline_size", {spec.baseline_size.width, spec.baseline_size.height}},
                   {"noise_sigma", spec.noise_sigma},
                   {"prompt_style", to_string(spec.prompt_style)},
                   {"image_description", spec.image_description},
                   {"prompts", prompts},
                   {"augrc_estimator", "trapezoid_over_working_points"},
                   {"augrc_ties", "collapsed_to_one_working_point"},
                   {"aggregation", "micro"},
                   {"unparseable_answers", "counted_as_incorrect"},
                   {"relevance_positions", "per_position_mean_over_rows"},
                   {"flags", flags}};

  json report = {{"report_version", 1},
                 {"run", std::move(run_meta)},
                 {"configurations", std::move(configurations)},
                 {"correlations", std::move(correlations)},
                 {"samples", std::move(rows)},
                 {"errors", std::move(errors)}};
  report["averages"] = {{"model_id", spec.model_id}, {"by_task", report_averages(report)}};

  // Report bundle.
  write_text_file(out_dir / "report" / "report.json", report.dump(2) + "\n");
  {
    std::ostringstream csv;
    csv << "config_id,task,n,accuracy,augrc,mean_entropy,R_I,R_Q,R_C,judge_mean,judge_mode\n";
    for (const json& c : report["configurations"]) {
      for (const char* task : {"answer", "reasoning"}) {
        if (!c.contains(task)) continue;
        const json& t = c[task];
        csv << csv_field(c["config_id"]) << ',' << task << ',' << csv_field(at_path(t, {"uncertainty", "entropy", "n"}))
            << ',' << csv_field(at_path(t, {"accuracy"})) << ',' << csv_field(at_path(t, {"risk", "augrc"})) << ','
            << csv_field(at_path(t, {"uncertainty", "entropy", "mean"})) << ','
            << csv_field(at_path(t, {"attention", "mean", "R_I"})) << ','
            << csv_field(at_path(t, {"attention", "mean", "R_Q"})) << ','
            << csv_field(at_path(t, {"attention", "mean", "R_C"})) << ','
            << csv_field(at_path(t, {"judge", "mean"})) << ',' << csv_field(at_path(t, {"judge", "mode"})) << '\n';
      }
    }
    write_text_file(out_dir / "report" / "summary.csv", csv.str());
  }
  {
    std::ostringstream csv;
    csv << "sample_id,config_id,task,verdict,correct,entropy,n_clusters,R_I,R_Q,R_C,judge_score,trace_file,trace_offset\n";
    for (const json& r : report["samples"]) {
      csv << csv_field(r["sample_id"]) << ',' << csv_field(r["config_id"]) << ',' << csv_field(r["task"]) << ','
          << csv_field(r.value("verdict", json())) << ',' << csv_field(r.value("correct", json())) << ','
          << csv_field(r["entropy"]) << ',' << csv_field(r["n_clusters"]) << ',' << csv_field(r["R_I"]) << ','
          << csv_field(r["R_Q"]) << ',' << csv_field(r["R_C"]) << ',' << csv_field(r.value("judge_score", json()))
          << ',' << csv_field(r["trace"]["file"]) << ',' << csv_field(r["trace"]["offset"]) << '\n';
    }
    write_text_file(out_dir / "report" / "samples.csv", csv.str());
  }
  for (const MetricGroup& g : groups) {
    if (g.task != Task::kAnswer) continue;
    std::vector<ScoredOutcome> outcomes;
    for (const TraceMetrics* m : g.members) {
      auto one = risk_outcomes(std::span<const TraceMetrics>(m, 1));
      outcomes.insert(outcomes.end(), one.begin(), one.end());
    }
    if (outcomes.empty()) continue;
    std::ostringstream csv;
    write_curve_csv(grc_curve(outcomes), csv);
    write_text_file(out_dir / "report" / ("grc_" + std::string(to_string(g.config_id)) + ".csv"), csv.str());
  }
  if (ctx.judge) {
    std::ostringstream csv;
    csv << "config_id,score,count\n";
    for (const json& c : report["configurations"]) {
      const json& counts = at_path(c, {"reasoning", "judge", "counts"});
      if (!counts.is_array()) continue;
      for (std::size_t s = 0; s < counts.size(); ++s) {
        csv << csv_field(c["config_id"]) << ',' << s << ',' << counts[s].dump() << '\n';
      }
    }
    write_text_file(out_dir / "report" / "judge_histogram.csv", csv.str());
  }

  run_json["status"] = "complete";
  write_text_file(out_dir / "run.json", run_json.dump(2) + "\n");
  return report;
}

}  // namespace intervene
