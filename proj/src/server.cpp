#include "intervene/server.hpp"

#include <fstream>
#include <random>

#include <httplib.h>

#include "intervene/base64.hpp"
#include "intervene/errors.hpp"
#include "intervene/image.hpp"

namespace intervene {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Sample& find_sample(const RunContext& ctx, const std::string& id) {
  for (const Sample& s : ctx.samples) {
    if (s.id == id) return s;
  }
  throw ValidationError(id, "sample_id", "unknown sample");
}

Bytes image_bytes(const ImageRef& ref) {
  if (!ref.bytes.empty()) return ref.bytes;
  std::ifstream in(ref.source, std::ios::binary);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

json sample_summary(const Sample& s) {
  json j = {{"id", s.id},
            {"question", s.question},
            {"ground_truth", to_string(s.ground_truth)},
            {"complementary_context", s.complementary_context},
            {"contradictory_context", s.contradictory_context},
            {"tags", s.tags}};
  j["image_description"] = s.image_description ? json(*s.image_description) : json(nullptr);
  return j;
}

json task_result(const InferenceTrace& trace, const RunContext& ctx) {
  TraceMetrics m = compute_trace_metrics(trace, *ctx.oracle, {ctx.spec.estimator, ctx.spec.nli_question_prefix});
  json j = {{"generation", m.greedy_text}, {"trace", to_json(trace)}};
  j["uncertainty"] = m.uncertainty ? to_json(*m.uncertainty) : json(nullptr);
  j["relevance"] = m.relevance ? to_json(*m.relevance) : json(nullptr);
  if (m.uncertainty_error) j["uncertainty_error"] = *m.uncertainty_error;
  if (m.relevance_error) j["relevance_error"] = *m.relevance_error;
  if (m.parsed) {
    j["verdict"] = to_string(m.parsed->verdict);
    if (m.ground_truth) j["correct"] = is_correct(*m.parsed, *m.ground_truth);
  }
  return j;
}

bool safe_run_id(const std::string& id) {
  return !id.empty() && id != "." && id != ".." && id.find_first_of("/\\") == std::string::npos;
}

std::optional<json> read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

json evaluate_request(const RunContext& ctx, const json& body) {
  if (!body.is_object()) throw ParseError("request body must be a JSON object");
  std::string sample_id;
  ConfigId config_id;
  try {
    sample_id = body.at("sample_id").get<std::string>();
    config_id = parse_config_id(body.at("config_id").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("sample_id and config_id are required strings: ") + e.what());
  }
  Sample sample = find_sample(ctx, sample_id);
  ModalityConfiguration config = configuration_for(ctx.spec, sample, config_id);
  RunContext local = ctx;

  std::optional<double> noise_sigma;
  std::optional<std::uint64_t> noise_seed;
  Bytes edited_image;
  try {
    if (body.contains("n_samples")) local.spec.n_samples = body["n_samples"].get<std::size_t>();
    if (body.contains("temperature")) local.spec.temperature = body["temperature"].get<double>();
    const json overrides = body.value("overrides", json::object());
    if (!overrides.is_object()) throw ParseError("overrides must be an object");
    if (overrides.contains("question")) sample.question = overrides["question"].get<std::string>();
    if (overrides.contains("context")) {
      std::string text = overrides["context"].get<std::string>();
      if (config.context_variant == ContextVariant::kContradictory) {
        sample.contradictory_context = text;
      } else {
        sample.complementary_context = text;
      }
    }
    if (overrides.contains("image_description")) {
      config.image_description = overrides["image_description"].get<std::string>();
    }
    if (overrides.contains("prompt_style")) {
      config.prompt_style = parse_prompt_style(overrides["prompt_style"].get<std::string>());
    }
    if (overrides.contains("image_base64")) {
      edited_image = base64::decode(overrides["image_base64"].get<std::string>());
    }
    if (overrides.contains("noise")) {
      const json& noise = overrides["noise"];
      noise_sigma = noise.value("sigma", kDefaultNoiseSigma);
      if (!(*noise_sigma >= 0.0)) throw ParseError("noise.sigma must be non-negative");
      if (noise.contains("seed")) {
        noise_seed = noise["seed"].get<std::uint64_t>();
      } else {
        std::random_device rd;
        noise_seed = (std::uint64_t(rd()) << 32) | rd();
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed evaluate request: ") + e.what());
  }
  local.spec.validate();

  AssembledInput input = expand(sample, config);
  if (!edited_image.empty()) input.image_bytes = encode_png(decode_image(edited_image));
  if (noise_sigma) {
    if (input.image_bytes.empty()) throw ParseError("noise needs an image; this configuration has none");
    input.image_bytes = encode_png(add_gaussian_noise(decode_image(input.image_bytes), *noise_sigma, *noise_seed));
    input.noise_seed = noise_seed;
    input.noise_sigma = noise_sigma;
  }

  auto [answer, reasoning] = generate_job(local, input, sample);
  json metadata = {{"model_id", answer.model_id},
                   {"n_samples", local.spec.n_samples},
                   {"temperature", local.spec.temperature},
                   {"estimator", to_string(local.spec.estimator)}};
  metadata["noise_seed"] = input.noise_seed ? json(*input.noise_seed) : json(nullptr);
  metadata["noise_sigma"] = input.noise_sigma ? json(*input.noise_sigma) : json(nullptr);
  return {{"sample_id", sample_id},
          {"config_id", to_string(config_id)},
          {"input", to_json(input)},
          {"answer", task_result(answer, local)},
          {"reasoning", task_result(reasoning, local)},
          {"metadata", std::move(metadata)}};
}

json averages_for_runs(const fs::path& runs_dir) {
  std::map<std::string, std::pair<std::string, json>> latest;
  std::error_code ec;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(runs_dir, ec)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& dir : dirs) {
    auto run = read_json(dir / "run.json");
    if (!run || run->value("status", "") != "complete") continue;
    auto report = read_json(dir / "report" / "report.json");
    if (!report) continue;
    std::string model = report->at("run").value("model_id", "unknown");
    latest[model] = {dir.filename().string(), report_averages(*report)};
  }
  json models = json::object();
  for (const auto& [model, value] : latest) models[model] = {{"run_id", value.first}, {"by_task", value.second}};
  return {{"models", std::move(models)}};
}

BenchServer::BenchServer(RunContext ctx, fs::path runs_dir)
    : ctx_(std::move(ctx)), runs_dir_(std::move(runs_dir)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

BenchServer::~BenchServer() = default;

bool BenchServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    return port_ > 0;
  }
  port_ = port;
  return server_->bind_to_port(host, port);
}

void BenchServer::serve() { server_->listen_after_bind(); }

void BenchServer::stop() { server_->stop(); }

void BenchServer::install_routes() {
  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ValidationError& e) {
      send_json(res, e.field() == "sample_id" ? 404 : 400, {{"error", e.what()}});
    } catch (const AdapterError& e) {
      send_json(res, 502, {{"error", e.what()}, {"sample_id", e.sample_id()}, {"config_id", e.config_id()}});
    } catch (const ParseError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const SchemaError& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const Error& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  });

  server_->Get("/samples", [this](const httplib::Request&, httplib::Response& res) {
    json samples = json::array();
    for (const Sample& s : ctx_.samples) samples.push_back(sample_summary(s));
    send_json(res, 200, {{"samples", std::move(samples)}});
  });

  server_->Get(R"(/samples/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const Sample& s = find_sample(ctx_, req.matches[1]);
    json j = sample_summary(s);
    j["image_base64"] = base64::encode(image_bytes(s.image));
    j["annotated_image_base64"] = base64::encode(image_bytes(s.annotated_image));
    send_json(res, 200, j);
  });

  server_->Post("/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw ParseError("request body is not JSON");
    send_json(res, 200, evaluate_request(ctx_, body));
  });

  server_->Get("/runs", [this](const httplib::Request&, httplib::Response& res) {
    std::vector<fs::path> dirs;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(runs_dir_, ec)) {
      if (entry.is_directory() && fs::exists(entry.path() / "run.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    json runs = json::array();
    for (const fs::path& dir : dirs) {
      auto run = read_json(dir / "run.json");
      if (!run) continue;
      runs.push_back({{"id", dir.filename().string()},
                      {"status", run->value("status", "unknown")},
                      {"model_id", run->value("/spec/model_id"_json_pointer, std::string("unknown"))}});
    }
    send_json(res, 200, {{"runs", std::move(runs)}});
  });

  server_->Get(R"(/runs/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
    std::string id = req.matches[1];
    auto report = safe_run_id(id) ? read_json(runs_dir_ / id / "report" / "report.json") : std::nullopt;
    if (!report) {
      send_json(res, 404, {{"error", "no report for run '" + id + "'"}});
      return;
    }
    send_json(res, 200, *report);
  });

  server_->Get("/averages", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, averages_for_runs(runs_dir_));
  });
}

}  // namespace intervene
