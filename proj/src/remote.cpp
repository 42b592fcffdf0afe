#include "intervene/remote.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>

#include "intervene/base64.hpp"
#include "intervene/errors.hpp"

namespace intervene {

using nlohmann::json;

std::optional<std::string> env_string(const char* name) {
  const char* value = std::getenv(name);
  if (!value || !*value) return std::nullopt;
  return std::string(value);
}

Endpoint parse_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ParseError("endpoint URL needs a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  if (slash != std::string::npos) {
    e.path = url.substr(slash);
    while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  }
  return e;
}

namespace {

httplib::Client make_client(const Endpoint& e, int timeout_seconds) {
  httplib::Client client(e.origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(timeout_seconds);
  client.set_write_timeout(timeout_seconds);
  return client;
}

}  // namespace

HttpAdapter::HttpAdapter(std::string url, std::string model_id, int timeout_seconds)
    : url_(std::move(url)), endpoint_(parse_endpoint(url_)), model_id_(std::move(model_id)),
      timeout_seconds_(timeout_seconds) {}

InferenceTrace HttpAdapter::generate(const GenerationRequest& request) const {
  const std::string sample_id = request.input.sample_id;
  const std::string config(to_string(request.input.config_id));
  auto client = make_client(endpoint_, timeout_seconds_);
  auto res = client.Post(endpoint_.path + "/generate", to_json(request).dump(), "application/json");
  if (!res) {
    throw AdapterError(sample_id, config, "adapter unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw AdapterError(sample_id, config, "adapter returned HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  try {
    InferenceTrace trace = trace_from_json(json::parse(res->body));
    if (trace.sample_id != sample_id || trace.config_id != request.input.config_id ||
        trace.task() != request.task) {
      throw AdapterError(sample_id, config, "adapter returned a trace for a different request");
    }
    return trace;
  } catch (const json::parse_error& e) {
    throw AdapterError(sample_id, config, std::string("adapter returned malformed JSON: ") + e.what());
  } catch (const SchemaError& e) {
    throw AdapterError(sample_id, config, std::string("adapter trace violates schema: ") + e.what());
  }
}

RemoteEntailmentOracle::RemoteEntailmentOracle(std::string url) : endpoint_(parse_endpoint(url)) {}

Entailment RemoteEntailmentOracle::judge(const std::string& premise, const std::string& hypothesis) {
  auto client = make_client(endpoint_, 120);
  json body = {{"premise", premise}, {"hypothesis", hypothesis}};
  auto res = client.Post(endpoint_.path + "/entail", body.dump(), "application/json");
  if (!res) throw Error("entailment backend unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("entailment backend returned HTTP " + std::to_string(res->status));
  try {
    return parse_entailment(json::parse(res->body).at("label").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(std::string("malformed entailment reply: ") + e.what());
  }
}

HttpJudgeClient::HttpJudgeClient(std::string url, std::string api_key, std::string model,
                                 std::optional<std::filesystem::path> log_path)
    : endpoint_(parse_endpoint(url)), api_key_(std::move(api_key)), model_(std::move(model)),
      log_path_(std::move(log_path)) {}

std::shared_ptr<HttpJudgeClient> HttpJudgeClient::from_environment(std::optional<std::filesystem::path> log_path) {
  auto url = env_string("JUDGE_URL");
  if (!url) throw JudgeUnavailable("JUDGE_URL is not set");
  return std::make_shared<HttpJudgeClient>(*url, env_string("JUDGE_API_KEY").value_or(""),
                                           env_string("JUDGE_MODEL").value_or("gpt-4o"), std::move(log_path));
}

std::string HttpJudgeClient::complete(const JudgeRequest& request) {
  json content = json::array({{{"type", "text"}, {"text", request.prompt}}});
  if (!request.image_png.empty()) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + base64::encode(request.image_png)}}}});
  }
  json body = {{"model", model_},
               {"temperature", 0},
               {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})}};

  httplib::Headers headers = {{"Idempotency-Key", request.idempotency_key + "#" + std::to_string(request.attempt)}};
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto client = make_client(endpoint_, 120);
  auto res = client.Post(endpoint_.path.empty() ? "/" : endpoint_.path, headers, body.dump(), "application/json");

  std::string reply;
  std::string failure;
  if (!res) {
    failure = "judge unreachable: " + httplib::to_string(res.error());
  } else if (res->status != 200) {
    failure = "judge returned HTTP " + std::to_string(res->status);
  } else {
    try {
      reply = json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      // A reply without a message is a protocol-level malformation; the caller retries.
      reply = res->body;
    }
  }

  if (log_path_) {
    json entry = {{"idempotency_key", request.idempotency_key},
                  {"attempt", request.attempt},
                  {"url", endpoint_.origin + endpoint_.path},
                  {"authorization", api_key_.empty() ? "" : "Bearer [REDACTED]"},
                  {"model", model_},
                  {"prompt", request.prompt},
                  {"status", res ? res->status : 0},
                  {"reply", reply},
                  {"error", failure}};
    std::lock_guard lock(log_mutex_);
    std::ofstream(*log_path_, std::ios::app) << entry.dump() << '\n';
  }
  if (!failure.empty()) throw JudgeUnavailable(failure);
  return reply;
}

}  // namespace intervene
