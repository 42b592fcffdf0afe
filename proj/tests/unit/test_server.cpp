#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "intervene/base64.hpp"
#include "intervene/bench.hpp"
#include "intervene/errors.hpp"
#include "intervene/server.hpp"
#include "intervene/synthetic.hpp"
#include "support/tmpdir.hpp"

using namespace intervene;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class BrokenAdapter : public ModelAdapter {
 public:
  InferenceTrace generate(const GenerationRequest& r) const override {
    throw AdapterError(r.input.sample_id, std::string(to_string(r.input.config_id)), "GPU fell over");
  }
  std::string model_id() const override { return "broken"; }
  std::string description() const override { return "broken"; }
};

struct Running {
  explicit Running(RunContext ctx, fs::path runs) : server(std::move(ctx), std::move(runs)) {
    REQUIRE(server.bind("127.0.0.1", 0));
    thread = std::thread([this] { server.serve(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", server.port());
    for (int i = 0; i < 100 && !client->Get("/samples"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  json get(const std::string& path, int expect = 200) {
    auto res = client->Get(path);
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, path << ": " << res->body);
    return json::parse(res->body);
  }
  json post(const std::string& path, const std::string& body, int expect = 200) {
    auto res = client->Post(path, body, "application/json");
    REQUIRE(res);
    CHECK_MESSAGE(res->status == expect, path << ": " << res->body);
    return json::parse(res->body);
  }
  BenchServer server;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;
};

struct Fixture {
  Fixture() {
    dir = testgen::fresh_dir("server");
    write_synthetic_dataset(dir / "data", 4);
    spec = load_run_spec(dir / "data/spec.json");
    spec.output_dir = dir / "runs/run1";
    report = run_benchmark(spec);
  }
  fs::path dir;
  RunSpec spec;
  json report;
};

const json& row_for(const json& report, const std::string& sample, const std::string& config, const std::string& task) {
  for (const json& r : report["samples"]) {
    if (r["sample_id"] == sample && r["config_id"] == config && r["task"] == task) return r;
  }
  FAIL("no row");
  static json none;
  return none;
}

}  // namespace

TEST_CASE("service endpoints") {
  Fixture f;
  Running srv(make_run_context(f.spec), f.dir / "runs");

  SUBCASE("samples") {
    json all = srv.get("/samples");
    CHECK(all["samples"].size() == 4);
    json one = srv.get("/samples/syn-01");
    CHECK(one["ground_truth"] == "No");
    CHECK(is_png(base64::decode(one["image_base64"].get<std::string>())));
    CHECK(is_png(base64::decode(one["annotated_image_base64"].get<std::string>())));
    srv.get("/samples/missing", 404);
  }

  SUBCASE("unmodified evaluation matches the batch run") {
    for (const char* config : {"Q+I", "Q+IA+C-", "Q"}) {
      json res = srv.post("/evaluate", json{{"sample_id", "syn-03"}, {"config_id", config}}.dump());
      for (const char* task : {"answer", "reasoning"}) {
        const json& row = row_for(f.report, "syn-03", config, task);
        CHECK(res[task]["uncertainty"]["entropy"] == row["entropy"]);
        CHECK(res[task]["relevance"]["R_I"] == row["R_I"]);
        CHECK(res[task]["relevance"]["R_Q"] == row["R_Q"]);
        CHECK(res[task]["relevance"]["R_C"] == row["R_C"]);
        CHECK(res[task]["generation"] == row["greedy_text"]);
      }
    }
  }

  SUBCASE("noise parameters are echoed") {
    json body = {{"sample_id", "syn-00"}, {"config_id", "Q+I"}, {"overrides", {{"noise", {{"sigma", 12.5}, {"seed", 99}}}}}};
    json res = srv.post("/evaluate", body.dump());
    CHECK(res["metadata"]["noise_seed"] == 99);
    CHECK(res["metadata"]["noise_sigma"] == 12.5);
    CHECK(res["answer"]["trace"]["metadata"]["noise_seed"] == 99);
    json again = srv.post("/evaluate", body.dump());
    CHECK(again["input"]["image_base64"] == res["input"]["image_base64"]);

    json drawn = srv.post("/evaluate", json{{"sample_id", "syn-00"}, {"config_id", "Q+I"},
                                            {"overrides", {{"noise", {{"sigma", 5}}}}}}.dump());
    CHECK(drawn["metadata"]["noise_seed"].is_number_unsigned());
  }

  SUBCASE("edited inputs reach the model") {
    Image white{4, 4, std::vector<std::uint8_t>(48, 255)};
    json body = {{"sample_id", "syn-00"},
                 {"config_id", "Q+I+C+"},
                 {"n_samples", 3},
                 {"overrides",
                  {{"question", "Is everything white?"},
                   {"context", "The room was painted white."},
                   {"image_base64", base64::encode(encode_png(white))}}}};
    json res = srv.post("/evaluate", body.dump());
    CHECK(res["input"]["question_text"] == "Is everything white?");
    CHECK(res["input"]["context_text"] == "The room was painted white.");
    CHECK(decode_image(base64::decode(res["input"]["image_base64"].get<std::string>())) == white);
    CHECK(res["answer"]["uncertainty"]["n_samples"] == 3);
  }

  SUBCASE("bad requests") {
    srv.post("/evaluate", "{not json", 400);
    srv.post("/evaluate", json{{"sample_id", "syn-00"}}.dump(), 400);
    srv.post("/evaluate", json{{"sample_id", "syn-00"}, {"config_id", "Q+X"}}.dump(), 400);
    srv.post("/evaluate", json{{"sample_id", "nope"}, {"config_id", "Q"}}.dump(), 404);
    srv.post("/evaluate", json{{"sample_id", "syn-00"}, {"config_id", "Q"}, {"n_samples", 0}}.dump(), 400);
    srv.post("/evaluate",
             json{{"sample_id", "syn-00"}, {"config_id", "Q+I"}, {"overrides", {{"image_base64", "AAAA"}}}}.dump(), 400);
  }

  SUBCASE("runs and reports") {
    json runs = srv.get("/runs");
    REQUIRE(runs["runs"].size() == 1);
    CHECK(runs["runs"][0]["id"] == "run1");
    CHECK(runs["runs"][0]["status"] == "complete");
    CHECK(srv.get("/runs/run1/report") == f.report);
    srv.get("/runs/nope/report", 404);
    srv.get("/runs/../report", 404);
  }

  SUBCASE("averages equal the per-sample means") {
    json avg = srv.get("/averages");
    const json& by_task = avg["models"]["mock-vlm"]["by_task"];
    for (const char* task : {"answer", "reasoning"}) {
      for (const char* key : {"R_I", "R_Q", "R_C"}) {
        double sum = 0.0;
        int n = 0;
        for (const json& row : f.report["samples"]) {
          if (row["task"] == task) {
            sum += row[key].get<double>();
            ++n;
          }
        }
        CHECK(by_task[task][std::string("mean_") + key].get<double>() == doctest::Approx(sum / n).epsilon(1e-12));
      }
    }
    CHECK(avg["models"]["mock-vlm"]["by_task"] == f.report["averages"]["by_task"]);
  }
}

TEST_CASE("adapter failures become 502") {
  Fixture f;
  RunContext ctx = make_run_context(f.spec);
  ctx.adapter = std::make_shared<BrokenAdapter>();
  Running srv(ctx, f.dir / "runs");
  json res = srv.post("/evaluate", json{{"sample_id", "syn-00"}, {"config_id", "Q+I"}}.dump(), 502);
  CHECK(res["sample_id"] == "syn-00");
  CHECK(res["config_id"] == "Q+I");
  CHECK(res["error"].get<std::string>().find("GPU fell over") != std::string::npos);
}
