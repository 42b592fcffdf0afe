#include <csignal>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "intervene/bench.hpp"
#include "intervene/errors.hpp"
#include "intervene/remote.hpp"
#include "intervene/server.hpp"
#include "intervene/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace intervene;

namespace {

BenchServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<InferenceTrace> read_all(const std::vector<std::string>& paths) {
  std::vector<InferenceTrace> out;
  for (const auto& p : paths) {
    auto traces = read_trace_file(p);
    out.insert(out.end(), std::make_move_iterator(traces.begin()), std::make_move_iterator(traces.end()));
  }
  return out;
}

int run_metrics(const std::string& kind, const std::vector<std::string>& paths, const std::string& dataset,
                const std::string& oracle_arg, const std::string& estimator, bool no_prefix, std::size_t workers) {
  std::vector<InferenceTrace> traces = read_all(paths);
  if (!dataset.empty()) {
    std::map<std::string, Answer> truth;
    for (const Sample& s : load_manifest(dataset)) truth[s.id] = s.ground_truth;
    for (auto& t : traces) {
      if (!t.metadata.contains("ground_truth") && truth.count(t.sample_id)) {
        t.metadata["ground_truth"] = to_string(truth[t.sample_id]);
      }
    }
  }
  std::shared_ptr<EntailmentOracle> oracle;
  if (oracle_arg == "exact") {
    oracle = std::make_shared<ExactMatchOracle>();
  } else {
    oracle = std::make_shared<CachingOracle>(std::make_shared<RemoteEntailmentOracle>(oracle_arg));
  }
  MetricOptions options{parse_estimator(estimator), !no_prefix};
  auto metrics = metrics_for_traces(traces, *oracle, options, workers);

  json groups = json::array();
  for (const MetricGroup& g : group_metrics(metrics)) {
    json entry = {{"config_id", to_string(g.config_id)}, {"task", to_string(g.task)}};
    if (kind == "attention") {
      entry["attention"] = attention_summary(g);
    } else if (kind == "uncertainty") {
      entry["uncertainty"] = uncertainty_summary(g);
      json per = json::array();
      for (const TraceMetrics* m : g.members) {
        per.push_back({{"sample_id", m->sample_id},
                       {"entropy", m->uncertainty ? json(m->uncertainty->entropy) : json(nullptr)},
                       {"n_clusters", m->uncertainty ? json(m->uncertainty->n_clusters) : json(nullptr)}});
      }
      entry["samples"] = std::move(per);
    } else if (g.task != Task::kAnswer) {
      continue;
    } else if (kind == "risk") {
      entry["risk"] = risk_summary(g);
    } else {
      entry["confusion"] = score_summary(g);
    }
    groups.push_back(std::move(entry));
  }
  std::cout << json{{"kind", kind}, {"groups", std::move(groups)}}.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modality-intervention benchmark for vision-language models"};
  app.require_subcommand(1);

  std::string spec_path;
  auto* run = app.add_subcommand("run", "Run the benchmark described by a spec file");
  run->add_option("--spec", spec_path, "Run spec (JSON)")->required()->check(CLI::ExistingFile);
  std::string output_override;
  run->add_option("--output", output_override, "Override the spec's output_dir");

  int port = 8080;
  std::string host = "127.0.0.1";
  std::string runs_dir;
  auto* serve = app.add_subcommand("serve", "Serve samples, evaluation and reports over HTTP");
  serve->add_option("--port", port, "Port; 0 picks a free one");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--spec", spec_path, "Run spec providing dataset and backends")->required()->check(CLI::ExistingFile);
  serve->add_option("--runs-dir", runs_dir, "Directory holding run directories (default: parent of output_dir)");

  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  std::string manifest_path;
  auto* validate_cmd = dataset->add_subcommand("validate", "Validate a manifest");
  validate_cmd->add_option("manifest", manifest_path, "manifest.json")->required();
  std::string synth_dir;
  std::size_t synth_n = 10;
  auto* synth = dataset->add_subcommand("synth", "Write the synthetic dataset, scenario and spec");
  synth->add_option("dir", synth_dir, "Output directory")->required();
  synth->add_option("-n", synth_n, "Number of samples")->check(CLI::PositiveNumber);

  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from trace files");
  std::string kind;
  std::vector<std::string> trace_paths;
  std::string metrics_dataset;
  std::string oracle = "exact";
  std::string estimator = "discrete";
  bool no_prefix = false;
  std::size_t workers = 1;
  metrics->add_option("kind", kind, "attention | uncertainty | risk | score")
      ->required()
      ->check(CLI::IsMember({"attention", "uncertainty", "risk", "score"}));
  metrics->add_option("traces", trace_paths, "Trace files (.traces.jsonl)")->required()->check(CLI::ExistingFile);
  metrics->add_option("--dataset", metrics_dataset, "Manifest supplying ground truth missing from traces");
  metrics->add_option("--oracle", oracle, "\"exact\" or an entailment service URL");
  metrics->add_option("--estimator", estimator, "discrete | likelihood")
      ->check(CLI::IsMember({"discrete", "likelihood"}));
  metrics->add_flag("--no-question-prefix", no_prefix, "Do not prepend the question to oracle inputs");
  metrics->add_option("--workers", workers, "Parallel workers")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunSpec spec = load_run_spec(spec_path);
      if (!output_override.empty()) spec.output_dir = output_override;
      std::signal(SIGINT, [](int) { std::_Exit(130); });
      json report = run_benchmark(spec);
      std::cout << "run complete: " << spec.output_dir.string() << "/report/report.json\n";
      for (const json& c : report["configurations"]) {
        const json& a = c.value("answer", json::object());
        std::cout << "  " << c["config_id"].get<std::string>()
                  << "  accuracy=" << a.value("accuracy", json()).dump()
                  << "  augrc=" << (a.contains("risk") && a["risk"].is_object() ? a["risk"]["augrc"].dump() : "null")
                  << '\n';
      }
      if (!report["errors"].empty()) std::cout << "  " << report["errors"].size() << " per-sample errors recorded\n";
      return 0;
    }
    if (*serve) {
      RunSpec spec = load_run_spec(spec_path);
      fs::path dir = runs_dir.empty() ? fs::absolute(spec.output_dir).parent_path() : fs::path(runs_dir);
      BenchServer server(make_run_context(spec), dir);
      if (!server.bind(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << '\n';
        return 1;
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << server.port() << std::endl;
      server.serve();
      return 0;
    }
    if (*validate_cmd) {
      auto samples = load_manifest(manifest_path);
      std::cout << "ok: " << samples.size() << " samples\n";
      return 0;
    }
    if (*synth) {
      write_synthetic_dataset(synth_dir, synth_n);
      std::cout << "wrote " << synth_n << " samples to " << synth_dir << '\n';
      return 0;
    }
    if (*metrics) return run_metrics(kind, trace_paths, metrics_dataset, oracle, estimator, no_prefix, workers);
  } catch (const PartialRun& e) {
    std::cerr << "partial run: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "invalid dataset: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
