#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "intervene/attention.hpp"
#include "intervene/bench.hpp"
#include "intervene/errors.hpp"
#include "intervene/metrics.hpp"
#include "intervene/risk.hpp"
#include "intervene/scoring.hpp"
#include "intervene/synthetic.hpp"
#include "intervene/trace.hpp"
#include "intervene/uncertainty.hpp"

namespace py = pybind11;
using namespace intervene;
using nlohmann::json;

namespace {

double entropy_of(const std::vector<std::string>& texts, const std::string& estimator,
                  const std::vector<double>& logprobs) {
  ExactMatchOracle oracle;
  SemanticClustering c = cluster(texts, oracle);
  return semantic_entropy(c, parse_estimator(estimator), logprobs);
}

double augrc_of(const std::vector<bool>& failures, const std::vector<double>& uncertainties) {
  if (failures.size() != uncertainties.size()) throw LengthMismatch("failures and uncertainties differ in length");
  std::vector<ScoredOutcome> outcomes;
  for (std::size_t i = 0; i < failures.size(); ++i) outcomes.push_back({std::to_string(i), failures[i], uncertainties[i]});
  return grc_curve(outcomes).augrc;
}

std::string relevance_of(const std::string& trace_json) {
  InferenceTrace t = trace_from_json(json::parse(trace_json));
  return to_json(relevance(t.greedy)).dump();
}

std::string run_of(const std::string& spec_path, const std::string& output_dir) {
  RunSpec spec = load_run_spec(spec_path);
  if (!output_dir.empty()) spec.output_dir = output_dir;
  py::gil_scoped_release release;
  return run_benchmark(spec).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Metric core of the modality-intervention benchmark";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("normalize_answer_text", &normalize_answer_text, py::arg("text"));
  m.def("semantic_entropy", &entropy_of, py::arg("texts"), py::arg("estimator") = "discrete",
        py::arg("logprobs") = std::vector<double>{},
        "Semantic entropy (nats) of sampled answers clustered by normalized exact match.");
  m.def("augrc", &augrc_of, py::arg("failures"), py::arg("uncertainties"));
  m.def("relevance_json", &relevance_of, py::arg("trace_json"));
  m.def("parse_answer", [](const std::string& text) { return std::string(to_string(parse_answer(text).verdict)); },
        py::arg("text"));
  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); },
        py::arg("x"), py::arg("y"));
  m.def("validate_trace_json",
        [](const std::string& text) { return serialize_trace(trace_from_json(json::parse(text))); },
        py::arg("trace_json"), "Validates a trace and returns its canonical JSON line.");
  m.def("write_synthetic_dataset",
        [](const std::string& dir, std::size_t n) { write_synthetic_dataset(dir, n); }, py::arg("dir"),
        py::arg("n") = 10);
  m.def("run_benchmark_json", &run_of, py::arg("spec_path"), py::arg("output_dir") = "");
  m.attr("engine_version") = std::string(kEngineVersion);
}
