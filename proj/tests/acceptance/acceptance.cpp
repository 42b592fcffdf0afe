// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "intervene/attention.hpp"
#include "intervene/bench.hpp"
#include "intervene/errors.hpp"
#include "intervene/risk.hpp"
#include "intervene/scoring.hpp"
#include "intervene/synthetic.hpp"
#include "intervene/trace.hpp"
#include "intervene/uncertainty.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/scripted_oracles.hpp"
#include "support/tmpdir.hpp"
#include "support/trace_mutations.hpp"

using namespace intervene;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Collects failed checks for one criterion.
struct Checker {
  std::vector<std::string> failures;
  std::size_t checks = 0;
  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Semantic entropy.
void semantic_entropy_criterion(Checker& c) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t m = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    std::size_t labels = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < m; ++i) texts.push_back(std::to_string(rng() % labels) + "#" + std::to_string(i));
    std::vector<double> lp;
    for (std::size_t i = 0; i < m; ++i) lp.push_back(-std::uniform_real_distribution<double>(0, 10)(rng));

    double engine = 0.0, reference = 0.0;
    if (trial % 2 == 0) {
      testgen::LabelOracle oracle;
      auto rel = [](const std::string& a, const std::string& b) {
        return testgen::LabelOracle::label(a) == testgen::LabelOracle::label(b);
      };
      auto cl = cluster(texts, oracle);
      engine = semantic_entropy(cl, Estimator::kDiscrete);
      reference = oracle::straight_line_entropy(texts, rel);
      double el = semantic_entropy(cl, Estimator::kLikelihood, lp);
      double rl = oracle::straight_line_entropy(texts, rel, &lp);
      c.expect(std::abs(el - rl) <= 1e-12, "likelihood estimator trial " + std::to_string(trial));
    } else {
      testgen::RandomTableOracle oracle(rng(), 0.55);
      auto rel = [&](const std::string& a, const std::string& b) { return oracle.entails(a, b); };
      auto cl = cluster(texts, oracle);
      engine = semantic_entropy(cl, Estimator::kDiscrete);
      reference = oracle::straight_line_entropy(texts, rel);
    }
    c.expect(std::abs(engine - reference) <= 1e-12, "random set " + std::to_string(trial));
  }

  testgen::LabelOracle oracle;
  auto entropy_of = [&](std::vector<int> sizes) {
    std::vector<std::string> texts;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
      for (int k = 0; k < sizes[g]; ++k) texts.push_back(std::to_string(g) + "#" + std::to_string(texts.size()));
    }
    auto cl = cluster(texts, oracle);
    return semantic_entropy(cl, Estimator::kDiscrete);
  };
  c.expect(entropy_of({10}) == 0.0, "one cluster gives 0");
  c.expect(std::abs(entropy_of({5, 5}) - std::log(2.0)) <= 1e-12, "5/5 split gives ln 2");
  c.expect(std::abs(entropy_of({5, 3, 2}) - 1.0297) <= 1e-4, "{5,3,2} gives 1.0297");
}

// AUGRC.
struct Distribution {
  std::string name;
  std::function<double(double)> quantile;
  std::function<double(double)> density;
  std::function<double(double)> failure_prob;
  double lo, hi;
};

std::vector<ScoredOutcome> stratified(const Distribution& d, std::size_t n) {
  std::vector<ScoredOutcome> out;
  double carry = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = d.quantile((double(i) + 0.5) / double(n));
    carry += d.failure_prob(s);
    bool fail = carry >= 0.5;
    if (fail) carry -= 1.0;
    out.push_back({std::to_string(i), fail, s});
  }
  return out;
}

void augrc_criterion(Checker& c) {
  const std::size_t n = 10000;
  const double ln10 = std::log(10.0);
  std::vector<Distribution> dists = {
      {"uniform SE, constant failure rate", [=](double u) { return u * ln10; }, [=](double) { return 1.0 / ln10; },
       [](double) { return 0.3; }, 0.0, ln10},
      {"exponential SE, failures decaying with SE", [](double u) { return -std::log1p(-u); },
       [](double s) { return std::exp(-s); }, [](double s) { return std::exp(-s); }, 0.0,
       std::numeric_limits<double>::infinity()},
      {"triangular SE, logistic failures", [](double u) { return 2.0 * std::sqrt(u); }, [](double s) { return s / 2.0; },
       [](double s) { return 1.0 / (1.0 + std::exp(4.0 * (s - 1.0))); }, 0.0, 2.0},
  };
  for (const auto& d : dists) {
    double want = oracle::augrc_integral(d.density, d.failure_prob, d.lo, d.hi);
    double got = grc_curve(stratified(d, n)).augrc;
    c.expect(std::abs(got - want) <= 2.0 / double(n),
             d.name + ": engine " + fmt(got) + " vs integral " + fmt(want));
  }

  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t m = 1 + rng() % 200;
    double p = std::uniform_real_distribution<double>(0, 1)(rng);
    bool ties = trial % 3 == 0;
    std::vector<ScoredOutcome> o;
    for (std::size_t i = 0; i < m; ++i) {
      double u = ties ? double(rng() % 5) : std::uniform_real_distribution<double>(0, 3)(rng);
      o.push_back({std::to_string(i), std::bernoulli_distribution(p)(rng), u});
    }
    double a = grc_curve(o).augrc;
    c.expect(a >= 0.0 && a <= 0.5, "bound violated on instance " + std::to_string(trial) + ": " + fmt(a));
    for (auto& x : o) x.failure = false;
    c.expect(grc_curve(o).augrc == 0.0, "all-correct instance " + std::to_string(trial) + " not exactly 0");
  }
}

// Attention attribution.
void attention_criterion(Checker& c) {
  std::mt19937_64 rng(31);
  int evaluated = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Task task = trial % 2 ? Task::kAnswer : Task::kReasoning;
    GenerationRecord r = testgen::random_record(rng, task, trial % 5 != 0, 20, 8, trial % 7 == 0);
    c.expect(r.span_map.prefix_length() <= 20 && r.output_tokens.size() <= 8, "generator out of range");
    RelevanceScores got;
    try {
      got = relevance(r);
    } catch (const EmptySpans&) {
      continue;
    }
    ++evaluated;
    auto want = oracle::brute_relevance(r);
    c.expect(std::abs(got.image - want.image) <= 1e-12 && std::abs(got.question - want.question) <= 1e-12 &&
                 std::abs(got.context - want.context) <= 1e-12,
             "trace " + std::to_string(trial) + " differs from the brute-force attribution");
    if (r.span_map.context) {
      c.expect(std::abs(got.image + got.question + got.context - 1.0) <= 1e-9,
               "trace " + std::to_string(trial) + " shares do not sum to 1");
    }

    // Positive per-row scaling: bit-exact for power-of-two factors, which floating
    // point represents without rounding, and to 1e-12 for arbitrary factors.
    GenerationRecord exact = r, arbitrary = r;
    for (std::size_t t = 0; t < r.attention_rows.size(); ++t) {
      double k2 = std::ldexp(1.0, int(rng() % 61) - 30);
      double k = std::exp(std::uniform_real_distribution<double>(-20, 20)(rng));
      for (double& v : exact.attention_rows[t]) v *= k2;
      for (double& v : arbitrary.attention_rows[t]) v *= k;
    }
    RelevanceScores se = relevance(exact), sa = relevance(arbitrary);
    c.expect(se.image == got.image && se.question == got.question && se.context == got.context,
             "trace " + std::to_string(trial) + " changed under power-of-two row scaling");
    c.expect(std::abs(sa.image - got.image) <= 1e-12 && std::abs(sa.question - got.question) <= 1e-12 &&
                 std::abs(sa.context - got.context) <= 1e-12,
             "trace " + std::to_string(trial) + " changed under row scaling");
  }
  c.expect(evaluated >= 450, "too few evaluable traces: " + std::to_string(evaluated));
}

// Scoring.
void scoring_criterion(Checker& c) {
  c.expect(parse_answer("Yes. The water in the kettle is hot.").verdict == Verdict::kYes, "kettle answer");
  c.expect(parse_answer("No. The image you provided is completely black, which does not allow me to determine "
                        "whether the water is hot.")
                   .verdict == Verdict::kNo,
           "black image answer");
  c.expect(parse_answer("是 이 이 \n Is a \n").verdict == Verdict::kUnparseable, "no-image-token answer");

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + rng() % 100;
    std::vector<ParsedAnswer> parsed;
    std::vector<Answer> truth;
    std::size_t right = 0, yes = 0, no = 0;
    for (std::size_t i = 0; i < n; ++i) {
      parsed.push_back({static_cast<Verdict>(rng() % 3), "", ""});
      truth.push_back(rng() % 2 ? Answer::kYes : Answer::kNo);
      right += is_correct(parsed.back(), truth.back());
      (truth.back() == Answer::kYes ? yes : no) += parsed.back().verdict != Verdict::kUnparseable;
    }
    ConfusionMatrix m = score_answers(parsed, truth);
    bool ok = m.total() == n && m.tp + m.tn == right && m.tp + m.fn == yes && m.tn + m.fp == no &&
              m.accuracy() == double(right) / double(n) &&
              (!m.tpr() || *m.tpr() == double(m.tp) / double(m.tp + m.fn)) &&
              (!m.tnr() || *m.tnr() == double(m.tn) / double(m.tn + m.fp));
    c.expect(ok, "confusion identities, instance " + std::to_string(trial));
  }
  std::vector<double> x = {1, 2, 3, 4}, y = {1, 3, 2, 4};
  c.expect(std::abs(pearson(x, y) - 0.8) <= 1e-12, "pearson example");
}

// End-to-end.
void end_to_end_criterion(Checker& c, const fs::path& work) {
  fs::path root = work / "e2e";
  fs::remove_all(root);
  write_synthetic_dataset(root / "data", 10);
  RunSpec spec = load_run_spec(root / "data/spec.json");
  spec.output_dir = root / "first";

  auto start = std::chrono::steady_clock::now();
  json report = run_benchmark(spec);
  spec.output_dir = root / "second";
  run_benchmark(spec);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(seconds < 60.0, "two runs took " + fmt(seconds) + " s");

  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "first")) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), root / "first");
    if (rel == "run.json") continue;  // records the output directory itself
    ++files;
    c.expect(testgen::slurp(entry.path()) == testgen::slurp(root / "second" / rel), rel.string() + " differs");
  }
  c.expect(files >= 12, "report bundle incomplete");

  std::map<std::string, double> acc, augrc;
  for (const json& cfg : report["configurations"]) {
    acc[cfg["config_id"]] = cfg["answer"]["accuracy"].get<double>();
    augrc[cfg["config_id"]] = cfg["answer"]["risk"]["augrc"].get<double>();
  }
  c.expect(report["configurations"].size() == 7, "seven configurations");
  c.expect(acc["Q+I+C+"] > acc["Q+I"], "accuracy(Q+I+C+) > accuracy(Q+I)");
  c.expect(acc["Q+I"] > acc["Q+I+C-"], "accuracy(Q+I) > accuracy(Q+I+C-)");
  c.expect(std::abs(acc["Q+I+C-"] - acc["Q"]) <= 0.1, "accuracy(Q+I+C-) ~ accuracy(Q)");
  c.expect(augrc["Q+I+C-"] < augrc["Q+I"], "AUGRC(Q+I+C-) < AUGRC(Q+I)");
  c.expect(augrc["Q+IA+C-"] < augrc["Q+IA"], "AUGRC(Q+IA+C-) < AUGRC(Q+IA)");
}

// Trace format.
void trace_criterion(Checker& c) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    InferenceTrace t = testgen::random_trace(rng, i % 2 == 1);
    std::string line = serialize_trace(t);
    std::istringstream in(line);
    auto back = read_traces(in);
    c.expect(back.size() == 1 && back[0] == t && serialize_trace(back[0]) == line,
             "trace " + std::to_string(i) + " does not round-trip");
  }
  auto [a, r] = testgen::mutation_bases();
  for (const auto& m : testgen::trace_mutations()) {
    json j = m.reasoning ? r : a;
    m.mutate(j);
    std::string field;
    try {
      trace_from_json(j);
    } catch (const SchemaError& e) {
      field = e.field();
    }
    c.expect(field == m.field, "violation of " + m.field + " not rejected (got '" + field + "')");
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "intervene_acceptance";
  fs::create_directories(work);

  struct Criterion {
    const char* name;
    double limit_seconds;
    std::function<void(Checker&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"semantic entropy", 5.0, semantic_entropy_criterion},
      {"augrc", 10.0, augrc_criterion},
      {"attention attribution", 0.0, attention_criterion},
      {"scoring", 0.0, scoring_criterion},
      {"end-to-end", 60.0, [&](Checker& c) { end_to_end_criterion(c, work); }},
      {"trace format", 0.0, trace_criterion},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    Checker c;
    auto start = std::chrono::steady_clock::now();
    try {
      criterion.run(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criterion.limit_seconds > 0 && seconds >= criterion.limit_seconds) {
      c.failures.push_back("took " + fmt(seconds) + " s, limit " + fmt(criterion.limit_seconds) + " s");
    }
    bool pass = c.failures.empty();
    failed += !pass;
    std::printf("%s  %-22s %zu checks, %.2f s", pass ? "PASS" : "FAIL", criterion.name, c.checks, seconds);
    for (const auto& f : c.failures) std::printf("\n      %s", f.c_str());
    std::printf("\n");
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
