#include <doctest.h>

#include <cmath>
#include <random>

#include "intervene/errors.hpp"
#include "intervene/uncertainty.hpp"
#include "support/oracles.hpp"
#include "support/scripted_oracles.hpp"

using namespace intervene;

namespace {

std::vector<std::string> split_labels(std::vector<std::pair<std::string, int>> groups) {
  std::vector<std::string> out;
  int n = 0;
  for (auto& [label, count] : groups) {
    for (int i = 0; i < count; ++i) out.push_back(label + "#" + std::to_string(n++));
  }
  return out;
}

double discrete_entropy(const std::vector<std::string>& texts, EntailmentOracle& oracle) {
  SemanticClustering c = cluster(texts, oracle);
  return semantic_entropy(c, Estimator::kDiscrete);
}

class FailingOracle : public EntailmentOracle {
 public:
  Entailment judge(const std::string&, const std::string&) override { throw Error("backend down"); }
};

InferenceTrace trace_with(const std::vector<std::string>& texts) {
  InferenceTrace t;
  t.sample_id = "s";
  t.model_id = "m";
  auto record = [](const std::string& text, std::int64_t index) {
    GenerationRecord r;
    r.output_tokens = {text};
    r.token_logprobs = {-0.5};
    r.span_map.question = {0, 1};
    r.span_map.n0 = 1;
    r.attention_rows = {{1.0}};
    r.sampling = {0.9, index};
    return r;
  };
  t.greedy = record(texts.front(), 0);
  t.greedy.sampling.temperature = 0.0;
  for (std::size_t i = 0; i < texts.size(); ++i) t.samples.push_back(record(texts[i], std::int64_t(i)));
  return t;
}

}  // namespace

TEST_CASE("exact match clustering") {
  ExactMatchOracle oracle;
  auto one = cluster(std::vector<std::string>{"Yes", "Yes", "Yes"}, oracle);
  REQUIRE(one.clusters.size() == 1);
  CHECK(one.clusters[0].members == std::vector<std::size_t>{0, 1, 2});

  auto two = cluster(std::vector<std::string>{"Yes", "No", "Yes"}, oracle);
  REQUIRE(two.clusters.size() == 2);
  CHECK(two.clusters[0].members == std::vector<std::size_t>{0, 2});
  CHECK(two.clusters[1].members == std::vector<std::size_t>{1});
}

TEST_CASE("normalization") {
  CHECK(normalize_answer_text("  Yes.  ") == "yes");
  CHECK(normalize_answer_text("NO!!") == "no");
  CHECK(normalize_answer_text("Yes, it is.") == "yes, it is");
  ExactMatchOracle oracle;
  CHECK(oracle.judge("Yes.", "yes") == Entailment::kEntails);
  CHECK(oracle.judge("Yes", "No") == Entailment::kNeutral);
}

TEST_CASE("paraphrase groups of six and four") {
  testgen::LabelOracle oracle;
  auto texts = split_labels({{"hot", 3}, {"cold", 2}, {"hot", 3}, {"cold", 2}});
  auto c = cluster(texts, oracle);
  REQUIRE(c.clusters.size() == 2);
  CHECK(c.clusters[0].members.size() == 6);
  CHECK(c.clusters[1].members.size() == 4);
  for (const auto& cl : c.clusters) {
    for (std::size_t i : cl.members) {
      for (std::size_t j : cl.members) CHECK(testgen::LabelOracle::label(texts[i]) == testgen::LabelOracle::label(texts[j]));
    }
  }
}

TEST_CASE("analytic entropies") {
  testgen::LabelOracle oracle;
  CHECK(discrete_entropy(split_labels({{"a", 10}}), oracle) == 0.0);
  CHECK(std::abs(discrete_entropy(split_labels({{"a", 5}, {"b", 5}}), oracle) - std::log(2.0)) <= 1e-12);
  double h = discrete_entropy(split_labels({{"a", 5}, {"b", 3}, {"c", 2}}), oracle);
  CHECK(h == doctest::Approx(-(0.5 * std::log(0.5) + 0.3 * std::log(0.3) + 0.2 * std::log(0.2))).epsilon(1e-14));
  CHECK(std::abs(h - 1.0297) <= 1e-4);
}

TEST_CASE("likelihood estimator") {
  testgen::LabelOracle oracle;
  auto c = cluster(split_labels({{"a", 1}, {"b", 2}}), oracle);
  std::vector<double> lp = {std::log(0.5), std::log(0.25), std::log(0.25)};
  CHECK(std::abs(semantic_entropy(c, Estimator::kLikelihood, lp) - std::log(2.0)) <= 1e-12);
  CHECK(c.cluster_probs.size() == 2);
  // Renormalization: shifting every logprob by a constant changes nothing.
  std::vector<double> shifted = {std::log(0.5) - 700, std::log(0.25) - 700, std::log(0.25) - 700};
  CHECK(std::abs(semantic_entropy(c, Estimator::kLikelihood, shifted) - std::log(2.0)) <= 1e-12);
  CHECK_THROWS_AS(semantic_entropy(c, Estimator::kLikelihood, std::vector<double>{0.0}), LengthMismatch);
}

TEST_CASE("errors") {
  ExactMatchOracle exact;
  CHECK_THROWS_AS(cluster(std::vector<std::string>{}, exact), EmptyInput);
  SemanticClustering empty;
  CHECK_THROWS_AS(semantic_entropy(empty, Estimator::kDiscrete), EmptyClustering);
  FailingOracle failing;
  try {
    cluster(std::vector<std::string>{"a", "b"}, failing);
    FAIL("expected OracleFailure");
  } catch (const OracleFailure& e) {
    CHECK(e.first() == 0);
    CHECK(e.second() == 1);
  }
}

TEST_CASE("randomized sets agree with the straight-line implementation") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t m = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < m; ++i) {
      texts.push_back(std::string(1, char('a' + rng() % 4)) + "#" + std::to_string(i));
    }
    std::vector<double> lp;
    for (std::size_t i = 0; i < m; ++i) lp.push_back(-std::uniform_real_distribution<double>(0, 8)(rng));
    if (trial % 2 == 0) {
      testgen::LabelOracle oracle;
      auto rel = [](const std::string& a, const std::string& b) {
        return testgen::LabelOracle::label(a) == testgen::LabelOracle::label(b);
      };
      CHECK(std::abs(discrete_entropy(texts, oracle) - oracle::straight_line_entropy(texts, rel)) <= 1e-12);
      auto c = cluster(texts, oracle);
      CHECK(std::abs(semantic_entropy(c, Estimator::kLikelihood, lp) - oracle::straight_line_entropy(texts, rel, &lp)) <=
            1e-12);
    } else {
      testgen::RandomTableOracle oracle(rng(), 0.6);
      auto rel = [&](const std::string& a, const std::string& b) { return oracle.entails(a, b); };
      double engine = discrete_entropy(texts, oracle);
      CHECK(std::abs(engine - oracle::straight_line_entropy(texts, rel)) <= 1e-12);
    }
  }
}

TEST_CASE("entropy is bounded by ln M") {
  std::mt19937_64 rng(19);
  testgen::LabelOracle oracle;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t m = 1 + rng() % 12;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < m; ++i) texts.push_back(std::to_string(rng() % 6) + "#" + std::to_string(i));
    double h = discrete_entropy(texts, oracle);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(double(m)) + 1e-12);
  }
}

TEST_CASE("uncertainty for a trace") {
  ExactMatchOracle oracle;
  auto same = uncertainty_for_trace(trace_with(std::vector<std::string>(10, "Yes")), oracle, Estimator::kDiscrete);
  CHECK(same.entropy == 0.0);
  CHECK(same.n_clusters == 1);
  CHECK(same.temperature == 0.9);

  std::vector<std::string> split(5, "Yes");
  split.insert(split.end(), 5, "No");
  auto half = uncertainty_for_trace(trace_with(split), oracle, Estimator::kDiscrete, std::string("Is it hot?"));
  CHECK(std::abs(half.entropy - std::log(2.0)) <= 1e-12);
  CHECK(half.texts == split);

  InferenceTrace none = trace_with({"Yes"});
  none.samples.clear();
  CHECK_THROWS_AS(uncertainty_for_trace(none, oracle, Estimator::kDiscrete), EmptyInput);
}

TEST_CASE("caching oracle forwards each pair once") {
  auto inner = std::make_shared<ExactMatchOracle>();
  CachingOracle cache(inner);
  cache.judge("a", "b");
  cache.judge("a", "b");
  cache.judge("b", "a");
  CHECK(cache.calls() == 2);
}
