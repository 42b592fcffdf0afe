#include "intervene/uncertainty.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "intervene/errors.hpp"

namespace intervene {

std::string_view to_string(Entailment e) {
  switch (e) {
    case Entailment::kEntails: return "entails";
    case Entailment::kNeutral: return "neutral";
    case Entailment::kContradicts: return "contradicts";
  }
  return "?";
}

Entailment parse_entailment(std::string_view text) {
  if (text == "entails") return Entailment::kEntails;
  if (text == "neutral") return Entailment::kNeutral;
  if (text == "contradicts") return Entailment::kContradicts;
  throw ParseError("unknown entailment label '" + std::string(text) + "'");
}

std::string_view to_string(Estimator e) { return e == Estimator::kDiscrete ? "discrete" : "likelihood"; }

Estimator parse_estimator(std::string_view text) {
  if (text == "discrete") return Estimator::kDiscrete;
  if (text == "likelihood") return Estimator::kLikelihood;
  throw ParseError("unknown estimator '" + std::string(text) + "'");
}

std::string normalize_answer_text(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto is_trailing = [&](unsigned char c) { return is_space(c) || std::ispunct(c) != 0; };
  std::size_t begin = 0;
  while (begin < text.size() && is_space(text[begin])) ++begin;
  std::size_t end = text.size();
  while (end > begin && is_trailing(text[end - 1])) --end;
  std::string out(text.substr(begin, end - begin));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Entailment ExactMatchOracle::judge(const std::string& premise, const std::string& hypothesis) {
  return normalize_answer_text(premise) == normalize_answer_text(hypothesis) ? Entailment::kEntails
                                                                             : Entailment::kNeutral;
}

Entailment CachingOracle::judge(const std::string& premise, const std::string& hypothesis) {
  auto key = std::make_pair(premise, hypothesis);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  Entailment result = inner_->judge(premise, hypothesis);
  std::lock_guard lock(mutex_);
  ++calls_;
  // A concurrent caller may have raced us; the first stored answer wins.
  return cache_.emplace(std::move(key), result).first->second;
}

std::size_t CachingOracle::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

SemanticClustering cluster(std::span<const std::string> texts, EntailmentOracle& oracle) {
  if (texts.empty()) throw EmptyInput("cannot cluster an empty set of texts");
  SemanticClustering out;
  auto ask = [&](std::size_t a, std::size_t b) {
    try {
      return oracle.judge(texts[a], texts[b]);
    } catch (const OracleFailure&) {
      throw;
    } catch (const std::exception& e) {
      throw OracleFailure(e.what(), a, b);
    }
  };
  for (std::size_t i = 0; i < texts.size(); ++i) {
    bool placed = false;
    for (Cluster& c : out.clusters) {
      std::size_t rep = c.representative;
      if (ask(rep, i) == Entailment::kEntails && ask(i, rep) == Entailment::kEntails) {
        c.members.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) out.clusters.push_back(Cluster{{i}, i});
  }
  return out;
}

void assign_cluster_probabilities(SemanticClustering& clustering, Estimator estimator,
                                  std::span<const double> sequence_logprobs) {
  if (clustering.clusters.empty()) throw EmptyClustering("clustering has no clusters");
  std::size_t n = 0;
  for (const Cluster& c : clustering.clusters) n += c.members.size();
  clustering.estimator = estimator;
  clustering.cluster_probs.assign(clustering.clusters.size(), 0.0);

  if (estimator == Estimator::kDiscrete) {
    for (std::size_t k = 0; k < clustering.clusters.size(); ++k) {
      clustering.cluster_probs[k] = double(clustering.clusters[k].members.size()) / double(n);
    }
    return;
  }

  if (sequence_logprobs.size() != n) {
    throw LengthMismatch("likelihood estimator needs one sequence logprob per sample (" +
                         std::to_string(n) + "), got " + std::to_string(sequence_logprobs.size()));
  }
  // Renormalize exp(logprob) over the sampled set, shifted by the max for stability.
  const double peak = *std::max_element(sequence_logprobs.begin(), sequence_logprobs.end());
  double total = 0.0;
  for (double lp : sequence_logprobs) total += std::exp(lp - peak);
  for (std::size_t k = 0; k < clustering.clusters.size(); ++k) {
    double mass = 0.0;
    for (std::size_t idx : clustering.clusters[k].members) {
      if (idx >= n) throw LengthMismatch("cluster member index out of range");
      mass += std::exp(sequence_logprobs[idx] - peak);
    }
    clustering.cluster_probs[k] = mass / total;
  }
}

double semantic_entropy(SemanticClustering& clustering, Estimator estimator,
                        std::span<const double> sequence_logprobs) {
  assign_cluster_probabilities(clustering, estimator, sequence_logprobs);
  double entropy = 0.0;
  for (double p : clustering.cluster_probs) {
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::max(entropy, 0.0);
}

UncertaintyReport uncertainty_for_trace(const InferenceTrace& trace, EntailmentOracle& oracle,
                                        Estimator estimator, const std::optional<std::string>& question) {
  if (trace.samples.empty()) {
    throw EmptyInput("trace for sample '" + trace.sample_id + "' has no sampled generations");
  }
  UncertaintyReport report;
  report.sample_id = trace.sample_id;
  report.config_id = trace.config_id;
  report.task = trace.task();
  report.n_samples = trace.samples.size();
  report.temperature = trace.samples.front().sampling.temperature;

  std::vector<std::string> oracle_texts;
  std::vector<double> logprobs;
  for (const GenerationRecord& r : trace.samples) {
    report.texts.push_back(r.text());
    oracle_texts.push_back(question ? *question + " " + r.text() : r.text());
    logprobs.push_back(r.sequence_logprob());
  }
  report.clustering = cluster(oracle_texts, oracle);
  report.entropy = semantic_entropy(report.clustering, estimator, logprobs);
  report.n_clusters = report.clustering.clusters.size();
  return report;
}

nlohmann::json to_json(const UncertaintyReport& r) {
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t k = 0; k < r.clustering.clusters.size(); ++k) {
    const Cluster& c = r.clustering.clusters[k];
    clusters.push_back({{"members", c.members},
                        {"representative", c.representative},
                        {"probability", k < r.clustering.cluster_probs.size() ? r.clustering.cluster_probs[k] : 0.0}});
  }
  return {{"sample_id", r.sample_id},
          {"config_id", to_string(r.config_id)},
          {"task", to_string(r.task)},
          {"entropy", r.entropy},
          {"n_clusters", r.n_clusters},
          {"estimator", to_string(r.clustering.estimator)},
          {"temperature", r.temperature},
          {"n_samples", r.n_samples},
          {"clusters", std::move(clusters)},
          {"texts", r.texts}};
}

}  // namespace intervene
