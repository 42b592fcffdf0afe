#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "intervene/trace.hpp"

namespace intervene {

enum class Entailment { kEntails, kNeutral, kContradicts };

std::string_view to_string(Entailment e);
Entailment parse_entailment(std::string_view text);

/// Natural-language-inference backend. Must be deterministic for fixed inputs within
/// one run; implementations signal backend failures by throwing Error.
class EntailmentOracle {
 public:
  virtual ~EntailmentOracle() = default;
  virtual Entailment judge(const std::string& premise, const std::string& hypothesis) = 0;
};

/// Trim, ASCII casefold and strip trailing punctuation.
std::string normalize_answer_text(std::string_view text);

/// Entails iff both texts normalize to the same string; neutral otherwise.
class ExactMatchOracle : public EntailmentOracle {
 public:
  Entailment judge(const std::string& premise, const std::string& hypothesis) override;
};

/// Memoizes another oracle. Thread-safe.
class CachingOracle : public EntailmentOracle {
 public:
  explicit CachingOracle(std::shared_ptr<EntailmentOracle> inner) : inner_(std::move(inner)) {}
  Entailment judge(const std::string& premise, const std::string& hypothesis) override;
  std::size_t calls() const;

 private:
  std::shared_ptr<EntailmentOracle> inner_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, Entailment> cache_;
  std::size_t calls_ = 0;
};

enum class Estimator { kDiscrete, kLikelihood };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view text);

struct Cluster {
  std::vector<std::size_t> members;
  std::size_t representative = 0;
  bool operator==(const Cluster&) const = default;
};

struct SemanticClustering {
  std::vector<Cluster> clusters;
  /// Filled by assign_cluster_probabilities; empty straight out of cluster().
  std::vector<double> cluster_probs;
  Estimator estimator = Estimator::kDiscrete;
};

/// Greedy bidirectional-entailment clustering. Each text, in input order, joins the
/// first cluster whose representative entails it and is entailed by it; otherwise it
/// founds a new cluster. Throws EmptyInput for no texts and OracleFailure (carrying
/// the pair of text indices) when the backend fails.
SemanticClustering cluster(std::span<const std::string> texts, EntailmentOracle& oracle);

/// p(c|x): cluster fraction for the discrete estimator; for the likelihood estimator
/// the renormalized sequence probabilities exp(sum of token logprobs), summed per cluster.
void assign_cluster_probabilities(SemanticClustering& clustering, Estimator estimator,
                                  std::span<const double> sequence_logprobs = {});

/// -sum_c p(c|x) ln p(c|x) in nats. Throws EmptyClustering on an empty clustering and
/// LengthMismatch when the likelihood estimator lacks one logprob per sample.
double semantic_entropy(SemanticClustering& clustering, Estimator estimator,
                        std::span<const double> sequence_logprobs = {});

struct UncertaintyReport {
  std::string sample_id;
  ConfigId config_id = ConfigId::kQ;
  Task task = Task::kAnswer;
  double entropy = 0.0;
  std::size_t n_clusters = 0;
  SemanticClustering clustering;
  double temperature = 0.0;
  std::size_t n_samples = 0;
  /// The sampled texts, so clusters can be shown as answer tables.
  std::vector<std::string> texts;
};

/// Clusters the sampled outputs of a trace and computes their semantic entropy. When
/// `question` is given it is prepended to every text before it reaches the oracle.
UncertaintyReport uncertainty_for_trace(const InferenceTrace& trace, EntailmentOracle& oracle,
                                        Estimator estimator,
                                        const std::optional<std::string>& question = std::nullopt);

nlohmann::json to_json(const UncertaintyReport& report);

}  // namespace intervene
