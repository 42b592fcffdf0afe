#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace intervene {

struct ScoredOutcome {
  std::string sample_id;
  bool failure = false;  // Y_f = 1
  double uncertainty = 0.0;
};

struct RiskCoveragePoint {
  double coverage = 0.0;
  double joint_risk = 0.0;
};

/// Generalized risk-coverage curve. One point per distinct uncertainty value, sorted
/// by coverage; the implicit origin (0, 0) is not stored.
struct RiskCoverageCurve {
  std::vector<RiskCoveragePoint> points;
  double augrc = 0.0;
};

/// Sorts outcomes by uncertainty, most confident first. At working point k the
/// coverage is k/N and the joint risk is the failure count among the k most confident
/// outcomes over N. Tied uncertainties form one working point with their failures
/// spread uniformly across the tie, and the area is the trapezoid rule from (0, 0):
/// AUGRC = (1/N) sum_k (risk(k-1) + risk(k)) / 2, which lies in [0, 0.5].
/// Throws EmptyInput for no outcomes and Error for non-finite uncertainties.
RiskCoverageCurve grc_curve(std::span<const ScoredOutcome> outcomes);

struct GroupKey {
  std::string model_id;
  std::string config_id;
  auto operator<=>(const GroupKey&) const = default;
};

struct GroupRisk {
  GroupKey key;
  RiskCoverageCurve curve;
};

struct GroupedRisk {
  std::vector<GroupRisk> groups;
  /// Groups that were empty and therefore skipped.
  std::vector<GroupKey> skipped;
};

GroupedRisk augrc_by_group(const std::map<GroupKey, std::vector<ScoredOutcome>>& groups);

/// Writes "coverage,joint_risk" rows, origin included.
void write_curve_csv(const RiskCoverageCurve& curve, std::ostream& out);

}  // namespace intervene
