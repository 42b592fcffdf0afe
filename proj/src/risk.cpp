#include "intervene/risk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "intervene/errors.hpp"

namespace intervene {

RiskCoverageCurve grc_curve(std::span<const ScoredOutcome> outcomes) {
  if (outcomes.empty()) throw EmptyInput("risk-coverage curve needs at least one outcome");
  std::vector<std::pair<double, bool>> ranked;
  ranked.reserve(outcomes.size());
  for (const ScoredOutcome& o : outcomes) {
    if (!std::isfinite(o.uncertainty)) {
      throw Error("uncertainty for sample '" + o.sample_id + "' is not finite");
    }
    ranked.emplace_back(o.uncertainty, o.failure);
  }
  std::sort(ranked.begin(), ranked.end());

  const double n = static_cast<double>(ranked.size());
  RiskCoverageCurve curve;
  std::size_t failures = 0;
  std::size_t previous_covered = 0;
  std::size_t previous_failures = 0;
  // Twice the area in units of 1/N^2; exact integer arithmetic.
  unsigned long long doubled_area = 0;
  for (std::size_t i = 0; i < ranked.size();) {
    std::size_t j = i;
    while (j < ranked.size() && ranked[j].first == ranked[i].first) {
      failures += ranked[j].second ? 1 : 0;
      ++j;
    }
    // Within a tie the cumulative risk grows linearly, so the trapezoid between the
    // group endpoints equals the sum of the per-position trapezoids.
    doubled_area += (unsigned long long)(j - previous_covered) * (previous_failures + failures);
    curve.points.push_back({double(j) / n, double(failures) / n});
    previous_covered = j;
    previous_failures = failures;
    i = j;
  }
  curve.augrc = double(doubled_area) / (2.0 * n * n);
  return curve;
}

GroupedRisk augrc_by_group(const std::map<GroupKey, std::vector<ScoredOutcome>>& groups) {
  GroupedRisk out;
  for (const auto& [key, outcomes] : groups) {
    if (outcomes.empty()) {
      out.skipped.push_back(key);
      continue;
    }
    out.groups.push_back({key, grc_curve(outcomes)});
  }
  return out;
}

void write_curve_csv(const RiskCoverageCurve& curve, std::ostream& out) {
  char buf[64];
  out << "coverage,joint_risk\n0,0\n";
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.coverage, p.joint_risk);
    out << buf;
  }
}

}  // namespace intervene
