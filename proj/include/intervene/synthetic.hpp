#pragma once

#include <cstddef>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "intervene/adapter.hpp"

namespace intervene {

/// Correct greedy answers per configuration in the synthetic scenario, out of 10
/// samples, in canonical configuration order.
inline constexpr std::array<std::size_t, 7> kSyntheticCorrect = {5, 8, 10, 5, 9, 10, 6};

/// Manifest document for `n` synthetic yes/no samples whose images live in
/// `images/` next to the manifest.
nlohmann::json synthetic_manifest(std::size_t n);

/// Mock scenario for the synthetic samples. Failures in image-only configurations are
/// confident (all samples agree), failures under contradictory context are split 5/5.
Scenario synthetic_scenario(std::size_t n);

/// Writes manifest.json, scenario.json, spec.json and images/ into `dir`.
void write_synthetic_dataset(const std::filesystem::path& dir, std::size_t n = 10);

}  // namespace intervene
