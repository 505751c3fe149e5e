#pragma once

// Labeled training data: random uncertainty classes drawn from a generation
// profile, labeled with sampled MOCU estimates, stored as JSON lines.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "koed/core_types.hpp"
#include "koed/dynamics.hpp"

namespace koed {

struct GenProfile {
  std::string name = "custom";
  int n = 5;
  double c = 6.0;   // frequencies ~ U[-c, c]
  double d1 = 1.1;  // strong factor cap
  double d2 = 0.6;  // weak factor cap
  double d3 = 0.3;  // uncertainty factor cap
  double partitioned_fraction = 0.67;
  std::size_t count = 100;
  std::size_t label_k = 2048;
  std::uint64_t seed = 0;

  void validate() const;
};

GenProfile profile_n5();
GenProfile profile_n7();
/// "n5", "n7" or "custom" (the defaults above).
GenProfile profile_by_name(const std::string& name);

nlohmann::json to_json(const GenProfile& profile);
GenProfile profile_from_json(const nlohmann::json& j, GenProfile base = {});

struct PairBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Bounds for one pair with isolated-pair threshold f: the midpoint is
/// (strong ? d_strong : d_weak) * f and the half-width d_unc * f, with the
/// lower bound clamped at zero.
PairBounds pair_bounds(double f, bool strong, double d_strong, double d_weak, double d_unc);

struct GeneratedClass {
  UncertaintyClass cls;
  bool partitioned = false;
  std::vector<int> oscillator_flags;  // s_i, only when partitioned
  std::vector<int> strong;            // b per pair
};

GeneratedClass generate_class(const GenProfile& profile, std::mt19937_64& rng);

struct LabeledSample {
  UncertaintyClass cls;
  double mocu_label = 0.0;
  double normalized_label = 0.0;
  bool partitioned = false;
};

struct DatasetStats {
  double mean = 0.0;
  double std = 1.0;  // population standard deviation
  bool std_flagged = false;  // fewer than two labels or zero spread; std forced to 1
  std::size_t failures = 0;  // samples dropped because labeling failed
};

struct Dataset {
  GenProfile profile;
  SimConfig config;
  DatasetStats stats;
  std::vector<LabeledSample> samples;
};

/// Mean and population std of the labels, then normalized_label for each.
DatasetStats normalize_labels(std::vector<LabeledSample>& samples);

/// Sample i is generated from derive_seed(seed, i, 0) and labeled with
/// derive_seed(seed, i, 1) at the class's mean frequency, so the result does
/// not depend on the worker count.
Dataset generate_dataset(const GenProfile& profile, const SimConfig& config = {});

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

/// First floor(fraction * size) samples, then the rest.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split_dataset(
    std::span<const LabeledSample> samples, double fraction);

}  // namespace koed
