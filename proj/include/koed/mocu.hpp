#pragma once

// Monte Carlo estimation of the mean objective cost of uncertainty and of the
// expected remaining MOCU of a pairwise experiment.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "koed/core_types.hpp"
#include "koed/dynamics.hpp"
#include "koed/experiment.hpp"

namespace koed {

struct MocuEstimate {
  double value = 0.0;           // mean over samples of (max xi - xi)
  double standard_error = 0.0;  // sample std of xi / sqrt(k)
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double elapsed_seconds = 0.0;
  std::vector<double> xi;  // per-sample costs, empty unless retained
};

nlohmann::json to_json(const MocuEstimate& estimate);

/// Draws every coupling independently and uniformly from its interval.
KuramotoInstance sample_instance(const UncertaintyClass& cls, std::mt19937_64& rng);

/// Engine for sample `index` of an estimate seeded with `seed`. Sample i of
/// two estimates with the same seed consumes the same variates, which is
/// what makes conditioned estimates share noise.
std::mt19937_64 sample_stream(std::uint64_t seed, std::size_t index);

/// Estimates M(A) from k sampled instances. Deterministic given seed and
/// independent of KOED_THREADS.
MocuEstimate estimate_mocu(const UncertaintyClass& cls, std::size_t k, double control_omega,
                           const SimConfig& config, std::uint64_t seed, bool retain_samples = false);

struct RemainingMocu {
  double value = 0.0;
  OutcomeProbabilities probabilities;
  std::optional<MocuEstimate> on_synchronized;
  std::optional<MocuEstimate> on_unsynchronized;
};

struct RemainingMocuOptions {
  /// Both branches (and every experiment) reuse the variates of `seed`.
  /// When false each branch gets its own derived stream.
  bool common_random_numbers = true;
};

/// R(i,j) = sum_b P(B=b) M(A | B=b). Branches with zero probability are not
/// estimated.
RemainingMocu expected_remaining_mocu(const UncertaintyClass& cls, ExperimentId experiment, std::size_t k,
                                      double control_omega, const SimConfig& config, std::uint64_t seed,
                                      RemainingMocuOptions options = {});

}  // namespace koed
