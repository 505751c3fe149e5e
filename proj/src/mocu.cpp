#include "koed/mocu.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "koed/parallel.hpp"

namespace koed {

OutcomeProbabilities outcome_probabilities(const UncertaintyClass& cls, ExperimentId experiment) {
  const auto k = pair_index(experiment.i, experiment.j, cls.n);
  const double lo = cls.lower[k];
  const double hi = cls.upper[k];
  if (hi == lo) {
    const bool sync = pair_threshold(cls.omegas, experiment.i, experiment.j) <= lo;
    return sync ? OutcomeProbabilities{1.0, 0.0} : OutcomeProbabilities{0.0, 1.0};
  }
  const double t = sync_threshold(cls, experiment.i, experiment.j);
  const double p_unsync = (t - lo) / (hi - lo);
  return {1.0 - p_unsync, p_unsync};
}

UncertaintyClass apply_outcome(const UncertaintyClass& cls, ExperimentId experiment, ExperimentOutcome outcome) {
  const auto k = pair_index(experiment.i, experiment.j, cls.n);
  const double t = sync_threshold(cls, experiment.i, experiment.j);
  UncertaintyClass out = cls;
  (outcome.synchronized ? out.lower[k] : out.upper[k]) = t;
  return out;
}

ExperimentOutcome conduct_experiment(const KuramotoInstance& truth, ExperimentId experiment) {
  const double a = truth.coupling(experiment.i, experiment.j);
  return {pair_threshold(truth.omegas, experiment.i, experiment.j) <= a};
}

nlohmann::json to_json(const MocuEstimate& e) {
  return {{"value", e.value}, {"standard_error", e.standard_error}, {"k", e.k},
          {"seed", e.seed},   {"elapsed_seconds", e.elapsed_seconds}};
}

KuramotoInstance sample_instance(const UncertaintyClass& cls, std::mt19937_64& rng) {
  KuramotoInstance inst{cls.n, cls.omegas, std::vector<double>(cls.lower.size())};
  for (std::size_t p = 0; p < cls.lower.size(); ++p) {
    const double u = unit_uniform(rng);
    inst.couplings[p] = cls.lower[p] == cls.upper[p] ? cls.lower[p] : cls.lower[p] + u * (cls.upper[p] - cls.lower[p]);
  }
  return inst;
}

std::mt19937_64 sample_stream(std::uint64_t seed, std::size_t index) {
  return std::mt19937_64(derive_seed(seed, index));
}

namespace {

constexpr std::size_t kChunk = 64;

}  // namespace

MocuEstimate estimate_mocu(const UncertaintyClass& cls, std::size_t k, double control_omega,
                           const SimConfig& config, std::uint64_t seed, bool retain_samples) {
  if (k < 1) throw ArgumentError("estimate_mocu: k must be >= 1");
  cls.validate();
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<double> xi(k);
  const std::size_t chunks = (k + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t first = c * kChunk;
    const std::size_t count = std::min(kChunk, k - first);
    std::vector<KuramotoInstance> batch;
    batch.reserve(count);
    for (std::size_t s = first; s < first + count; ++s) {
      auto rng = sample_stream(seed, s);
      batch.push_back(sample_instance(cls, rng));
    }
    std::vector<double> costs;
    try {
      costs = min_control_costs(batch, control_omega, config);
    } catch (const NoSynchronization& e) {
      const std::size_t sample = first + e.sample_index.value_or(0);
      throw NoSynchronization("sample " + std::to_string(sample) + ": " + e.what(), sample);
    }
    std::copy(costs.begin(), costs.end(), xi.begin() + static_cast<std::ptrdiff_t>(first));
  });

  const double worst = *std::max_element(xi.begin(), xi.end());
  double gap = 0.0;
  double mean = 0.0;
  for (double x : xi) {
    gap += worst - x;
    mean += x;
  }
  const double kd = static_cast<double>(k);
  mean /= kd;
  double var = 0.0;
  for (double x : xi) var += (x - mean) * (x - mean);

  MocuEstimate out;
  out.value = gap / kd;
  out.standard_error = k > 1 ? std::sqrt(var / (kd - 1.0) / kd) : 0.0;
  out.k = k;
  out.seed = seed;
  if (retain_samples) out.xi = std::move(xi);
  out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

RemainingMocu expected_remaining_mocu(const UncertaintyClass& cls, ExperimentId experiment, std::size_t k,
                                      double control_omega, const SimConfig& config, std::uint64_t seed,
                                      RemainingMocuOptions options) {
  cls.validate();
  RemainingMocu out;
  out.probabilities = outcome_probabilities(cls, experiment);
  const auto pair = pair_index(experiment.i, experiment.j, cls.n);
  auto branch_seed = [&](std::uint64_t branch) {
    return options.common_random_numbers ? seed : derive_seed(seed, pair + 1, branch + 1);
  };
  if (out.probabilities.synchronized > 0.0) {
    out.on_synchronized = estimate_mocu(apply_outcome(cls, experiment, {true}), k, control_omega, config,
                                        branch_seed(1));
    out.value += out.probabilities.synchronized * out.on_synchronized->value;
  }
  if (out.probabilities.unsynchronized > 0.0) {
    out.on_unsynchronized = estimate_mocu(apply_outcome(cls, experiment, {false}), k, control_omega, config,
                                          branch_seed(0));
    out.value += out.probabilities.unsynchronized * out.on_unsynchronized->value;
  }
  return out;
}

}  // namespace koed
