#pragma once

// Sequential experimental design on an uncertainty class: ranking policies,
// hidden ground truth, and trace recording.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "koed/core_types.hpp"
#include "koed/dynamics.hpp"
#include "koed/experiment.hpp"
#include "koed/surrogate.hpp"

namespace koed {

enum class PolicyKind { sampling, surrogate, surrogate_iterative, entropy, random };

std::string to_string(PolicyKind kind);
/// Accepts sampling, surrogate, surrogate-iterative, entropy, random.
PolicyKind parse_policy_kind(const std::string& text);

struct OEDPolicy {
  PolicyKind kind = PolicyKind::sampling;
  std::size_t k = 2048;     // samples per MOCU estimate (sampling)
  std::uint64_t seed = 0;   // ranking seed (sampling) or draw seed (random)
  std::shared_ptr<const MpnnModel> model;  // surrogate kinds
  bool common_random_numbers = true;

  /// Throws ArgumentError when a parameter the kind needs is missing.
  void validate() const;
  bool ranks_once() const { return kind == PolicyKind::sampling || kind == PolicyKind::surrogate; }
};

struct GroundTruth {
  KuramotoInstance instance;
};

/// Uniform draw from the class, seeded.
GroundTruth draw_ground_truth(const UncertaintyClass& cls, std::uint64_t seed);

ExperimentOutcome conduct_experiment(const GroundTruth& truth, ExperimentId experiment);

/// Simulates the isolated pair instead of applying the closed-form criterion.
ExperimentOutcome conduct_experiment_simulated(const GroundTruth& truth, ExperimentId experiment,
                                               const SimConfig& config);

/// Expected remaining MOCU of every experiment in `remaining` (sampling or
/// surrogate policies); entries follow the order of `remaining`.
std::vector<double> score_experiments(const UncertaintyClass& cls, std::span<const ExperimentId> remaining,
                                      const OEDPolicy& policy, double control_omega, const SimConfig& config);

/// Picks the next experiment. `rng` is consumed only by the random policy.
/// Ties go to the lowest pair index.
ExperimentId select_experiment(const UncertaintyClass& cls, std::span<const ExperimentId> remaining,
                               const OEDPolicy& policy, double control_omega, const SimConfig& config,
                               std::mt19937_64& rng);

/// Memoized trace evaluation: the mean and sample std of `repeats` MOCU
/// estimates at k samples. Seeds derive from the class contents, so one class
/// always evaluates to the same numbers whichever policy reached it.
class MocuEvaluator {
 public:
  MocuEvaluator(std::size_t k, std::size_t repeats, std::uint64_t seed, double control_omega, SimConfig config);

  std::pair<double, double> evaluate(const UncertaintyClass& cls);
  std::size_t cache_size() const;
  double control_omega() const { return control_omega_; }

 private:
  std::size_t k_;
  std::size_t repeats_;
  std::uint64_t seed_;
  double control_omega_;
  SimConfig config_;
  mutable std::mutex mutex_;
  std::map<std::vector<double>, std::pair<double, double>> cache_;
};

/// 64-bit digest of a class's exact bit patterns.
std::uint64_t class_digest(const UncertaintyClass& cls);

struct OEDRunConfig {
  std::uint64_t truth_seed = 0;
  std::size_t trials = 1;
  std::size_t eval_k = 2048;
  std::size_t eval_repeats = 10;
  std::uint64_t eval_seed = 0;
  std::optional<double> control_omega;  // defaults to the mean frequency
  SimConfig config;
  bool simulate_outcomes = false;

  void validate() const;
};

/// One trace per trial. Trial t hides draw_ground_truth(cls, derive_seed(truth_seed, t)),
/// so runs with the same truth_seed face the same truths under every policy.
/// Pass an evaluator to share evaluations between runs.
std::vector<OEDTrace> run_oed(const UncertaintyClass& cls, const OEDPolicy& policy, const OEDRunConfig& run,
                              MocuEvaluator* evaluator = nullptr);

/// Mean MOCU per step over trials; entry 0 is the initial class.
std::vector<double> mean_curve(std::span<const OEDTrace> traces);

/// Columns trial, step, i, j, outcome, mocu_mean, mocu_std, select_seconds.
/// Step 0 carries the initial estimate with empty experiment fields.
std::string traces_csv(std::span<const OEDTrace> traces);
/// Columns step, then one mean-MOCU column per named curve.
std::string curves_csv(const std::vector<std::pair<std::string, std::vector<double>>>& curves);

}  // namespace koed
