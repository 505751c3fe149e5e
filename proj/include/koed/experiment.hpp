#pragma once

// Pairwise synchronization experiments: outcome probabilities under a uniform
// prior, the exact isolated-pair outcome, and the bound update it implies.

#include "koed/core_types.hpp"

namespace koed {

struct OutcomeProbabilities {
  double synchronized = 0.0;
  double unsynchronized = 0.0;
};

/// P(B=1) = (upper - t) / (upper - lower), P(B=0) = 1 - P(B=1), with t the
/// clamped sync threshold. A zero-width interval puts all mass on the outcome
/// the isolated-pair criterion gives at the point value.
OutcomeProbabilities outcome_probabilities(const UncertaintyClass& cls, ExperimentId experiment);

/// Synchronized raises the pair's lower bound to the clamped threshold,
/// otherwise the upper bound drops to it. Other pairs are untouched.
UncertaintyClass apply_outcome(const UncertaintyClass& cls, ExperimentId experiment, ExperimentOutcome outcome);

/// Isolated two-oscillator outcome: |w_i - w_j| / 2 <= a_ij.
ExperimentOutcome conduct_experiment(const KuramotoInstance& truth, ExperimentId experiment);

}  // namespace koed
