#pragma once

// Domain value types shared by every koed module.
//
// Couplings and bounds are stored as flat vectors indexed by pair, enumerating
// (1,2),(1,3),...,(1,N),(2,3),...,(N-1,N). Oscillator indices in every public
// interface are 1-based.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace koed {

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of unordered pairs among n oscillators.
constexpr std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

/// Lexicographic index of the pair (i, j), 1 <= i < j <= n.
std::size_t pair_index(int i, int j, int n);

struct ExperimentId {
  int i = 0;
  int j = 0;

  friend bool operator==(const ExperimentId&, const ExperimentId&) = default;
};

/// Inverse of pair_index.
ExperimentId pair_from_index(std::size_t k, int n);

/// All pairs of an n-oscillator model in pair_index order.
std::vector<ExperimentId> all_experiments(int n);

struct ExperimentOutcome {
  bool synchronized = false;

  friend bool operator==(const ExperimentOutcome&, const ExperimentOutcome&) = default;
};

struct UncertaintyClass {
  int n = 0;
  std::vector<double> omegas;
  std::vector<double> lower;
  std::vector<double> upper;

  /// Throws ArgumentError if sizes or bounds are inconsistent.
  void validate() const;

  double mean_omega() const;
  double width(std::size_t k) const { return upper[k] - lower[k]; }

  friend bool operator==(const UncertaintyClass&, const UncertaintyClass&) = default;
};

struct KuramotoInstance {
  int n = 0;
  std::vector<double> omegas;
  std::vector<double> couplings;

  void validate() const;

  /// Coupling between oscillators i and j (1-based, either order).
  double coupling(int i, int j) const;

  friend bool operator==(const KuramotoInstance&, const KuramotoInstance&) = default;
};

/// Threshold coupling for the pair to synchronize in isolation, clamped into
/// the pair's bound interval: min(max(|w_i - w_j| / 2, lower), upper).
double sync_threshold(const UncertaintyClass& cls, int i, int j);

/// Raw isolated-pair threshold |w_i - w_j| / 2 without clamping.
double pair_threshold(const std::vector<double>& omegas, int i, int j);

struct TraceStep {
  ExperimentId experiment;
  ExperimentOutcome outcome;
  double mocu_mean = 0.0;
  double mocu_std = 0.0;
  double select_seconds = 0.0;
};

struct OEDTrace {
  int trial = 0;
  double initial_mocu_mean = 0.0;
  double initial_mocu_std = 0.0;
  std::vector<TraceStep> steps;

  /// Throws ArgumentError when an experiment appears twice.
  void validate() const;
};

// JSON (de)serialization. Floats are written with 17 significant digits so a
// write/read cycle is bit-exact.
std::string to_json(const UncertaintyClass& cls);
std::string to_json(const KuramotoInstance& inst);
UncertaintyClass class_from_json(const std::string& text);
KuramotoInstance instance_from_json(const std::string& text);

UncertaintyClass load_class(const std::string& path);
KuramotoInstance load_instance(const std::string& path);
void save_class(const std::string& path, const UncertaintyClass& cls);
void save_instance(const std::string& path, const KuramotoInstance& inst);

/// Published five-oscillator uncertainty class used for OED evaluation.
UncertaintyClass published_class_n5();
/// Published seven-oscillator uncertainty class used for OED evaluation.
UncertaintyClass published_class_n7();

}  // namespace koed
