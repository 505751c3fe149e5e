#pragma once

// Extended Kuramoto dynamics with a uniformly coupled control oscillator,
// frequency-synchronization detection, and the minimal-control-cost search.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "koed/core_types.hpp"

namespace koed {

class NumericalBlowup : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when no control strength up to SimConfig::max_control synchronizes
/// an instance. Carries the sample index when raised from a batch.
class NoSynchronization : public std::runtime_error {
 public:
  explicit NoSynchronization(const std::string& what, std::optional<std::size_t> sample = std::nullopt)
      : std::runtime_error(what), sample_index(sample) {}
  std::optional<std::size_t> sample_index;
};

struct SimConfig {
  double step = 0.02;             // RK4 output step h (subdivided for stiff couplings)
  double duration = 30.0;         // integrate over [0, duration]
  double window_fraction = 0.2;   // trailing share of the run used for measurement
  double sync_tol = 1e-2;         // max admissible mean frequency spread
  double max_control = 512.0;     // cap for the +2 bracketing loop
  double bisect_tol = 2.5e-4;     // stop bisection at this bracket width

  void validate() const;
  std::size_t total_steps() const;
  std::size_t window_start() const;
};

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base = {});
nlohmann::json to_json(const SimConfig& config);

/// Instantaneous frequencies of all N+1 oscillators (control last) sampled at
/// every step of the measurement window.
struct FrequencyTrace {
  std::size_t oscillators = 0;
  std::vector<double> times;
  std::vector<double> values;  // row-major [sample][oscillator]

  std::span<const double> at(std::size_t sample) const {
    return {values.data() + sample * oscillators, oscillators};
  }
  /// max_i - min_i of the frequencies at one sample.
  double spread(std::size_t sample) const;
  /// Time average of spread over the window.
  double mean_spread() const;
};

FrequencyTrace integrate(const KuramotoInstance& instance, double control_strength, double control_omega,
                         const SimConfig& config);

bool is_synchronized(const KuramotoInstance& instance, double control_strength, double control_omega,
                     const SimConfig& config);

/// Minimal control coupling that synchronizes the instance: +2 bracketing
/// from 2, then bisection on [0, upper] down to config.bisect_tol. Returns the
/// midpoint of the final bracket.
double min_control_cost(const KuramotoInstance& instance, double control_omega, const SimConfig& config);

/// Same search for many instances at once. Result k depends only on
/// instances[k]; NoSynchronization carries the failing index.
std::vector<double> min_control_costs(std::span<const KuramotoInstance> instances, double control_omega,
                                      const SimConfig& config);

/// Mean frequency spread for many (instance, control strength) pairs.
std::vector<double> mean_spreads(std::span<const KuramotoInstance> instances,
                                 std::span<const double> control_strengths, double control_omega,
                                 const SimConfig& config);

}  // namespace koed
