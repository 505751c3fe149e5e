#include "koed/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <utility>
#include <variant>

namespace koed {

void SimConfig::validate() const {
  if (!(step > 0.0)) throw ArgumentError("SimConfig: step must be > 0");
  if (!(duration >= 10.0 * step)) throw ArgumentError("SimConfig: duration must be >= 10 * step");
  if (!(window_fraction > 0.0 && window_fraction < 1.0))
    throw ArgumentError("SimConfig: window_fraction must lie in (0, 1)");
  if (!(sync_tol > 0.0)) throw ArgumentError("SimConfig: sync_tol must be > 0");
  if (!(bisect_tol > 0.0)) throw ArgumentError("SimConfig: bisect_tol must be > 0");
  if (!(max_control >= 2.0)) throw ArgumentError("SimConfig: max_control must be >= 2");
}

std::size_t SimConfig::total_steps() const { return static_cast<std::size_t>(std::llround(duration / step)); }

std::size_t SimConfig::window_start() const {
  const auto total = total_steps();
  const auto window = static_cast<std::size_t>(std::llround(window_fraction * static_cast<double>(total)));
  return total - std::max<std::size_t>(window, 1);
}

SimConfig sim_config_from_json(const nlohmann::json& j, SimConfig base) {
  if (!j.is_object()) throw FormatError("sim config must be a JSON object");
  auto read = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw FormatError(std::string("sim config field '") + key + "' must be a number");
    field = j.at(key).get<double>();
  };
  read("step", base.step);
  read("duration", base.duration);
  read("window_fraction", base.window_fraction);
  read("sync_tol", base.sync_tol);
  read("max_control", base.max_control);
  read("bisect_tol", base.bisect_tol);
  base.validate();
  return base;
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"step", c.step},         {"duration", c.duration},       {"window_fraction", c.window_fraction},
          {"sync_tol", c.sync_tol}, {"max_control", c.max_control}, {"bisect_tol", c.bisect_tol}};
}

double FrequencyTrace::spread(std::size_t sample) const {
  const auto f = at(sample);
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  return *hi - *lo;
}

double FrequencyTrace::mean_spread() const {
  double sum = 0.0;
  for (std::size_t s = 0; s < times.size(); ++s) sum += spread(s);
  return sum / static_cast<double>(times.size());
}

namespace {

constexpr std::size_t kLanes = 8;
// GCC/Clang vector extension: element-wise arithmetic over all lanes, lowered
// to whatever SIMD width the target offers.
typedef double Lane __attribute__((vector_size(kLanes * sizeof(double))));

Lane splat(double v) { return Lane{} + v; }

// Integrates up to kLanes independent copies of the extended model side by
// side. Phases are carried as unit phasors z = exp(i*theta) so the right-hand
// side needs no trigonometric calls:
//   dtheta_i/dt = w_i + Im(conj(z_i) * sum_j a_ij z_j),  dz_i/dt = i * dtheta_i/dt * z_i.
// Every lane runs the same instruction sequence, so a lane's result does not
// depend on which lane or batch it occupies. M counts oscillators including
// the control oscillator.
template <std::size_t M>
class LaneKernel {
 public:
  using State = std::array<Lane, M>;

  // The control oscillator takes the last slot.
  void load(std::size_t lane, const KuramotoInstance& inst, double control_strength, double control_omega) {
    const auto n = static_cast<std::size_t>(inst.n);
    double ref = control_omega;
    for (double w : inst.omegas) ref += w;
    ref /= static_cast<double>(n + 1);
    frame_[lane] = ref;
    for (std::size_t i = 0; i < n; ++i) omega_[i][lane] = inst.omegas[i] - ref;
    omega_[n][lane] = control_omega - ref;
    std::size_t src = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        coupling_[i][j][lane] = inst.couplings[src];
        coupling_[j][i][lane] = inst.couplings[src++];
      }
      coupling_[i][n][lane] = control_strength;
      coupling_[n][i][lane] = control_strength;
    }
  }

  void copy_lane(std::size_t from, std::size_t to) {
    frame_[to] = frame_[from];
    for (auto& w : omega_) w[to] = w[from];
    for (auto& row : coupling_)
      for (auto& a : row) a[to] = a[from];
  }

  Lane run(const SimConfig& config, std::size_t substeps, FrequencyTrace* record, std::size_t record_lane) {
    const std::size_t total = config.total_steps();
    const std::size_t first = config.window_start();
    const double h = config.step;
    const double inner = h / static_cast<double>(substeps);
    State re, im, fre, fim, freq;
    for (auto& r : re) r = splat(1.0);
    for (auto& q : im) q = Lane{};
    Lane sum{};
    if (record) {
      record->oscillators = M;
      record->times.clear();
      record->values.clear();
    }
    for (std::size_t s = 0; s <= total; ++s) {
      rhs(re, im, fre, fim, freq);
      if (s >= first) {
        accumulate_spread(freq, sum);
        if (record) {
          record->times.push_back(static_cast<double>(s) * h);
          for (std::size_t i = 0; i < M; ++i) record->values.push_back(freq[i][record_lane] + frame_[record_lane]);
        }
      }
      if (s == total) break;
      for (std::size_t sub = 0; sub < substeps; ++sub) {
        if (sub > 0) rhs(re, im, fre, fim, freq);
        step(inner, re, im, fre, fim, freq);
      }
    }
    const double count = static_cast<double>(total - first + 1);
    return sum / count;
  }

 private:
  // Phasor derivative (fre, fim) and instantaneous frequencies at (re, im).
  void rhs(const State& re, const State& im, State& fre, State& fim, State& freq) const {
    State sr{}, si{};
#pragma GCC unroll 16
    for (std::size_t i = 0; i < M; ++i) {
#pragma GCC unroll 16
      for (std::size_t j = i + 1; j < M; ++j) {
        const Lane a = coupling_[i][j];
        sr[i] += a * re[j];
        si[i] += a * im[j];
        sr[j] += a * re[i];
        si[j] += a * im[i];
      }
    }
#pragma GCC unroll 16
    for (std::size_t i = 0; i < M; ++i) {
      const Lane f = omega_[i] + (re[i] * si[i] - im[i] * sr[i]);
      freq[i] = f;
      fre[i] = -f * im[i];
      fim[i] = f * re[i];
    }
  }

  static void accumulate_spread(const State& freq, Lane& sum) {
    Lane lo = freq[0];
    Lane hi = freq[0];
    for (std::size_t i = 1; i < M; ++i) {
      lo = freq[i] < lo ? freq[i] : lo;
      hi = freq[i] > hi ? freq[i] : hi;
    }
    sum += hi - lo;
  }

  // Classic RK4 on the phasors. The exact flow keeps |z| = 1; the O(h^5)
  // drift per step is removed with one Newton step toward unit modulus.
  // Expects (fre, fim) to hold k1 on entry.
  void step(double h, State& re, State& im, State& fre, State& fim, State& freq) const {
    const Lane half = splat(0.5 * h);
    const Lane full = splat(h);
    const Lane sixth = splat(h / 6.0);
    State acc_re = fre, acc_im = fim, tre, tim;
#pragma GCC unroll 16
    for (std::size_t i = 0; i < M; ++i) {
      tre[i] = re[i] + half * fre[i];
      tim[i] = im[i] + half * fim[i];
    }
    rhs(tre, tim, fre, fim, freq);  // k2
#pragma GCC unroll 16
    for (std::size_t i = 0; i < M; ++i) {
      acc_re[i] += 2.0 * fre[i];
      acc_im[i] += 2.0 * fim[i];
      tre[i] = re[i] + half * fre[i];
      tim[i] = im[i] + half * fim[i];
    }
    rhs(tre, tim, fre, fim, freq);  // k3
#pragma GCC unroll 16
    for (std::size_t i = 0; i < M; ++i) {
      acc_re[i] += 2.0 * fre[i];
      acc_im[i] += 2.0 * fim[i];
      tre[i] = re[i] + full * fre[i];
      tim[i] = im[i] + full * fim[i];
    }
    rhs(tre, tim, fre, fim, freq);  // k4
#pragma GCC unroll 16
    for (std::size_t i = 0; i < M; ++i) {
      const Lane r = re[i] + sixth * (acc_re[i] + fre[i]);
      const Lane q = im[i] + sixth * (acc_im[i] + fim[i]);
      const Lane scale = 1.5 - 0.5 * (r * r + q * q);
      re[i] = r * scale;
      im[i] = q * scale;
    }
  }

  State omega_{};
  Lane frame_{};
  std::array<State, M> coupling_{};  // symmetric, zero diagonal
};

constexpr std::size_t kMaxOscillators = 13;

// Type-erased front for LaneKernel<M>, M in [2, kMaxOscillators].
class LaneBatch {
 public:
  explicit LaneBatch(std::size_t oscillators) {
    if (oscillators < 2 || oscillators > kMaxOscillators)
      throw ArgumentError("dynamics supports 1 to " + std::to_string(kMaxOscillators - 1) + " oscillators");
    make(oscillators, std::make_index_sequence<kMaxOscillators + 1>{});
  }

  void load(std::size_t lane, const KuramotoInstance& inst, double control_strength, double control_omega) {
    std::visit([&](auto& k) { k->load(lane, inst, control_strength, control_omega); }, kernel_);
  }
  void copy_lane(std::size_t from, std::size_t to) {
    std::visit([&](auto& k) { k->copy_lane(from, to); }, kernel_);
  }
  Lane run(const SimConfig& config, std::size_t substeps, FrequencyTrace* record = nullptr,
           std::size_t record_lane = 0) {
    return std::visit([&](auto& k) { return k->run(config, substeps, record, record_lane); }, kernel_);
  }

 private:
  template <std::size_t... Ms>
  static auto variant_of(std::index_sequence<Ms...>) -> std::variant<std::unique_ptr<LaneKernel<Ms + 2>>...>;
  using Variant = decltype(variant_of(std::make_index_sequence<kMaxOscillators - 1>{}));

  template <std::size_t... Ms>
  void make(std::size_t m, std::index_sequence<Ms...>) {
    (void)((Ms == m && Ms >= 2 ? (emplace<Ms>(), true) : false) || ...);
  }
  template <std::size_t M>
  void emplace() {
    if constexpr (M >= 2) kernel_ = std::make_unique<LaneKernel<M>>();
  }

  Variant kernel_;
};

// RK4 substeps per output step so that step * (rotation rate + twice the
// largest coupling row sum) stays at or below one; strong couplings would
// otherwise leave the stability region.
std::size_t required_substeps(const KuramotoInstance& inst, double control_strength, double control_omega,
                              double step) {
  const auto n = static_cast<std::size_t>(inst.n);
  double ref = control_omega;
  for (double w : inst.omegas) ref += w;
  ref /= static_cast<double>(n + 1);
  double rotation = std::abs(control_omega - ref);
  for (double w : inst.omegas) rotation = std::max(rotation, std::abs(w - ref));
  std::vector<double> row(n + 1, 0.0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      row[i] += inst.couplings[src];
      row[j] += inst.couplings[src++];
    }
    row[i] += control_strength;
    row[n] += control_strength;
  }
  const double rate = rotation + 2.0 * *std::max_element(row.begin(), row.end());
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(step * rate)));
}

// Runs every busy lane, grouping lanes by substep count so a lane's result
// never depends on its neighbours. load(l) must (re)load lane l.
template <class Load>
Lane run_grouped(LaneBatch& batch, const SimConfig& config, const std::array<bool, kLanes>& busy,
                 const std::array<std::size_t, kLanes>& substeps, Load&& load) {
  Lane out{};
  std::array<bool, kLanes> done{};
  for (std::size_t lead = 0; lead < kLanes; ++lead) {
    if (!busy[lead] || done[lead]) continue;
    const std::size_t group = substeps[lead];
    for (std::size_t l = 0; l < kLanes; ++l)
      if (busy[l] && substeps[l] == group) load(l);
    for (std::size_t l = 0; l < kLanes; ++l)
      if (!(busy[l] && substeps[l] == group)) batch.copy_lane(lead, l);
    const Lane spread = batch.run(config, group);
    for (std::size_t l = 0; l < kLanes; ++l)
      if (busy[l] && substeps[l] == group) {
        out[l] = spread[l];
        done[l] = true;
      }
  }
  return out;
}

void check_inputs(const KuramotoInstance& inst, double control_strength, double control_omega) {
  inst.validate();
  if (!(control_strength >= 0.0)) throw ArgumentError("control strength must be >= 0");
  if (!std::isfinite(control_omega) || !std::isfinite(control_strength))
    throw ArgumentError("control parameters must be finite");
}

std::size_t common_size(std::span<const KuramotoInstance> instances) {
  const int n = instances.front().n;
  for (const auto& inst : instances)
    if (inst.n != n) throw ArgumentError("batched instances must share the oscillator count");
  return static_cast<std::size_t>(n) + 1;
}

// Bracketing and bisection state for one instance.
struct Search {
  enum class Phase { Bracket, Bisect, Done };
  Phase phase = Phase::Bracket;
  double lo = 0.0;
  double hi = 2.0;
  double query = 2.0;

  void update(bool synced, const SimConfig& config, std::size_t index) {
    if (phase == Phase::Bracket) {
      if (!synced) {
        hi += 2.0;
        if (hi > config.max_control)
          throw NoSynchronization("no synchronization up to control strength " + std::to_string(config.max_control) +
                                      " (sample " + std::to_string(index) + ")",
                                  index);
        query = hi;
        return;
      }
      lo = 0.0;
      phase = Phase::Bisect;
    } else {
      (synced ? hi : lo) = query;
    }
    if (hi - lo <= config.bisect_tol) {
      phase = Phase::Done;
    } else {
      query = 0.5 * (lo + hi);
    }
  }

  double result() const { return 0.5 * (lo + hi); }
};

}  // namespace

FrequencyTrace integrate(const KuramotoInstance& instance, double control_strength, double control_omega,
                         const SimConfig& config) {
  config.validate();
  check_inputs(instance, control_strength, control_omega);
  LaneBatch batch(static_cast<std::size_t>(instance.n) + 1);
  for (std::size_t l = 0; l < kLanes; ++l) batch.load(l, instance, control_strength, control_omega);
  FrequencyTrace trace;
  const auto spread =
      batch.run(config, required_substeps(instance, control_strength, control_omega, config.step), &trace, 0);
  if (!std::isfinite(spread[0]) ||
      !std::all_of(trace.values.begin(), trace.values.end(), [](double v) { return std::isfinite(v); }))
    throw NumericalBlowup("non-finite state while integrating");
  return trace;
}

std::vector<double> mean_spreads(std::span<const KuramotoInstance> instances,
                                 std::span<const double> control_strengths, double control_omega,
                                 const SimConfig& config) {
  config.validate();
  if (instances.size() != control_strengths.size())
    throw ArgumentError("mean_spreads: one control strength per instance required");
  std::vector<double> out(instances.size());
  if (instances.empty()) return out;
  for (std::size_t k = 0; k < instances.size(); ++k) check_inputs(instances[k], control_strengths[k], control_omega);
  LaneBatch batch(common_size(instances));
  for (std::size_t base = 0; base < instances.size(); base += kLanes) {
    const std::size_t used = std::min(kLanes, instances.size() - base);
    std::array<bool, kLanes> busy{};
    std::array<std::size_t, kLanes> substeps{};
    for (std::size_t l = 0; l < used; ++l) {
      busy[l] = true;
      substeps[l] = required_substeps(instances[base + l], control_strengths[base + l], control_omega, config.step);
    }
    const auto spread = run_grouped(batch, config, busy, substeps, [&](std::size_t l) {
      batch.load(l, instances[base + l], control_strengths[base + l], control_omega);
    });
    for (std::size_t l = 0; l < used; ++l) {
      if (!std::isfinite(spread[l]))
        throw NumericalBlowup("non-finite state while integrating sample " + std::to_string(base + l));
      out[base + l] = spread[l];
    }
  }
  return out;
}

bool is_synchronized(const KuramotoInstance& instance, double control_strength, double control_omega,
                     const SimConfig& config) {
  const double spread = mean_spreads({&instance, 1}, {&control_strength, 1}, control_omega, config).front();
  return spread < config.sync_tol;
}

std::vector<double> min_control_costs(std::span<const KuramotoInstance> instances, double control_omega,
                                      const SimConfig& config) {
  config.validate();
  std::vector<double> out(instances.size());
  if (instances.empty()) return out;
  for (const auto& inst : instances) check_inputs(inst, 0.0, control_omega);
  LaneBatch batch(common_size(instances));

  // Lanes are refilled as searches finish so every run keeps all lanes busy.
  std::array<std::size_t, kLanes> owner{};
  std::array<Search, kLanes> search{};
  std::array<bool, kLanes> busy{};
  std::size_t next = 0;
  std::size_t active = 0;
  auto refill = [&](std::size_t lane) {
    if (next >= instances.size()) {
      busy[lane] = false;
      return;
    }
    owner[lane] = next;
    search[lane] = Search{};
    busy[lane] = true;
    ++next;
    ++active;
  };
  for (std::size_t l = 0; l < kLanes; ++l) refill(l);

  std::array<std::size_t, kLanes> substeps{};
  while (active > 0) {
    for (std::size_t l = 0; l < kLanes; ++l)
      if (busy[l]) substeps[l] = required_substeps(instances[owner[l]], search[l].query, control_omega, config.step);
    const auto spread = run_grouped(batch, config, busy, substeps, [&](std::size_t l) {
      batch.load(l, instances[owner[l]], search[l].query, control_omega);
    });
    for (std::size_t l = 0; l < kLanes; ++l) {
      if (!busy[l]) continue;
      if (!std::isfinite(spread[l]))
        throw NumericalBlowup("non-finite state while integrating sample " + std::to_string(owner[l]));
      search[l].update(spread[l] < config.sync_tol, config, owner[l]);
      if (search[l].phase == Search::Phase::Done) {
        out[owner[l]] = search[l].result();
        --active;
        refill(l);
      }
    }
  }
  return out;
}

double min_control_cost(const KuramotoInstance& instance, double control_omega, const SimConfig& config) {
  return min_control_costs({&instance, 1}, control_omega, config).front();
}

}  // namespace koed
