#include "koed/oed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

#include "koed/json_io.hpp"
#include "koed/mocu.hpp"
#include "koed/parallel.hpp"

namespace koed {

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::sampling: return "sampling";
    case PolicyKind::surrogate: return "surrogate";
    case PolicyKind::surrogate_iterative: return "surrogate-iterative";
    case PolicyKind::entropy: return "entropy";
    case PolicyKind::random: return "random";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(const std::string& text) {
  for (auto kind : {PolicyKind::sampling, PolicyKind::surrogate, PolicyKind::surrogate_iterative,
                    PolicyKind::entropy, PolicyKind::random})
    if (text == to_string(kind)) return kind;
  throw ArgumentError("unknown policy '" + text +
                      "' (expected sampling, surrogate, surrogate-iterative, entropy or random)");
}

void OEDPolicy::validate() const {
  if (kind == PolicyKind::sampling && k < 1) throw ArgumentError("sampling policy needs k >= 1");
  if ((kind == PolicyKind::surrogate || kind == PolicyKind::surrogate_iterative) && !model)
    throw ArgumentError(to_string(kind) + " policy needs a weight bundle");
}

GroundTruth draw_ground_truth(const UncertaintyClass& cls, std::uint64_t seed) {
  cls.validate();
  std::mt19937_64 rng(seed);
  return {sample_instance(cls, rng)};
}

ExperimentOutcome conduct_experiment(const GroundTruth& truth, ExperimentId experiment) {
  return conduct_experiment(truth.instance, experiment);
}

ExperimentOutcome conduct_experiment_simulated(const GroundTruth& truth, ExperimentId experiment,
                                               const SimConfig& config) {
  const auto& inst = truth.instance;
  const double wi = inst.omegas.at(static_cast<std::size_t>(experiment.i - 1));
  const double wj = inst.omegas.at(static_cast<std::size_t>(experiment.j - 1));
  const KuramotoInstance pair{2, {wi, wj}, {inst.coupling(experiment.i, experiment.j)}};
  // An uncoupled control at the pair mean matches the locked frequency.
  return {is_synchronized(pair, 0.0, 0.5 * (wi + wj), config)};
}

std::vector<double> score_experiments(const UncertaintyClass& cls, std::span<const ExperimentId> remaining,
                                      const OEDPolicy& policy, double control_omega, const SimConfig& config) {
  policy.validate();
  std::vector<double> scores(remaining.size());
  switch (policy.kind) {
    case PolicyKind::sampling:
      for (std::size_t e = 0; e < remaining.size(); ++e)
        scores[e] = expected_remaining_mocu(cls, remaining[e], policy.k, control_omega, config, policy.seed,
                                            {policy.common_random_numbers})
                        .value;
      break;
    case PolicyKind::surrogate:
    case PolicyKind::surrogate_iterative:
      parallel_for(remaining.size(), [&](std::size_t e) {
        scores[e] = predict_expected_remaining(*policy.model, cls, remaining[e]).value;
      });
      break;
    case PolicyKind::entropy:
      for (std::size_t e = 0; e < remaining.size(); ++e)
        scores[e] = -cls.width(pair_index(remaining[e].i, remaining[e].j, cls.n));
      break;
    case PolicyKind::random:
      throw ArgumentError("random policy has no scores");
  }
  return scores;
}

namespace {

std::size_t lowest_score(const UncertaintyClass& cls, std::span<const ExperimentId> remaining,
                         std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t e = 1; e < remaining.size(); ++e) {
    const bool better = scores[e] < scores[best] ||
                        (scores[e] == scores[best] && pair_index(remaining[e].i, remaining[e].j, cls.n) <
                                                          pair_index(remaining[best].i, remaining[best].j, cls.n));
    if (better) best = e;
  }
  return best;
}

std::vector<ExperimentId> by_pair_index(const UncertaintyClass& cls, std::span<const ExperimentId> remaining) {
  std::vector<ExperimentId> out(remaining.begin(), remaining.end());
  std::sort(out.begin(), out.end(), [&](ExperimentId a, ExperimentId b) {
    return pair_index(a.i, a.j, cls.n) < pair_index(b.i, b.j, cls.n);
  });
  return out;
}

}  // namespace

ExperimentId select_experiment(const UncertaintyClass& cls, std::span<const ExperimentId> remaining,
                               const OEDPolicy& policy, double control_omega, const SimConfig& config,
                               std::mt19937_64& rng) {
  if (remaining.empty()) throw ArgumentError("select_experiment: no experiments remain");
  const auto ordered = by_pair_index(cls, remaining);
  if (policy.kind == PolicyKind::random) {
    const auto pick = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(ordered.size()));
    return ordered[std::min(pick, ordered.size() - 1)];
  }
  const auto scores = score_experiments(cls, ordered, policy, control_omega, config);
  return ordered[lowest_score(cls, ordered, scores)];
}

std::uint64_t class_digest(const UncertaintyClass& cls) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(cls.n));
  auto absorb = [&](const std::vector<double>& values) {
    for (double v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = mix64(h ^ bits);
    }
  };
  absorb(cls.omegas);
  absorb(cls.lower);
  absorb(cls.upper);
  return h;
}

MocuEvaluator::MocuEvaluator(std::size_t k, std::size_t repeats, std::uint64_t seed, double control_omega,
                             SimConfig config)
    : k_(k), repeats_(repeats), seed_(seed), control_omega_(control_omega), config_(config) {
  if (k_ < 1) throw ArgumentError("evaluator: k must be >= 1");
  if (repeats_ < 1) throw ArgumentError("evaluator: repeats must be >= 1");
  config_.validate();
}

std::pair<double, double> MocuEvaluator::evaluate(const UncertaintyClass& cls) {
  std::vector<double> key = cls.omegas;
  key.insert(key.end(), cls.lower.begin(), cls.lower.end());
  key.insert(key.end(), cls.upper.begin(), cls.upper.end());
  {
    std::lock_guard lock(mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const auto digest = class_digest(cls);
  std::vector<double> values(repeats_);
  for (std::size_t r = 0; r < repeats_; ++r)
    values[r] = estimate_mocu(cls, k_, control_omega_, config_, derive_seed(seed_, digest, r)).value;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(repeats_);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = repeats_ > 1 ? std::sqrt(var / static_cast<double>(repeats_ - 1)) : 0.0;
  std::lock_guard lock(mutex_);
  return cache_.emplace(std::move(key), std::pair{mean, sd}).first->second;
}

std::size_t MocuEvaluator::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

void OEDRunConfig::validate() const {
  if (trials < 1) throw ArgumentError("run_oed: trials must be >= 1");
  if (eval_k < 1) throw ArgumentError("run_oed: eval_k must be >= 1");
  if (eval_repeats < 1) throw ArgumentError("run_oed: eval_repeats must be >= 1");
  config.validate();
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename Fn>
auto with_context(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const NoSynchronization& e) {
    throw NoSynchronization(where + ": " + e.what(), e.sample_index);
  } catch (const NumericalBlowup& e) {
    throw NumericalBlowup(where + ": " + e.what());
  }
}

}  // namespace

std::vector<OEDTrace> run_oed(const UncertaintyClass& cls, const OEDPolicy& policy, const OEDRunConfig& run,
                              MocuEvaluator* evaluator) {
  cls.validate();
  policy.validate();
  run.validate();
  const double omega = run.control_omega.value_or(cls.mean_omega());
  std::optional<MocuEvaluator> local;
  if (!evaluator) {
    local.emplace(run.eval_k, run.eval_repeats, run.eval_seed, omega, run.config);
    evaluator = &*local;
  }

  const auto experiments = all_experiments(cls.n);
  const auto initial = with_context("initial evaluation", [&] { return evaluator->evaluate(cls); });

  // Non-iterative policies commit to an order computed on the initial class.
  std::vector<ExperimentId> fixed_order;
  double ranking_seconds = 0.0;
  if (policy.ranks_once()) {
    const auto start = std::chrono::steady_clock::now();
    const auto scores = with_context("initial ranking", [&] {
      return score_experiments(cls, experiments, policy, omega, run.config);
    });
    std::vector<std::size_t> order(experiments.size());
    for (std::size_t e = 0; e < order.size(); ++e) order[e] = e;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    for (auto e : order) fixed_order.push_back(experiments[e]);
    ranking_seconds = seconds_since(start);
  }

  std::vector<OEDTrace> traces(run.trials);
  parallel_for(run.trials, [&](std::size_t t) {
    const auto truth = draw_ground_truth(cls, derive_seed(run.truth_seed, t));
    std::mt19937_64 rng(derive_seed(policy.seed, t, 1));
    OEDTrace& trace = traces[t];
    trace.trial = static_cast<int>(t);
    trace.initial_mocu_mean = initial.first;
    trace.initial_mocu_std = initial.second;

    UncertaintyClass current = cls;
    std::vector<ExperimentId> remaining = experiments;
    for (std::size_t step = 1; !remaining.empty(); ++step) {
      const std::string where = "trial " + std::to_string(t) + " step " + std::to_string(step);
      const auto start = std::chrono::steady_clock::now();
      ExperimentId chosen;
      if (policy.ranks_once()) {
        chosen = fixed_order[step - 1];
      } else {
        chosen = with_context(where, [&] {
          return select_experiment(current, remaining, policy, omega, run.config, rng);
        });
      }
      TraceStep record;
      record.select_seconds = seconds_since(start) + (step == 1 ? ranking_seconds : 0.0);
      record.experiment = chosen;
      record.outcome = run.simulate_outcomes ? conduct_experiment_simulated(truth, chosen, run.config)
                                             : conduct_experiment(truth, chosen);
      current = apply_outcome(current, chosen, record.outcome);
      std::erase(remaining, chosen);
      const auto [mean, sd] = with_context(where, [&] { return evaluator->evaluate(current); });
      record.mocu_mean = mean;
      record.mocu_std = sd;
      trace.steps.push_back(record);
    }
  });
  return traces;
}

std::vector<double> mean_curve(std::span<const OEDTrace> traces) {
  if (traces.empty()) return {};
  std::vector<double> curve(traces.front().steps.size() + 1, 0.0);
  for (const auto& t : traces) {
    if (t.steps.size() + 1 != curve.size()) throw ArgumentError("mean_curve: traces differ in length");
    curve[0] += t.initial_mocu_mean;
    for (std::size_t s = 0; s < t.steps.size(); ++s) curve[s + 1] += t.steps[s].mocu_mean;
  }
  for (double& c : curve) c /= static_cast<double>(traces.size());
  return curve;
}

std::string traces_csv(std::span<const OEDTrace> traces) {
  std::ostringstream out;
  out << "trial,step,i,j,outcome,mocu_mean,mocu_std,select_seconds\n";
  for (const auto& t : traces) {
    out << t.trial << ",0,,,," << io::format_double(t.initial_mocu_mean) << ','
        << io::format_double(t.initial_mocu_std) << ",0\n";
    for (std::size_t s = 0; s < t.steps.size(); ++s) {
      const auto& r = t.steps[s];
      out << t.trial << ',' << s + 1 << ',' << r.experiment.i << ',' << r.experiment.j << ','
          << (r.outcome.synchronized ? 1 : 0) << ',' << io::format_double(r.mocu_mean) << ','
          << io::format_double(r.mocu_std) << ',' << io::format_double(r.select_seconds) << '\n';
    }
  }
  return out.str();
}

std::string curves_csv(const std::vector<std::pair<std::string, std::vector<double>>>& curves) {
  std::ostringstream out;
  out << "step";
  std::size_t length = 0;
  for (const auto& [name, curve] : curves) {
    out << ',' << name;
    length = std::max(length, curve.size());
  }
  out << '\n';
  for (std::size_t s = 0; s < length; ++s) {
    out << s;
    for (const auto& [name, curve] : curves) {
      out << ',';
      if (s < curve.size()) out << io::format_double(curve[s]);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace koed
