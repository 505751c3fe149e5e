// Acceptance gate: one PASS/FAIL line per primary criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "koed/dataset.hpp"
#include "koed/mocu.hpp"
#include "koed/oed.hpp"
#include "koed/parallel.hpp"
#include "koed/surrogate.hpp"
#include "reference_dynamics.hpp"
#include "reference_mpnn.hpp"

using namespace koed;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Verdict()>& body) {
  const auto start = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("AC%d %s %s: %s [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str(), seconds_since(start));
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[2048];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict theorem_one_agreement() {
  const auto start = Clock::now();
  const SimConfig config;
  int agree = 0, total = 0;
  for (int s = 1; s <= 30; ++s) {
    const double half = 0.1 * s;
    for (double factor : {0.95, 1.05}) {
      GroundTruth truth{KuramotoInstance{2, {0.0, 2.0 * half}, {factor * half}}};
      const bool simulated = conduct_experiment_simulated(truth, {1, 2}, config).synchronized;
      const bool predicted = half <= factor * half;
      agree += simulated == predicted;
      ++total;
    }
  }
  const double elapsed = seconds_since(start);
  return {agree == total && elapsed < 60.0, fmt("%d/%d grid points agree, %.2f s (limit 60 s)", agree, total, elapsed)};
}

Verdict xi_grid_scan() {
  const auto start = Clock::now();
  const SimConfig config;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> w(-3.0, 3.0), a(0.0, 0.8);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    KuramotoInstance inst{3, {w(rng), w(rng), w(rng)}, {a(rng), a(rng), a(rng)}};
    const double omega = (inst.omegas[0] + inst.omegas[1] + inst.omegas[2]) / 3.0;
    const double xi = min_control_cost(inst, omega, config);
    const double scan = test_ref::grid_scan_cost(inst, omega, config, 1e-3);
    worst = std::max(worst, std::isnan(scan) ? INFINITY : std::abs(xi - scan));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 5e-3 && elapsed < 300.0,
          fmt("max |xi - scan| = %.2e over 20 instances (limit 5e-3), %.1f s (limit 300 s)", worst, elapsed)};
}

Verdict degenerate_cases() {
  const SimConfig config;
  auto cls = published_class_n5();
  const double omega = cls.mean_omega();
  const double k1 = estimate_mocu(cls, 1, omega, config, 11).value;
  for (std::size_t p = 0; p < cls.lower.size(); ++p) cls.lower[p] = cls.upper[p] = 0.5 * (cls.lower[p] + cls.upper[p]);
  const double zero = estimate_mocu(cls, 256, omega, config, 12).value;
  return {k1 == 0.0 && zero <= 2.0 * config.bisect_tol,
          fmt("k=1 gives %g, zero-width class gives %.2e (limit %.1e)", k1, zero, 2.0 * config.bisect_tol)};
}

Verdict crn_monotonicity() {
  const SimConfig config;
  const auto profile = profile_n5();
  std::mt19937_64 rng(20240602);
  int ok = 0, raised = 0, raised_ok = 0;
  constexpr int kTrials = 100;
  for (int t = 0; t < kTrials; ++t) {
    const auto cls = generate_class(profile, rng).cls;
    std::size_t pair;
    do pair = rng() % cls.lower.size();
    while (!(cls.width(pair) > 0.0));
    const bool raise_lower = rng() % 2 == 0;
    auto tight = cls;
    const double mid = 0.5 * (cls.lower[pair] + cls.upper[pair]);
    (raise_lower ? tight.lower[pair] : tight.upper[pair]) = mid;
    const std::uint64_t seed = rng();
    const double omega = cls.mean_omega();
    const double before = estimate_mocu(cls, 512, omega, config, seed).value;
    const double after = estimate_mocu(tight, 512, omega, config, seed).value;
    ok += after <= before;
    raised += raise_lower;
    raised_ok += raise_lower && after <= before;
  }
  const double rate = ok / static_cast<double>(kTrials);
  return {rate >= 0.95, fmt("non-increase %d/%d = %.2f (target 0.95); lower raised %d/%d, upper dropped %d/%d", ok,
                            kTrials, rate, raised_ok, raised, ok - raised_ok, kTrials - raised)};
}

Verdict label_statistics() {
  const SimConfig config;
  auto n5 = profile_n5();
  n5.count = 2000;
  n5.label_k = 2048;
  n5.seed = 20240603;
  const auto d5 = generate_dataset(n5, config);
  auto n7 = profile_n7();
  n7.count = 500;
  n7.label_k = 2048;
  n7.seed = 20240604;
  const auto d7 = generate_dataset(n7, config);
  const double r5 = d5.stats.mean / 0.2378, r7 = d7.stats.mean / 0.7310;
  const bool pass = std::abs(r5 - 1.0) <= 0.25 && std::abs(r7 - 1.0) <= 0.30;
  return {pass, fmt("N=5 mean %.4f std %.4f (%.2fx of 0.2378, %zu failures); N=7 mean %.4f std %.4f (%.2fx of "
                    "0.7310, %zu failures)",
                    d5.stats.mean, d5.stats.std, r5, d5.stats.failures, d7.stats.mean, d7.stats.std, r7,
                    d7.stats.failures)};
}

Verdict oed_trend() {
  const auto cls = published_class_n5();
  const std::uint64_t seed = 20240605;
  OEDRunConfig run;
  run.truth_seed = derive_seed(seed, 1);
  run.trials = 10;
  run.eval_k = 2048;
  run.eval_repeats = 10;
  run.eval_seed = derive_seed(seed, 2);
  MocuEvaluator evaluator(run.eval_k, run.eval_repeats, run.eval_seed, cls.mean_omega(), run.config);
  auto curve = [&](PolicyKind kind) {
    OEDPolicy policy;
    policy.kind = kind;
    policy.k = 2048;
    policy.seed = derive_seed(seed, 3);
    const auto traces = run_oed(cls, policy, run, &evaluator);
    return mean_curve(traces);
  };
  const auto sampling = curve(PolicyKind::sampling);
  const auto random = curve(PolicyKind::random);
  const auto entropy = curve(PolicyKind::entropy);

  int below = 0;
  for (std::size_t s = 0; s < sampling.size(); ++s) below += sampling[s] <= random[s];
  const double total = sampling.front() - sampling.back();
  const double two = sampling.front() - sampling[2];
  const double share = total > 0.0 ? two / total : 0.0;
  const double entropy_two = entropy.front() - entropy[2];
  const bool pass = below == static_cast<int>(sampling.size()) && share >= 0.70 && entropy_two < two;

  std::string curves = "step sampling random entropy";
  for (std::size_t s = 0; s < sampling.size(); ++s)
    curves += fmt("; %zu %.4f %.4f %.4f", s, sampling[s], random[s], entropy[s]);
  return {pass, fmt("sampling <= random at %d/%zu steps; 2-step share %.2f (target 0.70); 2-step drop sampling "
                    "%.4f vs entropy %.4f | %s",
                    below, sampling.size(), share, two, entropy_two, curves.c_str())};
}

Verdict surrogate_correctness() {
  const auto bundle = test_ref::fixture_bundle();
  const MpnnModel model(bundle);
  const auto cls = published_class_n5();

  const double base = model.predict(cls);
  double worst_perm = 0.0;
  std::vector<int> perm(cls.n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(20240606);
  for (int rep = 0; rep < 50; ++rep) {
    std::shuffle(perm.begin(), perm.end(), rng);
    UncertaintyClass p{cls.n, std::vector<double>(cls.n), cls.lower, cls.upper};
    for (int v = 0; v < cls.n; ++v) p.omegas[v] = cls.omegas[perm[v]];
    for (int i = 0; i < cls.n; ++i)
      for (int j = i + 1; j < cls.n; ++j) {
        const auto src = pair_index(std::min(perm[i], perm[j]) + 1, std::max(perm[i], perm[j]) + 1, cls.n);
        const auto dst = pair_index(i + 1, j + 1, cls.n);
        p.lower[dst] = cls.lower[src];
        p.upper[dst] = cls.upper[src];
      }
    worst_perm = std::max(worst_perm, std::abs(model.predict(p) - base) / std::abs(base));
  }

  const auto path = (std::filesystem::temp_directory_path() / "koed_acceptance_bundle.json").string();
  save_weights(path, bundle);
  const auto loaded = load_weights(path);
  std::filesystem::remove(path);
  const bool round_trip = loaded.tensors == bundle.tensors && loaded.meta.label_mean == bundle.meta.label_mean &&
                          loaded.meta.label_std == bundle.meta.label_std &&
                          MpnnModel(loaded).predict(cls) == base;

  const double oracle = test_ref::predict(bundle, cls);
  const double pinned = 0.21462887122939969;
  const double dual = std::max(std::abs(base - oracle), std::abs(base - pinned));
  const bool pass = worst_perm <= 1e-6 && round_trip && dual <= 1e-9;
  return {pass, fmt("max relative permutation change %.1e (limit 1e-6); round-trip %s; |runtime - oracle| %.1e "
                    "(limit 1e-9)",
                    worst_perm, round_trip ? "bit-exact" : "MISMATCH", dual)};
}

Verdict surrogate_speed() {
  const MpnnModel model(test_ref::fixture_bundle());
  const auto cls = published_class_n5();
  const auto start = Clock::now();
  const auto est = estimate_mocu(cls, 2048, cls.mean_omega(), SimConfig{}, 7);
  const double sampling = seconds_since(start);

  constexpr int kReps = 200;
  double sink = 0.0;
  const auto t0 = Clock::now();
  for (int r = 0; r < kReps; ++r) sink += model.predict(cls);
  const double surrogate = seconds_since(t0) / kReps;
  const double speedup = sampling / surrogate;
  return {speedup >= 100.0 && std::isfinite(sink) && est.value > 0.0,
          fmt("estimate_mocu k=2048 %.3f s, surrogate %.1f us per class, speedup %.0fx (target 100x)", sampling,
              surrogate * 1e6, speedup)};
}

}  // namespace

int main() {
  report(1, "theorem-1 agreement", theorem_one_agreement);
  report(2, "xi vs grid scan", xi_grid_scan);
  report(3, "MOCU degenerate cases", degenerate_cases);
  report(4, "MOCU monotonicity under common random numbers", crn_monotonicity);
  report(7, "surrogate runtime correctness", surrogate_correctness);
  report(8, "surrogate speed", surrogate_speed);
  report(6, "OED trend on the N=5 class", oed_trend);
  report(5, "dataset label statistics", label_statistics);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
