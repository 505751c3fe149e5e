#include "koed/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include "koed/json_io.hpp"
#include "koed/mocu.hpp"
#include "koed/parallel.hpp"

namespace koed {

void GenProfile::validate() const {
  if (n < 2) throw ArgumentError("profile: n must be >= 2");
  if (!(c > 0.0 && d1 > 0.0 && d2 > 0.0 && d3 > 0.0))
    throw ArgumentError("profile: C, D1, D2, D3 must be > 0");
  if (!(partitioned_fraction >= 0.0 && partitioned_fraction <= 1.0))
    throw ArgumentError("profile: partitioned_fraction must lie in [0, 1]");
  if (count < 1) throw ArgumentError("profile: count must be >= 1");
  if (label_k < 1) throw ArgumentError("profile: label_k must be >= 1");
}

GenProfile profile_n5() {
  GenProfile p;
  p.name = "n5";
  p.n = 5;
  p.c = 6.0;
  p.d1 = 1.1;
  p.d2 = 0.6;
  p.d3 = 0.3;
  return p;
}

GenProfile profile_n7() {
  GenProfile p;
  p.name = "n7";
  p.n = 7;
  p.c = 10.0;
  p.d1 = 1.2;
  p.d2 = 0.25;
  p.d3 = 0.6;
  return p;
}

GenProfile profile_by_name(const std::string& name) {
  if (name == "n5") return profile_n5();
  if (name == "n7") return profile_n7();
  if (name == "custom") return GenProfile{};
  throw ArgumentError("unknown profile '" + name + "' (expected n5, n7 or custom)");
}

nlohmann::json to_json(const GenProfile& p) {
  return {{"name", p.name},   {"n", p.n},           {"C", p.c},
          {"D1", p.d1},       {"D2", p.d2},         {"D3", p.d3},
          {"partitioned_fraction", p.partitioned_fraction},
          {"count", p.count}, {"label_k", p.label_k}, {"seed", p.seed}};
}

GenProfile profile_from_json(const nlohmann::json& j, GenProfile p) {
  if (!j.is_object()) throw FormatError("profile must be a JSON object");
  try {
    p.name = j.value("name", p.name);
    p.n = j.value("n", p.n);
    p.c = j.value("C", p.c);
    p.d1 = j.value("D1", p.d1);
    p.d2 = j.value("D2", p.d2);
    p.d3 = j.value("D3", p.d3);
    p.partitioned_fraction = j.value("partitioned_fraction", p.partitioned_fraction);
    p.count = j.value("count", p.count);
    p.label_k = j.value("label_k", p.label_k);
    p.seed = j.value("seed", p.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profile: ") + e.what());
  }
  return p;
}

PairBounds pair_bounds(double f, bool strong, double d_strong, double d_weak, double d_unc) {
  const double mid = (strong ? d_strong : d_weak) * f;
  return {std::max(0.0, mid - d_unc * f), mid + d_unc * f};
}

GeneratedClass generate_class(const GenProfile& profile, std::mt19937_64& rng) {
  profile.validate();
  const int n = profile.n;
  auto uniform = [&](double lo, double hi) { return lo + unit_uniform(rng) * (hi - lo); };
  auto bernoulli = [&] { return unit_uniform(rng) < 0.5 ? 1 : 0; };

  GeneratedClass out;
  out.partitioned = unit_uniform(rng) < profile.partitioned_fraction;
  auto& cls = out.cls;
  cls.n = n;
  cls.omegas.resize(static_cast<std::size_t>(n));
  for (double& w : cls.omegas) w = uniform(-profile.c, profile.c);
  if (out.partitioned) {
    out.oscillator_flags.resize(static_cast<std::size_t>(n));
    for (int& s : out.oscillator_flags) s = bernoulli();
  }

  const auto pairs = pair_count(static_cast<std::size_t>(n));
  cls.lower.resize(pairs);
  cls.upper.resize(pairs);
  out.strong.resize(pairs);
  std::size_t k = 0;
  for (int i = 1; i <= n; ++i) {
    for (int j = i + 1; j <= n; ++j, ++k) {
      const double f = pair_threshold(cls.omegas, i, j);
      const double d_strong = uniform(0.0, profile.d1);
      const double d_weak = uniform(0.0, profile.d2);
      const double d_unc = uniform(0.0, profile.d3);
      const int b = out.partitioned ? out.oscillator_flags[static_cast<std::size_t>(i - 1)] : bernoulli();
      out.strong[k] = b;
      const auto bounds = pair_bounds(f, b == 1, d_strong, d_weak, d_unc);
      cls.lower[k] = bounds.lower;
      cls.upper[k] = bounds.upper;
    }
  }
  return out;
}

DatasetStats normalize_labels(std::vector<LabeledSample>& samples) {
  DatasetStats stats;
  if (samples.empty()) {
    stats.std_flagged = true;
    return stats;
  }
  double sum = 0.0;
  for (const auto& s : samples) sum += s.mocu_label;
  const double count = static_cast<double>(samples.size());
  stats.mean = sum / count;
  double var = 0.0;
  for (const auto& s : samples) var += (s.mocu_label - stats.mean) * (s.mocu_label - stats.mean);
  const double sd = std::sqrt(var / count);
  if (samples.size() < 2 || !(sd > 0.0)) {
    stats.std = 1.0;
    stats.std_flagged = true;
  } else {
    stats.std = sd;
  }
  for (auto& s : samples) s.normalized_label = (s.mocu_label - stats.mean) / stats.std;
  return stats;
}

Dataset generate_dataset(const GenProfile& profile, const SimConfig& config) {
  profile.validate();
  config.validate();
  std::vector<std::optional<LabeledSample>> slots(profile.count);
  parallel_for(profile.count, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(profile.seed, i, 0));
    auto gen = generate_class(profile, rng);
    try {
      const auto est = estimate_mocu(gen.cls, profile.label_k, gen.cls.mean_omega(), config,
                                     derive_seed(profile.seed, i, 1));
      slots[i] = LabeledSample{std::move(gen.cls), est.value, 0.0, gen.partitioned};
    } catch (const NoSynchronization&) {
    } catch (const NumericalBlowup&) {
    }
  });

  Dataset out;
  out.profile = profile;
  out.config = config;
  for (auto& s : slots)
    if (s) out.samples.push_back(std::move(*s));
  const std::size_t failures = profile.count - out.samples.size();
  out.stats = normalize_labels(out.samples);
  out.stats.failures = failures;
  if (failures > 0) std::cerr << "warning: " << failures << " sample(s) failed labeling and were dropped\n";
  return out;
}

namespace {

constexpr int kDatasetFormatVersion = 1;

}  // namespace

void save_dataset(const std::string& path, const Dataset& d) {
  std::ostringstream out;
  nlohmann::json header = {{"type", "header"},
                           {"format_version", kDatasetFormatVersion},
                           {"profile", to_json(d.profile)},
                           {"seed", d.profile.seed},
                           {"label_k", d.profile.label_k},
                           {"count", d.samples.size()},
                           {"failures", d.stats.failures},
                           {"mean", d.stats.mean},
                           {"std", d.stats.std},
                           {"std_flagged", d.stats.std_flagged},
                           {"sim", to_json(d.config)}};
  out << header.dump() << "\n";
  for (const auto& s : d.samples) {
    out << "{\"n\": " << s.cls.n << ", \"omegas\": " << io::format_array(s.cls.omegas)
        << ", \"lower\": " << io::format_array(s.cls.lower) << ", \"upper\": " << io::format_array(s.cls.upper)
        << ", \"mocu\": " << io::format_double(s.mocu_label)
        << ", \"normalized\": " << io::format_double(s.normalized_label)
        << ", \"partitioned\": " << (s.partitioned ? "true" : "false") << "}\n";
  }
  io::write_file_atomic(path, out.str());
}

Dataset load_dataset(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty dataset file");
  Dataset d;
  try {
    const auto header = io::parse_json(line, "dataset header");
    if (header.value("type", "") != "header") throw FormatError(path + ": first line is not a dataset header");
    if (header.value("format_version", 0) != kDatasetFormatVersion)
      throw FormatError(path + ": unsupported dataset format_version");
    if (header.contains("profile")) d.profile = profile_from_json(header.at("profile"));
    if (header.contains("sim")) d.config = sim_config_from_json(header.at("sim"));
    d.profile.seed = header.at("seed").get<std::uint64_t>();
    d.profile.label_k = header.at("label_k").get<std::size_t>();
    d.stats.mean = header.at("mean").get<double>();
    d.stats.std = header.at("std").get<double>();
    d.stats.std_flagged = header.value("std_flagged", false);
    d.stats.failures = header.value("failures", std::size_t{0});

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = io::parse_json(line, "dataset line " + std::to_string(line_no));
      LabeledSample s;
      s.cls = class_from_json(line);
      s.mocu_label = j.at("mocu").get<double>();
      s.normalized_label = j.value("normalized", (s.mocu_label - d.stats.mean) / d.stats.std);
      s.partitioned = j.value("partitioned", false);
      d.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!(d.stats.std > 0.0)) throw FormatError(path + ": header std must be > 0");
  return d;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split_dataset(
    std::span<const LabeledSample> samples, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ArgumentError("split fraction must lie in [0, 1]");
  // The offset absorbs representation error in decimal fractions such as 0.96.
  const auto head = std::min(
      samples.size(), static_cast<std::size_t>(std::floor(fraction * static_cast<double>(samples.size()) + 1e-9)));
  return {{samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(head)},
          {samples.begin() + static_cast<std::ptrdiff_t>(head), samples.end()}};
}

}  // namespace koed
