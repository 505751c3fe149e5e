#include "koed/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "koed/json_io.hpp"

namespace koed {

std::size_t pair_index(int i, int j, int n) {
  if (n < 2 || i < 1 || j <= i || j > n)
    throw ArgumentError("pair_index: need 1 <= i < j <= n, got (" + std::to_string(i) + ", " +
                        std::to_string(j) + ", " + std::to_string(n) + ")");
  // Pairs before row i: sum over r < i of (n - r).
  const auto row = static_cast<std::size_t>(i - 1);
  const auto nn = static_cast<std::size_t>(n);
  return row * nn - row * (row + 1) / 2 + static_cast<std::size_t>(j - i - 1);
}

ExperimentId pair_from_index(std::size_t k, int n) {
  if (n < 2 || k >= pair_count(static_cast<std::size_t>(n)))
    throw ArgumentError("pair_from_index: index " + std::to_string(k) + " out of range");
  int i = 1;
  std::size_t remaining = k;
  while (remaining >= static_cast<std::size_t>(n - i)) {
    remaining -= static_cast<std::size_t>(n - i);
    ++i;
  }
  return {i, i + 1 + static_cast<int>(remaining)};
}

std::vector<ExperimentId> all_experiments(int n) {
  std::vector<ExperimentId> out;
  for (int i = 1; i <= n; ++i)
    for (int j = i + 1; j <= n; ++j) out.push_back({i, j});
  return out;
}

void UncertaintyClass::validate() const {
  if (n < 2) throw ArgumentError("uncertainty class needs n >= 2");
  const auto m = pair_count(static_cast<std::size_t>(n));
  if (omegas.size() != static_cast<std::size_t>(n))
    throw ArgumentError("uncertainty class: expected " + std::to_string(n) + " frequencies");
  if (lower.size() != m || upper.size() != m)
    throw ArgumentError("uncertainty class: expected " + std::to_string(m) + " bounds per side");
  for (std::size_t k = 0; k < m; ++k) {
    if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]))
      throw ArgumentError("uncertainty class: non-finite bound at pair " + std::to_string(k));
    if (lower[k] < 0.0) throw ArgumentError("uncertainty class: negative lower bound at pair " + std::to_string(k));
    if (lower[k] > upper[k])
      throw ArgumentError("uncertainty class: lower > upper at pair " + std::to_string(k));
  }
  for (double w : omegas)
    if (!std::isfinite(w)) throw ArgumentError("uncertainty class: non-finite frequency");
}

double UncertaintyClass::mean_omega() const {
  return std::accumulate(omegas.begin(), omegas.end(), 0.0) / static_cast<double>(omegas.size());
}

void KuramotoInstance::validate() const {
  if (n < 1) throw ArgumentError("instance needs n >= 1");
  if (omegas.size() != static_cast<std::size_t>(n))
    throw ArgumentError("instance: expected " + std::to_string(n) + " frequencies");
  if (couplings.size() != pair_count(static_cast<std::size_t>(n)))
    throw ArgumentError("instance: wrong coupling count");
  for (double a : couplings)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ArgumentError("instance: couplings must be finite and >= 0");
}

double KuramotoInstance::coupling(int i, int j) const {
  if (i > j) std::swap(i, j);
  return couplings[pair_index(i, j, n)];
}

double pair_threshold(const std::vector<double>& omegas, int i, int j) {
  return 0.5 * std::abs(omegas[static_cast<std::size_t>(i - 1)] - omegas[static_cast<std::size_t>(j - 1)]);
}

double sync_threshold(const UncertaintyClass& cls, int i, int j) {
  const auto k = pair_index(i, j, cls.n);
  return std::min(std::max(pair_threshold(cls.omegas, i, j), cls.lower[k]), cls.upper[k]);
}

void OEDTrace::validate() const {
  std::set<std::pair<int, int>> seen;
  for (const auto& s : steps)
    if (!seen.insert({s.experiment.i, s.experiment.j}).second)
      throw ArgumentError("trace repeats experiment (" + std::to_string(s.experiment.i) + ", " +
                          std::to_string(s.experiment.j) + ")");
}

std::string to_json(const UncertaintyClass& cls) {
  return "{\"n\": " + std::to_string(cls.n) + ", \"omegas\": " + io::format_array(cls.omegas) +
         ", \"lower\": " + io::format_array(cls.lower) + ", \"upper\": " + io::format_array(cls.upper) + "}";
}

std::string to_json(const KuramotoInstance& inst) {
  return "{\"n\": " + std::to_string(inst.n) + ", \"omegas\": " + io::format_array(inst.omegas) +
         ", \"couplings\": " + io::format_array(inst.couplings) + "}";
}

namespace {

int read_n(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("n") || !j.at("n").is_number_integer())
    throw FormatError("missing integer field 'n'");
  return j.at("n").get<int>();
}

}  // namespace

UncertaintyClass class_from_json(const std::string& text) {
  const auto j = io::parse_json(text, "uncertainty class");
  UncertaintyClass cls{read_n(j), io::number_array(j, "omegas"), io::number_array(j, "lower"),
                       io::number_array(j, "upper")};
  try {
    cls.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return cls;
}

KuramotoInstance instance_from_json(const std::string& text) {
  const auto j = io::parse_json(text, "kuramoto instance");
  KuramotoInstance inst{read_n(j), io::number_array(j, "omegas"), io::number_array(j, "couplings")};
  try {
    inst.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return inst;
}

UncertaintyClass load_class(const std::string& path) { return class_from_json(io::read_file(path)); }
KuramotoInstance load_instance(const std::string& path) { return instance_from_json(io::read_file(path)); }

void save_class(const std::string& path, const UncertaintyClass& cls) {
  io::write_file_atomic(path, to_json(cls) + "\n");
}

void save_instance(const std::string& path, const KuramotoInstance& inst) {
  io::write_file_atomic(path, to_json(inst) + "\n");
}

UncertaintyClass published_class_n5() {
  return {5,
          {-2.50, -0.6667, 1.1667, 2.0, 5.8333},
          {0.7791, 0.4675, 0.5737, 1.0625, 0.7792, 0.5100, 1.2431, 0.3541, 1.9833, 1.6291},
          {1.0541, 0.6325, 0.7762, 1.4375, 1.0542, 0.6900, 1.6819, 0.4791, 2.6833, 2.2041}};
}

UncertaintyClass published_class_n7() {
  return {7,
          {-3.46, -1.96, -0.68, -0.38, -0.37, 6.12, 8.3287},
          {0.073, 0.172, 0.153, 0.054, 0.501, 0.463, 0.043, 0.015, 0.096, 0.501, 0.103,
           0.007, 0.009, 0.139, 0.408, 0.000, 0.131, 0.119, 0.300, 0.286, 0.131},
          {0.848, 0.988, 1.446, 1.607, 3.820, 0.915, 0.400, 0.850, 0.419, 4.162, 1.090,
           0.122, 0.039, 2.124, 0.872, 0.007, 2.737, 1.804, 1.360, 0.744, 1.174}};
}

}  // namespace koed
