#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "koed/dataset.hpp"
#include "koed/parallel.hpp"

using namespace koed;

namespace {

GenProfile tiny_profile(std::size_t count) {
  auto p = profile_n5();
  p.n = 3;
  p.count = count;
  p.label_k = 16;
  p.seed = 99;
  return p;
}

std::string temp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("built-in profiles carry the published constants") {
  const auto a = profile_n5();
  CHECK(a.n == 5);
  CHECK(a.c == 6.0);
  CHECK(a.d1 == 1.1);
  CHECK(a.d2 == 0.6);
  CHECK(a.d3 == 0.3);
  CHECK(a.partitioned_fraction == 0.67);
  const auto b = profile_n7();
  CHECK(b.n == 7);
  CHECK(b.c == 10.0);
  CHECK(b.d1 == 1.2);
  CHECK(b.d2 == 0.25);
  CHECK(b.d3 == 0.6);
  CHECK_THROWS_AS(profile_by_name("n9"), ArgumentError);
}

TEST_CASE("profile validation") {
  auto p = profile_n5();
  p.d2 = 0.0;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
  p = profile_n5();
  p.partitioned_fraction = 1.5;
  CHECK_THROWS_AS(p.validate(), ArgumentError);
}

TEST_CASE("pair bounds formula") {
  // zero threshold collapses the interval
  auto b = pair_bounds(0.0, true, 0.9, 0.3, 0.2);
  CHECK(b.lower == 0.0);
  CHECK(b.upper == 0.0);
  // strong with no uncertainty: point value D1 * F
  b = pair_bounds(1.75, true, 1.1, 0.4, 0.0);
  CHECK(b.lower == 1.1 * 1.75);
  CHECK(b.upper == 1.1 * 1.75);
  // weak midpoint narrower than the half-width clamps at zero
  b = pair_bounds(2.0, false, 1.0, 0.1, 0.3);
  CHECK(b.lower == 0.0);
  CHECK(b.upper == doctest::Approx(0.8));
  b = pair_bounds(2.0, true, 1.0, 0.1, 0.3);
  CHECK(b.lower == doctest::Approx(1.4));
  CHECK(b.upper == doctest::Approx(2.6));
}

TEST_CASE("generated classes satisfy the class invariants and the profile ranges") {
  for (const auto& base : {profile_n5(), profile_n7()}) {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 300; ++rep) {
      const auto gen = generate_class(base, rng);
      const auto& cls = gen.cls;
      CHECK_NOTHROW(cls.validate());
      CHECK(cls.n == base.n);
      for (double w : cls.omegas) {
        CHECK(w >= -base.c);
        CHECK(w <= base.c);
      }
      std::size_t k = 0;
      for (int i = 1; i <= cls.n; ++i)
        for (int j = i + 1; j <= cls.n; ++j, ++k) {
          const double f = pair_threshold(cls.omegas, i, j);
          const double cap = (gen.strong[k] ? base.d1 : base.d2) + base.d3;
          CHECK(cls.upper[k] <= cap * f + 1e-12);
          CHECK(cls.lower[k] >= 0.0);
        }
    }
  }
}

TEST_CASE("partitioned classes have row-constant strength flags") {
  auto p = profile_n5();
  p.partitioned_fraction = 1.0;
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const auto gen = generate_class(p, rng);
    REQUIRE(gen.partitioned);
    // Reconstruct each oscillator's label from its first outgoing pair.
    std::size_t k = 0;
    for (int i = 1; i <= p.n; ++i) {
      int label = -1;
      for (int j = i + 1; j <= p.n; ++j, ++k) {
        if (label < 0) label = gen.strong[k];
        CHECK(gen.strong[k] == label);
      }
    }
  }
  p.partitioned_fraction = 0.0;
  int mixed_rows = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto gen = generate_class(p, rng);
    CHECK_FALSE(gen.partitioned);
    if (gen.strong[0] != gen.strong[1]) ++mixed_rows;
  }
  CHECK(mixed_rows > 20);
}

TEST_CASE("partitioned share follows the profile fraction") {
  auto p = profile_n5();
  std::mt19937_64 rng(8);
  int partitioned = 0;
  for (int rep = 0; rep < 4000; ++rep) partitioned += generate_class(p, rng).partitioned ? 1 : 0;
  CHECK(partitioned / 4000.0 == doctest::Approx(0.67).epsilon(0.05));
}

TEST_CASE("normalization gives zero mean and unit variance") {
  std::vector<LabeledSample> samples;
  std::mt19937_64 rng(2);
  for (int k = 0; k < 257; ++k) samples.push_back({{}, 0.3 + unit_uniform(rng), 0.0, false});
  const auto stats = normalize_labels(samples);
  CHECK_FALSE(stats.std_flagged);
  double mean = 0.0, var = 0.0;
  for (const auto& s : samples) mean += s.normalized_label;
  mean /= samples.size();
  for (const auto& s : samples) var += (s.normalized_label - mean) * (s.normalized_label - mean);
  var /= samples.size();
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(std::abs(var - 1.0) <= 1e-9);
}

TEST_CASE("single-sample datasets store std 1 and flag it") {
  std::vector<LabeledSample> one{{{}, 0.4, 0.0, false}};
  const auto stats = normalize_labels(one);
  CHECK(stats.std == 1.0);
  CHECK(stats.std_flagged);
  CHECK(one[0].normalized_label == 0.0);

  const auto data = generate_dataset(tiny_profile(1));
  CHECK(data.stats.std == 1.0);
  CHECK(data.stats.std_flagged);
}

TEST_CASE("split sizes use the floor") {
  std::vector<LabeledSample> samples(101);
  for (std::size_t k = 0; k < samples.size(); ++k) samples[k].mocu_label = static_cast<double>(k);
  auto [train, test] = split_dataset(samples, 0.96);
  CHECK(train.size() == 96);
  CHECK(test.size() == 5);
  CHECK(test.front().mocu_label == 96.0);
  for (std::size_t n : {25u, 50u, 75u, 100u, 1000u, 70000u}) {
    std::vector<LabeledSample> s(n);
    CHECK(split_dataset(s, 0.96).first.size() == n * 96 / 100);
  }
  CHECK_THROWS_AS(split_dataset(samples, 1.5), ArgumentError);
}

TEST_CASE("dataset generation is reproducible and survives a file round-trip") {
  const auto profile = tiny_profile(12);
  const auto a = generate_dataset(profile);
  const auto b = generate_dataset(profile);
  REQUIRE(a.samples.size() == 12);
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    CHECK(a.samples[k].cls == b.samples[k].cls);
    CHECK(a.samples[k].mocu_label == b.samples[k].mocu_label);
    CHECK(a.samples[k].mocu_label >= 0.0);
  }

  const auto path = temp_path("koed_dataset_rt.jsonl");
  save_dataset(path, a);
  const auto loaded = load_dataset(path);
  CHECK(loaded.stats.mean == a.stats.mean);
  CHECK(loaded.stats.std == a.stats.std);
  CHECK(loaded.profile.seed == profile.seed);
  CHECK(loaded.profile.label_k == profile.label_k);
  REQUIRE(loaded.samples.size() == a.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    CHECK(loaded.samples[k].cls == a.samples[k].cls);
    CHECK(loaded.samples[k].mocu_label == a.samples[k].mocu_label);
    CHECK(loaded.samples[k].normalized_label == a.samples[k].normalized_label);
    CHECK(loaded.samples[k].partitioned == a.samples[k].partitioned);
  }

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  const auto j = nlohmann::json::parse(header);
  for (const char* key : {"profile", "seed", "label_k", "mean", "std"}) CHECK(j.contains(key));
  std::filesystem::remove(path);
}

TEST_CASE("dataset loading rejects malformed files") {
  const auto path = temp_path("koed_dataset_bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"type": "sample"})" << "\n";
  }
  CHECK_THROWS_AS(load_dataset(path), FormatError);
  {
    std::ofstream out(path);
    out << R"({"type": "header", "format_version": 1, "seed": 1, "label_k": 4, "mean": 0, "std": 1})" << "\n";
    out << R"({"n": 2, "omegas": [0, 1], "lower": [0.2], "upper": [0.1], "mocu": 0.1})" << "\n";
  }
  CHECK_THROWS_AS(load_dataset(path), FormatError);
  std::filesystem::remove(path);
}
