// koed command-line interface.
//
// Exit codes: 0 success, 1 usage, 2 numerical failure, 3 format error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "koed/core_types.hpp"
#include "koed/dataset.hpp"
#include "koed/dynamics.hpp"
#include "koed/json_io.hpp"
#include "koed/mocu.hpp"
#include "koed/oed.hpp"
#include "koed/parallel.hpp"
#include "koed/surrogate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNumerical = 2, kFormat = 3 };

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// FNV-1a over the file bytes.
std::string file_hash(const std::string& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : koed::io::read_file(path)) h = (h ^ c) * 0x100000001b3ULL;
  return "fnv1a64:" + hex64(h);
}

struct SimFlags {
  std::optional<double> step, duration, window_fraction, sync_tol, max_control, bisect_tol;

  void attach(CLI::App* app) {
    app->add_option("--step", step, "RK4 step");
    app->add_option("--duration", duration, "Integration horizon");
    app->add_option("--window-fraction", window_fraction, "Trailing share of the run used for detection");
    app->add_option("--sync-tol", sync_tol, "Frequency-spread tolerance");
    app->add_option("--max-control", max_control, "Cap on the control strength search");
    app->add_option("--bisect-tol", bisect_tol, "Bisection bracket width");
  }

  koed::SimConfig resolve(const json& config) const {
    koed::SimConfig c = config.contains("sim") ? koed::sim_config_from_json(config.at("sim")) : koed::SimConfig{};
    if (step) c.step = *step;
    if (duration) c.duration = *duration;
    if (window_fraction) c.window_fraction = *window_fraction;
    if (sync_tol) c.sync_tol = *sync_tol;
    if (max_control) c.max_control = *max_control;
    if (bisect_tol) c.bisect_tol = *bisect_tol;
    c.validate();
    return c;
  }
};

// Fills options the command line left unset from the JSON config object.
void apply_config(CLI::App* sub, const json& config) {
  for (const auto& [key, value] : config.items()) {
    if (key == "sim") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw CLI::ValidationError("--config", "unknown key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number()) {
      text = value.dump();
    } else {
      throw CLI::ValidationError("--config", "key '" + key + "' must be a scalar");
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["threads"] = koed::worker_count();
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }
  json& operator[](const char* key) { return doc_[key]; }
  void input(const std::string& path) { doc_["inputs"].push_back({{"path", path}, {"hash", file_hash(path)}}); }
  void builtin_input(const std::string& name) { doc_["inputs"].push_back({{"builtin", name}}); }
  void output(const std::string& path) { doc_["outputs"].push_back({{"path", path}, {"hash", file_hash(path)}}); }
  void write(const std::string& path) {
    doc_["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    koed::io::write_file_atomic(path, doc_.dump(2) + "\n");
  }

 private:
  std::chrono::steady_clock::time_point start_;
  json doc_;
};

koed::UncertaintyClass resolve_class(const std::string& name, Manifest& manifest) {
  if (name == "n5" || name == "n7") {
    manifest.builtin_input(name);
    return name == "n5" ? koed::published_class_n5() : koed::published_class_n7();
  }
  manifest.input(name);
  return koed::load_class(name);
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Objective-based uncertainty quantification and experimental design for Kuramoto models"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with option values (command-line flags win)")
      ->check(CLI::ExistingFile);

  // xi
  auto* xi_cmd = app.add_subcommand("xi", "Minimal control strength that synchronizes one model");
  std::string xi_model, xi_out;
  std::optional<double> xi_omega;
  SimFlags xi_sim;
  xi_cmd->add_option("--model", xi_model, "Kuramoto instance JSON")->required();
  xi_cmd->add_option("--control-omega", xi_omega, "Control frequency (default: mean of the frequencies)");
  xi_cmd->add_option("--out", xi_out, "Also write the result JSON here");
  xi_sim.attach(xi_cmd);

  // mocu
  auto* mocu_cmd = app.add_subcommand("mocu", "Sampled MOCU of an uncertainty class");
  std::string mocu_class, mocu_out;
  std::size_t mocu_k = 2048;
  std::uint64_t mocu_seed = 0;
  std::optional<double> mocu_omega;
  SimFlags mocu_sim;
  mocu_cmd->add_option("--class", mocu_class, "Uncertainty class JSON, or n5 / n7")->required();
  mocu_cmd->add_option("--k", mocu_k, "Number of sampled instances")->capture_default_str();
  mocu_cmd->add_option("--seed", mocu_seed, "Sampling seed")->capture_default_str();
  mocu_cmd->add_option("--control-omega", mocu_omega, "Control frequency (default: mean of the frequencies)");
  mocu_cmd->add_option("--out", mocu_out, "Also write the estimate JSON here");
  mocu_sim.attach(mocu_cmd);

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labeled dataset as JSON lines");
  std::string gen_profile = "n5", gen_out;
  std::optional<std::size_t> gen_count, gen_k;
  std::optional<double> gen_c, gen_d1, gen_d2, gen_d3, gen_partitioned;
  std::optional<int> gen_n;
  std::uint64_t gen_seed = 0;
  SimFlags gen_sim;
  gen_cmd->add_option("--profile", gen_profile, "n5, n7 or custom")->capture_default_str();
  gen_cmd->add_option("--count", gen_count, "Number of classes");
  gen_cmd->add_option("--k", gen_k, "Samples per MOCU label");
  gen_cmd->add_option("--seed", gen_seed, "Generation seed")->capture_default_str();
  gen_cmd->add_option("--n", gen_n, "Oscillator count");
  gen_cmd->add_option("--C", gen_c, "Frequency half-range");
  gen_cmd->add_option("--D1", gen_d1, "Strong factor cap");
  gen_cmd->add_option("--D2", gen_d2, "Weak factor cap");
  gen_cmd->add_option("--D3", gen_d3, "Uncertainty factor cap");
  gen_cmd->add_option("--partitioned-fraction", gen_partitioned, "Share of partitioned samples");
  gen_cmd->add_option("--out", gen_out, "Output JSONL path")->required();
  gen_sim.attach(gen_cmd);

  // oed
  auto* oed_cmd = app.add_subcommand("oed", "Run sequential experimental design");
  std::string oed_class, oed_methods = "sampling", oed_weights, oed_out;
  std::size_t oed_k = 2048, oed_trials = 1, oed_eval_k = 2048, oed_eval_repeats = 10;
  std::uint64_t oed_seed = 0;
  bool oed_simulate = false;
  SimFlags oed_sim;
  oed_cmd->add_option("--class", oed_class, "Uncertainty class JSON, or n5 / n7")->required();
  oed_cmd->add_option("--method", oed_methods,
                      "Comma-separated policies: sampling, surrogate, surrogate-iterative, entropy, random")
      ->capture_default_str();
  oed_cmd->add_option("--k", oed_k, "Samples per estimate when ranking")->capture_default_str();
  oed_cmd->add_option("--weights", oed_weights, "Weight bundle for surrogate policies");
  oed_cmd->add_option("--trials", oed_trials, "Independent hidden truths")->capture_default_str();
  oed_cmd->add_option("--seed", oed_seed, "Master seed")->capture_default_str();
  oed_cmd->add_option("--eval-k", oed_eval_k, "Samples per evaluation estimate")->capture_default_str();
  oed_cmd->add_option("--eval-repeats", oed_eval_repeats, "Estimates averaged per evaluation")
      ->capture_default_str();
  oed_cmd->add_flag("--simulate-outcomes", oed_simulate, "Simulate the isolated pair instead of the exact criterion");
  oed_cmd->add_option("--out", oed_out, "Output directory")->required();
  oed_sim.attach(oed_cmd);

  // rank-check
  auto* rank_cmd = app.add_subcommand("rank-check", "Monotonicity of predictions under bound tightening");
  std::string rank_weights, rank_data, rank_mode = "lower", rank_out;
  bool rank_strict = false;
  rank_cmd->add_option("--weights", rank_weights, "Weight bundle")->required();
  rank_cmd->add_option("--data", rank_data, "Dataset JSONL")->required();
  rank_cmd->add_option("--mode", rank_mode, "lower: raise lower bound; upper: drop upper bound")
      ->check(CLI::IsMember({"lower", "upper"}))
      ->capture_default_str();
  rank_cmd->add_flag("--strict", rank_strict, "Count only strict decreases as success");
  rank_cmd->add_option("--out", rank_out, "Also write the report JSON here");

  // eval-surrogate
  auto* eval_cmd = app.add_subcommand("eval-surrogate", "Surrogate error on a labeled dataset");
  std::string eval_weights, eval_data, eval_out;
  eval_cmd->add_option("--weights", eval_weights, "Weight bundle")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset JSONL")->required();
  eval_cmd->add_option("--out", eval_out, "Also write the report JSON here");

  // init-weights
  auto* init_cmd = app.add_subcommand("init-weights", "Write a randomly initialized weight bundle");
  std::string init_out;
  std::uint64_t init_seed = 0;
  int init_hidden = 64, init_filter = 32, init_steps = 3, init_s2s = 3;
  double init_mean = 0.0, init_std = 1.0;
  init_cmd->add_option("--seed", init_seed, "Initialization seed")->capture_default_str();
  init_cmd->add_option("--hidden-dim", init_hidden)->capture_default_str();
  init_cmd->add_option("--filter-hidden-dim", init_filter)->capture_default_str();
  init_cmd->add_option("--message-steps", init_steps)->capture_default_str();
  init_cmd->add_option("--set2set-steps", init_s2s)->capture_default_str();
  init_cmd->add_option("--label-mean", init_mean)->capture_default_str();
  init_cmd->add_option("--label-std", init_std)->capture_default_str();
  init_cmd->add_option("--out", init_out, "Output path")->required();

  json config = json::object();
  try {
    app.parse(argc, argv);
    if (!config_path.empty()) {
      config = koed::io::parse_json(koed::io::read_file(config_path), config_path);
      if (!config.is_object()) throw koed::FormatError(config_path + ": config must be a JSON object");
      for (auto* sub : app.get_subcommands()) apply_config(sub, config);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const koed::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  }

  try {
    if (*xi_cmd) {
      Manifest manifest("xi");
      manifest.input(xi_model);
      const auto inst = koed::load_instance(xi_model);
      const auto sim = xi_sim.resolve(config);
      double omega = xi_omega.value_or(0.0);
      if (!xi_omega) {
        for (double w : inst.omegas) omega += w;
        omega /= static_cast<double>(inst.n);
      }
      const double xi = koed::min_control_cost(inst, omega, sim);
      const json result = {{"xi", xi}, {"tolerance", sim.bisect_tol}, {"control_omega", omega}};
      print_json(result);
      if (!xi_out.empty()) {
        koed::io::write_file_atomic(xi_out, result.dump(2) + "\n");
        manifest.output(xi_out);
        manifest["config"] = {{"control_omega", omega}, {"sim", koed::to_json(sim)}};
        manifest["seeds"] = json::object();
        manifest.write(xi_out + ".manifest.json");
      }
    } else if (*mocu_cmd) {
      Manifest manifest("mocu");
      const auto cls = resolve_class(mocu_class, manifest);
      const auto sim = mocu_sim.resolve(config);
      const double omega = mocu_omega.value_or(cls.mean_omega());
      const auto est = koed::estimate_mocu(cls, mocu_k, omega, sim, mocu_seed);
      const json result = koed::to_json(est);
      print_json(result);
      if (!mocu_out.empty()) {
        koed::io::write_file_atomic(mocu_out, result.dump(2) + "\n");
        manifest.output(mocu_out);
        manifest["config"] = {{"k", mocu_k}, {"control_omega", omega}, {"sim", koed::to_json(sim)}};
        manifest["seeds"] = {{"seed", mocu_seed}};
        manifest.write(mocu_out + ".manifest.json");
      }
    } else if (*gen_cmd) {
      Manifest manifest("gen-data");
      auto profile = koed::profile_by_name(gen_profile);
      if (gen_n) profile.n = *gen_n;
      if (gen_c) profile.c = *gen_c;
      if (gen_d1) profile.d1 = *gen_d1;
      if (gen_d2) profile.d2 = *gen_d2;
      if (gen_d3) profile.d3 = *gen_d3;
      if (gen_partitioned) profile.partitioned_fraction = *gen_partitioned;
      if (gen_count) profile.count = *gen_count;
      if (gen_k) profile.label_k = *gen_k;
      profile.seed = gen_seed;
      const auto sim = gen_sim.resolve(config);
      const auto data = koed::generate_dataset(profile, sim);
      koed::save_dataset(gen_out, data);
      manifest.output(gen_out);
      manifest["config"] = {{"profile", koed::to_json(profile)}, {"sim", koed::to_json(sim)}};
      manifest["seeds"] = {{"seed", gen_seed}};
      manifest["stats"] = {{"samples", data.samples.size()},
                           {"failures", data.stats.failures},
                           {"mean", data.stats.mean},
                           {"std", data.stats.std}};
      manifest.write(gen_out + ".manifest.json");
      std::cout << "wrote " << data.samples.size() << " samples to " << gen_out << " (mean " << data.stats.mean
                << ", std " << data.stats.std << ")\n";
    } else if (*oed_cmd) {
      Manifest manifest("oed");
      const auto cls = resolve_class(oed_class, manifest);
      const auto sim = oed_sim.resolve(config);
      std::shared_ptr<const koed::MpnnModel> model;
      if (!oed_weights.empty()) {
        manifest.input(oed_weights);
        model = std::make_shared<koed::MpnnModel>(koed::load_weights(oed_weights));
      }
      std::vector<koed::PolicyKind> kinds;
      std::stringstream list(oed_methods);
      for (std::string item; std::getline(list, item, ',');)
        if (!item.empty()) kinds.push_back(koed::parse_policy_kind(item));
      if (kinds.empty()) throw koed::ArgumentError("--method lists no policies");

      koed::OEDRunConfig run;
      run.truth_seed = koed::derive_seed(oed_seed, 1);
      run.eval_seed = koed::derive_seed(oed_seed, 2);
      run.trials = oed_trials;
      run.eval_k = oed_eval_k;
      run.eval_repeats = oed_eval_repeats;
      run.config = sim;
      run.simulate_outcomes = oed_simulate;
      const double omega = cls.mean_omega();
      koed::MocuEvaluator evaluator(run.eval_k, run.eval_repeats, run.eval_seed, omega, sim);

      fs::create_directories(oed_out);
      std::vector<std::pair<std::string, std::vector<double>>> curves;
      for (auto kind : kinds) {
        koed::OEDPolicy policy;
        policy.kind = kind;
        policy.k = oed_k;
        policy.seed = koed::derive_seed(oed_seed, 3);
        policy.model = model;
        const auto traces = koed::run_oed(cls, policy, run, &evaluator);
        const auto path = (fs::path(oed_out) / ("trace_" + koed::to_string(kind) + ".csv")).string();
        koed::io::write_file_atomic(path, koed::traces_csv(traces));
        manifest.output(path);
        curves.emplace_back(koed::to_string(kind), koed::mean_curve(traces));
        std::cout << koed::to_string(kind) << ":";
        for (double v : curves.back().second) std::cout << ' ' << koed::io::format_double(v);
        std::cout << "\n";
      }
      const auto curve_path = (fs::path(oed_out) / "curves.csv").string();
      koed::io::write_file_atomic(curve_path, koed::curves_csv(curves));
      manifest.output(curve_path);
      manifest["config"] = {{"methods", oed_methods},   {"k", oed_k},
                            {"trials", oed_trials},     {"eval_k", oed_eval_k},
                            {"eval_repeats", oed_eval_repeats}, {"control_omega", omega},
                            {"simulate_outcomes", oed_simulate}, {"sim", koed::to_json(sim)}};
      manifest["seeds"] = {{"seed", oed_seed},
                           {"truth_seed", run.truth_seed},
                           {"eval_seed", run.eval_seed},
                           {"policy_seed", koed::derive_seed(oed_seed, 3)}};
      manifest.write((fs::path(oed_out) / "manifest.json").string());
    } else if (*rank_cmd) {
      Manifest manifest("rank-check");
      manifest.input(rank_weights);
      manifest.input(rank_data);
      const koed::MpnnModel model(koed::load_weights(rank_weights));
      const auto data = koed::load_dataset(rank_data);
      std::size_t trials = 0, successes = 0;
      for (const auto& s : data.samples) {
        const double base = model.predict(s.cls);
        for (std::size_t k = 0; k < s.cls.lower.size(); ++k) {
          if (!(s.cls.width(k) > 0.0)) continue;
          auto tightened = s.cls;
          const double mid = 0.5 * (s.cls.lower[k] + s.cls.upper[k]);
          (rank_mode == "lower" ? tightened.lower[k] : tightened.upper[k]) = mid;
          const double after = model.predict(tightened);
          ++trials;
          if (rank_strict ? after < base : after <= base) ++successes;
        }
      }
      const json result = {{"mode", rank_mode},
                           {"strict", rank_strict},
                           {"tightenings", trials},
                           {"successes", successes},
                           {"rate", trials ? static_cast<double>(successes) / static_cast<double>(trials) : 1.0}};
      print_json(result);
      if (!rank_out.empty()) {
        koed::io::write_file_atomic(rank_out, result.dump(2) + "\n");
        manifest.output(rank_out);
        manifest["config"] = {{"mode", rank_mode}, {"strict", rank_strict}};
        manifest["seeds"] = json::object();
        manifest.write(rank_out + ".manifest.json");
      }
    } else if (*eval_cmd) {
      Manifest manifest("eval-surrogate");
      manifest.input(eval_weights);
      manifest.input(eval_data);
      const koed::MpnnModel model(koed::load_weights(eval_weights));
      const auto data = koed::load_dataset(eval_data);
      std::vector<koed::UncertaintyClass> classes;
      classes.reserve(data.samples.size());
      for (const auto& s : data.samples) classes.push_back(s.cls);
      const auto start = std::chrono::steady_clock::now();
      const auto preds = model.predict_batch(classes);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      double raw = 0.0, norm = 0.0;
      for (std::size_t c = 0; c < preds.size(); ++c) {
        const double d = preds[c] - data.samples[c].mocu_label;
        raw += d * d;
        const double dn = (preds[c] - data.stats.mean) / data.stats.std - data.samples[c].normalized_label;
        norm += dn * dn;
      }
      const double count = static_cast<double>(std::max<std::size_t>(preds.size(), 1));
      const double per_thousand = preds.empty() ? 0.0 : seconds / static_cast<double>(preds.size()) * 1000.0;
      const json result = {{"samples", preds.size()},
                           {"mse_raw", raw / count},
                           {"mse_normalized", norm / count},
                           {"seconds_per_1000", per_thousand}};
      std::cout << "timing: " << per_thousand << " s per 1000 predictions\n";
      print_json(result);
      if (!eval_out.empty()) {
        koed::io::write_file_atomic(eval_out, result.dump(2) + "\n");
        manifest.output(eval_out);
        manifest["config"] = json::object();
        manifest["seeds"] = json::object();
        manifest.write(eval_out + ".manifest.json");
      }
    } else if (*init_cmd) {
      Manifest manifest("init-weights");
      koed::BundleMeta meta;
      meta.hidden_dim = init_hidden;
      meta.filter_hidden_dim = init_filter;
      meta.message_steps = init_steps;
      meta.set2set_steps = init_s2s;
      meta.label_mean = init_mean;
      meta.label_std = init_std;
      koed::save_weights(init_out, koed::random_bundle(init_seed, meta));
      manifest.output(init_out);
      manifest["config"] = {{"hidden_dim", init_hidden},     {"filter_hidden_dim", init_filter},
                            {"message_steps", init_steps},   {"set2set_steps", init_s2s},
                            {"label_mean", init_mean},       {"label_std", init_std}};
      manifest["seeds"] = {{"seed", init_seed}};
      manifest.write(init_out + ".manifest.json");
    }
  } catch (const koed::NoSynchronization& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const koed::NumericalBlowup& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const koed::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const koed::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
