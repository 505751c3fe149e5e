#pragma once

// Message-passing surrogate for MOCU.
//
// An uncertainty class becomes a complete graph: node v carries w_v, every
// directed edge (v, w) carries (lower, upper) of the pair. The forward pass is
//
//   h_v     = ReLU(embed.weight * w_v + embed.bias)
//   W(e)    = reshape(ecc.fc2(ReLU(ecc.fc1(e))), d, d)        row-major [out][in]
//   m_v     = sum_{w != v} W(e_vw) h_w                         (no root term)
//   h_v     = GRU(state h_v, input m_v)                        repeated message_steps times
//   g       = set2set({h_v}) with an LSTM cell, set2set_steps iterations
//   y_norm  = head.fc2(ReLU(head.fc1(g)))
//   y       = y_norm * label_std + label_mean
//
// Message and update weights are shared across steps. GRU and LSTM tensors
// use the stacked gate layout (r, z, n) and (i, f, g, o) respectively.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "koed/core_types.hpp"
#include "koed/experiment.hpp"

namespace koed {

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline constexpr int kBundleFormatVersion = 1;

struct BundleMeta {
  int format_version = kBundleFormatVersion;
  int hidden_dim = 64;
  int filter_hidden_dim = 32;
  int message_steps = 3;
  int set2set_steps = 3;
  double label_mean = 0.0;
  double label_std = 1.0;
  // Multipliers applied to raw inputs before the first layer.
  double omega_scale = 1.0;
  double bound_scale = 1.0;
};

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  std::size_t size() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct WeightBundle {
  BundleMeta meta;
  std::map<std::string, Tensor> tensors;

  /// Throws FormatError naming the first missing or misshaped tensor, or
  /// VersionError for an unknown format_version.
  void validate() const;
  const Tensor& at(const std::string& name) const;
};

/// Tensor names and shapes a bundle with these dimensions must carry.
std::map<std::string, std::vector<std::size_t>> expected_shapes(const BundleMeta& meta);

std::string to_json(const WeightBundle& bundle);
WeightBundle bundle_from_json(const std::string& text);
WeightBundle load_weights(const std::string& path);
void save_weights(const std::string& path, const WeightBundle& bundle);

/// Bundle with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; used for
/// fixtures and timing without a trained model.
WeightBundle random_bundle(std::uint64_t seed, BundleMeta meta = {});

struct GraphEncoding {
  struct Edge {
    int source = 0;  // 0-based
    int target = 0;
    double lower = 0.0;
    double upper = 0.0;
  };
  int nodes = 0;
  std::vector<double> node_features;
  std::vector<Edge> edges;  // both directions of every pair
};

GraphEncoding encode(const UncertaintyClass& cls);

/// A bundle compiled into dense matrices. Immutable and shareable.
class MpnnModel {
 public:
  explicit MpnnModel(WeightBundle bundle);
  ~MpnnModel();
  MpnnModel(const MpnnModel&);
  MpnnModel& operator=(const MpnnModel&);

  const BundleMeta& meta() const { return bundle_.meta; }
  const WeightBundle& bundle() const { return bundle_; }

  /// Prediction on the normalized label scale.
  double forward(const GraphEncoding& graph) const;
  /// Prediction on the raw MOCU scale.
  double predict(const UncertaintyClass& cls) const;
  std::vector<double> predict_batch(std::span<const UncertaintyClass> classes) const;

 private:
  struct Layers;
  WeightBundle bundle_;
  std::shared_ptr<const Layers> layers_;
};

double predict(const MpnnModel& model, const UncertaintyClass& cls);

struct PredictedRemaining {
  double value = 0.0;
  OutcomeProbabilities probabilities;
};

/// Expected remaining MOCU with surrogate predictions for both branches.
PredictedRemaining predict_expected_remaining(const MpnnModel& model, const UncertaintyClass& cls,
                                              ExperimentId experiment);

}  // namespace koed
