#include "koed/surrogate.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "koed/json_io.hpp"
#include "koed/parallel.hpp"

namespace koed {

std::size_t Tensor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

using Shape = std::vector<std::size_t>;

std::string shape_text(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void validate_meta(const BundleMeta& m) {
  if (m.format_version != kBundleFormatVersion)
    throw VersionError("weight bundle: unsupported format_version " + std::to_string(m.format_version));
  if (m.hidden_dim <= 0) throw FormatError("weight bundle: hidden_dim must be > 0");
  if (m.filter_hidden_dim <= 0) throw FormatError("weight bundle: filter_hidden_dim must be > 0");
  if (m.message_steps < 1) throw FormatError("weight bundle: message_steps must be >= 1");
  if (m.set2set_steps < 1) throw FormatError("weight bundle: set2set_steps must be >= 1");
  if (!(m.label_std > 0.0) || !std::isfinite(m.label_std))
    throw FormatError("weight bundle: label_std must be > 0");
  if (!std::isfinite(m.label_mean)) throw FormatError("weight bundle: label_mean must be finite");
}

}  // namespace

std::map<std::string, std::vector<std::size_t>> expected_shapes(const BundleMeta& meta) {
  const auto d = static_cast<std::size_t>(meta.hidden_dim);
  const auto f = static_cast<std::size_t>(meta.filter_hidden_dim);
  return {
      {"embed.weight", {d, 1}},
      {"embed.bias", {d}},
      {"ecc.fc1.weight", {f, 2}},
      {"ecc.fc1.bias", {f}},
      {"ecc.fc2.weight", {d * d, f}},
      {"ecc.fc2.bias", {d * d}},
      {"gru.weight_ih", {3 * d, d}},
      {"gru.weight_hh", {3 * d, d}},
      {"gru.bias_ih", {3 * d}},
      {"gru.bias_hh", {3 * d}},
      {"set2set.lstm.weight_ih", {4 * d, 2 * d}},
      {"set2set.lstm.weight_hh", {4 * d, d}},
      {"set2set.lstm.bias_ih", {4 * d}},
      {"set2set.lstm.bias_hh", {4 * d}},
      {"head.fc1.weight", {d, 2 * d}},
      {"head.fc1.bias", {d}},
      {"head.fc2.weight", {1, d}},
      {"head.fc2.bias", {1}},
  };
}

void WeightBundle::validate() const {
  validate_meta(meta);
  for (const auto& [name, shape] : expected_shapes(meta)) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("weight bundle: missing tensor '" + name + "'");
    if (it->second.shape != shape)
      throw FormatError("weight bundle: tensor '" + name + "' has shape " + shape_text(it->second.shape) +
                        ", expected " + shape_text(shape));
    if (it->second.data.size() != it->second.size())
      throw FormatError("weight bundle: tensor '" + name + "' has " + std::to_string(it->second.data.size()) +
                        " values for shape " + shape_text(shape));
    for (double v : it->second.data)
      if (!std::isfinite(v)) throw FormatError("weight bundle: tensor '" + name + "' has a non-finite value");
  }
}

const Tensor& WeightBundle::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("weight bundle: missing tensor '" + name + "'");
  return it->second;
}

std::string to_json(const WeightBundle& b) {
  const auto& m = b.meta;
  std::string out = "{\n  \"meta\": {";
  out += "\"format_version\": " + std::to_string(m.format_version);
  out += ", \"hidden_dim\": " + std::to_string(m.hidden_dim);
  out += ", \"filter_hidden_dim\": " + std::to_string(m.filter_hidden_dim);
  out += ", \"message_steps\": " + std::to_string(m.message_steps);
  out += ", \"set2set_steps\": " + std::to_string(m.set2set_steps);
  out += ", \"label_mean\": " + io::format_double(m.label_mean);
  out += ", \"label_std\": " + io::format_double(m.label_std);
  out += ", \"omega_scale\": " + io::format_double(m.omega_scale);
  out += ", \"bound_scale\": " + io::format_double(m.bound_scale);
  out += "},\n  \"tensors\": {";
  bool first = true;
  for (const auto& [name, t] : b.tensors) {
    out += first ? "\n" : ",\n";
    first = false;
    out += "    " + nlohmann::json(name).dump() + ": {\"shape\": [";
    for (std::size_t i = 0; i < t.shape.size(); ++i) out += (i ? ", " : "") + std::to_string(t.shape[i]);
    out += "], \"data\": " + io::format_array(t.data) + "}";
  }
  out += "\n  }\n}\n";
  return out;
}

WeightBundle bundle_from_json(const std::string& text) {
  const auto j = io::parse_json(text, "weight bundle");
  WeightBundle b;
  try {
    const auto& m = j.at("meta");
    b.meta.format_version = m.at("format_version").get<int>();
    if (b.meta.format_version != kBundleFormatVersion)
      throw VersionError("weight bundle: unsupported format_version " + std::to_string(b.meta.format_version));
    b.meta.hidden_dim = m.at("hidden_dim").get<int>();
    b.meta.filter_hidden_dim = m.value("filter_hidden_dim", b.meta.filter_hidden_dim);
    b.meta.message_steps = m.at("message_steps").get<int>();
    b.meta.set2set_steps = m.at("set2set_steps").get<int>();
    b.meta.label_mean = m.at("label_mean").get<double>();
    b.meta.label_std = m.at("label_std").get<double>();
    b.meta.omega_scale = m.value("omega_scale", 1.0);
    b.meta.bound_scale = m.value("bound_scale", 1.0);
    for (const auto& [name, t] : j.at("tensors").items()) {
      Tensor tensor;
      tensor.shape = t.at("shape").get<std::vector<std::size_t>>();
      tensor.data = t.at("data").get<std::vector<double>>();
      b.tensors.emplace(name, std::move(tensor));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weight bundle: ") + e.what());
  }
  b.validate();
  return b;
}

WeightBundle load_weights(const std::string& path) { return bundle_from_json(io::read_file(path)); }

void save_weights(const std::string& path, const WeightBundle& bundle) {
  bundle.validate();
  io::write_file_atomic(path, to_json(bundle));
}

WeightBundle random_bundle(std::uint64_t seed, BundleMeta meta) {
  validate_meta(meta);
  WeightBundle b;
  b.meta = meta;
  const auto shapes = expected_shapes(meta);
  std::uint64_t stream = 0;
  for (const auto& [name, shape] : shapes) {
    // Biases take the fan-in of the matching weight.
    std::size_t fan_in = shape.size() == 2 ? shape[1] : 0;
    if (shape.size() == 1) {
      std::string weight = name;
      weight.replace(weight.rfind("bias"), 4, "weight");
      fan_in = shapes.at(weight)[1];
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::mt19937_64 rng(derive_seed(seed, ++stream));
    Tensor t;
    t.shape = shape;
    t.data.resize(t.size());
    for (double& v : t.data) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
    b.tensors.emplace(name, std::move(t));
  }
  return b;
}

GraphEncoding encode(const UncertaintyClass& cls) {
  cls.validate();
  GraphEncoding g;
  g.nodes = cls.n;
  g.node_features = cls.omegas;
  g.edges.reserve(2 * pair_count(static_cast<std::size_t>(cls.n)));
  std::size_t k = 0;
  for (int i = 0; i < cls.n; ++i) {
    for (int j = i + 1; j < cls.n; ++j, ++k) {
      g.edges.push_back({i, j, cls.lower[k], cls.upper[k]});
      g.edges.push_back({j, i, cls.lower[k], cls.upper[k]});
    }
  }
  return g;
}

namespace {

Eigen::MatrixXd as_matrix(const Tensor& t) {
  const auto rows = static_cast<Eigen::Index>(t.shape[0]);
  const auto cols = static_cast<Eigen::Index>(t.shape.size() > 1 ? t.shape[1] : 1);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(t.data.data(),
                                                                                                rows, cols);
}

Eigen::VectorXd as_vector(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

struct MpnnModel::Layers {
  using Matrix = Eigen::MatrixXd;
  using Vector = Eigen::VectorXd;

  explicit Layers(const WeightBundle& b)
      : embed_w(as_matrix(b.at("embed.weight"))),
        embed_b(as_vector(b.at("embed.bias"))),
        filter1_w(as_matrix(b.at("ecc.fc1.weight"))),
        filter1_b(as_vector(b.at("ecc.fc1.bias"))),
        filter2_w(as_matrix(b.at("ecc.fc2.weight"))),
        filter2_b(as_vector(b.at("ecc.fc2.bias"))),
        gru_ih(as_matrix(b.at("gru.weight_ih"))),
        gru_hh(as_matrix(b.at("gru.weight_hh"))),
        gru_bih(as_vector(b.at("gru.bias_ih"))),
        gru_bhh(as_vector(b.at("gru.bias_hh"))),
        lstm_ih(as_matrix(b.at("set2set.lstm.weight_ih"))),
        lstm_hh(as_matrix(b.at("set2set.lstm.weight_hh"))),
        lstm_bih(as_vector(b.at("set2set.lstm.bias_ih"))),
        lstm_bhh(as_vector(b.at("set2set.lstm.bias_hh"))),
        head1_w(as_matrix(b.at("head.fc1.weight"))),
        head1_b(as_vector(b.at("head.fc1.bias"))),
        head2_w(as_matrix(b.at("head.fc2.weight"))),
        head2_b(as_vector(b.at("head.fc2.bias"))) {}

  Matrix embed_w;
  Vector embed_b;
  Matrix filter1_w;
  Vector filter1_b;
  Matrix filter2_w;
  Vector filter2_b;
  Matrix gru_ih, gru_hh;
  Vector gru_bih, gru_bhh;
  Matrix lstm_ih, lstm_hh;
  Vector lstm_bih, lstm_bhh;
  Matrix head1_w;
  Vector head1_b;
  Matrix head2_w;
  Vector head2_b;
};

MpnnModel::MpnnModel(WeightBundle bundle) : bundle_(std::move(bundle)) {
  bundle_.validate();
  layers_ = std::make_shared<const Layers>(bundle_);
}

MpnnModel::~MpnnModel() = default;
MpnnModel::MpnnModel(const MpnnModel&) = default;
MpnnModel& MpnnModel::operator=(const MpnnModel&) = default;

double MpnnModel::forward(const GraphEncoding& graph) const {
  using Matrix = Layers::Matrix;
  using Vector = Layers::Vector;
  const auto& m = bundle_.meta;
  const Layers& L = *layers_;
  const Eigen::Index d = m.hidden_dim;
  const Eigen::Index n = graph.nodes;

  // Node states, one column per node.
  Matrix h(d, n);
  for (Eigen::Index v = 0; v < n; ++v)
    h.col(v) = (L.embed_w.col(0) * (graph.node_features[static_cast<std::size_t>(v)] * m.omega_scale) + L.embed_b)
                   .cwiseMax(0.0);

  // Edge filters are step-invariant. The flat filter output is row-major
  // [out][in]; mapped column-major it is the transpose.
  std::vector<Matrix> filters;
  filters.reserve(graph.edges.size());
  Eigen::Vector2d e;
  for (const auto& edge : graph.edges) {
    e << edge.lower * m.bound_scale, edge.upper * m.bound_scale;
    const Vector hidden = (L.filter1_w * e + L.filter1_b).cwiseMax(0.0);
    const Vector flat = L.filter2_w * hidden + L.filter2_b;
    filters.push_back(Eigen::Map<const Matrix>(flat.data(), d, d).transpose());
  }

  Matrix msg(d, n);
  for (int t = 0; t < m.message_steps; ++t) {
    msg.setZero();
    for (std::size_t k = 0; k < graph.edges.size(); ++k)
      msg.col(graph.edges[k].target).noalias() += filters[k] * h.col(graph.edges[k].source);

    const Matrix gi = (L.gru_ih * msg).colwise() + L.gru_bih;
    const Matrix gh = (L.gru_hh * h).colwise() + L.gru_bhh;
    const auto r = (1.0 + (-(gi.topRows(d) + gh.topRows(d)).array()).exp()).inverse();
    const auto z = (1.0 + (-(gi.middleRows(d, d) + gh.middleRows(d, d)).array()).exp()).inverse();
    const Matrix cand = (gi.bottomRows(d).array() + r * gh.bottomRows(d).array()).tanh().matrix();
    h = ((1.0 - z) * cand.array() + z * h.array()).matrix();
  }

  Vector q_star = Vector::Zero(2 * d);
  Vector lstm_h = Vector::Zero(d);
  Vector lstm_c = Vector::Zero(d);
  for (int s = 0; s < m.set2set_steps; ++s) {
    const Vector gates = L.lstm_ih * q_star + L.lstm_bih + L.lstm_hh * lstm_h + L.lstm_bhh;
    const Vector in = sigmoid(gates.segment(0, d));
    const Vector forget = sigmoid(gates.segment(d, d));
    const Vector cell = gates.segment(2 * d, d).array().tanh().matrix();
    const Vector out = sigmoid(gates.segment(3 * d, d));
    lstm_c = forget.cwiseProduct(lstm_c) + in.cwiseProduct(cell);
    lstm_h = out.cwiseProduct(lstm_c.array().tanh().matrix());

    Vector score = h.transpose() * lstm_h;
    score = (score.array() - score.maxCoeff()).exp().matrix();
    score /= score.sum();
    q_star << lstm_h, h * score;
  }

  const Vector hidden = (L.head1_w * q_star + L.head1_b).cwiseMax(0.0);
  return (L.head2_w * hidden)(0) + L.head2_b(0);
}

double MpnnModel::predict(const UncertaintyClass& cls) const {
  return forward(encode(cls)) * bundle_.meta.label_std + bundle_.meta.label_mean;
}

std::vector<double> MpnnModel::predict_batch(std::span<const UncertaintyClass> classes) const {
  std::vector<double> out(classes.size());
  parallel_for(classes.size(), [&](std::size_t c) { out[c] = predict(classes[c]); });
  return out;
}

double predict(const MpnnModel& model, const UncertaintyClass& cls) { return model.predict(cls); }

PredictedRemaining predict_expected_remaining(const MpnnModel& model, const UncertaintyClass& cls,
                                              ExperimentId experiment) {
  PredictedRemaining out;
  out.probabilities = outcome_probabilities(cls, experiment);
  if (out.probabilities.synchronized > 0.0)
    out.value += out.probabilities.synchronized * model.predict(apply_outcome(cls, experiment, {true}));
  if (out.probabilities.unsynchronized > 0.0)
    out.value += out.probabilities.unsynchronized * model.predict(apply_outcome(cls, experiment, {false}));
  return out;
}

}  // namespace koed
