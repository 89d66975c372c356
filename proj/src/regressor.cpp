/* Copyright 2026 The cmfkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cmf/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace cmf {
namespace {

constexpr std::string_view kModelFormat = "cmfkit-mlp/1";

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double x) { return sigmoid(x); });
}

std::string block_name(const BlockSizes& b, std::size_t coord) {
  if (coord < b.semantic) return "semantic block";
  if (coord < b.semantic + b.encoded) return "target-encoded block";
  return "year block";
}

template <typename T>
void put_pod(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_vector(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_pod<double>(out, v[i]);
}

double get_double(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(double) > bytes.size()) throw ArtifactError("truncated model weights");
  double v;
  std::memcpy(&v, bytes.data() + pos, sizeof(double));
  pos += sizeof(double);
  return v;
}

struct Adam {
  Eigen::VectorXd m, v;
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
  Adam(Eigen::Index n, double lr_) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), lr(lr_) {}
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1, double(t));
    const double c2 = 1 - std::pow(b2, double(t));
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

// Forward/backward over a standardized batch (columns are samples). Returns
// the summed squared error; accumulates d(sum loss)/d(theta) into `grads`.
double batch_pass(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& x,
                  const Eigen::RowVectorXd& y, std::vector<DenseLayer>* grads) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * acts.back();
    z.colwise() += layers[l].bias;
    acts.push_back(sigmoid(z));
  }
  const Eigen::RowVectorXd out = MLPModel::kOutputScale * acts.back().row(0);
  const Eigen::RowVectorXd err = out - y;
  const double sse = err.squaredNorm();
  if (!grads) return sse;

  // d(sse)/d(out) = 2 err; out = 2 s, ds/dz = s(1 - s).
  const Eigen::RowVectorXd s = acts.back().row(0);
  Eigen::MatrixXd delta =
      (2.0 * err.array() * MLPModel::kOutputScale * s.array() * (1.0 - s.array())).matrix();
  for (std::size_t l = layers.size(); l-- > 0;) {
    (*grads)[l].weight.noalias() += delta * acts[l].transpose();
    (*grads)[l].bias += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = layers[l].weight.transpose() * delta;
    delta = (back.array() * acts[l].array() * (1.0 - acts[l].array())).matrix();
  }
  return sse;
}

Eigen::VectorXd flatten(const std::vector<DenseLayer>& layers) {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  Eigen::VectorXd theta(n);
  Eigen::Index pos = 0;
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) theta[pos++] = l.weight(r, c);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) theta[pos++] = l.bias[r];
  }
  return theta;
}

void unflatten(const Eigen::VectorXd& theta, std::vector<DenseLayer>& layers) {
  Eigen::Index pos = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = theta[pos++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = theta[pos++];
  }
  if (pos != theta.size()) throw DomainError("parameter vector length does not match model");
}

std::vector<DenseLayer> init_layers(std::size_t inputs, const std::vector<std::size_t>& hidden,
                                    std::mt19937_64& rng, double scale_override) {
  std::vector<DenseLayer> layers;
  std::size_t in = inputs;
  auto widths = hidden;
  widths.push_back(1);
  for (std::size_t out : widths) {
    const double a = scale_override > 0 ? scale_override : std::sqrt(6.0 / double(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
    if (scale_override > 0)
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = u(rng);
    layers.push_back(std::move(layer));
    in = out;
  }
  return layers;
}

}  // namespace

YearImputer YearImputer::fit(std::span<const ScenarioRecord> records) {
  YearImputer imp;
  double s = 0, e = 0;
  std::size_t ns = 0, ne = 0;
  for (const auto& r : records) {
    if (r.start_year) s += *r.start_year, ++ns;
    if (r.end_year) e += *r.end_year, ++ne;
  }
  if (ns) imp.start_mean = s / double(ns);
  if (ne) imp.end_mean = e / double(ne);
  if (!ns && ne) imp.start_mean = imp.end_mean;
  if (!ne && ns) imp.end_mean = imp.start_mean;
  return imp;
}

nlohmann::json YearImputer::to_json() const {
  return {{"start_mean", start_mean}, {"end_mean", end_mean}};
}

YearImputer YearImputer::from_json(const nlohmann::json& j) {
  return YearImputer{j.at("start_mean").get<double>(), j.at("end_mean").get<double>()};
}

FeatureVector assemble_features(const EmbeddingVector& embedding, std::span<const double> encoded,
                                std::optional<int> start_year, std::optional<int> end_year,
                                const YearImputer& imputer, std::optional<BlockSizes> expected) {
  FeatureVector fv;
  fv.blocks = BlockSizes{embedding.size(), encoded.size(), 2};
  if (expected && !(*expected == fv.blocks)) {
    throw DomainError("feature blocks (" + std::to_string(fv.blocks.semantic) + ", " +
                      std::to_string(fv.blocks.encoded) + ") do not match the model's (" +
                      std::to_string(expected->semantic) + ", " +
                      std::to_string(expected->encoded) + ")");
  }
  fv.values.reserve(fv.blocks.total());
  fv.values.insert(fv.values.end(), embedding.values.data(),
                   embedding.values.data() + embedding.values.size());
  fv.values.insert(fv.values.end(), encoded.begin(), encoded.end());
  fv.values.push_back(start_year ? double(*start_year) : imputer.start_mean);
  fv.values.push_back(end_year ? double(*end_year) : imputer.end_mean);
  return fv;
}

void TrainConfig::validate() const {
  if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](auto w) { return w == 0; })) {
    throw Error("hidden widths must be non-empty and positive");
  }
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (epochs < 1) throw Error("epochs must be at least 1");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (patience < 1) throw Error("patience must be positive");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw Error("validation_fraction must lie in [0, 1)");
  }
}

MLPModel::MLPModel(std::vector<DenseLayer> layers, Eigen::VectorXd input_mean,
                   Eigen::VectorXd input_scale, BlockSizes blocks, std::uint64_t seed)
    : layers_(std::move(layers)),
      input_mean_(std::move(input_mean)),
      input_scale_(std::move(input_scale)),
      blocks_(blocks),
      seed_(seed) {
  if (layers_.empty()) throw DomainError("model needs at least one layer");
  if (input_mean_.size() != input_scale_.size() || layers_.front().weight.cols() != input_mean_.size()) {
    throw DomainError("normalization statistics do not match the input layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows() ||
        (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows())) {
      throw DomainError("inconsistent layer shapes at layer " + std::to_string(l));
    }
  }
  if (layers_.back().weight.rows() != 1) throw DomainError("output layer must have one unit");
}

std::vector<std::size_t> MLPModel::hidden_widths() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) out.push_back(layers_[l].weight.rows());
  return out;
}

Eigen::VectorXd MLPModel::standardize(std::span<const double> v) const {
  if (v.size() != input_size()) {
    throw DomainError("feature vector length " + std::to_string(v.size()) +
                      " does not match model input " + std::to_string(input_size()));
  }
  Eigen::Map<const Eigen::VectorXd> raw(v.data(), static_cast<Eigen::Index>(v.size()));
  return ((raw - input_mean_).array() / input_scale_.array()).matrix();
}

double MLPModel::predict(std::span<const double> v) const {
  Eigen::VectorXd a = standardize(v);
  for (const auto& layer : layers_) {
    Eigen::VectorXd z = layer.weight * a + layer.bias;
    a = z.unaryExpr([](double x) { return sigmoid(x); });
  }
  return kOutputScale * a[0];
}

double MLPModel::predict(const FeatureVector& v) const { return predict(std::span<const double>(v.values)); }

double MLPModel::loss(std::span<const double> v, double target) const {
  const double d = target - predict(v);
  return d * d;
}

Eigen::VectorXd MLPModel::loss_gradient(std::span<const double> v, double target) const {
  const Eigen::MatrixXd x = standardize(v);
  Eigen::RowVectorXd y(1);
  y[0] = target;
  std::vector<DenseLayer> grads;
  for (const auto& l : layers_) {
    grads.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                     Eigen::VectorXd::Zero(l.bias.size())});
  }
  batch_pass(layers_, x, y, &grads);
  return flatten(grads);
}

Eigen::VectorXd MLPModel::parameters() const { return flatten(layers_); }

MLPModel MLPModel::with_parameters(const Eigen::VectorXd& theta) const {
  MLPModel out = *this;
  unflatten(theta, out.layers_);
  return out;
}

void MLPModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::string norm;
  put_vector(norm, input_mean_);
  put_vector(norm, input_scale_);
  std::string weights = norm;
  put_vector(weights, parameters());

  nlohmann::json manifest;
  manifest["format"] = kModelFormat;
  manifest["blocks"] = {{"m", blocks_.semantic}, {"k", blocks_.encoded}, {"years", blocks_.years}};
  manifest["input_size"] = input_size();
  manifest["widths"] = hidden_widths();
  manifest["activation"] = "logistic";
  manifest["output_scale"] = kOutputScale;
  manifest["seed"] = seed_;
  manifest["normalization_digest"] = sha256_hex(norm);
  manifest["weights_digest"] = sha256_hex(weights);

  const auto tmp = dir / "weights.bin.tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os.write(weights.data(), static_cast<std::streamsize>(weights.size()));
    if (!os) throw ArtifactError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / "weights.bin");
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

MLPModel MLPModel::load(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "manifest.json");
  if (!ms) throw ArtifactError("no model manifest in " + dir.string());
  std::ifstream ws(dir / "weights.bin", std::ios::binary);
  if (!ws) throw ArtifactError("no model weights in " + dir.string());
  std::ostringstream buf;
  buf << ws.rdbuf();
  const std::string weights = buf.str();
  try {
    const auto manifest = nlohmann::json::parse(ms);
    if (manifest.at("format").get<std::string>() != kModelFormat) {
      throw ArtifactError("unsupported model format " + manifest.at("format").dump());
    }
    if (sha256_hex(weights) != manifest.at("weights_digest").get<std::string>()) {
      throw ArtifactError("model weights digest mismatch in " + dir.string());
    }
    BlockSizes blocks{manifest.at("blocks").at("m").get<std::size_t>(),
                      manifest.at("blocks").at("k").get<std::size_t>(),
                      manifest.at("blocks").at("years").get<std::size_t>()};
    const auto inputs = manifest.at("input_size").get<std::size_t>();
    const auto widths = manifest.at("widths").get<std::vector<std::size_t>>();
    std::size_t pos = 0;
    Eigen::VectorXd mean(inputs), scale(inputs);
    for (std::size_t i = 0; i < inputs; ++i) mean[i] = get_double(weights, pos);
    for (std::size_t i = 0; i < inputs; ++i) scale[i] = get_double(weights, pos);
    std::mt19937_64 rng(0);
    auto layers = init_layers(inputs, widths, rng, 0.0);
    Eigen::VectorXd theta(flatten(layers).size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = get_double(weights, pos);
    if (pos != weights.size()) throw ArtifactError("trailing bytes in model weights");
    unflatten(theta, layers);
    return MLPModel(std::move(layers), std::move(mean), std::move(scale), blocks,
                    manifest.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("invalid model manifest: ") + e.what());
  }
}

TrainResult train(const std::vector<FeatureVector>& features, const std::vector<double>& targets,
                  const TrainConfig& config) {
  config.validate();
  if (features.empty()) throw Error("training needs at least one sample");
  if (features.size() != targets.size()) throw Error("features and targets differ in length");
  const std::size_t n = features.size();
  const std::size_t dim = features.front().values.size();
  const BlockSizes blocks = features.front().blocks;

  Eigen::MatrixXd x(dim, n);
  Eigen::RowVectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = features[i].values;
    if (v.size() != dim) throw Error("feature vector " + std::to_string(i) + " has inconsistent length");
    for (std::size_t c = 0; c < dim; ++c) {
      if (!std::isfinite(v[c])) {
        throw DomainError("feature vector " + std::to_string(i) + " has a non-finite value at coordinate " +
                          std::to_string(c) + " (" + block_name(blocks, c) + ")");
      }
      x(c, i) = v[c];
    }
    if (!(targets[i] > 0.0 && targets[i] <= 2.0)) {
      throw DomainError("target " + std::to_string(i) + " outside (0, 2]");
    }
    y[i] = targets[i];
  }

  const Eigen::VectorXd mean = x.rowwise().mean();
  Eigen::VectorXd scale = ((x.colwise() - mean).array().square().rowwise().sum() / double(n)).sqrt();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    if (scale[i] < 1e-12) scale[i] = 1.0;
  }
  const Eigen::MatrixXd xs = ((x.colwise() - mean).array().colwise() / scale.array()).matrix();

  std::mt19937_64 rng(config.seed);
  auto layers = init_layers(dim, config.hidden, rng, 0.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = 0;
  if (config.validation_fraction > 0.0 && n >= config.min_validation_size) {
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(config.validation_fraction * n));
  }
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

  auto gather = [&](const std::vector<std::size_t>& idx, std::size_t from, std::size_t to,
                    Eigen::MatrixXd& bx, Eigen::RowVectorXd& by) {
    bx.resize(dim, to - from);
    by.resize(to - from);
    for (std::size_t t = from; t < to; ++t) {
      bx.col(t - from) = xs.col(idx[t]);
      by[t - from] = y[idx[t]];
    }
  };
  Eigen::MatrixXd val_x, train_x;
  Eigen::RowVectorXd val_y, train_y;
  gather(val_idx, 0, val_idx.size(), val_x, val_y);
  gather(train_idx, 0, train_idx.size(), train_x, train_y);

  Eigen::VectorXd theta = flatten(layers);
  Adam adam(theta.size(), config.learning_rate);
  std::vector<DenseLayer> grads;
  for (const auto& l : layers) {
    grads.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                     Eigen::VectorXd::Zero(l.bias.size())});
  }

  TrainResult result;
  Eigen::VectorXd best_theta = theta;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  Eigen::MatrixXd bx;
  Eigen::RowVectorXd by;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
      gather(train_idx, start, end, bx, by);
      for (auto& g : grads) {
        g.weight.setZero();
        g.bias.setZero();
      }
      batch_pass(layers, bx, by, &grads);
      Eigen::VectorXd g = flatten(grads) / double(end - start);
      adam.step(theta, g);
      unflatten(theta, layers);
    }
    result.epoch_loss.push_back(batch_pass(layers, train_x, train_y, nullptr) / double(train_idx.size()));
    if (n_val > 0) {
      const double v = batch_pass(layers, val_x, val_y, nullptr) / double(n_val);
      result.validation_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        best_theta = theta;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    } else {
      best_theta = theta;
      result.best_epoch = epoch;
    }
  }
  unflatten(best_theta, layers);
  result.final_loss = batch_pass(layers, xs, y, nullptr) / double(n);
  result.model = MLPModel(std::move(layers), mean, scale, blocks, config.seed);
  return result;
}

double gradient_check(const MLPModel& model, const FeatureVector& v, double target, double step,
                      double absolute_floor) {
  const Eigen::VectorXd analytic = model.loss_gradient(v.values, target);
  const Eigen::VectorXd theta = model.parameters();
  double worst = 0.0;
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + step;
    const double up = model.with_parameters(probe).loss(v.values, target);
    probe[i] = theta[i] - step;
    const double down = model.with_parameters(probe).loss(v.values, target);
    probe[i] = theta[i];
    const double numeric = (up - down) / (2.0 * step);
    const double diff = std::abs(analytic[i] - numeric);
    if (diff <= absolute_floor) continue;
    worst = std::max(worst, diff / std::max(std::abs(analytic[i]), std::abs(numeric)));
  }
  return worst;
}

MLPModel random_model(std::size_t inputs, const std::vector<std::size_t>& hidden, std::uint64_t seed,
                      double weight_scale) {
  std::mt19937_64 rng(seed);
  auto layers = init_layers(inputs, hidden, rng, weight_scale);
  return MLPModel(std::move(layers), Eigen::VectorXd::Zero(inputs), Eigen::VectorXd::Ones(inputs),
                  BlockSizes{inputs, 0, 0}, seed);
}

}  // namespace cmf
