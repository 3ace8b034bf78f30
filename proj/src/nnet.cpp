#include "fairssl/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fairssl {

namespace {

Matrix apply_activation(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kSoftplus:
      // log(1 + e^z) without overflow
      return z.unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  }
  return z;
}

Matrix activation_derivative(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::kRelu:
      return z.unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; });
    case Activation::kSoftplus:
      return z.unaryExpr([](double x) { return logistic(x); });
  }
  return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

const char* activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "softplus";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation '" + name + "'");
}

MlpParams::MlpParams(std::vector<int> dims, Activation hidden) : dims_(std::move(dims)), hidden_(hidden) {
  if (dims_.size() < 2) throw ConfigError("network needs at least an input and an output layer");
  for (int d : dims_) {
    if (d < 1) throw ConfigError("layer widths must be positive");
  }
  Eigen::Index total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
  }
  flat_ = Vector::Zero(total);
}

Eigen::Map<const RowMatrix> MlpParams::weight(int layer) const {
  return {flat_.data() + weight_offset(layer), dims_[layer + 1], dims_[layer]};
}
Eigen::Map<RowMatrix> MlpParams::weight(int layer) {
  return {flat_.data() + weight_offset(layer), dims_[layer + 1], dims_[layer]};
}
Eigen::Map<const Vector> MlpParams::bias(int layer) const {
  return {flat_.data() + bias_offset(layer), dims_[layer + 1]};
}
Eigen::Map<Vector> MlpParams::bias(int layer) {
  return {flat_.data() + bias_offset(layer), dims_[layer + 1]};
}

bool MlpParams::operator==(const MlpParams& other) const {
  return dims_ == other.dims_ && hidden_ == other.hidden_ && flat_.size() == other.flat_.size() &&
         flat_ == other.flat_;
}

GradVector& GradVector::operator+=(const GradVector& other) {
  if (values.size() == 0) {
    values = other.values;
  } else {
    values += other.values;
  }
  return *this;
}

MlpParams init(const std::vector<int>& dims, std::uint64_t seed, Activation hidden) {
  if (dims.empty()) throw ConfigError("empty layer dims");
  MlpParams p(dims, hidden);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < p.num_layers(); ++l) {
    const double scale = std::sqrt(2.0 / dims[l]);
    auto w = p.weight(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * normal(rng);
    }
  }
  return p;
}

MlpParams constant_predictor(const std::vector<int>& dims, double c, Activation hidden) {
  MlpParams p(dims, hidden);
  p.bias(p.num_layers() - 1).setConstant(logit(c));
  return p;
}

ForwardResult forward(const MlpParams& params, const Matrix& X) {
  if (X.cols() != params.input_dim()) {
    throw ConfigError("input has " + std::to_string(X.cols()) + " columns, network expects " +
                      std::to_string(params.input_dim()));
  }
  ForwardResult out;
  out.cache.act.push_back(X);
  for (int l = 0; l < params.num_layers(); ++l) {
    Matrix z = out.cache.act.back() * params.weight(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    if (l + 1 < params.num_layers()) {
      out.cache.act.push_back(apply_activation(params.hidden_activation(), z));
    }
    out.cache.pre.push_back(std::move(z));
  }
  out.logits = out.cache.pre.back();
  out.probs = out.logits.unaryExpr([](double z) { return logistic(z); });
  return out;
}

GradVector backward(const MlpParams& params, const ForwardCache& cache, const Matrix& dlogits) {
  GradVector grad = GradVector::zeros(params.count());
  MlpParams view(params.dims(), params.hidden_activation());  // layout helper for grad slices
  Matrix delta = dlogits;
  for (int l = params.num_layers() - 1; l >= 0; --l) {
    const Matrix& input = cache.act[l];
    view.weight(l) = delta.transpose() * input;
    view.bias(l) = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix upstream = delta * params.weight(l);
      delta = upstream.cwiseProduct(activation_derivative(params.hidden_activation(), cache.pre[l - 1]));
    }
  }
  grad.values = std::move(view.flat());
  return grad;
}

double cosine(const GradVector& a, const GradVector& b) {
  if (a.size() != b.size()) throw ConfigError("cosine of vectors with different lengths");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::clamp(a.values.dot(b.values) / (na * nb), -1.0, 1.0);
}

void adam_step(MlpParams& params, const GradVector& grad, AdamState& state, double lr) {
  if (grad.size() != params.count()) throw ConfigError("gradient length does not match parameters");
  if (!grad.values.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < grad.size(); ++bad) {
      if (!std::isfinite(grad.values(bad))) break;
    }
    throw NumericalError("non-finite gradient component at index " + std::to_string(bad));
  }
  if (state.m.size() != params.count()) {
    state.m = Vector::Zero(params.count());
    state.v = Vector::Zero(params.count());
    state.step = 0;
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad.values;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.values.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.flat().array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "fairssl-mlp-v1";
  j["dims"] = params.dims();
  j["hidden_activation"] = activation_name(params.hidden_activation());
  j["params"] = std::vector<double>(params.flat().data(), params.flat().data() + params.count());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump();
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "fairssl-mlp-v1") throw ConfigError("not a fairssl checkpoint");
  MlpParams p(j.at("dims").get<std::vector<int>>(), parse_activation(j.at("hidden_activation")));
  const auto values = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != p.count()) {
    throw ConfigError("checkpoint parameter count does not match its architecture header");
  }
  for (Eigen::Index i = 0; i < p.count(); ++i) p.flat()(i) = values[i];
  return p;
}

}  // namespace fairssl
