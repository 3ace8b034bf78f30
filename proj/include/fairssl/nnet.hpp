#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fairssl/data.hpp"

namespace fairssl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { kRelu, kSoftplus };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Feedforward network d -> hidden... -> L with identity output logits.
/// All parameters live in one flat vector; per-layer weights are row-major
/// (out x in) views followed by the bias.
class MlpParams {
 public:
  MlpParams() = default;
  MlpParams(std::vector<int> dims, Activation hidden);

  const std::vector<int>& dims() const { return dims_; }
  Activation hidden_activation() const { return hidden_; }
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  Eigen::Index count() const { return flat_.size(); }

  Eigen::Map<const RowMatrix> weight(int layer) const;
  Eigen::Map<RowMatrix> weight(int layer);
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Vector> bias(int layer);

  const Vector& flat() const { return flat_; }
  Vector& flat() { return flat_; }

  bool operator==(const MlpParams& other) const;

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(dims_[layer + 1]) * dims_[layer];
  }

  std::vector<int> dims_;
  Activation hidden_ = Activation::kRelu;
  std::vector<Eigen::Index> offsets_;
  Vector flat_;
};

/// Flattened gradient over all parameters, same layout as MlpParams::flat().
struct GradVector {
  Vector values;

  GradVector() = default;
  explicit GradVector(Vector v) : values(std::move(v)) {}
  static GradVector zeros(Eigen::Index n) { return GradVector(Vector::Zero(n)); }

  Eigen::Index size() const { return values.size(); }
  double norm() const { return values.norm(); }
  GradVector& operator+=(const GradVector& other);
  friend GradVector operator*(double s, const GradVector& g) { return GradVector(s * g.values); }
};

struct ForwardCache {
  std::vector<Matrix> pre;  // pre-activations per layer (last one = logits)
  std::vector<Matrix> act;  // act[0] = input, act[l+1] = hidden activation of pre[l]
};

struct ForwardResult {
  Matrix logits;
  Matrix probs;
  ForwardCache cache;
};

MlpParams init(const std::vector<int>& dims, std::uint64_t seed, Activation hidden = Activation::kRelu);

/// Zero weights with output biases logit(c): a network realizing the constant predictor c.
MlpParams constant_predictor(const std::vector<int>& dims, double c, Activation hidden = Activation::kRelu);

ForwardResult forward(const MlpParams& params, const Matrix& X);

/// Reverse-mode gradient of a scalar whose derivative w.r.t. the logits is dlogits.
GradVector backward(const MlpParams& params, const ForwardCache& cache, const Matrix& dlogits);

double cosine(const GradVector& a, const GradVector& b);

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update in place. Throws NumericalError on a non-finite gradient.
void adam_step(MlpParams& params, const GradVector& grad, AdamState& state, double lr);

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path);
MlpParams load_checkpoint(const std::filesystem::path& path);

double logistic(double z);
double logit(double p);

}  // namespace fairssl
