#pragma once

#include "drums/core.hpp"
#include "drums/subspace.hpp"
#include "drums/tensor_io.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace drums {

using FTensor = Array<float>;

/// U-Net descriptor stored in the reserved "arch" archive entry as
/// [version, levels, base_filters, in_channels, out_channels, conv_bias, dropout].
struct UNetArch {
  int version = 1;
  int levels = 4;
  int base_filters = 64;
  int in_channels = 6;
  int out_channels = 6;
  /// 3x3 convolutions carry a bias term. Off by default since batch norm follows.
  bool conv_bias = false;
  double dropout = 0.5;

  int filters(int level) const { return base_filters << level; }
  bool operator==(const UNetArch &) const = default;
};

inline constexpr int kArchVersion = 1;

struct LayerSpec {
  enum class Kind { Conv3x3, BatchNorm, Relu, MaxPool2, TransposeConv2, Conv1x1, ConcatSkip, Dropout };
  Kind kind;
  std::string name; // tensor prefix, e.g. "enc0.conv1"
  int in = 0;
  int out = 0;
  bool bias = false;

  std::size_t parameter_count() const;
};

/// Layers in execution order.
std::vector<LayerSpec> layer_specs(const UNetArch &arch);
/// Trainable parameters from layer arithmetic (batch-norm running statistics excluded).
std::size_t parameter_count(const UNetArch &arch);

struct TensorSpec {
  std::string name;
  Shape shape;
  bool trainable = true;
};
/// Every tensor a weight archive must provide, with its shape.
std::vector<TensorSpec> expected_tensors(const UNetArch &arch);

class WeightsError : public DataError {
public:
  using DataError::DataError;
};

class NetworkWeights {
public:
  NetworkWeights() = default;
  NetworkWeights(UNetArch arch, std::map<std::string, FTensor> tensors);

  const UNetArch &arch() const { return arch_; }
  const FTensor &at(const std::string &name) const;
  FTensor &at(const std::string &name);
  bool contains(const std::string &name) const { return tensors_.count(name) != 0; }
  const std::map<std::string, FTensor> &tensors() const { return tensors_; }

  /// Trainable parameter count implied by the stored tensors.
  std::size_t parameter_count() const;

  Archive to_archive() const;
  static NetworkWeights from_archive(const Archive &archive);

private:
  UNetArch arch_;
  std::map<std::string, FTensor> tensors_;
};

NetworkWeights load_weights(const std::filesystem::path &path);
void save_weights(const NetworkWeights &w, const std::filesystem::path &path);

NetworkWeights zero_weights(const UNetArch &arch);
/// He-scaled Gaussian kernels and mildly perturbed batch-norm statistics.
NetworkWeights random_weights(const UNetArch &arch, std::uint64_t seed);
/// Weights for which forward() is the identity map: the first block routes
/// positive and negative parts through ReLU, the skip path carries them to the
/// last block and the 1x1 head recombines them. Deeper levels are zero.
NetworkWeights identity_weights(const UNetArch &arch);

// Layer kernels on (C, H, W) tensors.
FTensor conv2d(const FTensor &x, const FTensor &kernel, const FTensor *bias);
FTensor batchnorm_inference(const FTensor &x, const FTensor &gamma, const FTensor &beta,
                            const FTensor &mean, const FTensor &var, double eps = 1e-5);
void relu_inplace(FTensor &x);
FTensor maxpool2(const FTensor &x);
/// 2x2 stride-2 transpose convolution; kernel is (C_in, C_out, 2, 2).
FTensor transpose_conv2(const FTensor &x, const FTensor &kernel, const FTensor &bias);
/// Channel concatenation [skip, up].
FTensor concat_channels(const FTensor &skip, const FTensor &up);

/// Named intermediate activations ("enc0".."encN", "dec{N-1}".."dec0", "output").
using ActivationTrace = std::vector<std::pair<std::string, FTensor>>;

FTensor forward(const FTensor &x, const NetworkWeights &w, ActivationTrace *trace = nullptr);

PreparedBasis refine_basis(const PreparedBasis &p, const NetworkWeights &w);

struct ParityReport {
  std::vector<std::pair<std::string, double>> stage_max_abs; // per dumped activation
  double output_max_abs = 0.0;
};

/// Compare against a forward-pass dump: archive with "input", "output" and
/// optional "act.<stage>" entries.
ParityReport check_parity(const Archive &dump, const NetworkWeights &w);
Archive make_parity_dump(const FTensor &input, const NetworkWeights &w);

} // namespace drums
