/**
 * @file unet.hpp
 * @brief 3D U-net with exact reverse-mode gradients, float or double.
 *
 * Encoder level l has base * 2^l filters; each level runs `layers` 3x3x3
 * zero-padded convolutions with ELU. Levels are joined by 2x max-pooling on
 * the way down and 2x trilinear upsampling plus channel concatenation with the
 * encoder output on the way up. A final 1x1x1 convolution feeds either a
 * linear head or a per-voxel softmax.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfsr/rng.hpp"
#include "lfsr/volume.hpp"

namespace lfsr::nn {

enum class Head { Linear, Softmax };

struct UNetSpec {
  int levels = 2;
  int layers = 2;
  int base_filters = 8;
  int in_channels = 2;
  int out_channels = 1;
  Head head = Head::Linear;

  /// Throws SpecError.
  void validate() const;
  /// Throws SpecError unless every dim is divisible by 2^(levels - 1).
  void check_input(const Index3& dims) const;
  bool operator==(const UNetSpec&) const = default;
};

/// Closed-form parameter count.
std::size_t parameter_count(const UNetSpec& spec);

/// Channel-major activations: data[c * voxels + i + nx * (j + ny * k)].
template <typename T>
struct Tensor {
  int channels = 0;
  Index3 dims{0, 0, 0};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, const Index3& d) : channels(c), dims(d), data(static_cast<std::size_t>(c) * d[0] * d[1] * d[2], T(0)) {}
  std::size_t voxels() const { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
  T* channel(int c) { return data.data() + static_cast<std::size_t>(c) * voxels(); }
  const T* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * voxels(); }
};

/// Parameters of one convolution inside the flat parameter vector: weights
/// [out][in][k^3] starting at `offset`, then `out` biases.
struct ConvLayer {
  std::string path;  // "enc0.conv1", "dec0.conv2", "head"
  int in = 0, out = 0, kernel = 3;
  std::size_t offset = 0;
  std::size_t weight_count() const { return static_cast<std::size_t>(in) * out * kernel * kernel * kernel; }
  std::size_t count() const { return weight_count() + out; }
};

template <typename T>
class UNet {
 public:
  struct Node;
  /// Intermediate tensors of one forward pass, consumed by backward().
  struct Cache {
    std::vector<Tensor<T>> tensors;
    std::vector<std::vector<std::uint32_t>> argmax;  // per pooling node
  };

  UNet() = default;
  /// Zero-initialised parameters. Throws SpecError.
  explicit UNet(const UNetSpec& spec);
  /// He fan-in initialisation (Normal(0, sqrt(2 / fan_in)), zero biases).
  static UNet build(const UNetSpec& spec, Rng& rng);

  const UNetSpec& spec() const { return spec_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }

  /// Output has the input's spatial dims. Throws ShapeError / SpecError.
  Tensor<T> forward(const Tensor<T>& input, Cache* cache = nullptr) const;

  /// Reverse pass for d(loss)/d(output) = `grad_output`. Accumulates into
  /// `grad_params` when non-null (resized to the parameter count) and writes
  /// d(loss)/d(input) into `grad_input` when non-null.
  void backward(const Cache& cache, const Tensor<T>& grad_output, std::vector<T>* grad_params,
                Tensor<T>* grad_input) const;

  /// Pre-activation of the final 1x1x1 layer is affine in these features.
  const Tensor<T>& last_hidden(const Cache& cache) const;

  /// FNV-1a over the parameter bytes.
  std::uint64_t hash() const;

  struct Node {
    enum Kind { Conv, Pool, Up, Concat, Softmax } kind;
    int layer = -1;  // conv layer index
    bool elu = false;
    int a = -1, b = -1, out = -1;  // tensor ids
  };

 private:
  void assemble();

  UNetSpec spec_;
  std::vector<ConvLayer> layers_;
  std::vector<Node> nodes_;
  int tensor_count_ = 0;
  int last_hidden_ = -1;
  std::vector<T> params_;
};

// Building blocks, exposed for oracle tests.

/// out[co] = bias[co] + sum_ci w[co][ci] (*) in[ci], zero padding, k in {1, 3}.
template <typename T>
void conv3d(const Tensor<T>& in, const T* weights, const T* bias, int out_channels, int kernel, Tensor<T>& out);

/// Trilinear 2x upsampling; output voxel j reads source coordinate
/// (j + 0.5) / 2 - 0.5, clamped to the source extent.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& in);

template <typename T>
Tensor<T> to_tensor(const std::vector<const Volume*>& channels);

Volume channel_volume(const Tensor<float>& t, int c, const Grid& grid);
Volume channel_volume(const Tensor<double>& t, int c, const Grid& grid);

}  // namespace lfsr::nn
