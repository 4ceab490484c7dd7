#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fdk/tensor.hpp"
#include "fdk/tensor_io.hpp"

namespace fdk {

enum class Activation { SiLU, ReLU, Identity };

Activation activation_from_string(std::string_view name);
std::string_view to_string(Activation a);
Tensor apply_activation(const Tensor& x, Activation a);

/// Strip Perception Module: channel reduction, parallel 1x3 / 3x1 / 3x3
/// strip branches, dense concat, 1x1 fusion and a residual connection.
struct SpmConfig {
  std::size_t in_channels = 0;
  std::size_t reduced_channels = 0;
  Activation activation = Activation::SiLU;

  /// reduced_channels = max(1, in_channels / 2).
  static SpmConfig with_defaults(std::size_t in_channels);
  void validate() const;
};

/// Squeeze-aggregated excitation: several FC bottlenecks summed before the
/// expansion back to `channels`.
struct SaeConfig {
  std::size_t channels = 0;
  std::size_t reduction_ratio = 16;
  std::size_t branches = 4;

  /// Bottleneck width, channels / reduction_ratio clamped to at least 4.
  std::size_t hidden() const noexcept;
  void validate() const;
};

struct SeSppfConfig {
  std::size_t in_channels = 0;
  std::size_t hidden_channels = 0;
  std::size_t out_channels = 0;
  std::size_t pool_kernel = 5;
  SaeConfig sae;
  Activation activation = Activation::SiLU;

  static SeSppfConfig with_defaults(std::size_t in_channels, std::size_t out_channels);
  void validate() const;
};

SpmConfig spm_config_from_json(std::string_view text);
SeSppfConfig se_sppf_config_from_json(std::string_view text);

/// Shape of one named parameter of a block.
struct ParamSpec {
  enum class Kind { Conv, Linear };
  std::string name;
  Kind kind = Kind::Conv;
  std::size_t out = 0;
  std::size_t in = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

std::vector<ParamSpec> spm_param_specs(const SpmConfig& config);
std::vector<ParamSpec> sae_param_specs(const SaeConfig& config);
std::vector<ParamSpec> se_sppf_param_specs(const SeSppfConfig& config);

/// Named parameters for one block instance.
struct BlockWeights {
  std::map<std::string, Conv2dParams> convs;
  std::map<std::string, LinearParams> linears;

  const Conv2dParams& conv(const std::string& name) const;
  const LinearParams& fc(const std::string& name) const;

  /// Throws std::invalid_argument if any parameter is missing or misshapen.
  void check(const std::vector<ParamSpec>& specs) const;
};

/// Uniform init in [-k, k], k = 1/sqrt(fan_in), drawn in spec order.
BlockWeights init_weights(const std::vector<ParamSpec>& specs, std::uint64_t seed);

/// Per-parameter RT4 files: <dir>/<name>.weight.rt4 and <dir>/<name>.bias.rt4.
/// Conv weights are (out, in, kh, kw); linear weights (1, 1, out, in); biases
/// (1, out, 1, 1).
BlockWeights load_weights(const std::filesystem::path& dir, const std::vector<ParamSpec>& specs);
void save_weights(const std::filesystem::path& dir, const BlockWeights& weights,
                  const std::vector<ParamSpec>& specs);

Tensor spm_forward(const Tensor& input, const BlockWeights& weights, const SpmConfig& config);

/// Per-(batch, channel) gates in (0, 1), laid out n * C + c.
std::vector<float> sae_channel_weights(const Tensor& input, const BlockWeights& weights,
                                       const SaeConfig& config);
Tensor sae_forward(const Tensor& input, const BlockWeights& weights, const SaeConfig& config);

/// The SPPF pyramid: the input followed by three chained stride-1 max pools.
std::array<Tensor, 4> sppf_pyramid(const Tensor& input, std::size_t pool_kernel);

Tensor se_sppf_forward(const Tensor& input, const BlockWeights& weights, const SeSppfConfig& config);

/// Channel mean of one batch item, min-max normalized; constant maps give zeros.
Grid activation_map(const Tensor& t, std::size_t batch_index);

}  // namespace fdk
