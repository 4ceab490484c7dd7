#include "fdk/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "fdk/random.hpp"

namespace fdk {

namespace {

using nlohmann::json;

std::size_t read_count(const json& j, const char* key, std::size_t fallback, bool required) {
  if (!j.contains(key)) {
    if (required) throw std::invalid_argument(std::string("block config: missing \"") + key + "\"");
    return fallback;
  }
  if (!j[key].is_number_unsigned()) {
    throw std::invalid_argument(std::string("block config: \"") + key + "\" must be a non-negative integer");
  }
  return j[key].get<std::size_t>();
}

json parse_object(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("block config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("block config: expected a JSON object");
  return j;
}

SaeConfig sae_from_json(const json& j, std::size_t default_channels) {
  SaeConfig sae;
  sae.channels = read_count(j, "channels", default_channels, false);
  sae.reduction_ratio = read_count(j, "reduction_ratio", sae.reduction_ratio, false);
  sae.branches = read_count(j, "branches", sae.branches, false);
  return sae;
}

ParamSpec conv_spec(std::string name, std::size_t out, std::size_t in, std::size_t kh, std::size_t kw) {
  return ParamSpec{std::move(name), ParamSpec::Kind::Conv, out, in, kh, kw, kh / 2, kw / 2};
}

ParamSpec linear_spec(std::string name, std::size_t out, std::size_t in) {
  return ParamSpec{std::move(name), ParamSpec::Kind::Linear, out, in, 1, 1, 0, 0};
}

Tensor conv_act(const Tensor& x, const Conv2dParams& p, Activation a) {
  return apply_activation(conv2d(x, p), a);
}

void check_input(const Tensor& input, std::size_t channels, const char* block) {
  if (input.shape().c != channels) {
    throw std::invalid_argument(std::string(block) + ": input has " + std::to_string(input.shape().c) +
                                " channels, config expects " + std::to_string(channels));
  }
}

}  // namespace

Activation activation_from_string(std::string_view name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "relu") return Activation::ReLU;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::SiLU: return "silu";
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::SiLU: return silu(x);
    case Activation::ReLU: return relu(x);
    case Activation::Identity: return x;
  }
  return x;
}

SpmConfig SpmConfig::with_defaults(std::size_t in_channels) {
  return SpmConfig{in_channels, std::max<std::size_t>(1, in_channels / 2), Activation::SiLU};
}

void SpmConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("spm: in_channels must be >= 1");
  if (reduced_channels < 1) throw std::invalid_argument("spm: reduced_channels must be >= 1");
}

std::size_t SaeConfig::hidden() const noexcept {
  return std::max<std::size_t>(4, channels / std::max<std::size_t>(1, reduction_ratio));
}

void SaeConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("sae: channels must be >= 1");
  if (reduction_ratio < 1) throw std::invalid_argument("sae: reduction_ratio must be >= 1");
  if (branches < 1) throw std::invalid_argument("sae: branches must be >= 1");
}

SeSppfConfig SeSppfConfig::with_defaults(std::size_t in_channels, std::size_t out_channels) {
  SeSppfConfig c;
  c.in_channels = in_channels;
  c.hidden_channels = std::max<std::size_t>(1, in_channels / 2);
  c.out_channels = out_channels;
  c.sae.channels = in_channels;
  return c;
}

void SeSppfConfig::validate() const {
  if (in_channels < 1 || hidden_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("se_sppf: channel counts must be >= 1");
  }
  if (pool_kernel < 1 || pool_kernel % 2 == 0) {
    throw std::invalid_argument("se_sppf: pool_kernel must be odd, got " + std::to_string(pool_kernel));
  }
  sae.validate();
  if (sae.channels != in_channels) {
    throw std::invalid_argument("se_sppf: sae.channels must equal in_channels");
  }
}

SpmConfig spm_config_from_json(std::string_view text) {
  const json j = parse_object(text);
  SpmConfig c;
  c.in_channels = read_count(j, "in_channels", 0, true);
  c.reduced_channels = read_count(j, "reduced_channels", std::max<std::size_t>(1, c.in_channels / 2), false);
  if (j.contains("activation")) c.activation = activation_from_string(j["activation"].get<std::string>());
  c.validate();
  return c;
}

SeSppfConfig se_sppf_config_from_json(std::string_view text) {
  const json j = parse_object(text);
  SeSppfConfig c;
  c.in_channels = read_count(j, "in_channels", 0, true);
  c.hidden_channels = read_count(j, "hidden_channels", std::max<std::size_t>(1, c.in_channels / 2), false);
  c.out_channels = read_count(j, "out_channels", 0, true);
  c.pool_kernel = read_count(j, "pool_kernel", c.pool_kernel, false);
  c.sae = sae_from_json(j.value("sae", json::object()), c.in_channels);
  if (j.contains("activation")) c.activation = activation_from_string(j["activation"].get<std::string>());
  c.validate();
  return c;
}

std::vector<ParamSpec> spm_param_specs(const SpmConfig& config) {
  config.validate();
  const std::size_t c = config.in_channels;
  const std::size_t r = config.reduced_channels;
  return {
      conv_spec("reduce_1x1", r, c, 1, 1),
      conv_spec("reduce_3x3", r, r, 3, 3),
      conv_spec("strip_1x3", r, r, 1, 3),
      conv_spec("strip_3x1", r, r, 3, 1),
      conv_spec("square_3x3", r, r, 3, 3),
      conv_spec("fuse_1x1", c, 4 * r, 1, 1),
  };
}

std::vector<ParamSpec> sae_param_specs(const SaeConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs;
  for (std::size_t b = 0; b < config.branches; ++b) {
    specs.push_back(linear_spec("sae.branch" + std::to_string(b), config.hidden(), config.channels));
  }
  specs.push_back(linear_spec("sae.expand", config.channels, config.hidden()));
  return specs;
}

std::vector<ParamSpec> se_sppf_param_specs(const SeSppfConfig& config) {
  config.validate();
  std::vector<ParamSpec> specs = sae_param_specs(config.sae);
  const std::size_t h = config.hidden_channels;
  specs.push_back(conv_spec("cv1", h, config.in_channels, 1, 1));
  specs.push_back(conv_spec("cv2", h, 4 * h, 1, 1));
  specs.push_back(conv_spec("cv3", config.out_channels, 2 * h, 1, 1));
  specs.push_back(conv_spec("cv4", config.out_channels, config.out_channels, 3, 3));
  return specs;
}

const Conv2dParams& BlockWeights::conv(const std::string& name) const {
  auto it = convs.find(name);
  if (it == convs.end()) throw std::invalid_argument("missing conv parameter: " + name);
  return it->second;
}

const LinearParams& BlockWeights::fc(const std::string& name) const {
  auto it = linears.find(name);
  if (it == linears.end()) throw std::invalid_argument("missing linear parameter: " + name);
  return it->second;
}

void BlockWeights::check(const std::vector<ParamSpec>& specs) const {
  for (const ParamSpec& s : specs) {
    if (s.kind == ParamSpec::Kind::Conv) {
      const Conv2dParams& p = conv(s.name);
      const Shape expected{s.out, s.in, s.kernel_h, s.kernel_w};
      if (p.weight.shape() != expected || p.bias.size() != s.out) {
        throw std::invalid_argument("conv parameter " + s.name + " does not match block config");
      }
      if (p.pad_h != s.pad_h || p.pad_w != s.pad_w || p.stride_h != 1 || p.stride_w != 1) {
        throw std::invalid_argument("conv parameter " + s.name + " has wrong padding or stride");
      }
    } else {
      const LinearParams& p = fc(s.name);
      if (p.out_features != s.out || p.in_features != s.in) {
        throw std::invalid_argument("linear parameter " + s.name + " does not match block config");
      }
      p.validate();
    }
  }
}

BlockWeights init_weights(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  SeededRng rng(seed);
  BlockWeights w;
  for (const ParamSpec& s : specs) {
    const std::size_t fan_in = s.in * s.kernel_h * s.kernel_w;
    const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<float> weight(s.out * fan_in);
    for (float& v : weight) v = static_cast<float>(rng.uniform(-k, k));
    std::vector<float> bias(s.out);
    for (float& v : bias) v = static_cast<float>(rng.uniform(-k, k));
    if (s.kind == ParamSpec::Kind::Conv) {
      Conv2dParams p;
      p.weight = Tensor(Shape{s.out, s.in, s.kernel_h, s.kernel_w}, std::move(weight));
      p.bias = std::move(bias);
      p.pad_h = s.pad_h;
      p.pad_w = s.pad_w;
      w.convs.emplace(s.name, std::move(p));
    } else {
      w.linears.emplace(s.name, LinearParams{s.out, s.in, std::move(weight), std::move(bias)});
    }
  }
  return w;
}

BlockWeights load_weights(const std::filesystem::path& dir, const std::vector<ParamSpec>& specs) {
  BlockWeights w;
  for (const ParamSpec& s : specs) {
    const Tensor weight = load_rt4(dir / (s.name + ".weight.rt4"));
    const Tensor bias = load_rt4(dir / (s.name + ".bias.rt4"));
    std::vector<float> b(bias.data().begin(), bias.data().end());
    if (s.kind == ParamSpec::Kind::Conv) {
      Conv2dParams p;
      p.weight = weight;
      p.bias = std::move(b);
      p.pad_h = s.pad_h;
      p.pad_w = s.pad_w;
      w.convs.emplace(s.name, std::move(p));
    } else {
      const Shape expected{1, 1, s.out, s.in};
      if (weight.shape() != expected) {
        throw std::invalid_argument("linear parameter " + s.name + " has wrong file shape");
      }
      w.linears.emplace(s.name, LinearParams{s.out, s.in, {weight.data().begin(), weight.data().end()}, std::move(b)});
    }
  }
  w.check(specs);
  return w;
}

void save_weights(const std::filesystem::path& dir, const BlockWeights& weights,
                  const std::vector<ParamSpec>& specs) {
  std::filesystem::create_directories(dir);
  for (const ParamSpec& s : specs) {
    if (s.kind == ParamSpec::Kind::Conv) {
      const Conv2dParams& p = weights.conv(s.name);
      save_rt4(dir / (s.name + ".weight.rt4"), p.weight);
      save_rt4(dir / (s.name + ".bias.rt4"), Tensor(Shape{1, p.bias.size(), 1, 1}, p.bias));
    } else {
      const LinearParams& p = weights.fc(s.name);
      save_rt4(dir / (s.name + ".weight.rt4"), Tensor(Shape{1, 1, p.out_features, p.in_features}, p.weight));
      save_rt4(dir / (s.name + ".bias.rt4"), Tensor(Shape{1, p.bias.size(), 1, 1}, p.bias));
    }
  }
}

Tensor spm_forward(const Tensor& input, const BlockWeights& weights, const SpmConfig& config) {
  weights.check(spm_param_specs(config));
  check_input(input, config.in_channels, "spm");
  if (input.shape().h < 3 || input.shape().w < 3) {
    throw std::invalid_argument("spm: spatial dims must be at least 3x3");
  }
  const Activation act = config.activation;

  const Tensor reduced = conv_act(conv_act(input, weights.conv("reduce_1x1"), act),
                                  weights.conv("reduce_3x3"), act);
  const std::array<Tensor, 4> dense{
      reduced,
      conv_act(reduced, weights.conv("strip_1x3"), act),
      conv_act(reduced, weights.conv("strip_3x1"), act),
      conv_act(reduced, weights.conv("square_3x3"), act),
  };
  const Tensor fused = conv_act(concat_channels(dense), weights.conv("fuse_1x1"), act);
  return add(input, fused);
}

std::vector<float> sae_channel_weights(const Tensor& input, const BlockWeights& weights,
                                       const SaeConfig& config) {
  weights.check(sae_param_specs(config));
  check_input(input, config.channels, "sae");
  const Shape& s = input.shape();
  const Tensor squeezed = global_avg_pool(input);

  std::vector<float> gates(s.n * s.c);
  const std::size_t hidden = config.hidden();
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto z = squeezed.data().subspan(n * s.c, s.c);
    std::vector<double> aggregate(hidden, 0.0);
    for (std::size_t b = 0; b < config.branches; ++b) {
      const std::vector<float> h = linear(z, weights.fc("sae.branch" + std::to_string(b)));
      for (std::size_t i = 0; i < hidden; ++i) aggregate[i] += relu(h[i]);
    }
    const std::vector<float> agg(aggregate.begin(), aggregate.end());
    const std::vector<float> excite = linear(agg, weights.fc("sae.expand"));
    for (std::size_t c = 0; c < s.c; ++c) gates[n * s.c + c] = sigmoid(excite[c]);
  }
  return gates;
}

Tensor sae_forward(const Tensor& input, const BlockWeights& weights, const SaeConfig& config) {
  return scale_channels(input, sae_channel_weights(input, weights, config));
}

std::array<Tensor, 4> sppf_pyramid(const Tensor& input, std::size_t pool_kernel) {
  if (pool_kernel % 2 == 0) throw std::invalid_argument("sppf: pool kernel must be odd");
  const std::size_t pad = (pool_kernel - 1) / 2;
  std::array<Tensor, 4> maps{input, {}, {}, {}};
  for (std::size_t i = 1; i < maps.size(); ++i) maps[i] = maxpool2d(maps[i - 1], pool_kernel, 1, pad);
  return maps;
}

Tensor se_sppf_forward(const Tensor& input, const BlockWeights& weights, const SeSppfConfig& config) {
  weights.check(se_sppf_param_specs(config));
  check_input(input, config.in_channels, "se_sppf");
  const Activation act = config.activation;

  const Tensor weighted = sae_forward(input, weights, config.sae);
  const Tensor projected = conv_act(weighted, weights.conv("cv1"), act);
  const std::array<Tensor, 4> pyramid = sppf_pyramid(projected, config.pool_kernel);
  const Tensor pooled = conv_act(concat_channels(pyramid), weights.conv("cv2"), act);
  // Side path: the channel-weighted map after its 1x1 projection.
  const std::array<Tensor, 2> merged{pooled, projected};
  const Tensor head = conv_act(concat_channels(merged), weights.conv("cv3"), act);
  return conv_act(head, weights.conv("cv4"), act);
}

Grid activation_map(const Tensor& t, std::size_t batch_index) {
  const Shape& s = t.shape();
  if (batch_index >= s.n) throw std::out_of_range("activation_map: batch index out of range");
  if (s.c == 0) throw std::invalid_argument("activation_map: tensor has no channels");
  Grid g{s.h, s.w, std::vector<float>(s.h * s.w)};
  std::vector<double> mean(s.h * s.w, 0.0);
  for (std::size_t c = 0; c < s.c; ++c) {
    auto p = t.plane(batch_index, c);
    for (std::size_t i = 0; i < p.size(); ++i) mean[i] += p[i];
  }
  for (double& m : mean) m /= static_cast<double>(s.c);
  if (mean.empty()) return g;
  const auto [lo, hi] = std::minmax_element(mean.begin(), mean.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    g.values[i] = range > 0.0 ? static_cast<float>((mean[i] - *lo) / range) : 0.0f;
  }
  return g;
}

}  // namespace fdk
