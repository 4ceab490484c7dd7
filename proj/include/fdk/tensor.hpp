#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fdk {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const noexcept { return n * c * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense NCHW float tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[index(n, c, h, w)];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[index(n, c, h, w)];
  }

  /// Contiguous h*w plane for one (batch, channel).
  std::span<float> plane(std::size_t n, std::size_t c) noexcept;
  std::span<const float> plane(std::size_t n, std::size_t c) const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_{};
  std::vector<float> data_;
};

struct Conv2dParams {
  // weight has shape (out_channels, in_channels, kernel_h, kernel_w)
  Tensor weight;
  std::vector<float> bias;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  std::size_t out_channels() const noexcept { return weight.shape().n; }
  std::size_t in_channels() const noexcept { return weight.shape().c; }
  std::size_t kernel_h() const noexcept { return weight.shape().h; }
  std::size_t kernel_w() const noexcept { return weight.shape().w; }

  void validate() const;
};

/// Fully connected layer, weight stored row-major (out x in).
struct LinearParams {
  std::size_t out_features = 0;
  std::size_t in_features = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  void validate() const;
};

Tensor conv2d(const Tensor& input, const Conv2dParams& params);
Tensor maxpool2d(const Tensor& input, std::size_t kernel, std::size_t stride, std::size_t pad);
Tensor global_avg_pool(const Tensor& input);
std::vector<float> linear(std::span<const float> input, const LinearParams& params);

Tensor concat_channels(std::span<const Tensor> inputs);
/// Channels [begin, begin + count) of `input`.
Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count);

float sigmoid(float x) noexcept;
float silu(float x) noexcept;
float relu(float x) noexcept;

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);

/// Multiplies channel c of batch item n by scales[n * C + c].
Tensor scale_channels(const Tensor& x, std::span<const float> scales);

}  // namespace fdk
