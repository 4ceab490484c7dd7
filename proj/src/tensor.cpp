#include "fdk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fdk {

namespace {

std::string shape_str(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

template <typename F>
Tensor map(const Tensor& x, F&& f) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

std::span<float> Tensor::plane(std::size_t n, std::size_t c) noexcept {
  return std::span<float>(data_).subspan(index(n, c, 0, 0), shape_.h * shape_.w);
}

std::span<const float> Tensor::plane(std::size_t n, std::size_t c) const noexcept {
  return std::span<const float>(data_).subspan(index(n, c, 0, 0), shape_.h * shape_.w);
}

void Conv2dParams::validate() const {
  const Shape& s = weight.shape();
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw std::invalid_argument("conv2d: weight shape " + shape_str(s) + " has a zero dimension");
  }
  if (bias.size() != s.n) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias.size()) +
                                " != out_channels " + std::to_string(s.n));
  }
  if (stride_h == 0 || stride_w == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
}

void LinearParams::validate() const {
  if (weight.size() != out_features * in_features) {
    throw std::invalid_argument("linear: weight size " + std::to_string(weight.size()) +
                                " != out*in " + std::to_string(out_features * in_features));
  }
  if (bias.size() != out_features) {
    throw std::invalid_argument("linear: bias length mismatch");
  }
}

Tensor conv2d(const Tensor& input, const Conv2dParams& params) {
  params.validate();
  const Shape& in = input.shape();
  if (in.c != params.in_channels()) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(in.c) +
                                " != weight in_channels " + std::to_string(params.in_channels()));
  }
  const std::size_t kh = params.kernel_h();
  const std::size_t kw = params.kernel_w();
  const std::size_t padded_h = in.h + 2 * params.pad_h;
  const std::size_t padded_w = in.w + 2 * params.pad_w;
  if (padded_h < kh || padded_w < kw) {
    throw std::invalid_argument("conv2d: kernel larger than padded input " + shape_str(in));
  }
  if ((padded_h - kh) % params.stride_h != 0 || (padded_w - kw) % params.stride_w != 0) {
    throw std::invalid_argument("conv2d: non-integral output dimension for input " + shape_str(in));
  }
  const std::size_t oh = (padded_h - kh) / params.stride_h + 1;
  const std::size_t ow = (padded_w - kw) / params.stride_w + 1;
  const std::size_t oc_count = params.out_channels();

  Tensor out(Shape{in.n, oc_count, oh, ow});
  const auto ph = static_cast<std::ptrdiff_t>(params.pad_h);
  const auto pw = static_cast<std::ptrdiff_t>(params.pad_w);
  const auto ih_max = static_cast<std::ptrdiff_t>(in.h);
  const auto iw_max = static_cast<std::ptrdiff_t>(in.w);

  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oc = 0; oc < oc_count; ++oc) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = params.bias[oc];
          const auto y0 = static_cast<std::ptrdiff_t>(y * params.stride_h) - ph;
          const auto x0 = static_cast<std::ptrdiff_t>(x * params.stride_w) - pw;
          for (std::size_t ic = 0; ic < in.c; ++ic) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const auto iy = y0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= ih_max) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const auto ix = x0 + static_cast<std::ptrdiff_t>(kx);
                if (ix < 0 || ix >= iw_max) continue;
                acc += static_cast<double>(params.weight.at(oc, ic, ky, kx)) *
                       input.at(n, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          out.at(n, oc, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

Tensor maxpool2d(const Tensor& input, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const Shape& in = input.shape();
  if (kernel == 0 || stride == 0) throw std::invalid_argument("maxpool2d: kernel and stride must be >= 1");
  const std::size_t padded_h = in.h + 2 * pad;
  const std::size_t padded_w = in.w + 2 * pad;
  if (padded_h < kernel || padded_w < kernel) {
    throw std::invalid_argument("maxpool2d: window larger than padded input " + shape_str(in));
  }
  const std::size_t oh = (padded_h - kernel) / stride + 1;
  const std::size_t ow = (padded_w - kernel) / stride + 1;
  Tensor out(Shape{in.n, in.c, oh, ow});
  const auto p = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          float best = -std::numeric_limits<float>::infinity();
          const auto y0 = static_cast<std::ptrdiff_t>(y * stride) - p;
          const auto x0 = static_cast<std::ptrdiff_t>(x * stride) - p;
          for (std::size_t ky = 0; ky < kernel; ++ky) {
            const auto iy = y0 + static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const auto ix = x0 + static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
              const float v = input.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              if (v > best) best = v;
            }
          }
          out.at(n, c, y, x) = best;
        }
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& in = input.shape();
  if (in.h == 0 || in.w == 0) throw std::invalid_argument("global_avg_pool: empty spatial extent");
  Tensor out(Shape{in.n, in.c, 1, 1});
  const double count = static_cast<double>(in.h * in.w);
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t c = 0; c < in.c; ++c) {
      double acc = 0.0;
      for (float v : input.plane(n, c)) acc += v;
      out.at(n, c, 0, 0) = static_cast<float>(acc / count);
    }
  }
  return out;
}

std::vector<float> linear(std::span<const float> input, const LinearParams& params) {
  params.validate();
  if (input.size() != params.in_features) {
    throw std::invalid_argument("linear: input length " + std::to_string(input.size()) +
                                " != in_features " + std::to_string(params.in_features));
  }
  std::vector<float> out(params.out_features);
  for (std::size_t o = 0; o < params.out_features; ++o) {
    double acc = params.bias[o];
    for (std::size_t i = 0; i < params.in_features; ++i) {
      acc += static_cast<double>(params.weight[o * params.in_features + i]) * input[i];
    }
    out[o] = static_cast<float>(acc);
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& first = inputs.front().shape();
  std::size_t total_c = 0;
  for (const Tensor& t : inputs) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw std::invalid_argument("concat_channels: shape " + shape_str(s) +
                                  " incompatible with " + shape_str(first));
    }
    total_c += s.c;
  }
  Tensor out(Shape{first.n, total_c, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t offset = 0;
    for (const Tensor& t : inputs) {
      for (std::size_t c = 0; c < t.shape().c; ++c) {
        auto src = t.plane(n, c);
        auto dst = out.plane(n, offset + c);
        std::copy(src.begin(), src.end(), dst.begin());
      }
      offset += t.shape().c;
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count) {
  const Shape& s = input.shape();
  if (begin + count > s.c) throw std::out_of_range("slice_channels: channel range out of bounds");
  Tensor out(Shape{s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < count; ++c) {
      auto src = input.plane(n, begin + c);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
  }
  return out;
}

float sigmoid(float x) noexcept { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); }
float silu(float x) noexcept { return x * sigmoid(x); }
float relu(float x) noexcept { return x > 0.0f ? x : 0.0f; }

Tensor sigmoid(const Tensor& x) { return map(x, [](float v) { return sigmoid(v); }); }
Tensor silu(const Tensor& x) { return map(x, [](float v) { return silu(v); }); }
Tensor relu(const Tensor& x) { return map(x, [](float v) { return relu(v); }); }

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  Tensor out(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor scale_channels(const Tensor& x, std::span<const float> scales) {
  const Shape& s = x.shape();
  if (scales.size() != s.n * s.c) throw std::invalid_argument("scale_channels: scale count mismatch");
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float k = scales[n * s.c + c];
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * k;
    }
  }
  return out;
}

}  // namespace fdk
