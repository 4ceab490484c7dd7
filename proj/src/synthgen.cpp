#include "fdk/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "fdk/random.hpp"

namespace fdk {

namespace {

constexpr std::size_t kNoiseCell = 8;

Tensor value_noise(std::size_t height, std::size_t width, SeededRng& rng) {
  const std::size_t gh = height / kNoiseCell + 2;
  const std::size_t gw = width / kNoiseCell + 2;
  std::vector<double> lattice(gh * gw);
  for (double& v : lattice) v = rng.uniform(0.0, 0.49);

  Tensor image(Shape{1, 1, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / kNoiseCell;
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / kNoiseCell;
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = fx - static_cast<double>(x0);
      const double top = lattice[y0 * gw + x0] * (1 - tx) + lattice[y0 * gw + x0 + 1] * tx;
      const double bottom = lattice[(y0 + 1) * gw + x0] * (1 - tx) + lattice[(y0 + 1) * gw + x0 + 1] * tx;
      image.at(0, 0, y, x) = static_cast<float>(top * (1 - ty) + bottom * ty);
    }
  }
  return image;
}

// Canvas dims after `op`; validates that image-dependent transforms match.
std::pair<std::size_t, std::size_t> output_dims(const SynthScene& scene, const BoxTransform& op) {
  const auto h = scene.height();
  const auto w = scene.width();
  const auto same = [](double a, std::size_t b) { return a == static_cast<double>(b); };
  if (const auto* f = std::get_if<FlipH>(&op); f && !same(f->image_width, w)) {
    throw std::invalid_argument("FlipH width does not match scene");
  }
  if (const auto* f = std::get_if<FlipV>(&op); f && !same(f->image_height, h)) {
    throw std::invalid_argument("FlipV height does not match scene");
  }
  if (const auto* r = std::get_if<Rotate90CW>(&op)) {
    if (!same(r->image_width, w) || !same(r->image_height, h)) {
      throw std::invalid_argument("Rotate90CW dims do not match scene");
    }
    return {w, h};
  }
  if (const auto* s = std::get_if<Scale>(&op); s && !(s->s > 0.0)) {
    throw std::invalid_argument("Scale: s must be > 0");
  }
  return {h, w};
}

// Source pixel for destination (y, x), or nullopt when it falls off the canvas.
std::optional<std::pair<std::size_t, std::size_t>> source_pixel(const SynthScene& scene, const BoxTransform& op,
                                                                std::size_t y, std::size_t x) {
  const auto h = static_cast<double>(scene.height());
  const auto w = static_cast<double>(scene.width());
  double sy = 0.0;
  double sx = 0.0;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        const double cy = static_cast<double>(y) + 0.5;
        const double cx = static_cast<double>(x) + 0.5;
        if constexpr (std::is_same_v<T, FlipH>) {
          sy = cy;
          sx = w - cx;
        } else if constexpr (std::is_same_v<T, FlipV>) {
          sy = h - cy;
          sx = cx;
        } else if constexpr (std::is_same_v<T, Rotate90CW>) {
          // forward map (x, y) -> (H - y, x)
          sy = h - cx;
          sx = cy;
        } else if constexpr (std::is_same_v<T, Translate>) {
          sy = cy - t.dy;
          sx = cx - t.dx;
        } else {
          sy = cy / t.s;
          sx = cx / t.s;
        }
      },
      op);
  const double fy = std::floor(sy);
  const double fx = std::floor(sx);
  if (fy < 0.0 || fx < 0.0 || fy >= h || fx >= w) return std::nullopt;
  return std::pair{static_cast<std::size_t>(fy), static_cast<std::size_t>(fx)};
}

}  // namespace

double offset_for_iou(const BoundingBox& base, double target_iou) {
  if (!(target_iou >= 0.0 && target_iou < 1.0)) throw std::invalid_argument("target IoU must lie in [0, 1)");
  if (target_iou == 0.0) return 1.5 * base.w();
  // IoU of the shifted copy falls monotonically from 1 at d=0 to 0 at d=w.
  double lo = 0.0;
  double hi = base.w();
  for (int i = 0; i < 200 && hi - lo > 1e-13 * base.w(); ++i) {
    const double mid = 0.5 * (lo + hi);
    const BoundingBox shifted(base.cx() + mid, base.cy(), base.w(), base.h());
    if (iou(base, shifted) > target_iou) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::pair<BoundingBox, BoundingBox> gen_box_pair(double target_iou, std::uint64_t seed) {
  SeededRng rng(seed);
  const double w = rng.uniform(2.0, 10.0);
  const double h = rng.uniform(2.0, 10.0);
  const double cx = rng.uniform(10.0, 90.0);
  const double cy = rng.uniform(10.0, 90.0);
  const BoundingBox pred(cx, cy, w, h);
  const double d = offset_for_iou(pred, target_iou);
  const double sign = rng.coin() ? 1.0 : -1.0;
  return {pred, BoundingBox(cx + sign * d, cy, w, h)};
}

SynthScene gen_strip_scene(std::size_t height, std::size_t width, std::size_t num_defects, std::uint64_t seed) {
  if (height < 32 || width < 32) throw std::invalid_argument("scene dims must be at least 32x32");
  SeededRng rng(seed);
  SynthScene scene{value_noise(height, width, rng), {}, seed};
  const std::string image_id = "synth_" + std::to_string(seed);

  struct Strip {
    std::size_t x0, y0, x1, y1;
    float intensity;
  };
  std::vector<Strip> strips;
  int attempts = 0;
  while (strips.size() < num_defects) {
    if (attempts++ >= kPlacementAttempts) {
      throw std::runtime_error("could not place " + std::to_string(num_defects) + " defects in " +
                               std::to_string(kPlacementAttempts) + " attempts");
    }
    const bool horizontal = rng.coin();
    const std::size_t extent = horizontal ? width : height;
    const auto length = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(extent / 4), static_cast<std::int64_t>(extent / 2)));
    const auto thickness = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(3, length / 4))));
    const std::size_t bw = horizontal ? length : thickness;
    const std::size_t bh = horizontal ? thickness : length;
    const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(width - bw)));
    const auto y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(height - bh)));
    const float intensity = static_cast<float>(rng.uniform(kDefectMinIntensity, 1.0));

    const BoundingBox candidate = BoundingBox::from_corners(
        static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + bw), static_cast<double>(y0 + bh));
    const bool clashes = std::any_of(scene.gts.begin(), scene.gts.end(), [&](const GroundTruthRecord& g) {
      return iou(candidate, g.box) > kMaxDefectOverlap;
    });
    if (clashes) continue;
    strips.push_back({x0, y0, x0 + bw, y0 + bh, intensity});
    scene.gts.push_back(GroundTruthRecord{image_id, horizontal ? 0u : 1u, candidate});
  }

  for (const Strip& s : strips) {
    for (std::size_t y = s.y0; y < s.y1; ++y) {
      for (std::size_t x = s.x0; x < s.x1; ++x) {
        float& px = scene.image.at(0, 0, y, x);
        px = std::max(px, s.intensity);
      }
    }
  }
  return scene;
}

SynthScene augment_scene(const SynthScene& scene, const BoxTransform& op) {
  const auto [out_h, out_w] = output_dims(scene, op);
  SynthScene out{Tensor(Shape{1, 1, out_h, out_w}), {}, scene.seed};
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      if (const auto src = source_pixel(scene, op, y, x)) {
        out.image.at(0, 0, y, x) = scene.image.at(0, 0, src->first, src->second);
      }
    }
  }

  const auto bound_w = static_cast<double>(out_w);
  const auto bound_h = static_cast<double>(out_h);
  for (const GroundTruthRecord& g : scene.gts) {
    const BoundingBox moved = transform_box(g.box, op);
    const double x1 = std::clamp(moved.left(), 0.0, bound_w);
    const double x2 = std::clamp(moved.right(), 0.0, bound_w);
    const double y1 = std::clamp(moved.top(), 0.0, bound_h);
    const double y2 = std::clamp(moved.bottom(), 0.0, bound_h);
    if (x2 <= x1 || y2 <= y1) continue;
    if ((x2 - x1) * (y2 - y1) < 0.25 * moved.area()) continue;
    const bool clipped = x1 != moved.left() || x2 != moved.right() || y1 != moved.top() || y2 != moved.bottom();
    out.gts.push_back(GroundTruthRecord{g.image_id, g.class_id,
                                        clipped ? BoundingBox::from_corners(x1, y1, x2, y2) : moved});
  }
  return out;
}

float min_interior_intensity(const Tensor& image, const BoundingBox& box) {
  float lo = std::numeric_limits<float>::infinity();
  const Shape& s = image.shape();
  for (std::size_t y = 0; y < s.h; ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    if (!(cy > box.top() && cy < box.bottom())) continue;
    for (std::size_t x = 0; x < s.w; ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      if (cx > box.left() && cx < box.right()) lo = std::min(lo, image.at(0, 0, y, x));
    }
  }
  return lo;
}

}  // namespace fdk
