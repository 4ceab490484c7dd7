#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fdk/evaluation.hpp"
#include "fdk/geometry.hpp"
#include "fdk/tensor.hpp"

namespace fdk {

/// Grayscale raster (1x1xHxW) with its strip-defect annotations.
struct SynthScene {
  Tensor image;
  std::vector<GroundTruthRecord> gts;
  std::uint64_t seed = 0;

  std::size_t height() const noexcept { return image.shape().h; }
  std::size_t width() const noexcept { return image.shape().w; }
};

/// Horizontal offset d at which `base` and a copy shifted by d have IoU
/// `target_iou`. Found by bisection; target 0 returns 1.5 * base.w().
double offset_for_iou(const BoundingBox& base, double target_iou);

/// A (pred, gt) pair of congruent boxes whose IoU is within 0.02 of
/// `target_iou` (in practice within 1e-9). Sizes lie in [2, 10] px.
std::pair<BoundingBox, BoundingBox> gen_box_pair(double target_iou, std::uint64_t seed);

inline constexpr float kDefectMinIntensity = 0.8f;
inline constexpr float kBackgroundMaxIntensity = 0.5f;
inline constexpr double kMaxDefectOverlap = 0.3;
inline constexpr int kPlacementAttempts = 1000;

/// Value-noise background in [0, 0.5) with `num_defects` axis-aligned bright
/// strips (aspect ratio >= 4). Class 0 is horizontal, class 1 vertical.
/// Throws std::runtime_error when the strips cannot be placed.
SynthScene gen_strip_scene(std::size_t height, std::size_t width, std::size_t num_defects,
                           std::uint64_t seed);

/// Nearest-neighbor raster transform with matching box transforms. Boxes are
/// clipped to the new bounds and dropped when less than 25% of their area
/// survives. Translate and Scale keep the canvas size and fill with zeros.
SynthScene augment_scene(const SynthScene& scene, const BoxTransform& op);

/// Smallest pixel value among pixels whose centers lie strictly inside
/// `box`; +inf when no pixel center is inside.
float min_interior_intensity(const Tensor& image, const BoundingBox& box);

}  // namespace fdk
