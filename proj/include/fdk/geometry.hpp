#pragma once

#include <variant>

namespace fdk {

/// Axis-aligned box in center format, absolute pixel units.
///
/// Construction rejects non-finite fields and non-positive extents, so every
/// live BoundingBox is valid for the metric functions below.
class BoundingBox {
 public:
  BoundingBox(double cx, double cy, double w, double h);

  double cx() const noexcept { return cx_; }
  double cy() const noexcept { return cy_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }

  double left() const noexcept { return cx_ - 0.5 * w_; }
  double right() const noexcept { return cx_ + 0.5 * w_; }
  double top() const noexcept { return cy_ - 0.5 * h_; }
  double bottom() const noexcept { return cy_ + 0.5 * h_; }
  double area() const noexcept { return w_ * h_; }

  /// Builds a box from corner coordinates (x1, y1, x2, y2).
  static BoundingBox from_corners(double x1, double y1, double x2, double y2);

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double cx_;
  double cy_;
  double w_;
  double h_;
};

enum class LossMode {
  MetricLiteral,   // (1 - IoU)^gamma * CIoU, to be maximized
  FocalCIoULoss,   // (1 - IoU)^gamma * (1 - CIoU), to be minimized
};

/// How the CIoU trade-off weight alpha enters the gradient.
enum class AlphaGradient {
  Frozen,  // alpha held constant (CIoU convention)
  Full,    // differentiate through alpha as well
};

struct LossConfig {
  double gamma = 0.5;
  LossMode loss_mode = LossMode::FocalCIoULoss;
  AlphaGradient alpha_gradient = AlphaGradient::Frozen;

  void validate() const;
};

struct IoUBreakdown {
  double iou = 0.0;
  double rho2 = 0.0;  // squared center distance
  double c2 = 0.0;    // squared diagonal of the enclosing box
  double v = 0.0;     // aspect-ratio consistency term
  double alpha = 0.0;
  double giou = 0.0;
  double diou = 0.0;
  double ciou = 0.0;
  double feciou = 0.0;
};

/// Partial derivatives with respect to the predicted box's (cx, cy, w, h).
struct BoxGradient {
  double d_cx = 0.0;
  double d_cy = 0.0;
  double d_w = 0.0;
  double d_h = 0.0;

  BoxGradient& operator+=(const BoxGradient& o) noexcept;
  BoxGradient& operator*=(double s) noexcept;
  double norm() const noexcept;
};

BoxGradient operator+(BoxGradient a, const BoxGradient& b) noexcept;
BoxGradient operator*(double s, BoxGradient g) noexcept;

/// Gradients of the four similarity metrics at one box pair.
struct MetricGradients {
  BoxGradient iou;
  BoxGradient giou;
  BoxGradient diou;
  BoxGradient ciou;
};

double iou(const BoundingBox& pred, const BoundingBox& gt) noexcept;

IoUBreakdown breakdown(const BoundingBox& pred, const BoundingBox& gt,
                       const LossConfig& config = {});

/// Focal-weighted CIoU value in the configured direction.
double feciou_objective(const BoundingBox& pred, const BoundingBox& gt,
                        const LossConfig& config = {});

/// Analytic gradients of IoU, GIoU, DIoU and CIoU with respect to `pred`.
///
/// Where box edges coincide exactly, the derivative is the limit taken as the
/// moving predicted coordinate approaches from below.
MetricGradients metric_gradients(const BoundingBox& pred, const BoundingBox& gt,
                                 AlphaGradient alpha_mode = AlphaGradient::Frozen);

/// Gradient of feciou_objective with respect to `pred`.
///
/// Throws std::domain_error when gamma < 1 and IoU == 1, where the focal
/// factor's derivative diverges.
BoxGradient grad_objective(const BoundingBox& pred, const BoundingBox& gt,
                           const LossConfig& config = {});

// Image-level transforms used for augmentation. Coordinates are pixels with
// the origin at the top-left image corner.
struct FlipH { double image_width; };
struct FlipV { double image_height; };
struct Rotate90CW { double image_width; double image_height; };
struct Translate { double dx; double dy; };
struct Scale { double s; };

using BoxTransform = std::variant<FlipH, FlipV, Rotate90CW, Translate, Scale>;

BoundingBox transform_box(const BoundingBox& box, const BoxTransform& op);

}  // namespace fdk
