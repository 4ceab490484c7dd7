#include "fdk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fdk {

BoundingBox::BoundingBox(double cx, double cy, double w, double h)
    : cx_(cx), cy_(cy), w_(w), h_(h) {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h)) {
    throw std::invalid_argument("bounding box fields must be finite");
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("degenerate bounding box: w=" + std::to_string(w) +
                                " h=" + std::to_string(h));
  }
}

BoundingBox BoundingBox::from_corners(double x1, double y1, double x2, double y2) {
  return BoundingBox(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1);
}

void LossConfig::validate() const {
  if (!std::isfinite(gamma) || gamma < 0.0) {
    throw std::invalid_argument("gamma must be finite and >= 0");
  }
}

BoxGradient& BoxGradient::operator+=(const BoxGradient& o) noexcept {
  d_cx += o.d_cx;
  d_cy += o.d_cy;
  d_w += o.d_w;
  d_h += o.d_h;
  return *this;
}

BoxGradient& BoxGradient::operator*=(double s) noexcept {
  d_cx *= s;
  d_cy *= s;
  d_w *= s;
  d_h *= s;
  return *this;
}

double BoxGradient::norm() const noexcept {
  return std::sqrt(d_cx * d_cx + d_cy * d_cy + d_w * d_w + d_h * d_h);
}

BoxGradient operator+(BoxGradient a, const BoxGradient& b) noexcept { return a += b; }
BoxGradient operator*(double s, BoxGradient g) noexcept { return g *= s; }

namespace {

constexpr double kAspectScale = 4.0 / (std::numbers::pi * std::numbers::pi);

// Derivatives of the predicted box's edges with respect to (cx, cy, w, h).
constexpr BoxGradient kLeft{1.0, 0.0, -0.5, 0.0};
constexpr BoxGradient kRight{1.0, 0.0, 0.5, 0.0};
constexpr BoxGradient kTop{0.0, 1.0, 0.0, -0.5};
constexpr BoxGradient kBottom{0.0, 1.0, 0.0, 0.5};
constexpr BoxGradient kZero{};

// Weight of the predicted edge in max(pred_edge, gt_edge).
double edge_share(double pred_edge, double gt_edge) {
  if (pred_edge > gt_edge) return 1.0;
  return pred_edge == gt_edge ? 0.5 : 0.0;
}

// Every intermediate of the metric family, with its gradient alongside.
struct PairTerms {
  double inter, d_union, enclose_w, enclose_h;
  double iou, giou, rho2, c2, v, alpha, diou, ciou;
  BoxGradient g_inter, g_union, g_enclose_area, g_c2, g_rho2, g_v;
  BoxGradient g_iou, g_giou, g_diou, g_ciou_frozen, g_alpha;
};

PairTerms compute_terms(const BoundingBox& p, const BoundingBox& g) {
  PairTerms t{};

  // Intersection extents; min/max pick the predicted edge with a below-limit
  // convention at exact ties.
  const double ix_raw = std::min(p.right(), g.right()) - std::max(p.left(), g.left());
  const double iy_raw = std::min(p.bottom(), g.bottom()) - std::max(p.top(), g.top());
  const double iw = std::max(0.0, ix_raw);
  const double ih = std::max(0.0, iy_raw);
  BoxGradient g_iw = kZero;
  BoxGradient g_ih = kZero;
  if (ix_raw > 0.0) {
    if (p.right() <= g.right()) g_iw += kRight;
    if (p.left() > g.left()) g_iw += -1.0 * kLeft;
  }
  if (iy_raw > 0.0) {
    if (p.bottom() <= g.bottom()) g_ih += kBottom;
    if (p.top() > g.top()) g_ih += -1.0 * kTop;
  }
  t.inter = iw * ih;
  t.g_inter = ih * g_iw + iw * g_ih;

  const BoxGradient g_area_p{0.0, 0.0, p.h(), p.w()};
  t.d_union = p.area() + g.area() - t.inter;
  t.g_union = g_area_p + (-1.0) * t.g_inter;

  t.iou = t.inter / t.d_union;
  t.g_iou = (1.0 / t.d_union) * t.g_inter + (-t.inter / (t.d_union * t.d_union)) * t.g_union;

  // Smallest enclosing box.
  t.enclose_w = std::max(p.right(), g.right()) - std::min(p.left(), g.left());
  t.enclose_h = std::max(p.bottom(), g.bottom()) - std::min(p.top(), g.top());
  BoxGradient g_cw = kZero;
  BoxGradient g_ch = kZero;
  // Enclosure edges: at an exact tie, both one-sided derivatives are averaged.
  g_cw += edge_share(p.right(), g.right()) * kRight;
  g_cw += edge_share(g.left(), p.left()) * (-1.0 * kLeft);
  g_ch += edge_share(p.bottom(), g.bottom()) * kBottom;
  g_ch += edge_share(g.top(), p.top()) * (-1.0 * kTop);

  const double enclose_area = t.enclose_w * t.enclose_h;
  t.g_enclose_area = t.enclose_h * g_cw + t.enclose_w * g_ch;
  t.giou = t.iou - std::max(0.0, enclose_area - t.d_union) / enclose_area;
  // d/dθ [U / C]
  t.g_giou = t.g_iou + (1.0 / enclose_area) * t.g_union +
             (-t.d_union / (enclose_area * enclose_area)) * t.g_enclose_area;

  t.c2 = t.enclose_w * t.enclose_w + t.enclose_h * t.enclose_h;
  t.g_c2 = (2.0 * t.enclose_w) * g_cw + (2.0 * t.enclose_h) * g_ch;

  const double dx = p.cx() - g.cx();
  const double dy = p.cy() - g.cy();
  t.rho2 = dx * dx + dy * dy;
  t.g_rho2 = BoxGradient{2.0 * dx, 2.0 * dy, 0.0, 0.0};

  t.diou = t.iou - t.rho2 / t.c2;
  t.g_diou = t.g_iou + (-1.0 / t.c2) * t.g_rho2 + (t.rho2 / (t.c2 * t.c2)) * t.g_c2;

  const double angle_gap = std::atan(g.w() / g.h()) - std::atan(p.w() / p.h());
  t.v = kAspectScale * angle_gap * angle_gap;
  const double wh2 = p.w() * p.w() + p.h() * p.h();
  // d atan(w/h) = (h dw - w dh) / (w^2 + h^2), and v depends on -atan(w/h).
  const double dv_scale = 2.0 * kAspectScale * angle_gap / wh2;
  t.g_v = BoxGradient{0.0, 0.0, -dv_scale * p.h(), dv_scale * p.w()};

  const double alpha_den = (1.0 - t.iou) + t.v;
  t.alpha = alpha_den > 0.0 ? t.v / alpha_den : 0.0;
  if (alpha_den > 0.0) {
    // alpha = v / (1 - iou + v)  =>  dalpha = ((1 - iou) dv + v diou) / den^2
    const double inv = 1.0 / (alpha_den * alpha_den);
    t.g_alpha = ((1.0 - t.iou) * inv) * t.g_v + (t.v * inv) * t.g_iou;
  }

  t.ciou = t.diou - t.alpha * t.v;
  t.g_ciou_frozen = t.g_diou + (-t.alpha) * t.g_v;
  return t;
}

double focal_weight(double iou, double gamma) { return std::pow(1.0 - iou, gamma); }

}  // namespace

double iou(const BoundingBox& pred, const BoundingBox& gt) noexcept {
  const double iw = std::max(0.0, std::min(pred.right(), gt.right()) - std::max(pred.left(), gt.left()));
  const double ih = std::max(0.0, std::min(pred.bottom(), gt.bottom()) - std::max(pred.top(), gt.top()));
  const double inter = iw * ih;
  return inter / (pred.area() + gt.area() - inter);
}

IoUBreakdown breakdown(const BoundingBox& pred, const BoundingBox& gt, const LossConfig& config) {
  config.validate();
  const PairTerms t = compute_terms(pred, gt);
  IoUBreakdown b;
  b.iou = t.iou;
  b.rho2 = t.rho2;
  b.c2 = t.c2;
  b.v = t.v;
  b.alpha = t.alpha;
  b.giou = t.giou;
  b.diou = t.diou;
  b.ciou = t.ciou;
  b.feciou = focal_weight(t.iou, config.gamma) * t.ciou;
  return b;
}

double feciou_objective(const BoundingBox& pred, const BoundingBox& gt, const LossConfig& config) {
  const IoUBreakdown b = breakdown(pred, gt, config);
  if (config.loss_mode == LossMode::MetricLiteral) {
    return b.feciou;
  }
  return focal_weight(b.iou, config.gamma) * (1.0 - b.ciou);
}

MetricGradients metric_gradients(const BoundingBox& pred, const BoundingBox& gt,
                                 AlphaGradient alpha_mode) {
  const PairTerms t = compute_terms(pred, gt);
  MetricGradients out{t.g_iou, t.g_giou, t.g_diou, t.g_ciou_frozen};
  if (alpha_mode == AlphaGradient::Full) {
    out.ciou += (-t.v) * t.g_alpha;
  }
  return out;
}

BoxGradient grad_objective(const BoundingBox& pred, const BoundingBox& gt, const LossConfig& config) {
  config.validate();
  const PairTerms t = compute_terms(pred, gt);
  BoxGradient g_ciou = t.g_ciou_frozen;
  if (config.alpha_gradient == AlphaGradient::Full) {
    g_ciou += (-t.v) * t.g_alpha;
  }

  const double gamma = config.gamma;
  const double weight = focal_weight(t.iou, gamma);
  // d/dθ (1 - iou)^γ = -γ (1 - iou)^(γ-1) diou; exactly zero when γ == 0.
  BoxGradient g_weight = kZero;
  if (gamma != 0.0) {
    if (t.iou >= 1.0 && gamma < 1.0) {
      throw std::domain_error("focal weight derivative diverges at IoU = 1 for gamma < 1");
    }
    g_weight = (-gamma * std::pow(1.0 - t.iou, gamma - 1.0)) * t.g_iou;
  }

  if (config.loss_mode == LossMode::MetricLiteral) {
    return t.ciou * g_weight + weight * g_ciou;
  }
  return (1.0 - t.ciou) * g_weight + (-weight) * g_ciou;
}

BoundingBox transform_box(const BoundingBox& box, const BoxTransform& op) {
  return std::visit(
      [&](const auto& t) -> BoundingBox {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FlipH>) {
          if (!(t.image_width > 0.0)) throw std::invalid_argument("FlipH: image width must be positive");
          return BoundingBox(t.image_width - box.cx(), box.cy(), box.w(), box.h());
        } else if constexpr (std::is_same_v<T, FlipV>) {
          if (!(t.image_height > 0.0)) throw std::invalid_argument("FlipV: image height must be positive");
          return BoundingBox(box.cx(), t.image_height - box.cy(), box.w(), box.h());
        } else if constexpr (std::is_same_v<T, Rotate90CW>) {
          if (!(t.image_width > 0.0) || !(t.image_height > 0.0)) {
            throw std::invalid_argument("Rotate90CW: image dimensions must be positive");
          }
          // (x, y) -> (H - y, x)
          return BoundingBox(t.image_height - box.cy(), box.cx(), box.h(), box.w());
        } else if constexpr (std::is_same_v<T, Translate>) {
          return BoundingBox(box.cx() + t.dx, box.cy() + t.dy, box.w(), box.h());
        } else {
          if (!(t.s > 0.0) || !std::isfinite(t.s)) throw std::invalid_argument("Scale: s must be > 0");
          return BoundingBox(box.cx() * t.s, box.cy() * t.s, box.w() * t.s, box.h() * t.s);
        }
      },
      op);
}

}  // namespace fdk
