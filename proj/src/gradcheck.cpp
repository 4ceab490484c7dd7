#include "fdk/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace fdk {

namespace {

bool edges_separated(const BoundingBox& a, const BoundingBox& b, double gap) {
  const std::array<double, 2> ax{a.left(), a.right()};
  const std::array<double, 2> bx{b.left(), b.right()};
  const std::array<double, 2> ay{a.top(), a.bottom()};
  const std::array<double, 2> by{b.top(), b.bottom()};
  for (double p : ax) {
    for (double q : bx) {
      if (std::abs(p - q) < gap) return false;
    }
  }
  for (double p : ay) {
    for (double q : by) {
      if (std::abs(p - q) < gap) return false;
    }
  }
  return true;
}

using Scalar = std::function<double(const BoundingBox&)>;

BoundingBox nudge(const BoundingBox& b, int component, double delta) {
  switch (component) {
    case 0: return BoundingBox(b.cx() + delta, b.cy(), b.w(), b.h());
    case 1: return BoundingBox(b.cx(), b.cy() + delta, b.w(), b.h());
    case 2: return BoundingBox(b.cx(), b.cy(), b.w() + delta, b.h());
    default: return BoundingBox(b.cx(), b.cy(), b.w(), b.h() + delta);
  }
}

double component(const BoxGradient& g, int i) {
  switch (i) {
    case 0: return g.d_cx;
    case 1: return g.d_cy;
    case 2: return g.d_w;
    default: return g.d_h;
  }
}

}  // namespace

std::pair<BoundingBox, BoundingBox> random_gradcheck_pair(SeededRng& rng) {
  for (;;) {
    const BoundingBox gt(rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0), rng.uniform(0.5, 8.0),
                         rng.uniform(0.5, 8.0));
    const BoundingBox pred(gt.cx() + rng.uniform(-6.0, 6.0), gt.cy() + rng.uniform(-6.0, 6.0),
                           gt.w() * rng.uniform(0.3, 2.5), gt.h() * rng.uniform(0.3, 2.5));
    if (iou(pred, gt) < 0.999 && edges_separated(pred, gt, 1e-3)) return {pred, gt};
  }
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.trials == 0) throw std::invalid_argument("gradcheck: trials must be >= 1");
  SeededRng rng(options.seed);
  GradcheckReport report;
  report.trials = options.trials;
  const double gamma = options.gamma;

  for (std::size_t t = 0; t < options.trials; ++t) {
    const auto [pred, gt] = random_gradcheck_pair(rng);
    const IoUBreakdown base = breakdown(pred, gt);
    const double alpha0 = base.alpha;
    const auto focal = [gamma](double i) { return std::pow(1.0 - i, gamma); };
    // CIoU with alpha pinned at its value for the unperturbed pair.
    const auto frozen_ciou = [alpha0](const IoUBreakdown& b) { return b.diou - alpha0 * b.v; };

    const MetricGradients frozen = metric_gradients(pred, gt, AlphaGradient::Frozen);
    const MetricGradients full = metric_gradients(pred, gt, AlphaGradient::Full);
    const auto cfg = [gamma](LossMode m, AlphaGradient a) { return LossConfig{gamma, m, a}; };

    struct Check {
      const char* name;
      BoxGradient analytic;
      Scalar f;
    };
    const std::array<Check, 8> checks{{
        {"giou", full.giou, [&](const BoundingBox& p) { return breakdown(p, gt).giou; }},
        {"diou", full.diou, [&](const BoundingBox& p) { return breakdown(p, gt).diou; }},
        {"ciou_full_alpha", full.ciou, [&](const BoundingBox& p) { return breakdown(p, gt).ciou; }},
        {"ciou_frozen_alpha", frozen.ciou, [&](const BoundingBox& p) { return frozen_ciou(breakdown(p, gt)); }},
        {"feciou_metric_full_alpha", grad_objective(pred, gt, cfg(LossMode::MetricLiteral, AlphaGradient::Full)),
         [&](const BoundingBox& p) {
           return feciou_objective(p, gt, cfg(LossMode::MetricLiteral, AlphaGradient::Full));
         }},
        {"feciou_metric_frozen_alpha",
         grad_objective(pred, gt, cfg(LossMode::MetricLiteral, AlphaGradient::Frozen)),
         [&](const BoundingBox& p) {
           const IoUBreakdown b = breakdown(p, gt);
           return focal(b.iou) * frozen_ciou(b);
         }},
        {"feciou_loss_full_alpha", grad_objective(pred, gt, cfg(LossMode::FocalCIoULoss, AlphaGradient::Full)),
         [&](const BoundingBox& p) {
           return feciou_objective(p, gt, cfg(LossMode::FocalCIoULoss, AlphaGradient::Full));
         }},
        {"feciou_loss_frozen_alpha",
         grad_objective(pred, gt, cfg(LossMode::FocalCIoULoss, AlphaGradient::Frozen)),
         [&](const BoundingBox& p) {
           const IoUBreakdown b = breakdown(p, gt);
           return focal(b.iou) * (1.0 - frozen_ciou(b));
         }},
    }};

    for (const Check& c : checks) {
      double& worst = report.worst_error[c.name];
      for (int i = 0; i < 4; ++i) {
        const double h = options.step;
        const double fd = (c.f(nudge(pred, i, h)) - c.f(nudge(pred, i, -h))) / (2.0 * h);
        const double a = component(c.analytic, i);
        const double magnitude = std::max(std::abs(a), std::abs(fd));
        const double diff = std::abs(a - fd);
        const bool tiny = magnitude < options.tiny_magnitude;
        const double err = tiny ? diff : diff / magnitude;
        const bool ok = tiny ? diff < options.abs_tol : err < options.rel_tol;
        if (!ok) ++report.failures;
        worst = std::max(worst, err);
      }
    }
  }
  return report;
}

}  // namespace fdk
