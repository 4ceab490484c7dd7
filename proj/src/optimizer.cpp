#include "fdk/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fdk {

Objective objective_from_string(std::string_view name) {
  if (name == "iou") return Objective::IoULoss;
  if (name == "giou") return Objective::GIoULoss;
  if (name == "diou") return Objective::DIoULoss;
  if (name == "ciou") return Objective::CIoULoss;
  if (name == "feciou") return Objective::FECIoULoss;
  throw std::invalid_argument("unknown objective: " + std::string(name));
}

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::IoULoss: return "iou";
    case Objective::GIoULoss: return "giou";
    case Objective::DIoULoss: return "diou";
    case Objective::CIoULoss: return "ciou";
    case Objective::FECIoULoss: return "feciou";
  }
  return "ciou";
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(stop_iou > 0.0 && stop_iou <= 1.0)) throw std::invalid_argument("stop_iou must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(min_extent > 0.0)) throw std::invalid_argument("min_extent must be > 0");
}

namespace {

// Value only; the focal gradient is undefined at IoU == 1 but the value is not.
double objective_value(const BoundingBox& pred, const BoundingBox& gt, Objective objective, double gamma) {
  if (objective == Objective::FECIoULoss) {
    return feciou_objective(pred, gt, LossConfig{gamma, LossMode::FocalCIoULoss, AlphaGradient::Frozen});
  }
  const IoUBreakdown b = breakdown(pred, gt);
  switch (objective) {
    case Objective::IoULoss: return 1.0 - b.iou;
    case Objective::GIoULoss: return 1.0 - b.giou;
    case Objective::DIoULoss: return 1.0 - b.diou;
    default: return 1.0 - b.ciou;
  }
}

}  // namespace

LossEval evaluate_objective(const BoundingBox& pred, const BoundingBox& gt, Objective objective, double gamma) {
  if (objective == Objective::FECIoULoss) {
    const LossConfig cfg{gamma, LossMode::FocalCIoULoss, AlphaGradient::Frozen};
    return {feciou_objective(pred, gt, cfg), grad_objective(pred, gt, cfg)};
  }
  const IoUBreakdown b = breakdown(pred, gt);
  const MetricGradients g = metric_gradients(pred, gt, AlphaGradient::Frozen);
  switch (objective) {
    case Objective::IoULoss: return {1.0 - b.iou, -1.0 * g.iou};
    case Objective::GIoULoss: return {1.0 - b.giou, -1.0 * g.giou};
    case Objective::DIoULoss: return {1.0 - b.diou, -1.0 * g.diou};
    default: return {1.0 - b.ciou, -1.0 * g.ciou};
  }
}

RegressionTrace fit_box(const BoundingBox& init, const BoundingBox& gt, const OptimizerConfig& config) {
  config.validate();
  RegressionTrace trace;
  BoundingBox box = init;
  BoxGradient velocity;
  for (std::size_t step = 0;; ++step) {
    const double current_iou = iou(box, gt);
    const bool done = current_iou >= config.stop_iou || current_iou >= 1.0 || step == config.max_steps;
    if (done) {
      trace.steps.push_back({step, box, current_iou, objective_value(box, gt, config.objective, config.gamma)});
      break;
    }
    LossEval loss = evaluate_objective(box, gt, config.objective, config.gamma);
    trace.steps.push_back({step, box, current_iou, loss.value});

    const double norm = loss.grad.norm();
    if (config.clip_norm > 0.0 && norm > config.clip_norm) loss.grad *= config.clip_norm / norm;
    velocity = config.momentum * velocity + (-config.learning_rate) * loss.grad;
    box = BoundingBox(box.cx() + velocity.d_cx, box.cy() + velocity.d_cy,
                      std::max(box.w() + velocity.d_w, config.min_extent),
                      std::max(box.h() + velocity.d_h, config.min_extent));
  }
  return trace;
}

BatchSummary batch_fit(std::span<const std::pair<BoundingBox, BoundingBox>> pairs, const OptimizerConfig& config) {
  if (pairs.empty()) throw std::invalid_argument("batch_fit: empty pair list");
  std::size_t successes = 0;
  double total_steps = 0.0;
  for (const auto& [init, gt] : pairs) {
    const RegressionTrace trace = fit_box(init, gt, config);
    if (trace.reached(config.stop_iou)) ++successes;
    total_steps += static_cast<double>(trace.final().step);
  }
  const auto n = static_cast<double>(pairs.size());
  return {static_cast<double>(successes) / n, total_steps / n, pairs.size()};
}

void write_trace_csv(std::ostream& out, const RegressionTrace& trace) {
  out << "step,cx,cy,w,h,iou,objective\n";
  char buf[256];
  for (const TraceStep& s : trace.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.step, s.box.cx(), s.box.cy(),
                  s.box.w(), s.box.h(), s.iou, s.objective);
    out << buf;
  }
}

}  // namespace fdk
