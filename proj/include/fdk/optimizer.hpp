#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fdk/geometry.hpp"

namespace fdk {

enum class Objective { IoULoss, GIoULoss, DIoULoss, CIoULoss, FECIoULoss };

Objective objective_from_string(std::string_view name);
std::string_view to_string(Objective o);

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.937;
  std::size_t max_steps = 2000;
  double stop_iou = 0.99;
  Objective objective = Objective::CIoULoss;
  double gamma = 0.5;          // used by FECIoULoss only
  double clip_norm = 10.0;     // gradient norm cap, <= 0 disables
  double min_extent = 1e-3;    // w and h are clamped to at least this

  void validate() const;
};

/// Loss value and its gradient with respect to the predicted box.
struct LossEval {
  double value = 0.0;
  BoxGradient grad;
};

/// 1 - IoU, 1 - GIoU, 1 - DIoU, 1 - CIoU, or the focal CIoU loss.
LossEval evaluate_objective(const BoundingBox& pred, const BoundingBox& gt, Objective objective,
                            double gamma);

struct TraceStep {
  std::size_t step = 0;
  BoundingBox box;
  double iou = 0.0;
  double objective = 0.0;
};

struct RegressionTrace {
  std::vector<TraceStep> steps;

  const TraceStep& final() const { return steps.back(); }
  bool reached(double stop_iou) const { return final().iou >= stop_iou; }
};

/// Classical momentum descent on the box parameters:
///   v <- momentum * v - lr * clip(grad);  box <- box + v
/// Records step 0 (the initial box) and every update; stops once IoU reaches
/// stop_iou, at max_steps, or at IoU == 1.
RegressionTrace fit_box(const BoundingBox& init, const BoundingBox& gt, const OptimizerConfig& config);

struct BatchSummary {
  double success_rate = 0.0;
  double mean_steps = 0.0;
  std::size_t count = 0;
};

BatchSummary batch_fit(std::span<const std::pair<BoundingBox, BoundingBox>> pairs, const OptimizerConfig& config);

/// CSV with header step,cx,cy,w,h,iou,objective; values printed round-trip exact.
void write_trace_csv(std::ostream& out, const RegressionTrace& trace);

}  // namespace fdk
