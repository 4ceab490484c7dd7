#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fdk/geometry.hpp"
#include "fdk/random.hpp"

namespace fdk {

struct GradcheckOptions {
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  double gamma = 0.5;
  double step = 1e-5;
  double rel_tol = 1e-4;
  double tiny_magnitude = 1e-6;  // below this, compare absolutely
  double abs_tol = 1e-8;
};

struct GradcheckReport {
  std::size_t trials = 0;
  /// Worst per-component error for each checked objective; relative unless
  /// the component is tiny, then absolute.
  std::map<std::string, double> worst_error;
  std::size_t failures = 0;
  bool pass() const noexcept { return failures == 0; }
};

/// Random pair with IoU < 0.999 whose same-axis edges are at least 1e-3 apart,
/// so no max/min kink lies within a finite-difference stencil.
std::pair<BoundingBox, BoundingBox> random_gradcheck_pair(SeededRng& rng);

/// Central finite differences against the analytic gradients of GIoU, DIoU,
/// CIoU and both focal modes, with alpha frozen and differentiated.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace fdk
