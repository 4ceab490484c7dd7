#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdk/geometry.hpp"

namespace fdk {

struct GroundTruthRecord {
  std::string image_id;
  std::size_t class_id = 0;
  BoundingBox box;
};

struct DetectionRecord {
  std::string image_id;
  std::size_t class_id = 0;
  BoundingBox box;
  double score = 0.0;
};

struct ClassStats {
  double ap = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

struct EvalReport {
  double iou_threshold = 0.5;
  std::map<std::size_t, ClassStats> per_class;
  /// Unweighted mean AP over classes with at least one ground truth.
  double map50 = 0.0;
};

/// Outcome for one detection, aligned with the input detection order.
struct MatchResult {
  bool true_positive = false;
  std::optional<std::size_t> gt_index;  // index into the ground-truth list
  double iou = 0.0;
};

/// Dense IoU table, rows are detections in priority order.
struct IouMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Each row in turn takes the still-unmatched column with the highest IoU at
/// or above `threshold` (lowest column wins exact ties).
std::vector<std::optional<std::size_t>> greedy_assign(const IouMatrix& m, double threshold);

/// Matches detections to ground truth per (class, image). Detections are
/// visited by descending score, ties broken by input order.
std::vector<MatchResult> match_detections(std::span<const DetectionRecord> dets,
                                          std::span<const GroundTruthRecord> gts,
                                          double iou_threshold = 0.5);

enum class MatchLabel : unsigned char { FalsePositive, TruePositive };

/// All-point interpolated AP of a score-sorted TP/FP sequence. Zero when
/// num_gt == 0.
double average_precision(std::span<const MatchLabel> labels, std::size_t num_gt);

EvalReport evaluate(std::span<const DetectionRecord> dets, std::span<const GroundTruthRecord> gts,
                    double iou_threshold = 0.5);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

template <typename Record>
struct Parsed {
  std::vector<Record> records;
  std::vector<std::string> warnings;
};

// JSON Lines: {"image_id": str, "class_id": int, "bbox": [cx, cy, w, h]}, and
// detections also carry "score". Blank lines are skipped.
Parsed<GroundTruthRecord> parse_ground_truth(std::istream& in);
Parsed<DetectionRecord> parse_detections(std::istream& in);
Parsed<GroundTruthRecord> load_ground_truth(const std::filesystem::path& path);
Parsed<DetectionRecord> load_detections(const std::filesystem::path& path);

void write_ground_truth(std::ostream& out, std::span<const GroundTruthRecord> gts);
void write_detections(std::ostream& out, std::span<const DetectionRecord> dets);

std::string report_to_json(const EvalReport& report, int indent = -1);
/// Per-class AP columns plus an "All" column, in percent.
std::string report_to_table(const EvalReport& report);

}  // namespace fdk
