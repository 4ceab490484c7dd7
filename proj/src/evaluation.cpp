#include "fdk/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

#include <json.hpp>

namespace fdk {

namespace {

using nlohmann::json;

// Indices 0..count-1, sorted by descending score with ties kept in input order.
template <typename Score>
std::vector<std::size_t> score_order(std::size_t count, Score&& score) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  return order;
}

struct RawRecord {
  std::string image_id;
  std::size_t class_id = 0;
  std::array<double, 4> bbox{};
  std::optional<double> score;
};

RawRecord parse_line(const std::string& line, std::size_t line_no, bool with_score,
                     std::vector<std::string>& warnings) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");

  RawRecord r;
  if (!j.contains("image_id") || !j["image_id"].is_string()) {
    throw ParseError(line_no, "\"image_id\" must be a string");
  }
  r.image_id = j["image_id"].get<std::string>();
  if (!j.contains("class_id") || !j["class_id"].is_number_integer() || j["class_id"].get<long long>() < 0) {
    throw ParseError(line_no, "\"class_id\" must be a non-negative integer");
  }
  r.class_id = j["class_id"].get<std::size_t>();
  if (!j.contains("bbox") || !j["bbox"].is_array() || j["bbox"].size() != 4) {
    throw ParseError(line_no, "\"bbox\" must be an array [cx, cy, w, h]");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j["bbox"][i].is_number()) throw ParseError(line_no, "\"bbox\" entries must be numbers");
    r.bbox[i] = j["bbox"][i].get<double>();
  }
  if (with_score) {
    if (!j.contains("score") || !j["score"].is_number()) throw ParseError(line_no, "\"score\" must be a number");
    const double s = j["score"].get<double>();
    if (!(s >= 0.0 && s <= 1.0)) throw ParseError(line_no, "\"score\" must lie in [0, 1]");
    r.score = s;
  }
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    const bool known = key == "image_id" || key == "class_id" || key == "bbox" || (with_score && key == "score");
    if (!known) warnings.push_back("line " + std::to_string(line_no) + ": unknown field \"" + key + "\"");
  }
  return r;
}

BoundingBox make_box(const RawRecord& r, std::size_t line_no) {
  try {
    return BoundingBox(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3]);
  } catch (const std::invalid_argument& e) {
    throw ParseError(line_no, e.what());
  }
}

template <typename Record, typename Make>
Parsed<Record> parse_stream(std::istream& in, bool with_score, Make&& make) {
  Parsed<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const RawRecord raw = parse_line(line, line_no, with_score, out.warnings);
    out.records.push_back(make(raw, line_no));
  }
  return out;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return in;
}

json box_json(const BoundingBox& b) { return json::array({b.cx(), b.cy(), b.w(), b.h()}); }

}  // namespace

std::vector<std::optional<std::size_t>> greedy_assign(const IouMatrix& m, double threshold) {
  std::vector<std::optional<std::size_t>> assigned(m.rows);
  std::vector<bool> taken(m.cols, false);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::optional<std::size_t> best;
    double best_iou = threshold;
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (taken[c]) continue;
      const double v = m(r, c);
      if (v >= best_iou && (!best || v > best_iou)) {
        best = c;
        best_iou = v;
      }
    }
    if (best) {
      taken[*best] = true;
      assigned[r] = best;
    }
  }
  return assigned;
}

std::vector<MatchResult> match_detections(std::span<const DetectionRecord> dets,
                                          std::span<const GroundTruthRecord> gts, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw std::invalid_argument("iou_threshold must lie in (0, 1)");
  }
  using Key = std::pair<std::size_t, std::string>;
  std::map<Key, std::vector<std::size_t>> det_groups;
  std::map<Key, std::vector<std::size_t>> gt_groups;
  for (std::size_t i = 0; i < dets.size(); ++i) det_groups[{dets[i].class_id, dets[i].image_id}].push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i) gt_groups[{gts[i].class_id, gts[i].image_id}].push_back(i);

  std::vector<MatchResult> results(dets.size());
  for (const auto& [key, members] : det_groups) {
    const auto order = score_order(members.size(), [&](std::size_t k) { return dets[members[k]].score; });
    auto gt_it = gt_groups.find(key);
    if (gt_it == gt_groups.end()) continue;
    const std::vector<std::size_t>& gt_members = gt_it->second;

    IouMatrix m{order.size(), gt_members.size(), std::vector<double>(order.size() * gt_members.size())};
    for (std::size_t r = 0; r < order.size(); ++r) {
      for (std::size_t c = 0; c < gt_members.size(); ++c) {
        m.values[r * m.cols + c] = iou(dets[members[order[r]]].box, gts[gt_members[c]].box);
      }
    }
    const auto assigned = greedy_assign(m, iou_threshold);
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (!assigned[r]) continue;
      MatchResult& out = results[members[order[r]]];
      out.true_positive = true;
      out.gt_index = gt_members[*assigned[r]];
      out.iou = m(r, *assigned[r]);
    }
  }
  return results;
}

double average_precision(std::span<const MatchLabel> labels, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  // Precision at each rank, then the running maximum from the tail. Recall
  // only moves (by 1/num_gt) at true positives, so the area is the sum of the
  // envelope there divided by num_gt.
  std::vector<long double> precision(labels.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == MatchLabel::TruePositive) ++tp;
    precision[i] = static_cast<long double>(tp) / static_cast<long double>(i + 1);
  }
  long double envelope = 0.0L;
  long double area = 0.0L;
  for (std::size_t i = labels.size(); i-- > 0;) {
    envelope = std::max(envelope, precision[i]);
    if (labels[i] == MatchLabel::TruePositive) area += envelope;
  }
  return static_cast<double>(area / static_cast<long double>(num_gt));
}

EvalReport evaluate(std::span<const DetectionRecord> dets, std::span<const GroundTruthRecord> gts,
                    double iou_threshold) {
  EvalReport report;
  report.iou_threshold = iou_threshold;
  const std::vector<MatchResult> matches = match_detections(dets, gts, iou_threshold);

  for (const GroundTruthRecord& g : gts) ++report.per_class[g.class_id].num_gt;
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dets.size(); ++i) by_class[dets[i].class_id].push_back(i);

  for (const auto& [cls, members] : by_class) {
    ClassStats& stats = report.per_class[cls];
    const auto order = score_order(members.size(), [&](std::size_t k) { return dets[members[k]].score; });
    std::vector<MatchLabel> labels(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const bool hit = matches[members[order[r]]].true_positive;
      labels[r] = hit ? MatchLabel::TruePositive : MatchLabel::FalsePositive;
      hit ? ++stats.tp : ++stats.fp;
    }
    stats.num_det = members.size();
    stats.ap = average_precision(labels, stats.num_gt);
  }

  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& [cls, stats] : report.per_class) {
    (void)cls;
    if (stats.num_gt == 0) continue;
    sum += stats.ap;
    ++counted;
  }
  report.map50 = counted > 0 ? sum / static_cast<double>(counted) : 0.0;
  return report;
}

Parsed<GroundTruthRecord> parse_ground_truth(std::istream& in) {
  return parse_stream<GroundTruthRecord>(in, false, [](const RawRecord& r, std::size_t line_no) {
    return GroundTruthRecord{r.image_id, r.class_id, make_box(r, line_no)};
  });
}

Parsed<DetectionRecord> parse_detections(std::istream& in) {
  return parse_stream<DetectionRecord>(in, true, [](const RawRecord& r, std::size_t line_no) {
    return DetectionRecord{r.image_id, r.class_id, make_box(r, line_no), *r.score};
  });
}

Parsed<GroundTruthRecord> load_ground_truth(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_ground_truth(in);
}

Parsed<DetectionRecord> load_detections(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_detections(in);
}

void write_ground_truth(std::ostream& out, std::span<const GroundTruthRecord> gts) {
  for (const GroundTruthRecord& g : gts) {
    nlohmann::ordered_json j;
    j["image_id"] = g.image_id;
    j["class_id"] = g.class_id;
    j["bbox"] = box_json(g.box);
    out << j.dump() << '\n';
  }
}

void write_detections(std::ostream& out, std::span<const DetectionRecord> dets) {
  for (const DetectionRecord& d : dets) {
    nlohmann::ordered_json j;
    j["image_id"] = d.image_id;
    j["class_id"] = d.class_id;
    j["bbox"] = box_json(d.box);
    j["score"] = d.score;
    out << j.dump() << '\n';
  }
}

std::string report_to_json(const EvalReport& report, int indent) {
  nlohmann::ordered_json j;
  j["iou_threshold"] = report.iou_threshold;
  j["map50"] = report.map50;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [cls, s] : report.per_class) {
    nlohmann::ordered_json c;
    c["ap"] = s.ap;
    c["num_gt"] = s.num_gt;
    c["num_det"] = s.num_det;
    c["tp"] = s.tp;
    c["fp"] = s.fp;
    classes[std::to_string(cls)] = c;
  }
  j["per_class"] = classes;
  return j.dump(indent);
}

std::string report_to_table(const EvalReport& report) {
  std::vector<std::string> header{"Class"};
  char buf[32];
  std::snprintf(buf, sizeof buf, "mAP@%g/%%", report.iou_threshold);
  std::vector<std::string> ap_row{buf};
  std::vector<std::string> gt_row{"GT"};
  for (const auto& [cls, s] : report.per_class) {
    header.push_back(std::to_string(cls));
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * s.ap);
    ap_row.emplace_back(s.num_gt > 0 ? buf : "-");
    gt_row.push_back(std::to_string(s.num_gt));
  }
  header.emplace_back("All");
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * report.map50);
  ap_row.emplace_back(buf);
  std::size_t total_gt = 0;
  for (const auto& [cls, s] : report.per_class) total_gt += s.num_gt;
  gt_row.push_back(std::to_string(total_gt));

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto* row : {&header, &ap_row, &gt_row}) {
    for (std::size_t i = 0; i < row->size(); ++i) width[i] = std::max(width[i], (*row)[i].size());
  }
  std::ostringstream out;
  for (const auto* row : {&header, &ap_row, &gt_row}) {
    for (std::size_t i = 0; i < row->size(); ++i) {
      const std::string& cell = (*row)[i];
      if (i == 0) {
        out << cell << std::string(width[i] - cell.size(), ' ');
      } else {
        out << "  " << std::string(width[i] - cell.size(), ' ') << cell;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fdk
