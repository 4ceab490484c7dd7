// fdk: command-line front end for the geometry, block, evaluation, synthesis
// and box-regression modules.
//
// Exit codes: 0 success, 1 domain or data error, 2 usage error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdk/blocks.hpp"
#include "fdk/evaluation.hpp"
#include "fdk/geometry.hpp"
#include "fdk/gradcheck.hpp"
#include "fdk/optimizer.hpp"
#include "fdk/synthgen.hpp"
#include "fdk/tensor_io.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

// Raised for bad flag values that only show up after CLI11 has parsed them.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": malformed number '" + item + "'");
    }
    if (used != item.size()) throw UsageError(std::string(what) + ": malformed number '" + item + "'");
    out.push_back(v);
  }
  if (out.size() != expected) {
    throw UsageError(std::string(what) + ": expected " + std::to_string(expected) + " comma-separated numbers");
  }
  return out;
}

// Syntax problems are usage errors; a well-formed but degenerate box is a
// domain error raised by BoundingBox itself.
fdk::BoundingBox parse_box(const std::string& text, const char* what) {
  const auto v = parse_numbers(text, 4, what);
  return fdk::BoundingBox(v[0], v[1], v[2], v[3]);
}

ordered_json box_json(const fdk::BoundingBox& b) { return ordered_json::array({b.cx(), b.cy(), b.w(), b.h()}); }

ordered_json shape_json(const fdk::Shape& s) { return ordered_json::array({s.n, s.c, s.h, s.w}); }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fdk::BoxTransform parse_augment(const std::string& spec, std::size_t height, std::size_t width) {
  const auto h = static_cast<double>(height);
  const auto w = static_cast<double>(width);
  if (spec == "fliph") return fdk::FlipH{w};
  if (spec == "flipv") return fdk::FlipV{h};
  if (spec == "rot90") return fdk::Rotate90CW{w, h};
  if (spec.rfind("translate:", 0) == 0) {
    const auto v = parse_numbers(spec.substr(10), 2, "--augment translate");
    return fdk::Translate{v[0], v[1]};
  }
  if (spec.rfind("scale:", 0) == 0) {
    const auto v = parse_numbers(spec.substr(6), 1, "--augment scale");
    return fdk::Scale{v[0]};
  }
  throw UsageError("--augment: expected fliph, flipv, rot90, translate:DX,DY or scale:S");
}

void print_json(const ordered_json& j, bool pretty) { std::cout << j.dump(pretty ? 2 : -1) << '\n'; }

// --- subcommands -----------------------------------------------------------

struct IouArgs {
  std::string pred;
  std::string gt;
  double gamma = 0.5;
};

int run_iou(const IouArgs& a, bool pretty) {
  const fdk::BoundingBox pred = parse_box(a.pred, "--pred");
  const fdk::BoundingBox gt = parse_box(a.gt, "--gt");
  const fdk::LossConfig cfg{a.gamma, fdk::LossMode::FocalCIoULoss};
  const fdk::IoUBreakdown b = fdk::breakdown(pred, gt, cfg);
  ordered_json j;
  j["gamma"] = a.gamma;
  j["iou"] = b.iou;
  j["rho2"] = b.rho2;
  j["c2"] = b.c2;
  j["v"] = b.v;
  j["alpha"] = b.alpha;
  j["giou"] = b.giou;
  j["diou"] = b.diou;
  j["ciou"] = b.ciou;
  j["feciou"] = b.feciou;
  j["focal_ciou_loss"] = fdk::feciou_objective(pred, gt, cfg);
  print_json(j, pretty);
  return 0;
}

int run_gradcheck(const fdk::GradcheckOptions& opts, bool pretty) {
  const fdk::GradcheckReport r = fdk::run_gradcheck(opts);
  ordered_json j;
  j["trials"] = r.trials;
  j["seed"] = opts.seed;
  j["gamma"] = opts.gamma;
  j["step"] = opts.step;
  j["rel_tol"] = opts.rel_tol;
  ordered_json worst = ordered_json::object();
  for (const auto& [name, err] : r.worst_error) worst[name] = err;
  j["worst_error"] = worst;
  j["failures"] = r.failures;
  j["pass"] = r.pass();
  print_json(j, pretty);
  return r.pass() ? 0 : kExitDomain;
}

struct EvalArgs {
  std::string dets;
  std::string gts;
  double iou_thresh = 0.5;
};

int run_eval(const EvalArgs& a, bool pretty) {
  const auto dets = fdk::load_detections(a.dets);
  const auto gts = fdk::load_ground_truth(a.gts);
  for (const auto& w : dets.warnings) std::cerr << a.dets << ": warning: " << w << '\n';
  for (const auto& w : gts.warnings) std::cerr << a.gts << ": warning: " << w << '\n';
  const fdk::EvalReport report = fdk::evaluate(dets.records, gts.records, a.iou_thresh);
  std::cout << fdk::report_to_json(report, pretty ? 2 : -1) << '\n';
  if (pretty) std::cout << '\n' << fdk::report_to_table(report);
  return 0;
}

struct ForwardArgs {
  std::string block;
  std::string config;
  std::string input;
  std::string output;
  std::string weights;
  std::uint64_t seed = 0;
  std::string dump_activation;
  std::string save_weights;
};

int run_forward(const ForwardArgs& a, bool pretty) {
  const std::string config_text = read_text(a.config);
  const fdk::Tensor input = fdk::load_rt4(a.input);

  std::vector<fdk::ParamSpec> specs;
  std::optional<fdk::SpmConfig> spm;
  std::optional<fdk::SeSppfConfig> sesppf;
  if (a.block == "spm") {
    spm = fdk::spm_config_from_json(config_text);
    specs = fdk::spm_param_specs(*spm);
  } else {
    sesppf = fdk::se_sppf_config_from_json(config_text);
    specs = fdk::se_sppf_param_specs(*sesppf);
  }
  const fdk::BlockWeights weights =
      a.weights.empty() ? fdk::init_weights(specs, a.seed) : fdk::load_weights(a.weights, specs);
  const fdk::Tensor output = spm ? fdk::spm_forward(input, weights, *spm) : fdk::se_sppf_forward(input, weights, *sesppf);
  if (!a.save_weights.empty()) fdk::save_weights(a.save_weights, weights, specs);
  fdk::save_rt4(a.output, output);
  if (!a.dump_activation.empty()) fdk::save_pgm(a.dump_activation, fdk::activation_map(output, 0));

  ordered_json j;
  j["block"] = a.block;
  j["input_shape"] = shape_json(input.shape());
  j["output_shape"] = shape_json(output.shape());
  j["output"] = a.output;
  print_json(j, pretty);
  return 0;
}

struct SynthBoxesArgs {
  double target_iou = 0.3;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  std::string output;
};

int run_synth_boxes(const SynthBoxesArgs& a) {
  if (!(a.target_iou >= 0.0 && a.target_iou < 1.0)) throw UsageError("--target-iou must lie in [0, 1)");
  std::ostringstream out;
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto [pred, gt] = fdk::gen_box_pair(a.target_iou, a.seed + i);
    ordered_json j;
    j["seed"] = a.seed + i;
    j["pred"] = box_json(pred);
    j["gt"] = box_json(gt);
    j["iou"] = fdk::iou(pred, gt);
    out << j.dump() << '\n';
  }
  if (a.output.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(a.output);
    if (!f) throw std::runtime_error("cannot open for writing: " + a.output);
    f << out.str();
  }
  return 0;
}

struct SynthSceneArgs {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t defects = 3;
  std::uint64_t seed = 0;
  std::string output;
  std::string augment;
  std::string pgm;
};

int run_synth_scene(const SynthSceneArgs& a, bool pretty) {
  fdk::SynthScene scene = fdk::gen_strip_scene(a.height, a.width, a.defects, a.seed);
  if (!a.augment.empty()) scene = fdk::augment_scene(scene, parse_augment(a.augment, a.height, a.width));

  fdk::save_rt4(a.output + ".rt4", scene.image);
  {
    std::ofstream gt(a.output + ".jsonl");
    if (!gt) throw std::runtime_error("cannot open for writing: " + a.output + ".jsonl");
    fdk::write_ground_truth(gt, scene.gts);
  }
  if (!a.pgm.empty()) {
    fdk::Grid g{scene.height(), scene.width(), {scene.image.data().begin(), scene.image.data().end()}};
    fdk::save_pgm(a.pgm, g);
  }
  ordered_json j;
  j["image"] = a.output + ".rt4";
  j["annotations"] = a.output + ".jsonl";
  j["height"] = scene.height();
  j["width"] = scene.width();
  j["num_defects"] = scene.gts.size();
  print_json(j, pretty);
  return 0;
}

struct FitArgs {
  std::string init;
  std::string gt;
  std::string objective = "ciou";
  fdk::OptimizerConfig config;
  std::string output;
  std::size_t batch = 0;
  double target_iou = 0.3;
  std::uint64_t seed = 0;
};

int run_fitbox(FitArgs a, bool pretty) {
  a.config.objective = fdk::objective_from_string(a.objective);
  if (a.batch > 0) {
    if (!(a.target_iou >= 0.0 && a.target_iou < 1.0)) throw UsageError("--target-iou must lie in [0, 1)");
    std::vector<std::pair<fdk::BoundingBox, fdk::BoundingBox>> pairs;
    for (std::size_t i = 0; i < a.batch; ++i) pairs.push_back(fdk::gen_box_pair(a.target_iou, a.seed + i));
    const fdk::BatchSummary s = fdk::batch_fit(pairs, a.config);
    ordered_json j;
    j["objective"] = a.objective;
    j["count"] = s.count;
    j["success_rate"] = s.success_rate;
    j["mean_steps"] = s.mean_steps;
    print_json(j, pretty);
    return 0;
  }
  if (a.init.empty() || a.gt.empty()) throw UsageError("fitbox: --init and --gt are required without --batch");
  const fdk::BoundingBox init = parse_box(a.init, "--init");
  const fdk::BoundingBox gt = parse_box(a.gt, "--gt");
  const fdk::RegressionTrace trace = fdk::fit_box(init, gt, a.config);
  if (a.output.empty()) {
    fdk::write_trace_csv(std::cout, trace);
    return 0;
  }
  std::ofstream f(a.output);
  if (!f) throw std::runtime_error("cannot open for writing: " + a.output);
  fdk::write_trace_csv(f, trace);
  ordered_json j;
  j["objective"] = a.objective;
  j["steps"] = trace.final().step;
  j["final_iou"] = trace.final().iou;
  j["reached"] = trace.reached(a.config.stop_iou);
  j["trace"] = a.output;
  print_json(j, pretty);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Box-metric, detection-block and evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  bool pretty = false;
  app.add_flag("--pretty", pretty, "Indented JSON and human-readable tables");

  IouArgs iou_args;
  auto* iou_cmd = app.add_subcommand("iou", "Print the full IoU/GIoU/DIoU/CIoU/FECIoU breakdown as JSON");
  iou_cmd->add_option("--pred", iou_args.pred, "Predicted box cx,cy,w,h")->required();
  iou_cmd->add_option("--gt", iou_args.gt, "Ground-truth box cx,cy,w,h")->required();
  iou_cmd->add_option("--gamma", iou_args.gamma, "Focal exponent (>= 0)")->check(CLI::NonNegativeNumber);

  fdk::GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences");
  gc_cmd->add_option("--trials", gc.trials, "Number of random box pairs (>= 1)")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--seed", gc.seed, "RNG seed");
  gc_cmd->add_option("--gamma", gc.gamma, "Focal exponent (>= 0)")->check(CLI::NonNegativeNumber);
  gc_cmd->add_option("--step", gc.step, "Finite-difference step")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--tol", gc.rel_tol, "Relative error tolerance")->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Per-class AP and mAP from JSONL detections and ground truth");
  eval_cmd->add_option("--dets", eval_args.dets, "Detections JSONL")->required();
  eval_cmd->add_option("--gts", eval_args.gts, "Ground-truth JSONL")->required();
  eval_cmd->add_option("--iou-thresh", eval_args.iou_thresh, "IoU match threshold in (0,1)")
      ->check(CLI::Range(0.0, 1.0));

  ForwardArgs fwd;
  auto* fwd_cmd = app.add_subcommand("forward", "Run an SPM or SE-SPPF block on an RT4 tensor");
  fwd_cmd->add_option("--block", fwd.block, "Block type")->required()->check(CLI::IsMember({"spm", "sesppf"}));
  fwd_cmd->add_option("--config", fwd.config, "Block config JSON")->required();
  fwd_cmd->add_option("--input", fwd.input, "Input tensor (.rt4)")->required();
  fwd_cmd->add_option("--output", fwd.output, "Output tensor (.rt4)")->required();
  auto* weights_opt = fwd_cmd->add_option("--weights", fwd.weights, "Directory of per-parameter .rt4 files");
  fwd_cmd->add_option("--seed", fwd.seed, "Seed for generated weights (default 0)")->excludes(weights_opt);
  fwd_cmd->add_option("--dump-activation", fwd.dump_activation, "Write the channel-mean activation map as PGM");
  fwd_cmd->add_option("--save-weights", fwd.save_weights, "Write the weights used to this directory");

  auto* synth_cmd = app.add_subcommand("synth", "Generate box pairs or strip-defect scenes");
  synth_cmd->require_subcommand(1);
  SynthBoxesArgs sb;
  auto* sb_cmd = synth_cmd->add_subcommand("boxes", "Box pairs with a target IoU, one JSON object per line");
  sb_cmd->add_option("--target-iou", sb.target_iou, "Target IoU in [0,1)");
  sb_cmd->add_option("--count", sb.count, "Number of pairs");
  sb_cmd->add_option("--seed", sb.seed, "First seed; pair i uses seed + i");
  sb_cmd->add_option("--output", sb.output, "Output JSONL (default stdout)");
  SynthSceneArgs ss;
  auto* ss_cmd = synth_cmd->add_subcommand("scene", "Strip-defect raster (.rt4) with ground truth (.jsonl)");
  ss_cmd->add_option("--height", ss.height, "Image height (>= 32)");
  ss_cmd->add_option("--width", ss.width, "Image width (>= 32)");
  ss_cmd->add_option("--defects", ss.defects, "Number of strip defects");
  ss_cmd->add_option("--seed", ss.seed, "RNG seed");
  ss_cmd->add_option("--output", ss.output, "Output prefix; writes PREFIX.rt4 and PREFIX.jsonl")->required();
  ss_cmd->add_option("--augment", ss.augment, "fliph | flipv | rot90 | translate:DX,DY | scale:S");
  ss_cmd->add_option("--pgm", ss.pgm, "Also write the raster as PGM");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fitbox", "Momentum descent of a box onto a ground truth");
  fit_cmd->add_option("--init", fit.init, "Initial box cx,cy,w,h");
  fit_cmd->add_option("--gt", fit.gt, "Ground-truth box cx,cy,w,h");
  fit_cmd->add_option("--objective", fit.objective, "iou | giou | diou | ciou | feciou")
      ->check(CLI::IsMember({"iou", "giou", "diou", "ciou", "feciou"}));
  fit_cmd->add_option("--gamma", fit.config.gamma, "Focal exponent for feciou")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--lr", fit.config.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--momentum", fit.config.momentum, "Momentum in [0,1)");
  fit_cmd->add_option("--max-steps", fit.config.max_steps, "Step limit");
  fit_cmd->add_option("--stop-iou", fit.config.stop_iou, "Stop once IoU reaches this value");
  fit_cmd->add_option("--clip-norm", fit.config.clip_norm, "Gradient norm cap (<= 0 disables)");
  fit_cmd->add_option("--output", fit.output, "Trace CSV path (default stdout)");
  fit_cmd->add_option("--batch", fit.batch, "Fit N generated pairs and print a summary instead");
  fit_cmd->add_option("--target-iou", fit.target_iou, "Target IoU of generated pairs for --batch");
  fit_cmd->add_option("--seed", fit.seed, "First seed for --batch; pair i uses seed + i");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*iou_cmd) return run_iou(iou_args, pretty);
    if (*gc_cmd) return run_gradcheck(gc, pretty);
    if (*eval_cmd) return run_eval(eval_args, pretty);
    if (*fwd_cmd) return run_forward(fwd, pretty);
    if (*sb_cmd) return run_synth_boxes(sb);
    if (*ss_cmd) return run_synth_scene(ss, pretty);
    if (*fit_cmd) return run_fitbox(fit, pretty);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}
