// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "fdk/blocks.hpp"
#include "fdk/evaluation.hpp"
#include "fdk/geometry.hpp"
#include "fdk/gradcheck.hpp"
#include "fdk/optimizer.hpp"
#include "fdk/random.hpp"
#include "fdk/synthgen.hpp"
#include "fdk/tensor_io.hpp"
#include "oracle/block_reference.hpp"
#include "oracle/reference.hpp"

using namespace fdk;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::array<double, 4> arr(const BoundingBox& b) { return {b.cx(), b.cy(), b.w(), b.h()}; }

Tensor random_tensor(Shape s, SeededRng& rng) {
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void gradient_suite() {
  const auto t0 = Clock::now();
  GradcheckOptions opt;  // 1000 trials, step 1e-5, rel 1e-4, abs 1e-8 below 1e-6
  const GradcheckReport lib = run_gradcheck(opt);

  // Same pairs against finite differences of the independent scalar oracle.
  SeededRng rng(opt.seed);
  std::size_t oracle_failures = 0;
  double worst = 0.0;
  const auto compare = [&](const BoxGradient& a, const std::array<double, 4>& n) {
    const double got[4] = {a.d_cx, a.d_cy, a.d_w, a.d_h};
    for (int i = 0; i < 4; ++i) {
      const double scale = std::max(std::abs(got[i]), std::abs(n[i]));
      const bool tiny = scale < opt.tiny_magnitude;
      const double err = tiny ? std::abs(got[i] - n[i]) : std::abs(got[i] - n[i]) / scale;
      if (!tiny) worst = std::max(worst, err);
      if (err >= (tiny ? opt.abs_tol : opt.rel_tol)) ++oracle_failures;
    }
  };
  for (std::size_t t = 0; t < opt.trials; ++t) {
    const auto [p, g] = random_gradcheck_pair(rng);
    const auto pa = arr(p);
    const auto ga = arr(g);
    const double alpha0 = oracle::scalar_metrics(pa, ga, opt.gamma).alpha;
    const auto fd = [&](auto f) { return oracle::central_difference(f, pa, opt.step); };
    const MetricGradients full = metric_gradients(p, g, AlphaGradient::Full);
    compare(full.giou, fd([&](const auto& x) { return oracle::scalar_metrics(x, ga, opt.gamma).giou; }));
    compare(full.diou, fd([&](const auto& x) { return oracle::scalar_metrics(x, ga, opt.gamma).diou; }));
    compare(full.ciou, fd([&](const auto& x) { return oracle::scalar_metrics(x, ga, opt.gamma).ciou; }));
    compare(metric_gradients(p, g, AlphaGradient::Frozen).ciou,
            fd([&](const auto& x) { return oracle::scalar_metrics(x, ga, opt.gamma, alpha0).ciou; }));
    compare(grad_objective(p, g, {opt.gamma, LossMode::MetricLiteral, AlphaGradient::Full}),
            fd([&](const auto& x) { return oracle::scalar_metrics(x, ga, opt.gamma).feciou; }));
    compare(grad_objective(p, g, {opt.gamma, LossMode::FocalCIoULoss, AlphaGradient::Frozen}),
            fd([&](const auto& x) { return oracle::scalar_metrics(x, ga, opt.gamma, alpha0).focal_loss; }));
  }
  const double secs = seconds_since(t0);
  double lib_worst = 0.0;
  for (const auto& [name, e] : lib.worst_error) lib_worst = std::max(lib_worst, e);
  const bool ok = lib.pass() && oracle_failures == 0 && secs < 5.0;
  report("gradient-suite", ok,
         fmt("%zu pairs, library check failures %zu (worst %.2e), oracle check failures %zu (worst rel %.2e), %.2fs",
             lib.trials, lib.failures, lib_worst, oracle_failures, worst, secs));
}

void closed_form() {
  const BoundingBox p(1, 1, 2, 2);
  const BoundingBox g(2, 1, 2, 2);
  const IoUBreakdown b = breakdown(p, g, {0.5, LossMode::MetricLiteral});
  const double e_iou = std::abs(b.iou - 1.0 / 3.0);
  const double e_ciou = std::abs(b.ciou - 10.0 / 39.0);
  const double e_fec = std::abs(b.feciou - 0.20937);
  report("closed-form-oracle", e_iou <= 1e-12 && e_ciou <= 1e-12 && e_fec <= 1e-4,
         fmt("iou %.17g (err %.1e), ciou %.17g (err %.1e), feciou %.17g (err %.1e)", b.iou, e_iou, b.ciou, e_ciou,
             b.feciou, e_fec));
}

void pixel_count() {
  const auto t0 = Clock::now();
  SeededRng rng(2024);
  double worst = 0.0;
  std::size_t overlapping = 0;
  const auto corners = [&](int& a, int& b) {
    a = static_cast<int>(rng.uniform_int(0, 999));
    b = static_cast<int>(rng.uniform_int(a + 1, 1000));
  };
  for (int i = 0; i < 200; ++i) {
    int ax1, ax2, ay1, ay2, bx1, bx2, by1, by2;
    corners(ax1, ax2);
    corners(ay1, ay2);
    corners(bx1, bx2);
    corners(by1, by2);
    const double analytic = iou(BoundingBox::from_corners(ax1, ay1, ax2, ay2), BoundingBox::from_corners(bx1, by1, bx2, by2));
    const double counted = oracle::pixel_count_iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2);
    overlapping += counted > 0.0;
    worst = std::max(worst, std::abs(analytic - counted));
  }
  const double secs = seconds_since(t0);
  report("pixel-count-oracle", worst < 1e-2 && secs < 10.0,
         fmt("200 pairs (%zu overlapping), max error %.3e, %.2fs", overlapping, worst, secs));
}

void block_identities() {
  SeededRng rng(77);
  bool spm_identity = true;
  for (int i = 0; i < 20; ++i) {
    const Shape s{static_cast<std::size_t>(rng.uniform_int(1, 2)), static_cast<std::size_t>(rng.uniform_int(1, 8)),
                  static_cast<std::size_t>(rng.uniform_int(3, 16)), static_cast<std::size_t>(rng.uniform_int(3, 16))};
    const SpmConfig c = SpmConfig::with_defaults(s.c);
    BlockWeights w = init_weights(spm_param_specs(c), static_cast<std::uint64_t>(i));
    Conv2dParams& fuse = w.convs.at("fuse_1x1");
    for (float& v : fuse.weight.data()) v = 0.0f;
    for (float& v : fuse.bias) v = 0.0f;
    const Tensor x = random_tensor(s, rng);
    spm_identity = spm_identity && spm_forward(x, w, c) == x;
  }

  bool sae_half = true;
  for (int i = 0; i < 5; ++i) {
    const SaeConfig c{static_cast<std::size_t>(rng.uniform_int(1, 32))};
    BlockWeights w = init_weights(sae_param_specs(c), static_cast<std::uint64_t>(i));
    LinearParams& e = w.linears.at("sae.expand");
    std::fill(e.weight.begin(), e.weight.end(), 0.0f);
    std::fill(e.bias.begin(), e.bias.end(), 0.0f);
    const Tensor x = random_tensor(Shape{2, c.channels, 5, 7}, rng);
    const Tensor y = sae_forward(x, w, c);
    for (std::size_t k = 0; k < x.numel(); ++k) sae_half = sae_half && y.data()[k] == 0.5f * x.data()[k];
  }

  double spm_err = 0.0;
  double sppf_err = 0.0;
  const Shape shapes[] = {{1, 1, 3, 3}, {1, 3, 7, 5}, {2, 4, 9, 12}, {2, 8, 16, 16}};
  for (const Shape& s : shapes) {
    const Tensor x = random_tensor(s, rng);
    const SpmConfig sc = SpmConfig::with_defaults(s.c);
    const BlockWeights sw = init_weights(spm_param_specs(sc), s.c);
    spm_err = std::max(spm_err, oracle::max_abs_diff(spm_forward(x, sw, sc), oracle::ref_spm(oracle::from_tensor(x), sw, sc)));
    const SeSppfConfig pc = SeSppfConfig::with_defaults(s.c, s.c);
    const BlockWeights pw = init_weights(se_sppf_param_specs(pc), 100 + s.c);
    sppf_err = std::max(sppf_err, oracle::max_abs_diff(se_sppf_forward(x, pw, pc),
                                                       oracle::ref_se_sppf(oracle::from_tensor(x), pw, pc)));
  }
  report("block-identities", spm_identity && sae_half && spm_err <= 1e-5 && sppf_err <= 1e-5,
         fmt("SPM zero-fuse identity %s on 20 inputs, SAE zero-excitation x0.5 %s, SPM ref max err %.2e, "
             "SE-SPPF ref max err %.2e",
             spm_identity ? "exact" : "BROKEN", sae_half ? "exact" : "BROKEN", spm_err, sppf_err));
}

void evaluation_oracle() {
  const std::vector<MatchLabel> labels{MatchLabel::TruePositive, MatchLabel::FalsePositive, MatchLabel::TruePositive};
  const double ap = average_precision(labels, 2);

  std::vector<GroundTruthRecord> gts;
  std::vector<DetectionRecord> dets;
  for (int i = 0; i < 6; ++i) {
    const BoundingBox b(10.0 * i + 5, 5, 4, 4);
    gts.push_back({"img" + std::to_string(i % 2), static_cast<std::size_t>(i % 3), b});
    dets.push_back({gts.back().image_id, gts.back().class_id, b, 1.0});
  }
  const double perfect = evaluate(dets, gts).map50;

  const auto t0 = Clock::now();
  std::size_t instances = 0;
  std::size_t mismatches = 0;
  for (std::size_t r = 1; r <= 3; ++r) {
    for (std::size_t c = 1; c <= 3; ++c) {
      oracle::for_each_iou_order_type(r, c, [&](const std::vector<std::vector<double>>& m) {
        ++instances;
        IouMatrix mat{r, c, {}};
        for (const auto& row : m) mat.values.insert(mat.values.end(), row.begin(), row.end());
        const auto greedy = greedy_assign(mat, 0.5);
        const auto best = oracle::ref_priority_assignment(m, 0.5);
        for (std::size_t i = 0; i < r; ++i) {
          if ((greedy[i] ? static_cast<int>(*greedy[i]) : -1) != best[i]) {
            ++mismatches;
            break;
          }
        }
      });
    }
  }
  const double secs = seconds_since(t0);
  report("evaluation-oracle", ap == 5.0 / 6.0 && perfect == 1.0 && mismatches == 0 && secs < 1.0,
         fmt("AP %.17g (5/6 %s), perfect mAP %.17g, greedy vs exhaustive %zu/%zu instances agree, %.2fs", ap,
             ap == 5.0 / 6.0 ? "exact" : "inexact", perfect, instances - mismatches, instances, secs));
}

void regression_demo() {
  std::vector<std::pair<BoundingBox, BoundingBox>> pairs;
  for (std::uint64_t seed = 0; seed < 100; ++seed) pairs.push_back(gen_box_pair(0.3, seed));
  const auto success = [&](Objective o) {
    OptimizerConfig c;
    c.objective = o;
    c.gamma = 0.5;
    std::size_t hits = 0;
    for (const auto& [p, g] : pairs) {
      const RegressionTrace t = fit_box(p, g, c);
      hits += t.final().iou > 0.99 && t.final().step <= 2000;
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
  };
  const double ciou = success(Objective::CIoULoss);
  const double focal = success(Objective::FECIoULoss);

  bool stalled = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto [p, g] = gen_box_pair(0.0, seed);
    OptimizerConfig c;
    c.objective = Objective::IoULoss;
    const RegressionTrace t = fit_box(p, g, c);
    stalled = stalled && t.final().box == p && t.final().iou == 0.0;
  }
  report("regression-demo", ciou >= 0.95 && focal >= 0.95 && stalled,
         fmt("reach IoU > 0.99 within 2000 steps: CIoU %.0f%%, FECIoU(gamma=0.5) %.0f%%; IoU loss on 100 disjoint "
             "pairs %s",
             100 * ciou, 100 * focal, stalled ? "made zero progress" : "MOVED"));
}

void determinism() {
  const auto dir = fdk::testing::scratch_dir("acceptance_determinism");
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  {
    std::ofstream(p("gt.jsonl")) << R"({"image_id": "a", "class_id": 0, "bbox": [5, 5, 4, 4]})" << '\n'
                                 << R"({"image_id": "a", "class_id": 1, "bbox": [20, 5, 2, 8]})" << '\n';
    std::ofstream(p("det.jsonl")) << R"({"image_id": "a", "class_id": 0, "bbox": [5.5, 5, 4, 4], "score": 0.8})"
                                  << '\n'
                                  << R"({"image_id": "a", "class_id": 1, "bbox": [30, 5, 2, 8], "score": 0.6})"
                                  << '\n';
    std::ofstream(p("spm.json")) << R"({"in_channels": 4})";
    std::ofstream(p("sesppf.json")) << R"({"in_channels": 4, "out_channels": 2})";
    SeededRng rng(5);
    save_rt4(p("in.rt4"), random_tensor(Shape{1, 4, 10, 10}, rng));
  }
  struct Case {
    std::string name;
    std::string args;
    std::vector<std::string> files;
  };
  const std::vector<Case> cases{
      {"iou", "iou --pred 1,1,2,2 --gt 2,1,2,2", {}},
      {"gradcheck", "gradcheck --trials 50 --seed 3", {}},
      {"eval", "--pretty eval --dets " + p("det.jsonl") + " --gts " + p("gt.jsonl"), {}},
      {"forward spm",
       "forward --block spm --config " + p("spm.json") + " --input " + p("in.rt4") + " --output " + p("spm.rt4") +
           " --dump-activation " + p("spm.pgm"),
       {"spm.rt4", "spm.pgm"}},
      {"forward sesppf",
       "forward --block sesppf --config " + p("sesppf.json") + " --input " + p("in.rt4") + " --output " +
           p("sppf.rt4") + " --seed 9 --save-weights " + p("w"),
       {"sppf.rt4", "w/cv4.weight.rt4", "w/sae.branch0.weight.rt4"}},
      {"synth boxes", "synth boxes --target-iou 0.3 --count 20 --seed 1", {}},
      {"synth scene",
       "synth scene --height 48 --width 40 --defects 3 --seed 2 --augment flipv --output " + p("scene") + " --pgm " +
           p("scene.pgm"),
       {"scene.rt4", "scene.jsonl", "scene.pgm"}},
      {"fitbox", "fitbox --init 0,0,1,1 --gt 3,0,1,1 --objective feciou --output " + p("trace.csv"), {"trace.csv"}},
      {"fitbox batch", "fitbox --batch 10 --objective ciou --seed 4", {}},
  };
  std::size_t identical = 0;
  std::string broken;
  for (const Case& c : cases) {
    const auto first = fdk::testing::run_cli(c.args, dir);
    std::vector<std::string> first_files;
    for (const auto& f : c.files) first_files.push_back(fdk::testing::read_file(dir / f));
    const auto second = fdk::testing::run_cli(c.args, dir);
    bool same = first.exit_code == 0 && second.exit_code == 0 && first.out == second.out && !first.out.empty();
    for (std::size_t i = 0; i < c.files.size(); ++i) {
      const std::string again = fdk::testing::read_file(dir / c.files[i]);
      same = same && !again.empty() && again == first_files[i];
    }
    if (same) {
      ++identical;
    } else {
      broken += " [" + c.name + "]";
    }
  }
  std::filesystem::remove_all(dir);
  report("determinism", identical == cases.size(),
         fmt("%zu/%zu subcommand runs byte-identical across two invocations%s", identical, cases.size(),
             broken.c_str()));
}

}  // namespace

int main() {
  gradient_suite();
  closed_form();
  pixel_count();
  block_identities();
  evaluation_oracle();
  regression_demo();
  determinism();
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
