// Acceptance suite: one criterion per line, PASS/FAIL, nonzero exit if any
// criterion fails. Each criterion re-derives its expectations independently
// (finite differences, exhaustive search, frozen bytes) rather than trusting
// the code under test.
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nucleval/cli.hpp"
#include "nucleval/labelmap.hpp"
#include "nucleval/metrics.hpp"
#include "nucleval/npy.hpp"
#include "nucleval/probloss.hpp"
#include "nucleval/report.hpp"
#include "nucleval/roi.hpp"
#include "test_support.hpp"

using namespace nucleval;
namespace fs = std::filesystem;
namespace ts = testing_support;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fs", s);
  return buf;
}

fs::path make_scratch(const std::string& tag) {
  const fs::path dir =
      fs::temp_directory_path() / ("nucleval_accept_" + std::to_string(::getpid()) + "_" + tag);
  fs::create_directories(dir);
  return dir;
}

// --- Criterion 1: loss-kernel gradients against central finite differences.
bool check_gradients(std::string& detail) {
  const auto start = Clock::now();
  std::mt19937 rng(1001);
  std::uniform_real_distribution<double> interior(1e-3, 1.0 - 1e-3);
  std::uniform_real_distribution<double> cell_value(0.01, 0.99);
  std::bernoulli_distribution bit(0.5);
  std::uniform_int_distribution<int> cell(0, MaskGrid::kExtent - 1);

  auto check = [&](double analytic, double numeric, const char* what) {
    if (ts::grad_close(analytic, numeric)) return true;
    detail = std::string(what) + ": analytic " + std::to_string(analytic) + " vs fd " +
             std::to_string(numeric);
    return false;
  };

  for (int i = 0; i < 100; ++i) {
    const double o = interior(rng);
    const double c = interior(rng);

    const LossGrad pos = positive_log_likelihood(o, c);
    if (!check(pos.d_objectness,
               ts::central_diff([c](double x) { return positive_log_likelihood(x, c).value; }, o),
               "positive objectness")) {
      return false;
    }
    if (!check(pos.d_cond,
               ts::central_diff([o](double x) { return positive_log_likelihood(o, x).value; }, c),
               "positive cond")) {
      return false;
    }

    const LossGrad exact = bg_log_likelihood_exact(o, c);
    if (!check(exact.d_objectness,
               ts::central_diff([c](double x) { return bg_log_likelihood_exact(x, c).value; }, o),
               "bg-exact objectness")) {
      return false;
    }
    if (!check(exact.d_cond,
               ts::central_diff([o](double x) { return bg_log_likelihood_exact(o, x).value; }, c),
               "bg-exact cond")) {
      return false;
    }

    // The first bound freezes its objectness factor, so only the cond
    // partial is a true derivative; the second bound has no cond input.
    if (!check(bg_lower_bound_first(o, c).d_cond,
               ts::central_diff([o](double x) { return bg_lower_bound_first(o, x).value; }, c),
               "bound-one cond")) {
      return false;
    }
    if (!check(bg_lower_bound_second(o).d_objectness,
               ts::central_diff([](double x) { return bg_lower_bound_second(x).value; }, o),
               "bound-two objectness")) {
      return false;
    }
  }

  for (int i = 0; i < 100; ++i) {
    RealGrid pred(MaskGrid::kExtent, MaskGrid::kExtent, 0.0);
    RealGrid gt(MaskGrid::kExtent, MaskGrid::kExtent, 0.0);
    for (double& v : pred.cells()) v = cell_value(rng);
    for (double& v : gt.cells()) v = bit(rng) ? 1.0 : 0.0;
    const int r = cell(rng);
    const int c = cell(rng);
    const double fd = ts::central_diff(
        [&](double x) {
          RealGrid probe = pred;
          probe(r, c) = x;
          return soft_iou_loss(probe, gt).value;
        },
        pred(r, c));
    if (!check(soft_iou_loss(pred, gt).grad(r, c), fd, "mask-loss cell")) return false;
  }

  const double elapsed = seconds_since(start);
  if (elapsed >= 1.0) {
    detail = "too slow: " + format_seconds(elapsed);
    return false;
  }
  detail = format_seconds(elapsed);
  return true;
}

// --- Criterion 2: surrogate background terms never exceed the exact value.
bool check_lower_bounds(std::string& detail) {
  std::mt19937 rng(1002);
  std::uniform_real_distribution<double> range(1e-6, 1.0 - 1e-6);
  for (int i = 0; i < 10000; ++i) {
    const double o = range(rng);
    const double c = range(rng);
    const double exact = bg_log_likelihood_exact(o, c).value;
    const double first = bg_lower_bound_first(o, c).value;
    const double second = bg_lower_bound_second(o).value;
    if (exact < first - 1e-12 || exact < second - 1e-12) {
      detail = "violated at objectness " + std::to_string(o) + ", cond_bg " + std::to_string(c);
      return false;
    }
  }
  detail = "10000 pairs";
  return true;
}

// --- Criterion 3: fused posterior sums to one; the non-background entries
// factorize through the positive log-likelihood.
bool check_fusion(std::string& detail) {
  std::mt19937 rng(1003);
  std::uniform_real_distribution<double> range(1e-6, 1.0 - 1e-6);
  std::uniform_int_distribution<int> pick_class(1, 6);
  for (int i = 0; i < 10000; ++i) {
    const double o = range(rng);
    const std::vector<double> cond = ts::random_conditional(rng, 6);
    const ClassPosterior fused = fuse_scores(ObjectnessScore(o), ClassConditional(cond));
    double sum = 0.0;
    for (double p : fused.probs()) sum += p;
    if (std::abs(sum - 1.0) > 1e-12) {
      detail = "sum " + std::to_string(sum);
      return false;
    }
    const int cls = pick_class(rng);
    const double via_log =
        std::exp(positive_log_likelihood(o, cond[static_cast<std::size_t>(cls)]).value);
    if (std::abs(via_log - fused[cls]) > 1e-12) {
      detail = "factorization off by " + std::to_string(via_log - fused[cls]);
      return false;
    }
  }
  detail = "10000 draws";
  return true;
}

// --- Criterion 4: fast matcher equals the exhaustive oracle.
bool check_matching_oracle(std::string& detail) {
  const auto start = Clock::now();
  std::mt19937 rng(1004);
  for (int trial = 0; trial < 1000; ++trial) {
    const LabelPatch gt = ts::cap_instances(ts::random_label_patch(rng, 16, 16, 6), 6);
    const LabelPatch pred = ts::cap_instances(ts::perturb_patch(rng, gt), 6);
    for (const bool class_aware : {false, true}) {
      MatchResult fast;
      try {
        fast = match_instances(gt, pred, class_aware);
      } catch (const std::logic_error& e) {
        detail = std::string("uniqueness assertion fired: ") + e.what();
        return false;
      }
      const MatchResult slow = brute_force_match(gt, pred, class_aware);
      const bool equal = fast.true_positives.size() == slow.true_positives.size() &&
                         std::equal(fast.true_positives.begin(), fast.true_positives.end(),
                                    slow.true_positives.begin()) &&
                         fast.false_positives == slow.false_positives &&
                         fast.false_negatives == slow.false_negatives;
      if (!equal) {
        detail = "divergence on trial " + std::to_string(trial) +
                 (class_aware ? " (class-aware)" : " (class-agnostic)");
        return false;
      }
    }
  }
  const double elapsed = seconds_since(start);
  if (elapsed >= 30.0) {
    detail = "too slow: " + format_seconds(elapsed);
    return false;
  }
  detail = "1000 patches, " + format_seconds(elapsed);
  return true;
}

// --- Criterion 5: pq = dq * sq on every emitted scope; hand fixture exact.
bool check_metric_identities(std::string& detail) {
  const MatchResult fixture{{TruePositive{1, 1, 0.6}}, {2}, {3}};
  const ClassMetrics hand = compute_pq(fixture);
  if (hand.dq != 0.5 || hand.sq != 0.6 || hand.pq != 0.3) {
    detail = "hand fixture: dq " + std::to_string(hand.dq) + ", sq " + std::to_string(hand.sq) +
             ", pq " + std::to_string(hand.pq);
    return false;
  }

  std::mt19937 rng(1005);
  for (int trial = 0; trial < 500; ++trial) {
    const LabelPatch gt = ts::random_label_patch(rng, 16, 16, 6);
    const LabelPatch pred = ts::perturb_patch(rng, gt);
    const MetricsReport report = evaluate_dataset({{gt, pred}});
    std::vector<ClassMetrics> scopes{report.binary};
    for (const auto& [cls, m] : report.per_class) scopes.push_back(m);
    for (const ClassMetrics& m : scopes) {
      if (std::abs(m.pq - m.dq * m.sq) > 1e-12) {
        detail = "pq " + std::to_string(m.pq) + " vs dq*sq " + std::to_string(m.dq * m.sq);
        return false;
      }
    }
  }
  detail = "hand fixture + 500 random reports";
  return true;
}

// --- Criterion 6: evaluating a prediction identical to its ground truth
// reports exactly 1.0 everywhere.
bool check_perfect_eval(std::string& detail) {
  const fs::path root = make_scratch("perfect");
  const fs::path gt_dir = root / "gt";
  const fs::path pred_dir = root / "pred";
  fs::create_directories(gt_dir);
  fs::create_directories(pred_dir);

  std::mt19937 rng(1006);
  for (int i = 0; i < 50; ++i) {
    LabelPatch patch = ts::random_label_patch(rng, 32, 32, 12);
    if (extract_instances(patch).empty()) {
      const int cls = 1 + i % 6;
      for (int r = 2; r < 6; ++r) {
        for (int c = 2; c < 6; ++c) {
          patch.instance_map(r, c) = 1;
          patch.class_map(r, c) = cls;
        }
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "patch_%03d.npy", i);
    write_label_patch(patch, (gt_dir / name).string());
    write_label_patch(patch, (pred_dir / name).string());
  }

  EvalOptions opts;
  opts.gt_dir = gt_dir.string();
  opts.pred_dir = pred_dir.string();
  opts.json = true;
  std::ostringstream out, err;
  const int rc = cmd_eval(opts, out, err);
  fs::remove_all(root);
  if (rc != kExitOk) {
    detail = "cmd_eval failed: " + err.str();
    return false;
  }
  const ReportDocument doc = report_from_json(nlohmann::json::parse(out.str()));
  if (doc.metrics.binary.dq != 1.0 || doc.metrics.binary.sq != 1.0 ||
      doc.metrics.binary.pq != 1.0 || doc.metrics.multi_pq != 1.0) {
    detail = "binary dq/sq/pq " + std::to_string(doc.metrics.binary.dq) + "/" +
             std::to_string(doc.metrics.binary.sq) + "/" + std::to_string(doc.metrics.binary.pq) +
             ", multi " + std::to_string(doc.metrics.multi_pq);
    return false;
  }
  for (const auto& [cls, m] : doc.metrics.per_class) {
    if (m.tp + m.fp + m.fn > 0 && m.pq != 1.0) {
      detail = "class " + std::to_string(cls) + " pq " + std::to_string(m.pq);
      return false;
    }
  }
  detail = "50 patches";
  return true;
}

// --- Criterion 7: geometric invariants.
bool check_geometry(std::string& detail) {
  std::mt19937 rng(1007);

  // NMS is idempotent.
  std::uniform_int_distribution<int> count(0, 16);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Detection> dets;
    for (int i = count(rng); i > 0; --i) dets.push_back(ts::random_detection(rng, 4, 48.0));
    const std::vector<Detection> once = nms(dets, 0.5);
    const std::vector<Detection> twice = nms(once, 0.5);
    bool same = once.size() == twice.size();
    for (std::size_t i = 0; same && i < once.size(); ++i) {
      same = once[i].box == twice[i].box && once[i].score == twice[i].score;
    }
    if (!same) {
      detail = "nms not idempotent on trial " + std::to_string(trial);
      return false;
    }
  }

  // Horizontal flip is an involution.
  for (int trial = 0; trial < 500; ++trial) {
    const LabelPatch patch = ts::random_label_patch(rng, 16, 24, 8);
    if (!(horizontal_flip(horizontal_flip(patch)) == patch)) {
      detail = "flip not involutive on trial " + std::to_string(trial);
      return false;
    }
  }

  // roi_align reproduces constants exactly ...
  const FeatureMap constant(2, 9, 9, 3.125);
  const FeatureMap const_out = roi_align(constant, Box{0.7, 1.2, 7.4, 8.1}, 5, 3);
  for (double v : const_out.values) {
    if (v != 3.125) {
      detail = "constant map gave " + std::to_string(v);
      return false;
    }
  }
  // ... and linear ramps up to 1e-9.
  FeatureMap ramp(1, 16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) ramp.at(0, y, x) = 0.5 * x - 1.25 * y + 2.0;
  }
  const Box box{2.0, 3.0, 11.0, 13.0};
  const int out_h = 5;
  const int out_w = 3;
  const FeatureMap ramp_out = roi_align(ramp, box, out_h, out_w, 2);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      const double xc = box.x1 + (j + 0.5) * box.width() / out_w;
      const double yc = box.y1 + (i + 0.5) * box.height() / out_h;
      const double want = 0.5 * xc - 1.25 * yc + 2.0;
      if (std::abs(ramp_out.at(0, i, j) - want) > 1e-9) {
        detail = "ramp bin (" + std::to_string(i) + ", " + std::to_string(j) + ") off by " +
                 std::to_string(ramp_out.at(0, i, j) - want);
        return false;
      }
    }
  }
  detail = "nms x500, flip x500, roi-align";
  return true;
}

// --- Criterion 8: learning-rate schedule key values, exact.
bool check_schedule(std::string& detail) {
  const double at_warmup_end = lr_schedule(2000);
  const double after_first_drop = lr_schedule(13000);
  const double after_second_drop = lr_schedule(14500);
  if (at_warmup_end != 0.02 || after_first_drop != 0.002 || after_second_drop != 0.0002) {
    detail = std::to_string(at_warmup_end) + " / " + std::to_string(after_first_drop) + " / " +
             std::to_string(after_second_drop);
    return false;
  }
  detail = "0.02 / 0.002 / 0.0002";
  return true;
}

// --- Criterion 9: single-worker evaluation of 1000 256x256 pairs in <10s.
bool check_throughput(std::string& detail) {
  const fs::path root = make_scratch("throughput");
  const fs::path gt_dir = root / "gt";
  const fs::path pred_dir = root / "pred";
  fs::create_directories(gt_dir);
  fs::create_directories(pred_dir);

  // 20 distinct base pairs, hard-linked out to 1000 names, keep disk use low.
  std::mt19937 rng(1009);
  constexpr int kBases = 20;
  constexpr int kPairs = 1000;
  for (int b = 0; b < kBases; ++b) {
    const LabelPatch gt = ts::random_label_patch(rng, 256, 256, 60, 6, 14);
    const LabelPatch pred = ts::perturb_patch(rng, gt);
    char name[32];
    std::snprintf(name, sizeof(name), "base_%02d.npy", b);
    write_label_patch(gt, (gt_dir / name).string());
    write_label_patch(pred, (pred_dir / name).string());
  }
  for (int i = 0; i < kPairs; ++i) {
    char base[32];
    char name[32];
    std::snprintf(base, sizeof(base), "base_%02d.npy", i % kBases);
    std::snprintf(name, sizeof(name), "pair_%04d.npy", i);
    for (const fs::path& dir : {gt_dir, pred_dir}) {
      std::error_code ec;
      fs::create_hard_link(dir / base, dir / name, ec);
      if (ec) fs::copy_file(dir / base, dir / name);
    }
  }
  for (int b = 0; b < kBases; ++b) {
    char name[32];
    std::snprintf(name, sizeof(name), "base_%02d.npy", b);
    fs::remove(gt_dir / name);
    fs::remove(pred_dir / name);
  }

  EvalOptions opts;
  opts.gt_dir = gt_dir.string();
  opts.pred_dir = pred_dir.string();
  opts.workers = 1;
  opts.json = true;
  std::ostringstream out, err;
  const auto start = Clock::now();
  const int rc = cmd_eval(opts, out, err);
  const double elapsed = seconds_since(start);
  fs::remove_all(root);
  if (rc != kExitOk) {
    detail = "cmd_eval failed: " + err.str();
    return false;
  }
  const ReportDocument doc = report_from_json(nlohmann::json::parse(out.str()));
  if (doc.patch_count != kPairs) {
    detail = "patch count " + std::to_string(doc.patch_count);
    return false;
  }
  if (elapsed >= 10.0) {
    detail = "too slow: " + format_seconds(elapsed);
    return false;
  }
  detail = std::to_string(kPairs) + " pairs, " + format_seconds(elapsed);
  return true;
}

// --- Criterion 10: file round-trip fidelity and the frozen header bytes.
bool check_round_trip(std::string& detail) {
  const fs::path root = make_scratch("roundtrip");
  const fs::path path = root / "patch.npy";
  std::mt19937 rng(1010);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const LabelPatch patch = ts::random_label_patch(rng, dim(rng), dim(rng), 8);
    write_label_patch(patch, path.string());
    if (!(read_label_patch(path.string()) == patch)) {
      fs::remove_all(root);
      detail = "mismatch on trial " + std::to_string(trial);
      return false;
    }
  }

  write_label_patch(LabelPatch::zeros(256, 256), path.string());
  std::ifstream in(path, std::ios::binary);
  std::string header(128, '\0');
  in.read(header.data(), 128);
  fs::remove_all(root);

  std::string expected("\x93NUMPY\x01\x00\x76\x00", 10);
  expected += "{'descr': '<u4', 'fortran_order': False, 'shape': (256, 256, 2), }";
  expected += std::string(51, ' ');
  expected += '\n';
  if (header != expected) {
    detail = "header bytes differ from frozen reference";
    return false;
  }
  detail = "200 round-trips + golden header";
  return true;
}

struct Criterion {
  const char* name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"loss-kernel gradients match finite differences", check_gradients},
      {"background lower bounds never exceed exact likelihood", check_lower_bounds},
      {"fused posterior normalizes and factorizes", check_fusion},
      {"instance matching equals exhaustive oracle", check_matching_oracle},
      {"panoptic-quality identities and hand fixture", check_metric_identities},
      {"perfect-prediction evaluation reports all ones", check_perfect_eval},
      {"geometry invariants: nms, flip, roi-align", check_geometry},
      {"learning-rate schedule key values", check_schedule},
      {"evaluation throughput on 1000 patch pairs", check_throughput},
      {"label-file round-trip and golden header", check_round_trip},
  };

  bool all_ok = true;
  for (const Criterion& criterion : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", criterion.name,
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
