#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nucleval/grid.hpp"

namespace nucleval {

// Probabilities are clamped into [kProbEps, 1 - kProbEps] before any log so
// every kernel stays finite at the boundary.
inline constexpr double kProbEps = 1e-7;

// Tolerance on the sum of a categorical distribution held in memory.
inline constexpr double kDistributionSumTolerance = 1e-9;

// Smoothing constant of the soft IoU loss.
inline constexpr double kMaskLossSmoothing = 1.0;

inline double clamp_probability(double p) {
  return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

// First-stage class-agnostic probability that a proposal is a real object.
class ObjectnessScore {
 public:
  ObjectnessScore() = default;

  explicit ObjectnessScore(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw std::invalid_argument("ObjectnessScore: value " + std::to_string(value) +
                                  " outside [0,1]");
    }
  }

  double value() const { return value_; }

  friend bool operator==(const ObjectnessScore&, const ObjectnessScore&) = default;

 private:
  double value_ = 0.0;
};

namespace detail {

inline void validate_distribution(const std::vector<double>& probs, const char* name) {
  if (probs.size() < 2) {
    throw std::invalid_argument(std::string(name) + ": need background plus at least one class");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument(std::string(name) + ": entry " + std::to_string(p) +
                                  " outside [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionSumTolerance) {
    throw std::invalid_argument(std::string(name) + ": entries sum to " + std::to_string(sum) +
                                ", expected 1");
  }
}

}  // namespace detail

// Second-stage class distribution conditioned on the proposal being an
// object. Entry 0 is the background class; entries 1..C are foreground
// classes.
class ClassConditional {
 public:
  explicit ClassConditional(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::validate_distribution(probs_, "ClassConditional");
  }

  int class_count() const { return static_cast<int>(probs_.size()) - 1; }
  double background() const { return probs_[0]; }
  double operator[](int class_id) const { return probs_[static_cast<std::size_t>(class_id)]; }
  const std::vector<double>& probs() const { return probs_; }

  friend bool operator==(const ClassConditional&, const ClassConditional&) = default;

 private:
  std::vector<double> probs_;
};

// Fused joint class distribution over background and foreground classes.
// Same index layout as ClassConditional.
class ClassPosterior {
 public:
  explicit ClassPosterior(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::validate_distribution(probs_, "ClassPosterior");
  }

  int class_count() const { return static_cast<int>(probs_.size()) - 1; }
  double background() const { return probs_[0]; }
  double operator[](int class_id) const { return probs_[static_cast<std::size_t>(class_id)]; }
  const std::vector<double>& probs() const { return probs_; }

  friend bool operator==(const ClassPosterior&, const ClassPosterior&) = default;

 private:
  std::vector<double> probs_;
};

// Marginalizes the two stages into a joint class distribution:
//   P(c)  = cond[c] * obj            for foreground c,
//   P(bg) = cond[bg] * obj + 1 - obj.
inline ClassPosterior fuse_scores(const ObjectnessScore& obj, const ClassConditional& cond) {
  const double o = obj.value();
  std::vector<double> fused(cond.probs().size());
  fused[0] = cond.background() * o + (1.0 - o);
  for (std::size_t c = 1; c < fused.size(); ++c) {
    fused[c] = cond.probs()[c] * o;
  }
  return ClassPosterior(std::move(fused));
}

// Scalar objective value with partial derivatives w.r.t. the two stage
// probabilities. A term a kernel treats as constant reports derivative 0.
struct LossGrad {
  double value = 0.0;
  double d_objectness = 0.0;
  double d_cond = 0.0;
};

// Log-likelihood of a positive proposal: log cond_class + log objectness.
inline LossGrad positive_log_likelihood(double objectness, double cond_class) {
  const double o = clamp_probability(objectness);
  const double c = clamp_probability(cond_class);
  return LossGrad{std::log(c) + std::log(o), 1.0 / o, 1.0 / c};
}

// Exact background log-likelihood of the two-stage mixture:
// log(cond_bg * objectness + 1 - objectness).
inline LossGrad bg_log_likelihood_exact(double objectness, double cond_bg) {
  const double o = clamp_probability(objectness);
  const double c = clamp_probability(cond_bg);
  const double mix = c * o + 1.0 - o;
  return LossGrad{std::log(mix), (c - 1.0) / mix, o / mix};
}

// First lower bound on the background log-likelihood:
// objectness * log(cond_bg). The objectness factor is a constant weight, so
// the gradient flows only to cond_bg.
inline LossGrad bg_lower_bound_first(double objectness, double cond_bg) {
  const double o = clamp_probability(objectness);
  const double c = clamp_probability(cond_bg);
  return LossGrad{o * std::log(c), 0.0, o / c};
}

// Second lower bound on the background log-likelihood: log(1 - objectness).
inline LossGrad bg_lower_bound_second(double objectness) {
  const double o = clamp_probability(objectness);
  return LossGrad{std::log(1.0 - o), -1.0 / (1.0 - o), 0.0};
}

// One proposal's contribution to the detection objective. For positives,
// positive_class selects the foreground entry of cond; negatives ignore it.
struct DetectionSample {
  double objectness = 0.0;
  ClassConditional cond;
  bool is_positive = false;
  int positive_class = 0;
};

// Per-sample partial derivatives of the batch loss. d_cond is taken w.r.t.
// cond[positive_class] for positives and cond[background] for negatives.
struct SampleGrad {
  double d_objectness = 0.0;
  double d_cond = 0.0;
};

struct DetectionLoss {
  double value = 0.0;
  std::vector<SampleGrad> grads;
};

// Mean negative objective over a batch: positives contribute the factorized
// log-likelihood, negatives the sum of the two background lower bounds.
// Minimizing this loss maximizes the underlying objectives.
inline DetectionLoss detection_loss(const std::vector<DetectionSample>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("detection_loss: empty sample list");
  }
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  DetectionLoss out;
  out.grads.reserve(samples.size());
  double total = 0.0;
  for (const DetectionSample& s : samples) {
    LossGrad term;
    if (s.is_positive) {
      if (s.positive_class < 1 || s.positive_class > s.cond.class_count()) {
        throw std::invalid_argument("detection_loss: positive_class " +
                                    std::to_string(s.positive_class) + " out of range");
      }
      term = positive_log_likelihood(s.objectness, s.cond[s.positive_class]);
    } else {
      const LossGrad first = bg_lower_bound_first(s.objectness, s.cond.background());
      const LossGrad second = bg_lower_bound_second(s.objectness);
      term = LossGrad{first.value + second.value, first.d_objectness + second.d_objectness,
                      first.d_cond + second.d_cond};
    }
    total += term.value;
    out.grads.push_back(SampleGrad{-inv_n * term.d_objectness, -inv_n * term.d_cond});
  }
  out.value = -total * inv_n;
  return out;
}

// Fixed-size square mask of probabilities (predictions) or {0,1} values
// (ground truth).
class MaskGrid {
 public:
  static constexpr int kExtent = 14;

  MaskGrid() : grid_(kExtent, kExtent, 0.0) {}

  explicit MaskGrid(RealGrid grid) : grid_(std::move(grid)) {
    if (grid_.height() != kExtent || grid_.width() != kExtent) {
      throw std::invalid_argument("MaskGrid: expected " + std::to_string(kExtent) + "x" +
                                  std::to_string(kExtent) + ", got " +
                                  std::to_string(grid_.height()) + "x" +
                                  std::to_string(grid_.width()));
    }
    for (double v : grid_.cells()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("MaskGrid: entry " + std::to_string(v) + " outside [0,1]");
      }
    }
  }

  double operator()(int r, int c) const { return grid_(r, c); }
  const RealGrid& grid() const { return grid_; }

  friend bool operator==(const MaskGrid&, const MaskGrid&) = default;

 private:
  RealGrid grid_;
};

struct MaskLoss {
  double value = 0.0;
  RealGrid grad;
};

// Smoothed soft IoU loss over equally shaped grids:
//   1 - (sum(p*g) + eps) / (sum(p) + sum(g) - sum(p*g) + eps).
// gt must be binary. The gradient is w.r.t. every entry of pred.
inline MaskLoss soft_iou_loss(const RealGrid& pred, const RealGrid& gt) {
  if (!pred.same_shape(gt)) {
    throw std::invalid_argument("soft_iou_loss: pred is " + std::to_string(pred.height()) + "x" +
                                std::to_string(pred.width()) + " but gt is " +
                                std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  double inter = 0.0;
  double pred_sum = 0.0;
  double gt_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred.cells()[i];
    const double g = gt.cells()[i];
    if (g != 0.0 && g != 1.0) {
      throw std::invalid_argument("soft_iou_loss: gt entry " + std::to_string(g) +
                                  " is not binary");
    }
    inter += p * g;
    pred_sum += p;
    gt_sum += g;
  }
  const double num = inter + kMaskLossSmoothing;
  const double den = pred_sum + gt_sum - inter + kMaskLossSmoothing;
  MaskLoss out;
  out.value = 1.0 - num / den;
  out.grad = RealGrid(pred.height(), pred.width(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = gt.cells()[i];
    out.grad.cells()[i] = -(g * den - num * (1.0 - g)) / (den * den);
  }
  return out;
}

inline MaskLoss mask_iou_loss(const MaskGrid& pred, const MaskGrid& gt) {
  return soft_iou_loss(pred.grid(), gt.grid());
}

// Warmup-then-step learning-rate schedule.
struct ScheduleConfig {
  double base_lr = 0.02;
  int warmup_iters = 2000;
  int total_iters = 15000;
  std::vector<int> drop_points{12500, 14000};
  double drop_factor = 10.0;
};

// Linear warmup from 0 to base_lr over warmup_iters, then base_lr divided by
// drop_factor at each drop point (right-continuous at every breakpoint).
inline double lr_schedule(int iter, const ScheduleConfig& cfg = {}) {
  int prev = cfg.warmup_iters;
  for (int drop : cfg.drop_points) {
    if (drop <= prev || drop >= cfg.total_iters) {
      throw std::invalid_argument("lr_schedule: drop points must lie strictly between warmup and "
                                  "total iterations, in increasing order");
    }
    prev = drop;
  }
  if (iter < 0 || iter > cfg.total_iters) {
    throw std::invalid_argument("lr_schedule: iteration " + std::to_string(iter) +
                                " outside [0, " + std::to_string(cfg.total_iters) + "]");
  }
  if (iter < cfg.warmup_iters) {
    return cfg.base_lr * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
  }
  double lr = cfg.base_lr;
  for (int drop : cfg.drop_points) {
    if (iter >= drop) lr /= cfg.drop_factor;
  }
  return lr;
}

}  // namespace nucleval
