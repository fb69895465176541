#pragma once

// Two-stage reject-then-classify evaluation: ROC over outlier scores,
// reliability among inliers that survive rejection, threshold selection and
// cross-trial averaging with t-based confidence intervals.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace somgan::eval {

/// A sample is flagged Outlier when its score is >= tau.
struct Decision {
  bool outlier = true;
  std::size_t class_index = 0;

  static Decision reject() noexcept { return {true, 0}; }
  static Decision accept(std::size_t k) noexcept { return {false, k}; }
  bool operator==(const Decision&) const = default;
};

/// `class_fn` is only called for samples judged Inlier.
Decision decide(double score, double tau, const std::function<std::size_t()>& class_fn);
Decision decide(double score, double tau, std::size_t inlier_class);

/// Most common verdict with Outlier as its own category. On a tie the
/// lowest tied class index wins over Outlier and higher classes. Throws
/// Error(Precondition) on an empty vote.
Decision majority_vote(std::span<const Decision> votes, std::size_t classes);

struct RocPoint {
  double false_alarm = 0.0;
  double detection = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Sweeps every distinct score as a threshold. Throws Error(Precondition)
/// when either set is empty.
RocCurve roc(std::span<const double> inlier_scores, std::span<const double> outlier_scores);

/// Area under a polyline by the trapezoid rule.
double trapezoid_auc(std::span<const RocPoint> points);

struct Reliability {
  std::size_t available = 0;  // N_a
  std::size_t correct = 0;    // N_c
  double accuracy = 0.0;
};

/// Accuracy among inliers decided Inlier; 0 when none pass.
Reliability reliability(std::span<const Decision> decisions, std::span<const std::size_t> true_classes);

struct ReliabilityPoint {
  double false_alarm = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  std::size_t available = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct ReliabilityCurve {
  std::vector<ReliabilityPoint> points;
};

/// One operating point per threshold of `curve`, evaluated on the test inliers.
ReliabilityCurve reliability_curve(const RocCurve& curve, std::span<const double> inlier_scores,
                                   std::span<const std::size_t> predicted,
                                   std::span<const std::size_t> true_classes);

/// Highest accuracy over operating points with false alarm <= max_false_alarm.
double top_classification_rate(const ReliabilityCurve& curve, double max_false_alarm = 0.05);

/// Largest observed score tau whose rejected fraction (score >= tau) is
/// still >= q. Throws Error(Precondition) on empty scores or q outside (0,1].
double threshold_for_outlier_rejection(std::span<const double> outlier_scores, double q);

/// Fraction of scores >= tau.
double rejection_rate(std::span<const double> scores, double tau);

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double half_width = 0.0;
};

/// mean +- t_{(1+confidence)/2, n-1} s / sqrt(n). Throws Error(Precondition)
/// for fewer than two values.
MeanCi mean_ci(std::span<const double> values, double confidence = 0.95);

/// Two-sided Student-t quantile t_{p, dof}.
double student_t_quantile(double p, double dof);

double clamp_unit(double v) noexcept;

/// Right-continuous step value of the curve at false-alarm x: the last point
/// whose false alarm is <= x.
double step_detection(const RocCurve& curve, double x);
double step_accuracy(const ReliabilityCurve& curve, double x);

struct TrialCurves {
  RocCurve roc;
  ReliabilityCurve reliability;
};

struct TrialSummary {
  std::vector<double> grid;
  std::vector<MeanCi> detection;
  std::vector<MeanCi> accuracy;
  std::vector<double> auc_values;
  std::vector<double> top_rate_values;
  MeanCi auc;
  MeanCi top_rate;
  std::size_t trials = 0;
};

/// Uniform false-alarm grid 0, 1/(n-1), ..., 1.
std::vector<double> default_grid(std::size_t n = 101);

/// Vertical averaging onto `grid`. Throws Error(Precondition) for < 2 trials.
TrialSummary summarize_trials(std::span<const TrialCurves> trials, std::span<const double> grid,
                              double confidence = 0.95, double top_rate_max_false_alarm = 0.05);

/// `fa_rate,detection_rate,threshold`
std::string format_roc_csv(const RocCurve& curve);
/// `fa_rate,acc_mean,acc_lo,acc_hi` with raw (unclamped) bounds.
std::string format_reliability_summary_csv(const TrialSummary& summary);
/// `fa_rate,det_mean,det_lo,det_hi`
std::string format_roc_summary_csv(const TrialSummary& summary);
/// `fa_rate,threshold,n_available,n_correct,acc`
std::string format_reliability_csv(const ReliabilityCurve& curve);

}  // namespace somgan::eval
