#include "somgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "somgan/core.hpp"
#include "somgan/error.hpp"

namespace somgan::eval {

Decision decide(double score, double tau, const std::function<std::size_t()>& class_fn) {
  if (score >= tau) return Decision::reject();
  return Decision::accept(class_fn());
}

Decision decide(double score, double tau, std::size_t inlier_class) {
  return score >= tau ? Decision::reject() : Decision::accept(inlier_class);
}

Decision majority_vote(std::span<const Decision> votes, std::size_t classes) {
  if (votes.empty()) fail(ErrorKind::Precondition, "majority vote needs at least one vote");
  std::size_t outlier = 0;
  std::vector<std::size_t> count(classes, 0);
  for (const auto& v : votes) {
    if (v.outlier) {
      ++outlier;
    } else {
      require_dims(v.class_index < classes, "majority vote: class index out of range");
      ++count[v.class_index];
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < classes; ++k)
    if (count[k] > count[best]) best = k;
  if (classes > 0 && count[best] >= outlier && count[best] > 0) return Decision::accept(best);
  return Decision::reject();
}

double trapezoid_auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].false_alarm - points[i - 1].false_alarm) *
            (points[i].detection + points[i - 1].detection) * 0.5;
  return area;
}

RocCurve roc(std::span<const double> inlier_scores, std::span<const double> outlier_scores) {
  if (inlier_scores.empty() || outlier_scores.empty())
    fail(ErrorKind::Precondition, "roc needs non-empty inlier and outlier score sets");
  std::vector<double> in(inlier_scores.begin(), inlier_scores.end());
  std::vector<double> out(outlier_scores.begin(), outlier_scores.end());
  std::sort(in.begin(), in.end(), std::greater<>());
  std::sort(out.begin(), out.end(), std::greater<>());
  std::vector<double> thresholds;
  thresholds.reserve(in.size() + out.size());
  std::merge(in.begin(), in.end(), out.begin(), out.end(), std::back_inserter(thresholds), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double n_in = static_cast<double>(in.size());
  const double n_out = static_cast<double>(out.size());
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t i_in = 0;
  std::size_t i_out = 0;
  for (double tau : thresholds) {
    while (i_in < in.size() && in[i_in] >= tau) ++i_in;
    while (i_out < out.size() && out[i_out] >= tau) ++i_out;
    curve.points.push_back({static_cast<double>(i_in) / n_in, static_cast<double>(i_out) / n_out, tau});
  }
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

Reliability reliability(std::span<const Decision> decisions, std::span<const std::size_t> true_classes) {
  require_dims(decisions.size() == true_classes.size(), "reliability: one true class per decision");
  Reliability r;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i].outlier) continue;
    ++r.available;
    if (decisions[i].class_index == true_classes[i]) ++r.correct;
  }
  r.accuracy = r.available ? static_cast<double>(r.correct) / static_cast<double>(r.available) : 0.0;
  return r;
}

ReliabilityCurve reliability_curve(const RocCurve& curve, std::span<const double> inlier_scores,
                                   std::span<const std::size_t> predicted,
                                   std::span<const std::size_t> true_classes) {
  const std::size_t n = inlier_scores.size();
  require_dims(predicted.size() == n && true_classes.size() == n,
               "reliability curve: scores, predictions and truths must align");
  if (n == 0) fail(ErrorKind::Precondition, "reliability curve needs test inliers");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Ascending score: inliers pass while score < tau.
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return inlier_scores[a] < inlier_scores[b]; });
  std::vector<std::size_t> correct_prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    correct_prefix[i + 1] = correct_prefix[i] + (predicted[order[i]] == true_classes[order[i]] ? 1 : 0);

  ReliabilityCurve out;
  out.points.reserve(curve.points.size());
  for (const auto& p : curve.points) {
    const auto it = std::lower_bound(order.begin(), order.end(), p.threshold,
                                     [&](std::size_t i, double t) { return inlier_scores[i] < t; });
    const auto available = static_cast<std::size_t>(it - order.begin());
    ReliabilityPoint r;
    r.false_alarm = p.false_alarm;
    r.threshold = p.threshold;
    r.available = available;
    r.correct = correct_prefix[available];
    r.accuracy = available ? static_cast<double>(r.correct) / static_cast<double>(available) : 0.0;
    out.points.push_back(r);
  }
  return out;
}

double top_classification_rate(const ReliabilityCurve& curve, double max_false_alarm) {
  double best = 0.0;
  for (const auto& p : curve.points)
    if (p.false_alarm <= max_false_alarm) best = std::max(best, p.accuracy);
  return best;
}

double threshold_for_outlier_rejection(std::span<const double> outlier_scores, double q) {
  if (outlier_scores.empty()) fail(ErrorKind::Precondition, "threshold selection needs outlier scores");
  if (!(q > 0.0 && q <= 1.0)) fail(ErrorKind::Precondition, "rejection fraction q must lie in (0, 1]");
  std::vector<double> s(outlier_scores.begin(), outlier_scores.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  const double n = static_cast<double>(s.size());
  std::size_t count = 1;
  while (static_cast<double>(count) / n < q) ++count;
  return s[count - 1];
}

double rejection_rate(std::span<const double> scores, double tau) {
  if (scores.empty()) return 0.0;
  const auto hits = std::count_if(scores.begin(), scores.end(), [tau](double s) { return s >= tau; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double student_t_quantile(double p, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

MeanCi mean_ci(std::span<const double> values, double confidence) {
  if (values.size() < 2) fail(ErrorKind::Precondition, "confidence intervals need at least 2 trials");
  if (!(confidence > 0.0 && confidence < 1.0)) fail(ErrorKind::Config, "confidence must lie in (0, 1)");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  MeanCi out;
  out.mean = mean;
  out.half_width = sd == 0.0 ? 0.0 : student_t_quantile(0.5 + confidence / 2.0, n - 1.0) * sd / std::sqrt(n);
  out.lo = mean - out.half_width;
  out.hi = mean + out.half_width;
  return out;
}

double clamp_unit(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

namespace {
template <class Points, class Get>
double step_value(const Points& points, double x, Get get) {
  double v = 0.0;
  for (const auto& p : points) {
    if (p.false_alarm > x) break;
    v = get(p);
  }
  return v;
}
}  // namespace

double step_detection(const RocCurve& curve, double x) {
  return step_value(curve.points, x, [](const RocPoint& p) { return p.detection; });
}

double step_accuracy(const ReliabilityCurve& curve, double x) {
  return step_value(curve.points, x, [](const ReliabilityPoint& p) { return p.accuracy; });
}

std::vector<double> default_grid(std::size_t n) {
  if (n < 2) fail(ErrorKind::Config, "false-alarm grid needs at least 2 points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

TrialSummary summarize_trials(std::span<const TrialCurves> trials, std::span<const double> grid,
                              double confidence, double top_rate_max_false_alarm) {
  if (trials.size() < 2) fail(ErrorKind::Precondition, "summarizing trials needs at least 2 trials");
  TrialSummary s;
  s.trials = trials.size();
  s.grid.assign(grid.begin(), grid.end());
  std::vector<double> column(trials.size());
  for (double x : grid) {
    for (std::size_t t = 0; t < trials.size(); ++t) column[t] = step_detection(trials[t].roc, x);
    s.detection.push_back(mean_ci(column, confidence));
    for (std::size_t t = 0; t < trials.size(); ++t) column[t] = step_accuracy(trials[t].reliability, x);
    s.accuracy.push_back(mean_ci(column, confidence));
  }
  for (const auto& t : trials) {
    s.auc_values.push_back(t.roc.auc);
    s.top_rate_values.push_back(top_classification_rate(t.reliability, top_rate_max_false_alarm));
  }
  s.auc = mean_ci(s.auc_values, confidence);
  s.top_rate = mean_ci(s.top_rate_values, confidence);
  return s;
}

std::string format_roc_csv(const RocCurve& curve) {
  std::ostringstream os;
  os << "fa_rate,detection_rate,threshold\n";
  for (const auto& p : curve.points)
    os << format_double(p.false_alarm) << ',' << format_double(p.detection) << ','
       << (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) << '\n';
  return os.str();
}

std::string format_reliability_csv(const ReliabilityCurve& curve) {
  std::ostringstream os;
  os << "fa_rate,threshold,n_available,n_correct,acc\n";
  for (const auto& p : curve.points)
    os << format_double(p.false_alarm) << ','
       << (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) << ','
       << p.available << ',' << p.correct << ',' << format_double(p.accuracy) << '\n';
  return os.str();
}

std::string format_reliability_summary_csv(const TrialSummary& summary) {
  std::ostringstream os;
  os << "fa_rate,acc_mean,acc_lo,acc_hi\n";
  for (std::size_t i = 0; i < summary.grid.size(); ++i)
    os << format_double(summary.grid[i]) << ',' << format_double(summary.accuracy[i].mean) << ','
       << format_double(summary.accuracy[i].lo) << ',' << format_double(summary.accuracy[i].hi) << '\n';
  return os.str();
}

std::string format_roc_summary_csv(const TrialSummary& summary) {
  std::ostringstream os;
  os << "fa_rate,det_mean,det_lo,det_hi\n";
  for (std::size_t i = 0; i < summary.grid.size(); ++i)
    os << format_double(summary.grid[i]) << ',' << format_double(summary.detection[i].mean) << ','
       << format_double(summary.detection[i].lo) << ',' << format_double(summary.detection[i].hi) << '\n';
  return os.str();
}

}  // namespace somgan::eval
