// Acceptance report: one PASS/FAIL line per criterion, exit status 1 when
// any criterion fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "somgan/config.hpp"
#include "somgan/eval.hpp"
#include "somgan/gradcheck.hpp"
#include "somgan/membership.hpp"
#include "somgan/pipeline.hpp"
#include "somgan/som.hpp"
#include "somgan/synth.hpp"

using namespace somgan;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, RandomStream& rng, double lo, double hi) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

// ---------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  const auto results = run_gradient_suite(20240601);
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  double worst_layer = 0.0, worst_comp = 0.0;
  std::string failed;
  for (const auto& r : results) {
    ok &= r.passed();
    if (!r.passed()) failed += " " + r.name;
    (r.tolerance == kLayerTolerance ? worst_layer : worst_comp) =
        std::max(r.tolerance == kLayerTolerance ? worst_layer : worst_comp, r.max_error);
  }
  report(1, "gradient suite", ok,
         fmt("%zu checks, worst layer %.2e (tol 1e-4), worst composite %.2e (tol 1e-3), %.2fs%s", results.size(),
             worst_layer, worst_comp, secs, failed.empty() ? "" : (" failed:" + failed).c_str()));
}

// ---------------------------------------------------------------------------

double oracle_mahalanobis(std::span<const double> x, std::span<const double> w, const Matrix& cov, double ridge) {
  const auto b = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd s(b, b);
  Eigen::VectorXd d(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    d(i) = x[i] - w[i];
    for (Eigen::Index j = 0; j < b; ++j) s(i, j) = cov(i, j) + (i == j ? ridge : 0.0);
  }
  return std::sqrt(d.dot(s.inverse() * d));
}

double oracle_angle(std::span<const double> x, std::span<const double> y) {
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  return std::acos(std::clamp(xy / std::sqrt(xx * yy), -1.0, 1.0));
}

struct RandomMap {
  SomGrid grid;
  NodeStats stats;
};

RandomMap random_map(RandomStream& rng) {
  const std::size_t rows = 1 + rng.index(4), cols = 1 + rng.index(4), bands = 2 + rng.index(8);
  SomGrid grid(rows, cols, random_matrix(rows * cols, bands, rng, 0.05, 1.0));
  std::vector<Matrix> cov;
  std::vector<std::size_t> counts;
  for (std::size_t j = 0; j < grid.node_count(); ++j) {
    const Matrix a = random_matrix(bands, bands, rng, -0.3, 0.3);
    Matrix s(bands, bands);
    for (std::size_t i = 0; i < bands; ++i)
      for (std::size_t k = 0; k < bands; ++k)
        for (std::size_t m = 0; m < bands; ++m) s(i, k) += a(i, m) * a(k, m);
    cov.push_back(std::move(s));
    counts.push_back(1 + rng.index(50));
  }
  const double ridge = rng.uniform(1e-4, 1e-2);
  return {grid, node_stats_from_covariances(std::move(cov), std::move(counts), ridge)};
}

void criterion_oracles() {
  const auto t0 = Clock::now();
  RandomStream rng(777);

  std::size_t maha_n = 0;
  double maha_worst = 0.0;
  for (int t = 0; t < 150; ++t) {
    const auto m = random_map(rng);
    for (std::size_t j = 0; j < m.grid.node_count(); ++j) {
      const auto x = random_matrix(1, m.grid.band_count(), rng, 0.0, 1.2);
      const double got = mahalanobis(x.row(0), m.grid, m.stats, j);
      const double want = oracle_mahalanobis(x.row(0), m.grid.weight(j), m.stats.covariance[j], m.stats.ridge);
      maha_worst = std::max(maha_worst, std::abs(got - want) / std::max(want, 1e-300));
      ++maha_n;
    }
  }

  std::size_t auc_n = 0;
  double auc_worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t ni = 1 + rng.index(60), no = 1 + rng.index(60);
    std::vector<double> in(ni), out(no);
    const double shift = rng.uniform(-0.5, 0.5);
    const double quant = t % 2 ? 10.0 : 1e6;  // half the instances carry many ties
    for (double& v : in) v = std::round(rng.uniform() * quant) / quant;
    for (double& v : out) v = std::round((rng.uniform() + shift) * quant) / quant;
    double pairs = 0.0;
    for (double a : out)
      for (double b : in) pairs += a > b ? 1.0 : a == b ? 0.5 : 0.0;
    const double want = pairs / static_cast<double>(ni * no);
    auc_worst = std::max(auc_worst, std::abs(eval::roc(in, out).auc - want));
    ++auc_n;
  }

  std::size_t bmu_n = 0, bmu_mismatch = 0;
  for (int t = 0; t < 150; ++t) {
    const auto m = random_map(rng);
    const auto x = random_matrix(1, m.grid.band_count(), rng, 0.05, 1.2);
    std::size_t best_e = 0, best_d = 0;
    double de = INFINITY, dd = INFINITY;
    for (std::size_t j = 0; j < m.grid.node_count(); ++j) {
      const auto w = m.grid.weight(j);
      double e = 0.0;
      for (std::size_t b = 0; b < w.size(); ++b) e += (x(0, b) - w[b]) * (x(0, b) - w[b]);
      if (e < de) de = e, best_e = j;
      const double d = oracle_mahalanobis(x.row(0), w, m.stats.covariance[j], m.stats.ridge) +
                       kDefaultAngleWeight * oracle_angle(x.row(0), w);
      if (d < dd) dd = d, best_d = j;
    }
    bmu_mismatch += bmu(m.grid, m.stats, x.row(0), BmuMetric::Euclidean) != best_e;
    bmu_mismatch += bmu(m.grid, m.stats, x.row(0), BmuMetric::DStar) != best_d;
    ++bmu_n;
  }
  const double secs = seconds_since(t0);
  const bool ok = maha_n >= 100 && auc_n >= 100 && bmu_n >= 100 && maha_worst < 1e-8 && auc_worst < 1e-10 &&
                  bmu_mismatch == 0 && secs < 30.0;
  report(2, "distance and AUC oracles", ok,
         fmt("mahalanobis %zu cases worst rel %.1e (tol 1e-8); auc %zu cases worst %.1e (tol 1e-10); "
             "bmu %zu cases x2 metrics, %zu mismatches; %.2fs",
             maha_n, maha_worst, auc_n, auc_worst, bmu_n, bmu_mismatch, secs));
}

// ---------------------------------------------------------------------------

void criterion_identities() {
  std::vector<std::string> failed;
  auto expect = [&](bool c, const char* what) {
    if (!c) failed.push_back(what);
  };

  // Membership units.
  for (double a : {0.0, 0.5, 2.0, 40.0}) expect(membership(1.7, a, 1.7) == 0.5, "membership(beta) = 0.5");
  expect(membership(1e6, 2.0, 0.0) == 0.0, "membership saturates to 0");
  expect(membership(-1e6, 2.0, 0.0) == 1.0, "membership saturates to 1");
  for (double d : {-3.0, 0.0, 9.0}) expect(membership(d, 0.0, 1.0) == 0.5, "alpha = 0 gives 0.5");

  // Neighbourhood targets.
  const SomGrid g3(3, 3, Matrix(9, 2, 1.0));
  expect(target_vector(g3, 0) == std::vector<double>{1, 0.5, 0, 0.5, 0.25, 0, 0, 0, 0}, "corner BMU target pattern");
  expect(target_vector(g3, 4) == std::vector<double>{0.25, 0.5, 0.25, 0.5, 1, 0.5, 0.25, 0.5, 0.25},
         "center BMU target pattern");
  expect(target_vector(SomGrid(1, 1, Matrix(1, 2, 1.0)), 0) == std::vector<double>{1.0}, "1x1 grid target");

  // D* and its parts.
  expect(kDefaultAngleWeight == 40.0 && RunConfig{}.som.angle_weight == 40.0, "D* angle weight 40");
  {
    const SomGrid g(1, 2, Matrix::from_rows({{3.0, 1.0}, {0.5, 2.0}}));
    const NodeStats s = node_stats_from_covariances({Matrix(2, 2), Matrix(2, 2)}, {0, 0}, 1.0);
    const std::vector<double> x{6.0, 5.0};
    expect(mahalanobis(x, g, s, 0) == 5.0, "Mahalanobis reduces to Euclidean (3,4) -> 5");
    expect(dstar(g.weight(1), g, s, 1) == 0.0, "D*(w_j, j) = 0");
    expect(std::abs(dstar(x, g, s, 1) - (mahalanobis(x, g, s, 1) + 40.0 * spectral_angle(x, g.weight(1)))) < 1e-12,
           "D* = Mahalanobis + 40 angle");
    expect(dstar_features(g, s, g.weight(0))[0] == 0.0, "feature entry of own node is 0");
    const std::vector<double> e0{1.0, 0.0}, e1{0.0, 1.0}, y{0.3, 0.7}, y2{0.6, 1.4};
    expect(spectral_angle(y, y) == 0.0, "angle(x, x) = 0");
    expect(spectral_angle(y, y2) == 0.0, "angle(x, 2x) = 0");
    expect(std::abs(spectral_angle(e0, e1) - std::numbers::pi / 2) < 1e-15, "orthogonal angle pi/2");
  }

  // Reliability and decision rule.
  {
    using eval::Decision;
    const std::vector<std::size_t> truth{0, 1, 1, 0, 1};
    const std::vector<Decision> none(5, Decision::reject());
    const auto r0 = eval::reliability(none, truth);
    expect(r0.available == 0 && r0.accuracy == 0.0, "N_a = 0 gives acc 0");
    std::vector<Decision> all;
    for (auto t : truth) all.push_back(Decision::accept(t));
    expect(eval::reliability(all, truth).accuracy == 1.0, "all pass and correct gives 1");
    const std::vector<Decision> three{Decision::accept(0), Decision::accept(1), Decision::accept(0), Decision::reject(),
                                      Decision::reject()};
    const auto r3 = eval::reliability(three, truth);
    expect(r3.available == 3 && r3.correct == 2 && r3.accuracy == 2.0 / 3.0, "3 pass, 2 correct gives 2/3");
    expect(eval::decide(0.0, 0.0, 1) == Decision::reject(), "tau = 0 rejects everything");
    expect(eval::decide(1.0, 1.0 + 1e-9, 1) == Decision::accept(1), "tau > 1 accepts everything");
    expect(eval::decide(0.4, 0.4, 1) == Decision::reject(), "score = tau is Outlier");
  }

  std::string detail = failed.empty() ? "all identities hold" : "failed:";
  for (const auto& f : failed) detail += " [" + f + "]";
  report(3, "unit identities", failed.empty(), detail);
}

// ---------------------------------------------------------------------------

void criterion_far_outliers(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  const auto scene = cfg.scene();
  const auto split = synth::make_split(scene, cfg.synth.counts, trial_seed(cfg.seed, 0));
  const auto fit = fit_som_pipeline(som_fit_rows(split, cfg.som.fit_set), cfg.som,
                                    derive_seed(trial_seed(cfg.seed, 0), "som"));
  const auto& p = fit.pipeline;

  // Far outliers built three ways: inlier spectra under 8-20x illumination,
  // flat bright spectra, and random positive spectra well above the
  // inliers' reflectance range.
  RandomStream rng(31337);
  std::vector<std::vector<double>> samples;
  for (const auto* m : scene.inliers()) {
    const Matrix base = synth::draw_material(scene, m->name, 100, derive_seed(cfg.seed, "far-" + m->name));
    for (std::size_t i = 0; i < base.rows(); ++i) {
      const double u = rng.uniform(8.0, 20.0);
      std::vector<double> x(base.cols());
      for (std::size_t b = 0; b < x.size(); ++b) x[b] = u * base(i, b);
      samples.push_back(std::move(x));
    }
  }
  for (int i = 0; i < 100; ++i) samples.emplace_back(scene.bands, rng.uniform(5.0, 20.0));
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(scene.bands);
    for (double& v : x) v = rng.uniform(3.0, 15.0);
    samples.push_back(std::move(x));
  }

  // Qualifying samples sit beyond every node's sigmoid: D*_j > beta_j + 5 / alpha_j.
  double worst = 0.0, worst_all = 0.0;
  std::size_t far = 0;
  for (const auto& x : samples) {
    const auto d = dstar_features(p.grid, p.stats, x, p.angle_weight);
    bool beyond = true;
    for (std::size_t j = 0; j < d.size(); ++j)
      beyond &= p.sigmoids.alpha[j] > 0.0 && d[j] > p.sigmoids.beta[j] + 5.0 / p.sigmoids.alpha[j];
    const auto f = p.features(x);
    const double m = *std::max_element(f.begin(), f.end());
    worst_all = std::max(worst_all, m);
    if (!beyond) continue;
    ++far;
    worst = std::max(worst, m);
  }
  report(4, "far-outlier uniformity", far >= 100 && worst < 0.05,
         fmt("%zu of %zu constructed outliers satisfy D* > beta + 5/alpha at all %zu nodes; their max membership "
             "%.3e (limit 0.05); max over all constructed %.3e; %.1fs",
             far, samples.size(), p.feature_count(), worst, worst_all, seconds_since(t0)));
}

// ---------------------------------------------------------------------------

struct Experiment {
  ExperimentResult result;
  std::string summary;
  std::optional<SsganModel> semi_som_trial0;
  double seconds = 0.0;
};

Experiment run_full(const RunConfig& cfg) {
  Experiment e;
  const auto t0 = Clock::now();
  e.result = run_experiment(cfg, [&](const TrialArtifacts& t) {
    if (t.index == 0) e.semi_som_trial0 = t.models.at(ModelType::SemiSpectraSom).model;
  });
  e.seconds = seconds_since(t0);
  e.summary = summary_json(cfg, e.result.summaries);
  return e;
}

void criterion_ordering(const Experiment& e) {
  const auto& s = e.result.summaries;
  const double sup = s.at(ModelType::SupSpectra).auc.mean;
  const double sup_som = s.at(ModelType::SupSpectraSom).auc.mean;
  const double semi = s.at(ModelType::SemiSpectra).auc.mean;
  const double semi_som = s.at(ModelType::SemiSpectraSom).auc.mean;
  const bool ok = sup_som >= sup + 0.15 && semi_som >= sup + 0.15 && semi_som >= 0.90;
  report(5, "AUC ordering", ok,
         fmt("%zu trials; mean AUC sup-spectra %.4f, sup-spectra-som %.4f (need >= %.4f), semi-spectra %.4f, "
             "semi-spectra-som %.4f (need >= %.4f and >= 0.90); experiment %.0fs (target < 1200s)",
             s.at(ModelType::SupSpectra).trials, sup, sup_som, sup + 0.15, semi, semi_som, sup + 0.15, e.seconds));
}

void criterion_semi_benefit(const Experiment& e) {
  const auto& s = e.result.summaries;
  const double sup_som = s.at(ModelType::SupSpectraSom).top_rate.mean;
  const double semi_som = s.at(ModelType::SemiSpectraSom).top_rate.mean;
  report(6, "semi-supervision non-inferiority", semi_som >= sup_som - 0.01,
         fmt("mean top classification rate (FA <= 0.05) semi-spectra-som %.4f vs sup-spectra-som %.4f (need >= %.4f)",
             semi_som, sup_som, sup_som - 0.01));
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void criterion_determinism(const RunConfig& cfg, const Experiment& first) {
  const auto again = run_full(cfg);
  std::size_t compared = 0, differing = 0;
  for (const auto& [type, s] : first.result.summaries) {
    const auto& t = again.result.summaries.at(type);
    auto cmp = [&](const eval::MeanCi& a, const eval::MeanCi& b) {
      for (auto [x, y] : {std::pair{a.mean, b.mean}, {a.lo, b.lo}, {a.hi, b.hi}, {a.half_width, b.half_width}}) {
        ++compared;
        differing += !same_bits(x, y);
      }
    };
    cmp(s.auc, t.auc);
    cmp(s.top_rate, t.top_rate);
    for (std::size_t g = 0; g < s.grid.size(); ++g) {
      cmp(s.detection[g], t.detection[g]);
      cmp(s.accuracy[g], t.accuracy[g]);
    }
    for (std::size_t i = 0; i < s.auc_values.size(); ++i) {
      compared += 2;
      differing += !same_bits(s.auc_values[i], t.auc_values[i]);
      differing += !same_bits(s.top_rate_values[i], t.top_rate_values[i]);
    }
  }
  const bool ok = differing == 0 && first.summary == again.summary;
  report(7, "determinism", ok,
         fmt("rerun with the same master seed: %zu summary numbers compared, %zu differ; summary JSON %s", compared,
             differing, first.summary == again.summary ? "identical" : "differs"));
}

void criterion_rejection(const RunConfig& cfg, const Experiment& e) {
  const auto scene = cfg.scene();
  const SsganModel& model = *e.semi_som_trial0;
  const double q = cfg.eval.rejection_q;
  const std::size_t per_family = 250;
  auto outlier_mixture = [&](std::uint64_t seed) {
    Matrix all;
    for (const auto* m : scene.outliers()) {
      const Matrix x = synth::draw_material(scene, m->name, per_family, derive_seed(seed, m->name));
      all = all.rows() ? vconcat(all, x) : x;
    }
    return all;
  };
  std::vector<double> rates;
  for (std::uint64_t d = 0; d < 20; ++d) {
    const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, "rejection"), d);
    const double tau =
        eval::threshold_for_outlier_rejection(outlier_scores(model.logits(outlier_mixture(derive_seed(seed, "calibration")))), q);
    rates.push_back(eval::rejection_rate(outlier_scores(model.logits(outlier_mixture(derive_seed(seed, "held-out")))), tau));
  }
  double mean = 0.0;
  for (double r : rates) mean += r / static_cast<double>(rates.size());
  const double lo = *std::min_element(rates.begin(), rates.end());
  std::size_t below = 0;
  for (double r : rates) below += r < q;
  report(8, "outlier rejection threshold", mean >= q,
         fmt("semi-spectra-som, q = %.2f, 20 draws of %zu calibration / %zu held-out outliers: mean held-out "
             "rejection %.4f, min %.4f, %zu draws below q",
             q, per_family * scene.outliers().size(), per_family * scene.outliers().size(), mean, lo, below));
}

}  // namespace

int main() {
  RunConfig cfg;
  cfg.seed = 1;
  cfg.trials = 10;
  cfg.jobs = 1;
  cfg.validate();

  criterion_gradients();
  criterion_oracles();
  criterion_identities();
  criterion_far_outliers(cfg);
  const auto experiment = run_full(cfg);
  criterion_ordering(experiment);
  criterion_semi_benefit(experiment);
  criterion_determinism(cfg, experiment);
  criterion_rejection(cfg, experiment);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures ? 1 : 0;
}
