#include "eegd3/interpret.hpp"

#include "eegd3/dsp.hpp"
#include "eegd3/fftutil.hpp"
#include "eegd3/hungarian.hpp"
#include "eegd3/stats.hpp"

#include <cmath>
#include <numbers>

namespace eegd3::interpret {

LatentTimecourse timecourse(model::Model& m, const store::TrialData& trial, double fs,
                            const training::TrainConfig& prep, long stride_samples) {
  const long tw = m.cfg.window_samples;
  const long lo = trial.valid_start;
  const long hi = trial.valid_end - tw;
  if (hi < lo) throw TrialTooShort("trial shorter than the model window");

  std::vector<long> starts;
  for (long s = lo; s <= hi; s += stride_samples) starts.push_back(s);

  LatentTimecourse tc;
  tc.values.resize(m.cfg.components, static_cast<long>(starts.size()));
  tc.centers.resize(static_cast<long>(starts.size()));
  for (size_t i = 0; i < starts.size(); ++i) {
    const Matrix raw = trial.samples.block(0, starts[i], trial.samples.rows(), tw).cast<double>();
    const Matrix win = training::preprocess_window(raw, fs, prep);
    tc.values.col(static_cast<long>(i)) = m.forward_one(win);
    tc.centers[static_cast<long>(i)] = (starts[i] + tw / 2.0) / fs;
  }
  return tc;
}

double ccc(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw LengthMismatch("ccc: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = x.mean(), my = y.mean();
  const Vector cx = x.array() - mx, cy = y.array() - my;
  const double vx = cx.squaredNorm() / n, vy = cy.squaredNorm() / n;
  if (vx == 0.0 && vy == 0.0) return 0.0;
  const double cov = cx.dot(cy) / n;
  return 2.0 * cov / (vx + vy + (mx - my) * (mx - my));
}

double timecourse_consistency(const std::vector<Vector>& series) {
  const size_t n = series.size();
  if (n < 2) throw TooFewTrials("timecourse consistency needs at least 2 trials");
  double sum = 0.0;
  for (size_t i = 1; i < n; ++i)
    for (size_t k = 0; k < i; ++k) sum += ccc(series[i], series[k]);
  return sum / (static_cast<double>(n) * (n - 1) / 2.0);
}

Vector electrode_significance(const Matrix& fold_values, double reference_mean) {
  const long folds = fold_values.rows();
  if (folds < 2) throw TooFewTrials("need at least 2 folds for the t-test");
  const double df = static_cast<double>(folds - 1);
  Vector p(fold_values.cols());
  for (long e = 0; e < fold_values.cols(); ++e) {
    const Vector v = fold_values.col(e);
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / df); // sample std
    if (sd == 0.0) {
      p[e] = mean == reference_mean ? 0.5 : (mean > reference_mean ? 0.0 : 1.0);
      continue;
    }
    const double t = (mean - reference_mean) / (sd / std::sqrt(static_cast<double>(folds)));
    p[e] = stats::t_sf(t, df);
  }
  return p;
}

Vector phase_surrogate(const Vector& x, Rng& rng) {
  const long n = x.size();
  CVector X = fft_forward(x);
  // DC (and Nyquist for even n) keep their original real values.
  for (long k = 1; k < (n + 1) / 2; ++k) {
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double mag = std::abs(X[k]);
    X[k] = std::polar(mag, phi);
    X[n - k] = std::conj(X[k]);
  }
  return fft_inverse_real(X);
}

SurrogateResult surrogate_correlation(const Vector& component, const Vector& indicator,
                                      int n_surrogates, Rng& rng) {
  if (component.size() != indicator.size())
    throw LengthMismatch("surrogate_correlation: length mismatch");
  SurrogateResult res;
  res.r = stats::pearson(component, indicator);
  long exceed = 0;
  for (int s = 0; s < n_surrogates; ++s) {
    const Vector surr = phase_surrogate(component, rng);
    if (std::abs(stats::pearson(surr, indicator)) >= std::abs(res.r)) ++exceed;
  }
  res.p = static_cast<double>(exceed + 1) / static_cast<double>(n_surrogates + 1);
  return res;
}

std::vector<std::vector<int>> match_components(const std::vector<Matrix>& mean_timecourses,
                                               int reference_fold) {
  if (mean_timecourses.size() < 2)
    throw TooFewTrials("component matching needs at least 2 folds");
  const Matrix& ref = mean_timecourses[reference_fold];
  const long C = ref.rows();
  std::vector<std::vector<int>> perms;
  for (const Matrix& fold : mean_timecourses) {
    Matrix score(C, C);
    for (long c = 0; c < C; ++c)
      for (long r = 0; r < C; ++r)
        score(c, r) = stats::pearson(fold.row(c).transpose(), ref.row(r).transpose());
    perms.push_back(hungarian_max(score));
  }
  return perms;
}

} // namespace eegd3::interpret
