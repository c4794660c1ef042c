#include "eegd3/downstream.hpp"

#include "eegd3/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace eegd3::downstream {

MetricReport metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw LengthMismatch("metrics: length mismatch");
  if (labels.empty()) throw Error("metrics: empty input");

  std::set<int> classes(labels.begin(), labels.end());
  classes.insert(predictions.begin(), predictions.end());

  long correct = 0;
  std::map<int, long> tp, fp, fn, support;
  for (size_t i = 0; i < labels.size(); ++i) {
    ++support[labels[i]];
    if (predictions[i] == labels[i]) { ++correct; ++tp[labels[i]]; }
    else { ++fp[predictions[i]]; ++fn[labels[i]]; }
  }

  MetricReport r;
  r.accuracy = static_cast<double>(correct) / labels.size();

  double recall_sum = 0.0;
  long label_classes = 0;
  double f1_sum = 0.0;
  long f1_classes = 0;
  for (int c : classes) {
    const long t = tp[c], p = fp[c], n = fn[c];
    if (support.count(c) && support[c] > 0) {
      recall_sum += static_cast<double>(t) / support[c];
      ++label_classes;
    }
    if (t + p + n > 0) { // classes absent from both sides are skipped
      f1_sum += 2.0 * t / static_cast<double>(2 * t + p + n);
      ++f1_classes;
    }
  }
  r.uar = label_classes ? recall_sum / label_classes : 0.0;
  r.macro_f1 = f1_classes ? f1_sum / f1_classes : 0.0;
  return r;
}

namespace {

std::vector<long> batch_order(long n, long steps, long batch, Rng& rng) {
  std::vector<long> order(steps * batch);
  for (long i = 0; i < steps * batch; ++i) order[i] = uniform_index(rng, n);
  return order;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

int MotorProbe::predict(const Vector& feat) const {
  Eigen::Index idx;
  logits(feat).maxCoeff(&idx);
  return static_cast<int>(idx);
}

MotorProbe train_motor_probe(const Matrix& features, const std::vector<int>& labels,
                             const ProbeConfig& cfg) {
  if (features.cols() != 2) throw ShapeMismatch("motor probe expects 2 components");
  const long n = features.rows();
  Rng rng = make_rng(cfg.seed, 0x40B);
  MotorProbe probe;
  probe.w = Matrix::Zero(2, 2);
  for (long r = 0; r < 2; ++r)
    for (long c = 0; c < 2; ++c) probe.w(r, c) = gaussian(rng, 0.0, 0.1);
  probe.b = Vector::Zero(2);

  Matrix mw = Matrix::Zero(2, 2), vw = Matrix::Zero(2, 2);
  Vector mb = Vector::Zero(2), vb = Vector::Zero(2);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  const long steps = cfg.epochs * std::max<long>(1, n / cfg.batch_size);
  const auto order = batch_order(n, steps, cfg.batch_size, rng);
  long t = 0;
  for (long s = 0; s < steps; ++s) {
    Matrix gw = Matrix::Zero(2, 2);
    Vector gb = Vector::Zero(2);
    for (int i = 0; i < cfg.batch_size; ++i) {
      const long idx = order[s * cfg.batch_size + i];
      const Vector x = features.row(idx).transpose();
      const Vector a = probe.logits(x);
      Vector dp(2);
      for (int j = 0; j < 2; ++j) {
        const double p = sigmoid(a[j]);
        const double y = labels[idx] == j ? 1.0 : 0.0;
        dp[j] = (p - y) / (2.0 * cfg.batch_size); // BCE on each output
      }
      gw += dp * x.transpose();
      gb += dp;
    }
    ++t;
    const double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
    for (long r = 0; r < 2; ++r) {
      for (long c = 0; c < 2; ++c) {
        mw(r, c) = b1 * mw(r, c) + (1 - b1) * gw(r, c);
        vw(r, c) = b2 * vw(r, c) + (1 - b2) * gw(r, c) * gw(r, c);
        probe.w(r, c) -= cfg.learning_rate * cfg.weight_decay * probe.w(r, c);
        probe.w(r, c) -= cfg.learning_rate * (mw(r, c) / bc1) / (std::sqrt(vw(r, c) / bc2) + eps);
      }
      mb[r] = b1 * mb[r] + (1 - b1) * gb[r];
      vb[r] = b2 * vb[r] + (1 - b2) * gb[r] * gb[r];
      probe.b[r] -= cfg.learning_rate * (mb[r] / bc1) / (std::sqrt(vb[r] / bc2) + eps);
    }
  }
  return probe;
}

Matrix SleepProbe::normalized_weights() const {
  Matrix out = w;
  if (l1_normalize_rows) {
    for (long r = 0; r < w.rows(); ++r) {
      const double s = w.row(r).cwiseAbs().sum();
      if (s > 1e-8) out.row(r) /= s;
    }
  } else {
    for (long c = 0; c < w.cols(); ++c) {
      const double s = w.col(c).cwiseAbs().sum();
      if (s > 1e-8) out.col(c) /= s;
    }
  }
  return out;
}

Vector SleepProbe::logits(const Vector& feat) const {
  Vector xhat(feat.size());
  for (long k = 0; k < feat.size(); ++k)
    xhat[k] = (feat[k] - run_mean[k]) / std::sqrt(run_var[k] + 1e-5);
  const Vector h = xhat.cwiseProduct(norm_gamma) + norm_beta;
  return normalized_weights() * h + b;
}

int SleepProbe::predict(const Vector& feat) const {
  Eigen::Index idx;
  logits(feat).maxCoeff(&idx);
  return static_cast<int>(idx);
}

SleepProbe train_sleep_probe(const Matrix& features, const std::vector<int>& labels,
                             const ProbeConfig& cfg) {
  const long K = features.cols();
  const long n = features.rows();
  const int Y = cfg.n_classes;
  Rng rng = make_rng(cfg.seed, 0x51E);

  SleepProbe probe;
  probe.l1_normalize_rows = cfg.l1_normalize_rows;
  probe.norm_gamma = Vector::Ones(K);
  probe.norm_beta = Vector::Zero(K);
  probe.run_mean = Vector::Zero(K);
  probe.run_var = Vector::Ones(K);
  probe.w = Matrix::Zero(Y, K);
  for (long r = 0; r < Y; ++r)
    for (long c = 0; c < K; ++c) probe.w(r, c) = gaussian(rng, 0.0, 0.1);
  probe.b = Vector::Zero(Y);

  // AdamW state, one slot per tensor.
  Matrix mw = Matrix::Zero(Y, K), vw = Matrix::Zero(Y, K);
  Vector mb = Vector::Zero(Y), vb = Vector::Zero(Y);
  Vector mg = Vector::Zero(K), vg = Vector::Zero(K);
  Vector mbeta = Vector::Zero(K), vbeta = Vector::Zero(K);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, momentum = 0.1;

  const auto order = batch_order(n, cfg.steps, cfg.batch_size, rng);
  for (long s = 0; s < cfg.steps; ++s) {
    const int B = cfg.batch_size;
    Matrix x(B, K);
    std::vector<int> y(B);
    for (int i = 0; i < B; ++i) {
      const long idx = order[s * B + i];
      x.row(i) = features.row(idx);
      y[i] = labels[idx];
    }

    // Batch statistics of the probe's own inputs.
    const Vector mean = x.colwise().mean().transpose();
    Vector var(K);
    for (long k = 0; k < K; ++k)
      var[k] = (x.col(k).array() - mean[k]).square().sum() / B;
    probe.run_mean = (1 - momentum) * probe.run_mean + momentum * mean;
    probe.run_var = (1 - momentum) * probe.run_var + momentum * var;
    Vector istd(K);
    for (long k = 0; k < K; ++k) istd[k] = 1.0 / std::sqrt(var[k] + 1e-5);

    Matrix xhat(B, K), h(B, K);
    for (int i = 0; i < B; ++i)
      for (long k = 0; k < K; ++k) {
        xhat(i, k) = (x(i, k) - mean[k]) * istd[k];
        h(i, k) = xhat(i, k) * probe.norm_gamma[k] + probe.norm_beta[k];
      }

    const Matrix wn = probe.normalized_weights();
    Matrix dlogits(B, Y);
    for (int i = 0; i < B; ++i) {
      Vector logit = wn * h.row(i).transpose() + probe.b;
      const double mx = logit.maxCoeff();
      Vector ex = (logit.array() - mx).exp();
      Vector softmax = ex / ex.sum();
      softmax[y[i]] -= 1.0;
      dlogits.row(i) = softmax.transpose() / B;
    }

    // dL/d(normalized weights), then through the L1 normalization.
    Matrix dwn = dlogits.transpose() * h;
    Vector db = dlogits.colwise().sum().transpose();
    Matrix dw = Matrix::Zero(Y, K);
    if (probe.l1_normalize_rows) {
      for (long r = 0; r < Y; ++r) {
        const double sN = probe.w.row(r).cwiseAbs().sum();
        if (sN <= 1e-8) { dw.row(r) = dwn.row(r); continue; }
        const double dot = dwn.row(r).dot(probe.w.row(r));
        for (long c = 0; c < K; ++c) {
          const double sign = probe.w(r, c) >= 0 ? 1.0 : -1.0;
          dw(r, c) = dwn(r, c) / sN - sign * dot / (sN * sN);
        }
      }
    } else {
      for (long c = 0; c < K; ++c) {
        const double sN = probe.w.col(c).cwiseAbs().sum();
        if (sN <= 1e-8) { dw.col(c) = dwn.col(c); continue; }
        const double dot = dwn.col(c).dot(probe.w.col(c));
        for (long r = 0; r < Y; ++r) {
          const double sign = probe.w(r, c) >= 0 ? 1.0 : -1.0;
          dw(r, c) = dwn(r, c) / sN - sign * dot / (sN * sN);
        }
      }
    }

    const Matrix dh = dlogits * wn; // B x K
    Vector dgamma = Vector::Zero(K), dbeta = Vector::Zero(K);
    for (long k = 0; k < K; ++k) {
      for (int i = 0; i < B; ++i) {
        dgamma[k] += dh(i, k) * xhat(i, k);
        dbeta[k] += dh(i, k);
      }
    }

    const long t = s + 1;
    const double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
    auto adamw = [&](double& value, double& m, double& v, double g, bool decay) {
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      if (decay) value -= cfg.learning_rate * cfg.weight_decay * value;
      value -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + eps);
    };
    for (long r = 0; r < Y; ++r)
      for (long c = 0; c < K; ++c) adamw(probe.w(r, c), mw(r, c), vw(r, c), dw(r, c), true);
    for (long r = 0; r < Y; ++r) adamw(probe.b[r], mb[r], vb[r], db[r], false);
    for (long k = 0; k < K; ++k) {
      adamw(probe.norm_gamma[k], mg[k], vg[k], dgamma[k], false);
      adamw(probe.norm_beta[k], mbeta[k], vbeta[k], dbeta[k], false);
    }
  }
  return probe;
}

namespace {

// Sample `budget` indices per class from the training pool; minority classes
// are drawn with replacement once their pool is exhausted.
std::vector<long> sample_budget(const std::vector<long>& pool, const std::vector<int>& labels,
                                int n_classes, long budget, Rng& rng) {
  std::vector<std::vector<long>> by_class(n_classes);
  for (long idx : pool) by_class[labels[idx]].push_back(idx);
  long max_pool = 0;
  for (const auto& v : by_class) max_pool = std::max<long>(max_pool, v.size());
  if (budget > max_pool) throw BudgetExceedsPool("budget exceeds the largest class pool");

  std::vector<long> out;
  for (int c = 0; c < n_classes; ++c) {
    auto cls = by_class[c];
    if (cls.empty()) continue;
    std::shuffle(cls.begin(), cls.end(), rng);
    for (long i = 0; i < budget; ++i)
      out.push_back(i < static_cast<long>(cls.size()) ? cls[i]
                                                      : cls[uniform_index(rng, cls.size())]);
  }
  return out;
}

} // namespace

std::vector<FewshotRow> fewshot_curve(const LabeledLatents& pool,
                                      const training::FoldSplit& split,
                                      const std::vector<long>& budgets,
                                      const ProbeConfig& cfg) {
  std::vector<FewshotRow> rows;
  for (long budget : budgets) {
    if (budget < 1) throw BudgetExceedsPool("budget must be >= 1");
    std::vector<MetricReport> fold_reports;
    for (int fold = 0; fold < split.folds; ++fold) {
      const auto train_subjects = split.subjects_not_in(fold);
      std::vector<long> train_pool;
      std::vector<long> eval_pool;
      for (long i = 0; i < pool.features.rows(); ++i) {
        if (train_subjects.count(pool.subjects[i])) train_pool.push_back(i);
        else eval_pool.push_back(i);
      }
      Rng rng = make_rng(cfg.seed, 0xFE57 + fold * 1000 + static_cast<std::uint64_t>(budget));
      const auto sel = sample_budget(train_pool, pool.labels, cfg.n_classes, budget, rng);

      Matrix feats(static_cast<long>(sel.size()), pool.features.cols());
      std::vector<int> labels(sel.size());
      for (size_t i = 0; i < sel.size(); ++i) {
        feats.row(static_cast<long>(i)) = pool.features.row(sel[i]);
        labels[i] = pool.labels[sel[i]];
      }
      ProbeConfig fold_cfg = cfg;
      fold_cfg.seed = mix_seed(cfg.seed, 0x9000 + fold);
      const SleepProbe probe = train_sleep_probe(feats, labels, fold_cfg);

      std::vector<int> preds, truth;
      for (long i : eval_pool) {
        preds.push_back(probe.predict(pool.features.row(i).transpose()));
        truth.push_back(pool.labels[i]);
      }
      fold_reports.push_back(metrics(preds, truth));
    }

    FewshotRow row;
    row.budget = budget;
    auto agg = [&](auto get) {
      double mean = 0.0;
      for (const auto& r : fold_reports) mean += get(r);
      mean /= fold_reports.size();
      double var = 0.0;
      for (const auto& r : fold_reports) var += (get(r) - mean) * (get(r) - mean);
      return std::pair<double, double>(mean, std::sqrt(var / fold_reports.size()));
    };
    std::tie(row.mean.accuracy, row.stddev.accuracy) =
        agg([](const MetricReport& r) { return r.accuracy; });
    std::tie(row.mean.uar, row.stddev.uar) = agg([](const MetricReport& r) { return r.uar; });
    std::tie(row.mean.macro_f1, row.stddev.macro_f1) =
        agg([](const MetricReport& r) { return r.macro_f1; });
    rows.push_back(row);
  }
  return rows;
}

Vector latent_for_window(model::Model& m, const store::TrialData& trial, double fs,
                         const training::TrainConfig& prep, double start_seconds) {
  const long tw = m.cfg.window_samples;
  const long start = std::lround(start_seconds * fs);
  if (start < 0 || start + tw > trial.samples.cols())
    throw TrialTooShort("window outside the trial");
  const Matrix raw = trial.samples.block(0, start, trial.samples.rows(), tw).cast<double>();
  return m.forward_one(training::preprocess_window(raw, fs, prep));
}

} // namespace eegd3::downstream
