#pragma once

#include "eegd3/model.hpp"
#include "eegd3/training.hpp"

#include <string>
#include <vector>

namespace eegd3::downstream {

struct MetricReport {
  double accuracy = 0.0;
  double uar = 0.0;      // unweighted average recall == balanced accuracy
  double macro_f1 = 0.0;
};

MetricReport metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

struct ProbeConfig {
  int n_classes = 2;
  int epochs = 100;         // motor probe schedule
  long steps = 2000;        // sleep probe schedule, independent of pool size
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  bool l1_normalize_rows = false; // ablation: row instead of column reading
};

// Binary probe on two selected frozen components: linear 2->2 with biases.
struct MotorProbe {
  Matrix w; // 2 x 2
  Vector b; // 2
  Vector logits(const Vector& feat) const { return w * feat + b; }
  int predict(const Vector& feat) const;
  long parameter_count() const { return w.size() + b.size(); }
};

MotorProbe train_motor_probe(const Matrix& features, const std::vector<int>& labels,
                             const ProbeConfig& cfg);

// Affine feature normalization plus an L1-normalized linear layer.
struct SleepProbe {
  Vector norm_gamma, norm_beta; // trainable affine (2K params)
  Vector run_mean, run_var;     // statistics carried for eval
  Matrix w;                     // n_classes x K
  Vector b;                     // n_classes
  bool l1_normalize_rows = false;

  Matrix normalized_weights() const;
  Vector logits(const Vector& feat) const; // eval mode (running stats)
  int predict(const Vector& feat) const;
  long parameter_count() const { return norm_gamma.size() + norm_beta.size() + w.size() + b.size(); }
};

SleepProbe train_sleep_probe(const Matrix& features, const std::vector<int>& labels,
                             const ProbeConfig& cfg);

// Frozen-feature pool for the few-shot harness.
struct LabeledLatents {
  Matrix features; // N x K
  std::vector<int> labels;
  std::vector<std::string> subjects;
};

struct FewshotRow {
  long budget = 0;
  MetricReport mean;
  MetricReport stddev;
};

std::vector<FewshotRow> fewshot_curve(const LabeledLatents& pool,
                                      const training::FoldSplit& split,
                                      const std::vector<long>& budgets,
                                      const ProbeConfig& cfg);

// Latent vector of one window of a frozen extractor.
Vector latent_for_window(model::Model& m, const store::TrialData& trial, double fs,
                         const training::TrainConfig& prep, double start_seconds);

} // namespace eegd3::downstream
