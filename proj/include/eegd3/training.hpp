#pragma once

#include "eegd3/model.hpp"
#include "eegd3/store.hpp"

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace eegd3::training {

struct FoldSplit {
  int folds = 5;
  std::map<std::string, int> fold_of;

  std::set<std::string> subjects_in(int fold) const;
  std::set<std::string> subjects_not_in(int fold) const;
};

FoldSplit split_folds(const std::vector<std::string>& subjects, int k, std::uint64_t seed);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double window_seconds = 1.5;
  int bins = 16; // Y
  std::uint64_t seed = 0;
  double bandpass_lo = 8.0;
  double bandpass_hi = 40.0;
  int bandpass_order = 3;
  bool filter_trial_level = false; // default: filter the extracted window
  double smoothing = 0.1;
  double gamma = 0.5;              // MGU interpolation
  double mapping_init_sigma = 0.1;
  long epoch_draws = 0;            // 0: one draw per stored trial
};

// Equal-width bins over the trial's valid span; label taken at the window
// centre, clamped into [0, Y) at the right edge.
int assign_bin(long valid_start, long valid_end, double fs, double window_center_seconds,
               int bins);

struct Draw {
  int dataset = 0;
  long trial = 0; // index within the dataset
  WindowSample window;
  int bin = 0;
};

// Deterministic per-epoch draw sequence: datasets uniformly, trials by their
// draw weight within the dataset.
std::vector<Draw> make_epoch_stream(const store::Collection& c, const TrainConfig& cfg,
                                    Rng& rng);

// Window-level preprocessing applied before the model: bandpass then
// per-electrode standardization followed by CAR.
Matrix preprocess_window(const Matrix& window, double fs, const TrainConfig& cfg);

// Decoupled-weight-decay adaptive moments over a fixed set of parameter views.
class AdamW {
 public:
  AdamW(std::vector<model::ParamRef> refs, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();

 private:
  std::vector<model::ParamRef> refs_;
  std::vector<Vector> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
};

// Restrict a collection to a subject set (used for fold splits).
store::Collection filter_subjects(const store::Collection& c,
                                  const std::set<std::string>& keep);

model::Checkpoint pretrain(const store::Collection& train_set,
                           const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                           std::function<void(int, double, double)> on_epoch = nullptr);

// Sleep-style schedule: bins over the (clipped) whole-recording duration.
struct SleepBinSchedule {
  double bin_seconds = 0.0;
  int bins = 32;
  double duration_seconds = 0.0;
};
SleepBinSchedule sleep_bin_setup(double recording_seconds, int bins = 32,
                                 double max_hours = 8.0);

} // namespace eegd3::training
