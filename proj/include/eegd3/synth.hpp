#pragma once

#include "eegd3/model.hpp"
#include "eegd3/store.hpp"
#include "eegd3/training.hpp"

#include <map>
#include <string>
#include <vector>

namespace eegd3::synth {

// Piecewise-smooth envelope over normalized trial time u in [0,1].
struct EnvelopeSpec {
  enum class Kind { Constant, Dip, Bump };
  Kind kind = Kind::Constant;
  double lo_frac = 0.0, hi_frac = 1.0; // active region
  double floor = 0.0;                  // level outside (Bump) / inside (Dip)
  double ramp_frac = 0.04;

  double value(double u) const;
};

struct SourceSpec {
  std::string name;
  Vector pattern;     // length E, unit norm
  double band_lo = 8.0, band_hi = 30.0;
  EnvelopeSpec envelope;
  double amplitude = 1.0;
};

struct SynthDatasetSpec {
  std::string id;
  int subjects = 8;
  int trials_per_subject = 40;
  double trial_seconds = 6.0;
  std::vector<SourceSpec> sources;
  int control_trials_per_subject = 0; // trailing trials get the control schedule
  std::vector<SourceSpec> control_sources;
};

struct SynthConfig {
  double fs = 160.0;
  int electrodes = 16;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::vector<SynthDatasetSpec> datasets;
};

struct SynthOutput {
  store::Collection collection;
  // truth[dataset] is per-trial [n_sources x T] envelopes, collection order.
  std::map<std::string, std::vector<Matrix>> truth;
  std::vector<std::string> source_names;
  // sleep scenes: per-dataset epoch -> hidden state
  std::map<std::string, std::map<long, int>> stage_labels;
};

SynthOutput generate(const SynthConfig& cfg);

// The default 2-dataset motor-like scene: blink, ERP, ERD, ERS sources with
// dataset-specific timing plus control trials.
SynthConfig default_motor_scene(std::uint64_t seed);

struct SleepSceneConfig {
  int recordings = 10;
  double fs = 128.0;
  double epoch_seconds = 2.0;
  int epochs_per_recording = 128;
  int electrodes = 16;
  int states = 5;
  double snr_db = 0.0;
  double off_state_level = 0.15;
  std::uint64_t seed = 0;
};

// Hidden-state schedule per recording; one dataset (and sequence mapping)
// per recording, stage labels per epoch.
SynthOutput generate_sleep_scene(const SleepSceneConfig& cfg);

void write_synth_store(const SynthOutput& out, const std::string& dir);
SynthOutput read_synth_store(const std::string& dir);

struct DisentanglementScore {
  std::vector<std::string> sources;
  std::vector<int> matched_component; // per source
  Vector matched_abs_r;               // per source
  double mean_abs_r = 0.0;
  Matrix score; // [C x S] mean |r| table
};

// Timecourses on the given subjects' trials, Hungarian-matched to the true
// source envelopes by mean absolute Pearson correlation.
DisentanglementScore score_disentanglement(model::Model& m, const SynthOutput& data,
                                           const std::set<std::string>& eval_subjects,
                                           const training::TrainConfig& prep,
                                           long stride_samples);

// Eye-blink reconstruction probe: two conv layers undoing a bandpass filter.
struct BlinkProbeConfig {
  int hidden = 8;
  int kernel = 161; // padding (kernel-1)/2
  long steps = 1000;
  int batch_size = 32;
  double learning_rate = 3e-4;
  double weight_decay = 1e-3;
  double fs = 160.0;
  double segment_seconds = 3.0;
  double input_lo = 8.0, input_hi = 40.0;
  double target_lo = 0.5, target_hi = 45.0;
  std::uint64_t seed = 0;
};

struct BlinkProbe {
  Matrix w1; // hidden x kernel
  Vector b1;
  Matrix w2; // hidden x kernel (summed into one output)
  double b2 = 0.0;
  double leaky_slope = 0.01;

  Vector reconstruct(const Vector& x) const;
};

struct BlinkData {
  std::vector<Vector> train_inputs, train_targets;      // filtered / wideband
  std::vector<Vector> test_inputs, test_targets;
  std::vector<std::vector<long>> test_blink_samples;    // blink centres per segment
};

// Single-channel blink-contaminated signals; held-out instances never share a
// generator stream with training ones.
BlinkData generate_blink_data(const BlinkProbeConfig& cfg, int train_segments,
                              int test_segments, std::uint64_t seed);

BlinkProbe train_blink_probe(const BlinkData& data, const BlinkProbeConfig& cfg);

// Mean Pearson r between reconstruction and wideband target in +/-0.5 s
// around blink events on the held-out segments.
double blink_probe_eval(const BlinkProbe& probe, const BlinkData& data, double fs);

} // namespace eegd3::synth
