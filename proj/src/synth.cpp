#include "eegd3/synth.hpp"

#include "eegd3/dsp.hpp"
#include "eegd3/fftutil.hpp"
#include "eegd3/hungarian.hpp"
#include "eegd3/interpret.hpp"
#include "eegd3/stats.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace eegd3::synth {

namespace {

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Band-limited unit-RMS gaussian noise: white noise with out-of-band FFT bins
// zeroed, so stop-band leakage is exactly zero.
Vector band_noise(long n, double fs, double lo, double hi, Rng& rng) {
  Vector w(n);
  for (long i = 0; i < n; ++i) w[i] = gaussian(rng);
  CVector W = fft_forward(w);
  for (long k = 0; k < n; ++k) {
    const double f = bin_abs_freq(k, n, fs);
    if (f < lo || f > hi) W[k] = 0.0;
  }
  Vector x = fft_inverse_real(W);
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(n));
  if (rms > 0) x /= rms;
  return x;
}

// 1/f amplitude spectrum below a 1 Hz knee, random phases, unit RMS.
Vector pink_noise(long n, double fs, Rng& rng) {
  CVector X = CVector::Zero(n);
  for (long k = 1; k <= n / 2; ++k) {
    const double f = bin_abs_freq(k, n, fs);
    const double amp = 1.0 / std::sqrt(std::max(f, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * M_PI);
    X[k] = std::polar(amp, phi);
    if (k != n - k) X[n - k] = std::conj(X[k]);
  }
  if (n % 2 == 0) X[n / 2] = std::complex<double>(X[n / 2].real(), 0.0);
  Vector x = fft_inverse_real(X);
  const double rms = std::sqrt(x.squaredNorm() / static_cast<double>(n));
  if (rms > 0) x /= rms;
  return x;
}

Vector envelope_series(const EnvelopeSpec& env, long n) {
  Vector e(n);
  for (long t = 0; t < n; ++t) e[t] = env.value((t + 0.5) / static_cast<double>(n));
  return e;
}

Matrix render_trial(const std::vector<SourceSpec>& sources, long n, double fs, int electrodes,
                    double snr_db, Rng& rng, Matrix* truth_out) {
  Matrix clean = Matrix::Zero(electrodes, n);
  if (truth_out) truth_out->resize(static_cast<long>(sources.size()), n);
  for (size_t s = 0; s < sources.size(); ++s) {
    const SourceSpec& sp = sources[s];
    const Vector env = envelope_series(sp.envelope, n);
    const Vector carrier = band_noise(n, fs, sp.band_lo, sp.band_hi, rng);
    const Vector sig = sp.amplitude * (carrier.array() * env.array()).matrix();
    clean += sp.pattern * sig.transpose();
    if (truth_out) truth_out->row(static_cast<long>(s)) = env.transpose();
  }
  const double p_signal = clean.squaredNorm() / static_cast<double>(clean.size());
  const double p_noise = p_signal * std::pow(10.0, -snr_db / 10.0);
  const double noise_rms = std::sqrt(p_noise);
  Matrix out = clean;
  for (int e = 0; e < electrodes; ++e)
    out.row(e) += noise_rms * pink_noise(n, fs, rng).transpose();
  return out;
}

Vector gauss_pattern(int electrodes, double center, double width) {
  Vector p(electrodes);
  for (int e = 0; e < electrodes; ++e)
    p[e] = std::exp(-std::pow((e - center) / width, 2.0));
  return p / p.norm();
}

std::vector<std::string> electrode_names(int n) {
  std::vector<std::string> names;
  for (int e = 0; e < n; ++e) names.push_back("S" + std::to_string(e));
  return names;
}

} // namespace

double EnvelopeSpec::value(double u) const {
  if (kind == Kind::Constant) return 1.0;
  const double r = std::max(ramp_frac, 1e-9);
  const double w = smoothstep((u - lo_frac) / r) * smoothstep((hi_frac - u) / r);
  return kind == Kind::Dip ? 1.0 - (1.0 - floor) * w : floor + (1.0 - floor) * w;
}

SynthOutput generate(const SynthConfig& cfg) {
  SynthOutput out;
  out.collection.provenance = "synthetic";
  for (size_t d = 0; d < cfg.datasets.size(); ++d) {
    const SynthDatasetSpec& ds = cfg.datasets[d];
    if (ds.sources.empty()) throw ConfigError("synthetic dataset has no sources");
    store::StoredDataset sd;
    sd.dataset_id = ds.id;
    sd.fs = cfg.fs;
    sd.trial_seconds = ds.trial_seconds;
    sd.electrodes = electrode_names(cfg.electrodes);
    sd.unitless = true;
    const long n = static_cast<long>(std::lround(ds.trial_seconds * cfg.fs));
    std::vector<Matrix>& truth = out.truth[ds.id];
    for (int s = 0; s < ds.subjects; ++s) {
      char sid[32];
      std::snprintf(sid, sizeof sid, "%s_s%02d", ds.id.c_str(), s);
      for (int t = 0; t < ds.trials_per_subject; ++t) {
        const bool control = t >= ds.trials_per_subject - ds.control_trials_per_subject;
        const std::vector<SourceSpec>& sources =
            control && !ds.control_sources.empty() ? ds.control_sources : ds.sources;
        Rng rng = make_rng(cfg.seed, mix_seed(d * 1000003ull + s, 0x5EED0000ull + t));
        Matrix env;
        const Matrix x = render_trial(sources, n, cfg.fs, cfg.electrodes, cfg.snr_db, rng, &env);
        store::TrialData td;
        td.subject_id = sid;
        td.samples = x.cast<float>();
        td.valid_start = 0;
        td.valid_end = n;
        td.label = control ? 0 : 1;
        td.condition = control ? "control" : "action";
        sd.trials.push_back(std::move(td));
        truth.push_back(env);
      }
    }
    out.collection.datasets.push_back(std::move(sd));
  }
  if (!cfg.datasets.empty())
    for (const SourceSpec& sp : cfg.datasets.front().sources) out.source_names.push_back(sp.name);
  return out;
}

SynthConfig default_motor_scene(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.fs = 160.0;
  cfg.electrodes = 16;
  cfg.snr_db = 0.0;
  cfg.seed = seed;

  auto make_sources = [&](bool late) {
    // Dataset timing differs so per-dataset sequence mappings have something
    // to absorb while the extractor itself stays shared.
    std::vector<SourceSpec> src(4);
    src[0].name = "blink";
    src[0].pattern = gauss_pattern(16, 1.5, 1.5);
    src[0].band_lo = 1.0; src[0].band_hi = 6.0;
    src[0].amplitude = 1.4;
    src[0].envelope = {EnvelopeSpec::Kind::Bump, late ? 0.86 : 0.76, late ? 0.99 : 0.94, 0.15, 0.04};

    src[1].name = "erp";
    src[1].pattern = gauss_pattern(16, 13.5, 1.8);
    src[1].band_lo = 3.0; src[1].band_hi = 9.0;
    src[1].amplitude = 1.1;
    src[1].envelope = {EnvelopeSpec::Kind::Bump, late ? 0.04 : 0.08, late ? 0.16 : 0.22, 0.05, 0.04};

    src[2].name = "erd";
    src[2].pattern = gauss_pattern(16, 7.0, 1.6);
    src[2].band_lo = 15.0; src[2].band_hi = 30.0;
    src[2].amplitude = 1.0;
    src[2].envelope = {EnvelopeSpec::Kind::Dip, late ? 0.28 : 0.20, late ? 0.70 : 0.58, 0.15, 0.06};

    src[3].name = "ers";
    src[3].pattern = gauss_pattern(16, 10.0, 1.6);
    src[3].band_lo = 15.0; src[3].band_hi = 25.0;
    src[3].amplitude = 1.0;
    src[3].envelope = {EnvelopeSpec::Kind::Bump, late ? 0.72 : 0.60, late ? 0.92 : 0.78, 0.10, 0.05};
    return src;
  };
  auto make_controls = [&](std::vector<SourceSpec> src) {
    // No movement: the beta rhythm stays on (no dip) and no rebound occurs.
    src[2].envelope = {EnvelopeSpec::Kind::Constant, 0, 1, 0, 0.04};
    src[3].envelope = {EnvelopeSpec::Kind::Bump, 0.5, 0.5, 0.10, 0.04};
    return src;
  };

  for (int d = 0; d < 2; ++d) {
    SynthDatasetSpec ds;
    ds.id = d == 0 ? "motor_a" : "motor_b";
    ds.subjects = 8;
    ds.trials_per_subject = 40;
    ds.control_trials_per_subject = 10;
    ds.trial_seconds = 6.0;
    ds.sources = make_sources(d == 1);
    ds.control_sources = make_controls(ds.sources);
    cfg.datasets.push_back(std::move(ds));
  }
  return cfg;
}

SynthOutput generate_sleep_scene(const SleepSceneConfig& cfg) {
  if (cfg.states != 5) throw ConfigError("sleep scene models exactly 5 states");
  SynthOutput out;
  out.collection.provenance = "synthetic-sleep";
  out.source_names = store::kStageNames;

  struct StateBand { double lo, hi, amp, center; };
  const StateBand bands[5] = {
      {18.0, 30.0, 1.0, 1.5},  // W: frontal beta
      {4.0, 8.0, 1.0, 7.5},    // REM: theta
      {8.0, 12.0, 0.8, 13.5},  // N1: posterior alpha, low amplitude
      {12.0, 16.0, 1.0, 4.5},  // N2: sigma
      {1.0, 4.0, 1.6, 10.5},   // N3: high-amplitude delta
  };

  const long epoch_n = static_cast<long>(std::lround(cfg.epoch_seconds * cfg.fs));
  const long n = epoch_n * cfg.epochs_per_recording;

  for (int r = 0; r < cfg.recordings; ++r) {
    char id[32];
    std::snprintf(id, sizeof id, "night_%02d", r);
    Rng rng = make_rng(cfg.seed, 0x51EE9000ull + r);

    // Block-structured hidden-state schedule; every state is forced to appear.
    std::map<long, int>& stages = out.stage_labels[id];
    std::vector<int> per_epoch(cfg.epochs_per_recording);
    {
      // The first five blocks walk a random permutation of the states so every
      // recording is guaranteed to visit all of them; later blocks are free.
      std::vector<int> order = {0, 1, 2, 3, 4};
      std::shuffle(order.begin(), order.end(), rng);
      const long max_first_block =
          std::max<long>(1, std::min<long>(15, cfg.epochs_per_recording / 5 - 5));
      int epoch = 0, visits = 0;
      int state = order[0];
      while (epoch < cfg.epochs_per_recording) {
        const long block = visits < 5 ? 6 + uniform_index(rng, max_first_block)
                                      : 6 + uniform_index(rng, 15);
        for (long b = 0; b < block && epoch < cfg.epochs_per_recording; ++b, ++epoch)
          per_epoch[epoch] = state;
        ++visits;
        if (visits < 5) {
          state = order[visits];
        } else {
          const int next = static_cast<int>(uniform_index(rng, 5));
          state = next == state ? (state + 1) % 5 : next;
        }
      }
      for (int e = 0; e < cfg.epochs_per_recording; ++e) stages[e] = per_epoch[e];
    }

    Matrix truth(5, n);
    Matrix clean = Matrix::Zero(cfg.electrodes, n);
    for (int s = 0; s < 5; ++s) {
      Vector env(n);
      for (long t = 0; t < n; ++t)
        env[t] = per_epoch[t / epoch_n] == s ? 1.0 : cfg.off_state_level;
      const Vector carrier = band_noise(n, cfg.fs, bands[s].lo, bands[s].hi, rng);
      const Vector sig = bands[s].amp * (carrier.array() * env.array()).matrix();
      clean += gauss_pattern(cfg.electrodes, bands[s].center, 1.6) * sig.transpose();
      truth.row(s) = env.transpose();
    }
    const double p_signal = clean.squaredNorm() / static_cast<double>(clean.size());
    const double noise_rms = std::sqrt(p_signal * std::pow(10.0, -cfg.snr_db / 10.0));
    for (int e = 0; e < cfg.electrodes; ++e)
      clean.row(e) += noise_rms * pink_noise(n, cfg.fs, rng).transpose();

    store::StoredDataset sd;
    sd.dataset_id = id;
    sd.fs = cfg.fs;
    sd.trial_seconds = n / cfg.fs;
    sd.electrodes = electrode_names(cfg.electrodes);
    sd.unitless = true;
    store::TrialData td;
    td.subject_id = id;
    td.samples = clean.cast<float>();
    td.valid_start = 0;
    td.valid_end = n;
    sd.trials.push_back(std::move(td));
    out.collection.datasets.push_back(std::move(sd));
    out.truth[id].push_back(std::move(truth));
  }
  return out;
}

void write_synth_store(const SynthOutput& out, const std::string& dir) {
  store::write_store(out.collection, dir);
  fs::create_directories(fs::path(dir) / "truth");
  json meta;
  meta["sources"] = out.source_names;
  std::ofstream(fs::path(dir) / "truth" / "sources.json") << meta.dump(2) << "\n";
  for (const auto& [id, envs] : out.truth) {
    if (envs.empty()) continue;
    const long s = envs.front().rows(), t = envs.front().cols();
    std::vector<float> flat;
    flat.reserve(envs.size() * s * t);
    for (const Matrix& env : envs)
      for (long i = 0; i < s; ++i)
        for (long j = 0; j < t; ++j) flat.push_back(static_cast<float>(env(i, j)));
    store::write_tensor((fs::path(dir) / "truth" / (id + ".f32")).string(),
                        {static_cast<long>(envs.size()), s, t}, flat);
  }
  if (!out.stage_labels.empty()) {
    fs::create_directories(fs::path(dir) / "stages");
    for (const auto& [id, stages] : out.stage_labels)
      store::write_stage_csv((fs::path(dir) / "stages" / (id + ".csv")).string(), stages);
  }
}

SynthOutput read_synth_store(const std::string& dir) {
  SynthOutput out;
  out.collection = store::read_store(dir);
  const fs::path truth_dir = fs::path(dir) / "truth";
  if (fs::exists(truth_dir / "sources.json")) {
    json meta;
    std::ifstream(truth_dir / "sources.json") >> meta;
    out.source_names = meta.at("sources").get<std::vector<std::string>>();
  }
  for (const store::StoredDataset& sd : out.collection.datasets) {
    const fs::path p = truth_dir / (sd.dataset_id + ".f32");
    if (fs::exists(p)) {
      auto [shape, data] = store::read_tensor(p.string());
      if (shape.size() != 3) throw ShapeMismatch("truth tensor must be rank 3");
      const long cnt = shape[0], s = shape[1], t = shape[2];
      for (long i = 0; i < cnt; ++i) {
        Matrix env(s, t);
        for (long a = 0; a < s; ++a)
          for (long b = 0; b < t; ++b) env(a, b) = data[(i * s + a) * t + b];
        out.truth[sd.dataset_id].push_back(std::move(env));
      }
    }
    const fs::path sp = fs::path(dir) / "stages" / (sd.dataset_id + ".csv");
    if (fs::exists(sp)) out.stage_labels[sd.dataset_id] = store::read_stage_csv(sp.string());
  }
  return out;
}

DisentanglementScore score_disentanglement(model::Model& m, const SynthOutput& data,
                                           const std::set<std::string>& eval_subjects,
                                           const training::TrainConfig& prep,
                                           long stride_samples) {
  const long C = m.cfg.components;
  const long S = static_cast<long>(data.source_names.size());
  Matrix sum = Matrix::Zero(C, S);
  Matrix cnt = Matrix::Zero(C, S);
  const long tw = m.cfg.window_samples;

  for (const store::StoredDataset& sd : data.collection.datasets) {
    auto it = data.truth.find(sd.dataset_id);
    if (it == data.truth.end()) throw ConfigError("no truth envelopes for " + sd.dataset_id);
    for (size_t t = 0; t < sd.trials.size(); ++t) {
      const store::TrialData& trial = sd.trials[t];
      if (!eval_subjects.count(trial.subject_id)) continue;
      const interpret::LatentTimecourse tc =
          interpret::timecourse(m, trial, sd.fs, prep, stride_samples);
      const long nwin = tc.values.cols();
      const Matrix& env = it->second[t];
      for (long s = 0; s < S; ++s) {
        Vector env_tc(nwin);
        long start = trial.valid_start;
        for (long w = 0; w < nwin; ++w, start += stride_samples)
          env_tc[w] = env.row(s).segment(start, tw).mean();
        const double mu = env_tc.mean();
        if ((env_tc.array() - mu).abs().maxCoeff() < 1e-9) continue; // flat truth
        for (long c = 0; c < C; ++c) {
          sum(c, s) += std::abs(stats::pearson(tc.values.row(c).transpose(), env_tc));
          cnt(c, s) += 1.0;
        }
      }
    }
  }

  DisentanglementScore res;
  res.sources = data.source_names;
  res.score = Matrix::Zero(C, S);
  for (long c = 0; c < C; ++c)
    for (long s = 0; s < S; ++s) res.score(c, s) = cnt(c, s) > 0 ? sum(c, s) / cnt(c, s) : 0.0;

  // Pad to a square problem; dummy columns score zero.
  const long n = std::max(C, S);
  Matrix padded = Matrix::Zero(n, n);
  padded.block(0, 0, C, S) = res.score;
  const std::vector<int> perm = hungarian_max(padded);
  res.matched_component.assign(S, -1);
  res.matched_abs_r = Vector::Zero(S);
  for (long c = 0; c < C; ++c) {
    const int s = perm[c];
    if (s < S) {
      res.matched_component[s] = static_cast<int>(c);
      res.matched_abs_r[s] = res.score(c, s);
    }
  }
  res.mean_abs_r = S > 0 ? res.matched_abs_r.mean() : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Blink reconstruction probe

namespace {

Vector blink_template(double fs, double sigma_s, long n, double center) {
  Vector g = Vector::Zero(n);
  const double sigma = sigma_s * fs;
  const long lo = std::max<long>(0, static_cast<long>(center - 5 * sigma));
  const long hi = std::min<long>(n - 1, static_cast<long>(center + 5 * sigma));
  for (long t = lo; t <= hi; ++t)
    g[t] = std::exp(-0.5 * std::pow((t - center) / sigma, 2.0));
  return g;
}

void standardize_inplace(Vector& x) {
  const double mu = x.mean();
  const double sd = std::sqrt((x.array() - mu).square().mean()) + 1e-8;
  x = (x.array() - mu) / sd;
}

struct BlinkSegment {
  Vector input, target;
  std::vector<long> blink_samples;
};

BlinkSegment make_segment(const BlinkProbeConfig& cfg, Rng& rng) {
  const long n = static_cast<long>(std::lround(cfg.segment_seconds * cfg.fs));
  Vector raw = pink_noise(n, cfg.fs, rng);
  raw += 0.6 * band_noise(n, cfg.fs, 8.0, 12.0, rng); // ongoing alpha
  BlinkSegment seg;
  const long margin = static_cast<long>(std::lround(0.6 * cfg.fs));
  const int blinks = 1 + static_cast<int>(uniform_index(rng, 3));
  for (int b = 0; b < blinks; ++b) {
    const long c = margin + uniform_index(rng, n - 2 * margin);
    const double amp = 5.0 + 3.0 * uniform(rng);
    raw += amp * blink_template(cfg.fs, 0.025, n, static_cast<double>(c));
    seg.blink_samples.push_back(c);
  }
  const auto in_sos = dsp::butter_bandpass_sos(cfg.input_lo, cfg.input_hi, cfg.fs, 3);
  const auto tg_sos = dsp::butter_bandpass_sos(cfg.target_lo, cfg.target_hi, cfg.fs, 3);
  seg.input = dsp::filtfilt(in_sos, raw);
  seg.target = dsp::filtfilt(tg_sos, raw);
  standardize_inplace(seg.input);
  standardize_inplace(seg.target);
  return seg;
}

} // namespace

BlinkData generate_blink_data(const BlinkProbeConfig& cfg, int train_segments,
                              int test_segments, std::uint64_t seed) {
  BlinkData data;
  for (int i = 0; i < train_segments; ++i) {
    Rng rng = make_rng(seed, 0xB1100000ull + i);
    BlinkSegment seg = make_segment(cfg, rng);
    data.train_inputs.push_back(std::move(seg.input));
    data.train_targets.push_back(std::move(seg.target));
  }
  for (int i = 0; i < test_segments; ++i) {
    Rng rng = make_rng(seed, 0xB1DE0000ull + i);
    BlinkSegment seg = make_segment(cfg, rng);
    data.test_inputs.push_back(std::move(seg.input));
    data.test_targets.push_back(std::move(seg.target));
    data.test_blink_samples.push_back(std::move(seg.blink_samples));
  }
  return data;
}

namespace {

struct BlinkForward {
  Vector xp;           // padded input
  Matrix h, a;         // L x hidden
  Vector y;
};

BlinkForward blink_forward(const BlinkProbe& p, const Vector& x) {
  const long L = x.size();
  const long K = p.w1.cols();
  const long pad = (K - 1) / 2;
  BlinkForward f;
  f.xp = Vector::Zero(L + K - 1);
  f.xp.segment(pad, L) = x;
  f.h = Matrix::Zero(L, p.w1.rows());
  for (long j = 0; j < p.w1.rows(); ++j) {
    for (long k = 0; k < K; ++k) f.h.col(j) += p.w1(j, k) * f.xp.segment(k, L);
    f.h.col(j).array() += p.b1[j];
  }
  f.a = f.h.array().max(0.0) + p.leaky_slope * f.h.array().min(0.0);
  f.y = Vector::Constant(L, p.b2);
  for (long j = 0; j < p.w1.rows(); ++j) {
    Vector ap = Vector::Zero(L + K - 1);
    ap.segment(pad, L) = f.a.col(j);
    for (long k = 0; k < K; ++k) f.y += p.w2(j, k) * ap.segment(k, L);
  }
  return f;
}

} // namespace

Vector BlinkProbe::reconstruct(const Vector& x) const { return blink_forward(*this, x).y; }

BlinkProbe train_blink_probe(const BlinkData& data, const BlinkProbeConfig& cfg) {
  if (data.train_inputs.empty()) throw EmptyDataset("no blink training segments");
  BlinkProbe p;
  Rng rng = make_rng(cfg.seed, 0xB11Cull);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.kernel));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(cfg.kernel * cfg.hidden));
  p.w1.resize(cfg.hidden, cfg.kernel);
  p.w2.resize(cfg.hidden, cfg.kernel);
  for (long j = 0; j < cfg.hidden; ++j)
    for (long k = 0; k < cfg.kernel; ++k) {
      p.w1(j, k) = gaussian(rng, 0.0, s1);
      p.w2(j, k) = gaussian(rng, 0.0, s2);
    }
  p.b1 = Vector::Zero(cfg.hidden);

  Matrix m1 = Matrix::Zero(cfg.hidden, cfg.kernel), v1 = m1;
  Matrix m2 = m1, v2 = m1;
  Vector mb1 = Vector::Zero(cfg.hidden), vb1 = mb1;
  double mb2 = 0.0, vb2 = 0.0;
  const double b1c = 0.9, b2c = 0.999, eps = 1e-8;

  const long K = cfg.kernel, pad = (K - 1) / 2;
  for (long step = 1; step <= cfg.steps; ++step) {
    Matrix gw1 = Matrix::Zero(cfg.hidden, K), gw2 = gw1;
    Vector gb1 = Vector::Zero(cfg.hidden);
    double gb2 = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const long idx = uniform_index(rng, static_cast<long>(data.train_inputs.size()));
      const Vector& x = data.train_inputs[idx];
      const Vector& tgt = data.train_targets[idx];
      const long L = x.size();
      BlinkForward f = blink_forward(p, x);
      const Vector dy = 2.0 * (f.y - tgt) / (static_cast<double>(L) * cfg.batch_size);
      gb2 += dy.sum();
      for (long j = 0; j < cfg.hidden; ++j) {
        Vector ap = Vector::Zero(L + K - 1);
        ap.segment(pad, L) = f.a.col(j);
        Vector dap = Vector::Zero(L + K - 1);
        for (long k = 0; k < K; ++k) {
          gw2(j, k) += dy.dot(ap.segment(k, L));
          dap.segment(k, L) += p.w2(j, k) * dy;
        }
        const Vector da = dap.segment(pad, L);
        const Vector dh = (f.h.col(j).array() > 0.0)
                              .select(da, p.leaky_slope * da.array())
                              .matrix();
        gb1[j] += dh.sum();
        for (long k = 0; k < K; ++k) gw1(j, k) += dh.dot(f.xp.segment(k, L));
      }
    }
    const double bc1 = 1.0 - std::pow(b1c, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(b2c, static_cast<double>(step));
    auto adam = [&](double& w, double& m, double& v, double g, bool decay) {
      m = b1c * m + (1 - b1c) * g;
      v = b2c * v + (1 - b2c) * g * g;
      if (decay) w -= cfg.learning_rate * cfg.weight_decay * w;
      w -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + eps);
    };
    for (long j = 0; j < cfg.hidden; ++j) {
      for (long k = 0; k < K; ++k) {
        adam(p.w1(j, k), m1(j, k), v1(j, k), gw1(j, k), true);
        adam(p.w2(j, k), m2(j, k), v2(j, k), gw2(j, k), true);
      }
      adam(p.b1[j], mb1[j], vb1[j], gb1[j], false);
    }
    adam(p.b2, mb2, vb2, gb2, false);
  }
  return p;
}

double blink_probe_eval(const BlinkProbe& probe, const BlinkData& data, double fs) {
  const long half = static_cast<long>(std::lround(0.5 * fs));
  double sum = 0.0;
  long count = 0;
  for (size_t i = 0; i < data.test_inputs.size(); ++i) {
    const Vector recon = probe.reconstruct(data.test_inputs[i]);
    const Vector& tgt = data.test_targets[i];
    for (long c : data.test_blink_samples[i]) {
      const long lo = std::max<long>(0, c - half);
      const long hi = std::min<long>(tgt.size(), c + half + 1);
      sum += stats::pearson(recon.segment(lo, hi - lo), tgt.segment(lo, hi - lo));
      ++count;
    }
  }
  if (count == 0) throw EmptyDataset("no blink windows to evaluate");
  return sum / static_cast<double>(count);
}

} // namespace eegd3::synth
