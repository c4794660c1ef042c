// Acceptance gate: each criterion prints a single PASS/FAIL line and the
// process exits nonzero if any criterion fails. Thresholds are pinned here.

#include "eegd3/downstream.hpp"
#include "eegd3/edf.hpp"
#include "eegd3/filterbank.hpp"
#include "eegd3/interpret.hpp"
#include "eegd3/model.hpp"
#include "eegd3/rng.hpp"
#include "eegd3/sequencing.hpp"
#include "eegd3/stats.hpp"
#include "eegd3/synth.hpp"
#include "eegd3/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace eegd3;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
std::vector<std::pair<int, std::string>> results;

void report(const std::string& id, bool ok, const std::string& what) {
  const std::string line = id + (ok ? " PASS " : " FAIL ") + what;
  std::cerr << line << std::endl; // progress while the heavy criteria run
  results.emplace_back(std::stoi(id.substr(3)), line);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------------------

void ac1_filter_identities() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(101);
  bool ok = true;
  for (int i = 0; i < 1000 && ok; ++i) {
    filterbank::GaussianFilterParams p;
    p.mu = uniform(rng, 0.0, 80.0);
    p.h = uniform(rng, 1.0, 120.0);
    p.beta = uniform(rng, 1.0, 16.0);
    Array f(3);
    f << p.mu, p.mu - p.h / 2.0, p.mu + p.h / 2.0;
    const Array r = filterbank::magnitude_response(p, f);
    ok = std::abs(r[0] - 1.0) < 1e-12 && std::abs(r[1] - 0.5) < 1e-12 &&
         std::abs(r[2] - 0.5) < 1e-12;
  }
  const double dt = seconds_since(t0);
  report("AC-1", ok && dt < 1.0,
         "filter centre/FWHM identities, 1000 random parameter sets, " + num(dt) + " s");
}

void ac2_gradient_checks() {
  const auto t0 = Clock::now();
  bool ok = true;

  // Analytic response gradients against central differences.
  Rng rng = make_rng(102);
  const double step = 1e-5;
  for (int trial = 0; trial < 50 && ok; ++trial) {
    filterbank::GaussianFilterParams p;
    p.mu = uniform(rng, 5.0, 70.0);
    p.h = uniform(rng, 5.0, 100.0);
    p.beta = uniform(rng, 1.1, 12.0);
    Array freqs(6);
    for (int i = 0; i < 6; ++i) freqs[i] = uniform(rng, 0.5, 79.5);
    Array dmu, dh, dbeta;
    filterbank::response_gradients(p, freqs, dmu, dh, dbeta);
    auto fd = [&](auto set, double v0) {
      filterbank::GaussianFilterParams lo = p, hi = p;
      set(lo, v0 - step);
      set(hi, v0 + step);
      return Array((filterbank::magnitude_response(hi, freqs) -
                    filterbank::magnitude_response(lo, freqs)) /
                   (2 * step));
    };
    const Array fmu = fd([](auto& q, double v) { q.mu = v; }, p.mu);
    const Array fh = fd([](auto& q, double v) { q.h = v; }, p.h);
    const Array fb = fd([](auto& q, double v) { q.beta = v; }, p.beta);
    for (int i = 0; i < 6 && ok; ++i) {
      ok = std::abs(dmu[i] - fmu[i]) / std::max(std::abs(fmu[i]), 1e-6) < 1e-4 &&
           std::abs(dh[i] - fh[i]) / std::max(std::abs(fh[i]), 1e-6) < 1e-4 &&
           std::abs(dbeta[i] - fb[i]) / std::max(std::abs(fb[i]), 1e-6) < 1e-4;
    }
  }

  // End-to-end loss gradients on a random ~1% parameter sample.
  model::ModelConfig mc;
  mc.components = 3;
  mc.electrodes = 4;
  mc.window_samples = 64;
  mc.fs = 160.0;
  model::Model m(mc, 103);
  std::vector<Matrix> batch(2, Matrix(4, 64));
  for (auto& w : batch)
    for (long i = 0; i < w.size(); ++i) w.data()[i] = gaussian(rng);
  Matrix weight(2, mc.components);
  for (long i = 0; i < weight.size(); ++i) weight.data()[i] = gaussian(rng);
  auto loss_of = [&]() {
    model::BatchCache c;
    return (m.forward(batch, true, nullptr, &c).array() * weight.array()).sum();
  };
  model::BatchCache cache;
  m.forward(batch, true, nullptr, &cache);
  m.zero_grad();
  m.backward(cache, weight);
  auto refs = m.param_refs();
  long total = 0;
  for (const auto& r : refs) total += r.size;
  const long probes = std::max<long>(40, total / 100);
  for (long probe = 0; probe < probes && ok; ++probe) {
    auto& r = refs[uniform_index(rng, static_cast<long>(refs.size()))];
    const long k = uniform_index(rng, r.size);
    const double saved = r.value[k];
    r.value[k] = saved + step;
    const double hi = loss_of();
    r.value[k] = saved - step;
    const double lo = loss_of();
    r.value[k] = saved;
    const double fd = (hi - lo) / (2 * step);
    const double scale = std::max({std::abs(fd), std::abs(r.grad[k]), 1e-6});
    ok = std::abs(r.grad[k] - fd) / scale < 1e-3;
  }

  const double dt = seconds_since(t0);
  report("AC-2", ok && dt < 120.0,
         "analytic gradients vs finite differences (responses and end-to-end), " +
             num(dt) + " s");
}

void ac3_group_independence() {
  model::ModelConfig mc;
  mc.components = 3;
  mc.electrodes = 4;
  mc.window_samples = 64;
  mc.fs = 160.0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
    Rng rng = make_rng(seed, 0xAC3);
    Matrix w(4, 64);
    for (long i = 0; i < w.size(); ++i) w.data()[i] = gaussian(rng);
    model::Model m(mc, seed);
    const Vector before = m.forward_one(w);
    for (auto& ref : m.param_refs()) {
      if (ref.name.rfind("c1/", 0) != 0) continue;
      for (long k = 0; k < ref.size; ++k) ref.value[k] += gaussian(rng, 0.0, 0.1);
    }
    m.project_filter_params();
    const Vector after = m.forward_one(w);
    ok = after[1] != before[1] && after[0] == before[0] && after[2] == before[2];
  }
  report("AC-3", ok, "grouped parameter isolation, bit-identical unperturbed outputs, 100 seeds");
}

void ac4_mgu_seminorm() {
  bool ok = sequencing::mgu(0.0, 0.3) == 0.0;
  for (double gamma : {0.0, 0.25, 0.5, 0.75, 1.0})
    ok = ok && std::abs(sequencing::mgu(1.0, gamma) - (1.0 - std::exp(-1.0))) < 1e-12;
  // Evenness and monotonicity on a grid.
  for (double gamma : {0.1, 0.5, 0.9}) {
    double prev = -1.0;
    for (double x = 0.0; x <= 8.0 && ok; x += 0.01) {
      const double v = sequencing::mgu(x, gamma);
      ok = v >= prev - 1e-12 && v >= 0.0 && v < 1.0 &&
           std::abs(sequencing::mgu(-x, gamma) - v) < 1e-12;
      prev = v;
    }
  }
  // Row sums never exceed one over 1e5 random rows.
  Rng rng = make_rng(104);
  for (int i = 0; i < 100000 && ok; ++i) {
    Vector m(8);
    for (int k = 0; k < 8; ++k) m[k] = gaussian(rng, 0.0, 2.0);
    const Vector out = sequencing::seminormalize_row(m, uniform(rng));
    ok = out.sum() <= 1.0 + 1e-12 && out.minCoeff() >= 0.0;
  }
  // Continuity at the branch point: two equal entries straddling sum 1.
  auto inverse = [](double v, double gamma) {
    double lo = 0.0, hi = 20.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (sequencing::mgu(mid, gamma) < v ? lo : hi) = mid;
    }
    return lo;
  };
  Vector below(2), above(2);
  below.setConstant(inverse((1.0 - 1e-10) / 2.0, 0.5));
  above.setConstant(inverse((1.0 + 1e-10) / 2.0, 0.5));
  const Vector ob = sequencing::seminormalize_row(below, 0.5);
  const Vector oa = sequencing::seminormalize_row(above, 0.5);
  ok = ok && (ob - oa).cwiseAbs().maxCoeff() < 1e-9;

  report("AC-4", ok, "MGU identities, semi-normalization bound over 1e5 rows, branch continuity");
}

void ac5_synthetic_disentanglement() {
  const auto t0 = Clock::now();
  const std::uint64_t seed = 7;

  synth::SynthConfig sc = synth::default_motor_scene(seed);
  const synth::SynthOutput data = synth::generate(sc);

  const auto subjects = data.collection.subject_ids();
  const training::FoldSplit split = training::split_folds(subjects, 5, seed);
  const store::Collection train_set =
      training::filter_subjects(data.collection, split.subjects_not_in(0));

  training::TrainConfig tc;
  tc.epochs = 12; // within the <= 20 epoch budget
  tc.batch_size = 32;
  tc.learning_rate = 1e-3;
  tc.weight_decay = 1e-2;
  tc.window_seconds = 1.5;
  tc.bins = 16;
  tc.seed = seed;
  tc.bandpass_lo = 1.0; // keep the 1-6 Hz blink and 3-9 Hz transient sources
  tc.bandpass_hi = 40.0;

  model::ModelConfig mc;
  mc.components = 6;
  mc.electrodes = sc.electrodes;
  mc.fs = sc.fs;
  mc.window_samples = static_cast<int>(std::lround(tc.window_seconds * sc.fs));

  model::Checkpoint ckpt = training::pretrain(train_set, mc, tc);
  const double bin_acc = ckpt.loss_curve.back().second;

  const long stride = std::lround(0.25 * sc.fs);
  const auto score = synth::score_disentanglement(ckpt.model, data, split.subjects_in(0),
                                                  tc, stride);
  const double dt = seconds_since(t0);
  const bool ok = score.mean_abs_r >= 0.6 && bin_acc >= 3.0 / tc.bins && dt <= 1800.0;
  std::ostringstream what;
  what << "held-out matched envelope |r| " << num(score.mean_abs_r)
       << " (>= 0.6), bin accuracy " << num(bin_acc) << " (>= " << num(3.0 / tc.bins)
       << "), " << num(dt) << " s (<= 1800)";
  report("AC-5", ok, what.str());
}

void ac6_fewshot_probe() {
  const auto t0 = Clock::now();
  const std::uint64_t seed = 11;

  synth::SleepSceneConfig sc;
  sc.seed = seed;
  const synth::SynthOutput data = synth::generate_sleep_scene(sc);

  training::TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 32;
  tc.window_seconds = sc.epoch_seconds;
  tc.bins = 32;
  tc.seed = seed;
  tc.bandpass_lo = 0.5;
  tc.bandpass_hi = 45.0;
  tc.epoch_draws = 1920;

  model::ModelConfig mc;
  mc.components = 5;
  mc.electrodes = sc.electrodes;
  mc.fs = sc.fs;
  mc.window_samples = static_cast<int>(std::lround(tc.window_seconds * sc.fs));

  model::Checkpoint ckpt = training::pretrain(data.collection, mc, tc);

  // Frozen features: one latent vector per scored epoch.
  downstream::LabeledLatents pool;
  std::vector<Vector> feats;
  for (const auto& ds : data.collection.datasets) {
    const auto& stages = data.stage_labels.at(ds.dataset_id);
    for (const auto& trial : ds.trials)
      for (const auto& [epoch, state] : stages) {
        const double start = epoch * sc.epoch_seconds;
        feats.push_back(
            downstream::latent_for_window(ckpt.model, trial, ds.fs, tc, start));
        pool.labels.push_back(state);
        pool.subjects.push_back(trial.subject_id);
      }
  }
  pool.features.resize(static_cast<long>(feats.size()), mc.components);
  for (size_t i = 0; i < feats.size(); ++i)
    pool.features.row(static_cast<long>(i)) = feats[i].transpose();

  const training::FoldSplit split =
      training::split_folds(data.collection.subject_ids(), 5, seed);

  downstream::ProbeConfig pc;
  pc.n_classes = 5;
  pc.seed = seed;
  const std::vector<long> budgets = {1, 2, 4, 10, 100};
  const auto rows = downstream::fewshot_curve(pool, split, budgets, pc);

  // Parameter-count pins.
  downstream::SleepProbe sleep_probe;
  sleep_probe.norm_gamma = sleep_probe.norm_beta = Vector::Zero(5);
  sleep_probe.w = Matrix::Zero(5, 5);
  sleep_probe.b = Vector::Zero(5);
  downstream::MotorProbe motor_probe;
  motor_probe.w = Matrix::Zero(2, 2);
  motor_probe.b = Vector::Zero(2);
  bool ok = sleep_probe.parameter_count() == 40 && motor_probe.parameter_count() == 6;

  double uar_at_10 = 0.0;
  double prev = 0.0;
  bool monotone = true;
  std::ostringstream curve;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].budget == 10) uar_at_10 = rows[i].mean.uar;
    if (i > 0 && rows[i].mean.uar < prev - 0.05) monotone = false;
    prev = rows[i].mean.uar;
    curve << (i ? " " : "") << rows[i].budget << ":" << num(rows[i].mean.uar);
  }
  ok = ok && uar_at_10 >= 0.7 && monotone;

  const double dt = seconds_since(t0);
  std::ostringstream what;
  what << "probe parameters 6/40, balanced accuracy at budget 10 = " << num(uar_at_10)
       << " (>= 0.7), curve [" << curve.str() << "] monotone within 0.05, " << num(dt)
       << " s";
  report("AC-6", ok, what.str());
}

void ac7_blink_reconstruction() {
  const auto t0 = Clock::now();
  synth::BlinkProbeConfig cfg; // pinned: 1000 steps, batch 32, lr 3e-4, wd 1e-3
  cfg.seed = 5;
  const synth::BlinkData data = synth::generate_blink_data(cfg, 64, 16, cfg.seed);

  const synth::BlinkProbe trained = synth::train_blink_probe(data, cfg);
  const double r_trained = synth::blink_probe_eval(trained, data, cfg.fs);

  synth::BlinkProbeConfig untrained_cfg = cfg;
  untrained_cfg.steps = 0;
  const synth::BlinkProbe untrained = synth::train_blink_probe(data, untrained_cfg);
  const double r_untrained = synth::blink_probe_eval(untrained, data, cfg.fs);

  const double dt = seconds_since(t0);
  const bool ok = r_trained >= 0.7 && std::abs(r_untrained) <= 0.1 && dt <= 300.0;
  std::ostringstream what;
  what << "held-out blink-window r " << num(r_trained) << " (>= 0.7), untrained baseline "
       << num(r_untrained) << " (|r| <= 0.1), " << num(dt) << " s (<= 300)";
  report("AC-7", ok, what.str());
}

void ac8_statistics_oracles() {
  auto vec = [](std::initializer_list<double> xs) {
    Vector v(static_cast<long>(xs.size()));
    long i = 0;
    for (double x : xs) v[i++] = x;
    return v;
  };
  bool ok =
      std::abs(interpret::ccc(vec({1, 2, 3, 4}), vec({2, 3, 4, 5})) - 2.5 / 3.5) < 1e-12 &&
      std::abs(interpret::ccc(vec({1, 2, 3}), vec({3, 2, 1})) + 1.0) < 1e-12 &&
      std::abs(interpret::ccc(vec({1, 2, 3}), vec({1, 2, 3})) - 1.0) < 1e-12;

  // TC equals the brute-force pair loop.
  Rng rng = make_rng(108);
  std::vector<Vector> series;
  for (int i = 0; i < 5; ++i) {
    Vector v(24);
    for (long k = 0; k < 24; ++k) v[k] = gaussian(rng);
    series.push_back(v);
  }
  double sum = 0.0;
  int pairs = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < i; ++j) {
      sum += interpret::ccc(series[i], series[j]);
      ++pairs;
    }
  ok = ok && std::abs(interpret::timecourse_consistency(series) - sum / pairs) < 1e-12;

  // Surrogates: amplitude spectrum preserved, self-correlation p = 1/(n+1).
  Vector x(128);
  for (long i = 0; i < 128; ++i)
    x[i] = std::sin(2 * 3.14159265358979 * 5.0 * i / 128.0) + 0.2 * gaussian(rng);
  const Vector s = interpret::phase_surrogate(x, rng);
  const CVector X = fft_forward(x), S = fft_forward(s);
  for (long k = 0; k < X.size() && ok; ++k)
    ok = std::abs(std::abs(X[k]) - std::abs(S[k])) < 1e-8;
  const auto res = interpret::surrogate_correlation(x, x, 99, rng);
  ok = ok && std::abs(res.p - 1.0 / 100.0) < 1e-12 && std::abs(res.r - 1.0) < 1e-9;

  report("AC-8", ok, "CCC hand values, TC brute-force equality, surrogate spectrum and p");
}

void ac9_cli_determinism() {
  const char* cli = std::getenv("EEGD3_CLI");
  if (!cli || !*cli) {
    report("AC-9", false, "EEGD3_CLI not set; cannot exercise the command line");
    return;
  }
  const fs::path root = fs::temp_directory_path() / "eegd3_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);

  std::ostringstream cfg;
  cfg << "{\n"
      << "  \"store\": \"" << (root / "synthout" / "store").string() << "\",\n"
      << "  \"checkpoint\": \"" << (root / "ckpt").string() << "\",\n"
      << "  \"synth\": {\"scene\": \"motor\", \"subjects\": 2, \"trials_per_subject\": 4,\n"
      << "             \"control_trials_per_subject\": 1, \"trial_seconds\": 3.0},\n"
      << "  \"model\": {\"components\": 2},\n"
      << "  \"training\": {\"epochs\": 1, \"batch_size\": 8, \"window_seconds\": 0.5,\n"
      << "               \"bins\": 4, \"folds\": 2, \"epoch_draws\": 16,\n"
      << "               \"bandpass_lo\": 2.0, \"bandpass_hi\": 45.0},\n"
      << "  \"interpret\": {\"stride_seconds\": 0.5}\n"
      << "}\n";
  const fs::path cfg_path = root / "config.json";
  std::ofstream(cfg_path) << cfg.str();

  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str())) == 0;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  bool ok = run("synth --config " + cfg_path.string() + " --out " +
                (root / "synthout").string() + " --seed 3");
  ok = ok && run("pretrain --config " + cfg_path.string() + " --out " +
                 (root / "ckpt").string() + " --seed 3");
  ok = ok && run("consistency --config " + cfg_path.string() + " --out " +
                 (root / "cons_a").string() + " --seed 3 --fold 0");
  ok = ok && run("pretrain --config " + cfg_path.string() + " --out " +
                 (root / "ckpt_b").string() + " --seed 3");
  ok = ok && run("consistency --config " + cfg_path.string() + " --out " +
                 (root / "cons_b").string() + " --seed 3 --fold 0");
  if (ok) {
    const std::string a = slurp(root / "cons_a" / "consistency.csv");
    ok = !a.empty() && a == slurp(root / "cons_b" / "consistency.csv") &&
         slurp(root / "ckpt" / "fold_0" / "loss_curve.csv") ==
             slurp(root / "ckpt_b" / "fold_0" / "loss_curve.csv");
  }
  report("AC-9", ok, "identical config and seed reproduce every CSV byte-identically");
}

// Minimal EDF fixture builder (mirrors the unit-test fixtures).
std::string edf_pad(const std::string& s, size_t n) {
  std::string out = s.substr(0, n);
  out.resize(n, ' ');
  return out;
}

std::string build_edf_fixture(int ns, int n_records, int spr, const std::string& version) {
  std::string out;
  out += edf_pad(version, 8);
  out += edf_pad("subjectX", 80);
  out += edf_pad("recording", 80);
  out += edf_pad("01.01.20", 8);
  out += edf_pad("00.00.00", 8);
  out += edf_pad(std::to_string(256 + 256 * ns), 8);
  out += edf_pad("", 44);
  out += edf_pad(std::to_string(n_records), 8);
  out += edf_pad("1", 8);
  out += edf_pad(std::to_string(ns), 4);
  auto field = [&](const std::string& v, size_t width) {
    for (int s = 0; s < ns; ++s) out += edf_pad(v, width);
  };
  for (int s = 0; s < ns; ++s) out += edf_pad("CH" + std::to_string(s), 16);
  field("AgAgCl", 80);
  field("uV", 8);
  field("-200", 8);
  field("200", 8);
  field("-32768", 8);
  field("32767", 8);
  field("none", 80);
  field(std::to_string(spr), 8);
  field("", 32);
  int counter = 0;
  for (int r = 0; r < n_records; ++r)
    for (int s = 0; s < ns; ++s)
      for (int k = 0; k < spr; ++k) {
        const std::uint16_t v = static_cast<std::uint16_t>(counter * 37 - 501 + s * 13);
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
        ++counter;
      }
  return out;
}

void ac10_edf_round_trip() {
  const fs::path dir = fs::temp_directory_path() / "eegd3_acceptance_edf";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::string bytes = build_edf_fixture(3, 4, 16, "0");
  const fs::path good = dir / "good.edf";
  std::ofstream(good, std::ios::binary).write(bytes.data(), bytes.size());

  bool ok = false;
  try {
    const edf::EdfFile f = edf::read_file(good.string());
    const std::vector<char> payload = edf::serialize_payload(f);
    const long header_bytes = 256 + 256 * 3;
    ok = payload.size() == bytes.size() - header_bytes &&
         std::equal(payload.begin(), payload.end(), bytes.begin() + header_bytes);
  } catch (const std::exception&) {
    ok = false;
  }

  // Malformed fixtures must be rejected.
  bool rejected = false;
  const std::string bad_version = build_edf_fixture(2, 2, 8, "XX");
  const fs::path bad = dir / "bad.edf";
  std::ofstream(bad, std::ios::binary).write(bad_version.data(), bad_version.size());
  try {
    edf::read_file(bad.string());
  } catch (const MalformedHeader&) {
    rejected = true;
  }

  bool truncated_rejected = false;
  const fs::path trunc = dir / "trunc.edf";
  std::ofstream(trunc, std::ios::binary).write(bytes.data(), bytes.size() - 10);
  try {
    edf::read_file(trunc.string());
  } catch (const TruncatedRecord&) {
    truncated_rejected = true;
  }

  report("AC-10", ok && rejected && truncated_rejected,
         "EDF payload round trip bit-exact; malformed and truncated fixtures rejected");
}

} // namespace

int main() {
  ac1_filter_identities();
  ac2_gradient_checks();
  ac3_group_independence();
  ac4_mgu_seminorm();
  ac8_statistics_oracles();
  ac10_edf_round_trip();
  ac9_cli_determinism();
  ac7_blink_reconstruction();
  ac6_fewshot_probe();
  ac5_synthetic_disentanglement();

  std::sort(results.begin(), results.end());
  for (const auto& [n, line] : results) std::cout << line << "\n";
  if (failures == 0) {
    std::cout << "all acceptance criteria passed" << std::endl;
    return 0;
  }
  std::cout << failures << " acceptance criterion(s) failed" << std::endl;
  return 1;
}
