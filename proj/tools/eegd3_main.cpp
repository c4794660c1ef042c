// Command-line driver: synthetic data generation, pretraining, interpretation
// reports, consistency tables, downstream probes and the blink reconstruction
// experiment. Every command writes its artifacts plus a run.json that captures
// the exact configuration, so any output can be regenerated from it.

#include "eegd3/downstream.hpp"
#include "eegd3/dsp.hpp"
#include "eegd3/edf.hpp"
#include "eegd3/interpret.hpp"
#include "eegd3/model.hpp"
#include "eegd3/stats.hpp"
#include "eegd3/store.hpp"
#include "eegd3/synth.hpp"
#include "eegd3/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eegd3;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out = "run";
  std::uint64_t seed = 0;
  int jobs = 1;
  int fold = -1;
};

// ---------------------------------------------------------------------------
// Config handling

void require_keys(const json& j, const std::string& section,
                  const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
}

void validate_config(const json& cfg) {
  require_keys(cfg, "<top>",
               {"store", "checkpoint", "synth", "model", "training", "interpret",
                "downstream", "blink"});
  if (cfg.contains("synth"))
    require_keys(cfg["synth"], "synth",
                 {"scene", "snr_db", "electrodes", "subjects", "trials_per_subject",
                  "control_trials_per_subject", "trial_seconds", "recordings",
                  "epochs_per_recording", "epoch_seconds"});
  if (cfg.contains("model"))
    require_keys(cfg["model"], "model",
                 {"components", "spatial_filters", "f1", "f2", "kernel1", "kernel2",
                  "pool1", "dropout_p"});
  if (cfg.contains("training"))
    require_keys(cfg["training"], "training",
                 {"epochs", "batch_size", "learning_rate", "weight_decay",
                  "window_seconds", "bins", "folds", "bandpass_lo", "bandpass_hi",
                  "bandpass_order", "smoothing", "gamma", "mapping_init_sigma",
                  "epoch_draws", "filter_trial_level"});
  if (cfg.contains("interpret"))
    require_keys(cfg["interpret"], "interpret", {"stride_seconds", "n_surrogates"});
  if (cfg.contains("downstream"))
    require_keys(cfg["downstream"], "downstream",
                 {"budgets", "window", "components", "epochs", "steps", "batch_size",
                  "learning_rate", "weight_decay", "l1_normalize_rows"});
  if (cfg.contains("blink"))
    require_keys(cfg["blink"], "blink",
                 {"train_segments", "test_segments", "steps", "batch_size",
                  "learning_rate", "weight_decay", "hidden", "kernel",
                  "segment_seconds"});
}

json load_config(const std::string& path) {
  json cfg = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  validate_config(cfg);
  return cfg;
}

template <typename T>
T cfg_get(const json& cfg, const std::string& section, const std::string& key, T fallback) {
  if (!cfg.contains(section)) return fallback;
  const json& s = cfg[section];
  if (!s.contains(key)) return fallback;
  return s[key].get<T>();
}

std::string resolve_store(const json& cfg, const std::string& fallback) {
  std::string path = cfg.value("store", fallback);
  const char* root = std::getenv("EEGD3_STORE_ROOT");
  if (root && *root && fs::path(path).is_relative()) path = (fs::path(root) / path).string();
  return path;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string git_revision() {
  FILE* p = popen("git rev-parse HEAD 2>/dev/null", "r");
  if (!p) return "unknown";
  char buf[64] = {0};
  const size_t n = fread(buf, 1, sizeof(buf) - 1, p);
  pclose(p);
  std::string rev(buf, n);
  while (!rev.empty() && (rev.back() == '\n' || rev.back() == '\r')) rev.pop_back();
  return rev.empty() ? "unknown" : rev;
}

void write_run_json(const GlobalArgs& ga, const std::string& command, const json& cfg) {
  fs::create_directories(ga.out);
  json run;
  run["command"] = command;
  run["seed"] = ga.seed;
  run["fold"] = ga.fold;
  run["jobs"] = ga.jobs;
  run["config"] = cfg;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.dump())));
  run["config_hash"] = hash;
  run["git_revision"] = git_revision();
  std::ofstream(fs::path(ga.out) / "run.json") << run.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Deterministic CSV / SVG emission

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Csv {
  std::ofstream out;
  explicit Csv(const fs::path& path) : out(path) {
    if (!out) throw Error("cannot write " + path.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  }
};

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Minimal deterministic line plot; the paired CSV carries the numbers.
void write_svg_lines(const fs::path& path, const std::string& title,
                     const std::vector<SvgSeries>& series) {
  const double W = 800, H = 500, ml = 60, mr = 150, mt = 40, mb = 40;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xlo = std::min(xlo, x); xhi = std::max(xhi, x);
      ylo = std::min(ylo, y); yhi = std::max(yhi, y);
    }
  if (xhi <= xlo) xhi = xlo + 1;
  if (yhi <= ylo) yhi = ylo + 1;
  auto px = [&](double x) { return ml + (x - xlo) / (xhi - xlo) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ylo) / (yhi - ylo) * (H - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
  out << "<text x=\"" << ml << "\" y=\"24\" font-size=\"16\">" << title << "</text>\n";
  out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(H - mb) << "\" x2=\"" << fmt(W - mr)
      << "\" y2=\"" << fmt(H - mb) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml)
      << "\" y2=\"" << fmt(H - mb) << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << fmt(ml - 50) << "\" y=\"" << fmt(H - mb) << "\" font-size=\"11\">"
      << fmt(ylo) << "</text>\n";
  out << "<text x=\"" << fmt(ml - 50) << "\" y=\"" << fmt(mt + 10) << "\" font-size=\"11\">"
      << fmt(yhi) << "</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % 10];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& [x, y] : series[i].points) out << fmt(px(x)) << ',' << fmt(py(y)) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << fmt(W - mr + 8) << "\" y=\"" << fmt(mt + 16.0 * (i + 1))
        << "\" font-size=\"12\" fill=\"" << color << "\">" << series[i].label << "</text>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Shared pieces

training::TrainConfig train_config_from(const json& cfg, std::uint64_t seed) {
  training::TrainConfig tc;
  tc.epochs = cfg_get<int>(cfg, "training", "epochs", tc.epochs);
  tc.batch_size = cfg_get<int>(cfg, "training", "batch_size", tc.batch_size);
  tc.learning_rate = cfg_get<double>(cfg, "training", "learning_rate", tc.learning_rate);
  tc.weight_decay = cfg_get<double>(cfg, "training", "weight_decay", tc.weight_decay);
  tc.window_seconds = cfg_get<double>(cfg, "training", "window_seconds", tc.window_seconds);
  tc.bins = cfg_get<int>(cfg, "training", "bins", tc.bins);
  tc.bandpass_lo = cfg_get<double>(cfg, "training", "bandpass_lo", tc.bandpass_lo);
  tc.bandpass_hi = cfg_get<double>(cfg, "training", "bandpass_hi", tc.bandpass_hi);
  tc.bandpass_order = cfg_get<int>(cfg, "training", "bandpass_order", tc.bandpass_order);
  tc.smoothing = cfg_get<double>(cfg, "training", "smoothing", tc.smoothing);
  tc.gamma = cfg_get<double>(cfg, "training", "gamma", tc.gamma);
  tc.mapping_init_sigma =
      cfg_get<double>(cfg, "training", "mapping_init_sigma", tc.mapping_init_sigma);
  tc.epoch_draws = cfg_get<long>(cfg, "training", "epoch_draws", tc.epoch_draws);
  tc.filter_trial_level =
      cfg_get<bool>(cfg, "training", "filter_trial_level", tc.filter_trial_level);
  tc.seed = seed;
  return tc;
}

model::ModelConfig model_config_from(const json& cfg, const store::Collection& c,
                                     double window_seconds) {
  if (c.datasets.empty()) throw EmptyDataset("store has no datasets");
  model::ModelConfig mc;
  mc.components = cfg_get<int>(cfg, "model", "components", mc.components);
  mc.spatial_filters = cfg_get<int>(cfg, "model", "spatial_filters", mc.spatial_filters);
  mc.f1 = cfg_get<int>(cfg, "model", "f1", mc.f1);
  mc.f2 = cfg_get<int>(cfg, "model", "f2", mc.f2);
  mc.kernel1 = cfg_get<int>(cfg, "model", "kernel1", mc.kernel1);
  mc.pad1 = (mc.kernel1 - 1) / 2;
  mc.kernel2 = cfg_get<int>(cfg, "model", "kernel2", mc.kernel2);
  mc.pad2 = (mc.kernel2 - 1) / 2;
  mc.pool1 = cfg_get<int>(cfg, "model", "pool1", mc.pool1);
  mc.dropout_p = cfg_get<double>(cfg, "model", "dropout_p", mc.dropout_p);
  mc.electrodes = static_cast<int>(c.datasets.front().electrodes.size());
  mc.fs = c.datasets.front().fs;
  mc.window_samples = static_cast<int>(std::lround(window_seconds * mc.fs));
  return mc;
}

std::string fold_dir(const std::string& base, int fold) {
  return (fs::path(base) / ("fold_" + std::to_string(fold))).string();
}

// A checkpoint path may be a run directory with per-fold subdirectories or a
// single checkpoint directory.
std::string resolve_checkpoint(const json& cfg, int fold) {
  const std::string base = cfg.value("checkpoint", "");
  if (base.empty()) throw ConfigError("config key 'checkpoint' is required");
  const std::string with_fold = fold_dir(base, std::max(fold, 0));
  if (fs::exists(fs::path(with_fold) / "params.json")) return with_fold;
  if (fs::exists(fs::path(base) / "params.json")) return base;
  throw ConfigError("no checkpoint found under " + base);
}

// Trials of a dataset grouped by condition tag, held-out subjects only.
std::map<std::string, std::vector<const store::TrialData*>> trials_by_condition(
    const store::StoredDataset& sd, const std::set<std::string>& subjects) {
  std::map<std::string, std::vector<const store::TrialData*>> groups;
  for (const store::TrialData& t : sd.trials)
    if (subjects.count(t.subject_id)) groups[t.condition.empty() ? "all" : t.condition].push_back(&t);
  return groups;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const GlobalArgs& ga, const json& cfg) {
  const std::string scene = cfg_get<std::string>(cfg, "synth", "scene", "motor");
  synth::SynthOutput out;
  if (scene == "motor") {
    synth::SynthConfig sc = synth::default_motor_scene(ga.seed);
    sc.snr_db = cfg_get<double>(cfg, "synth", "snr_db", sc.snr_db);
    sc.electrodes = cfg_get<int>(cfg, "synth", "electrodes", sc.electrodes);
    for (auto& ds : sc.datasets) {
      ds.subjects = cfg_get<int>(cfg, "synth", "subjects", ds.subjects);
      ds.trials_per_subject =
          cfg_get<int>(cfg, "synth", "trials_per_subject", ds.trials_per_subject);
      ds.control_trials_per_subject = cfg_get<int>(cfg, "synth", "control_trials_per_subject",
                                                   ds.control_trials_per_subject);
      ds.trial_seconds = cfg_get<double>(cfg, "synth", "trial_seconds", ds.trial_seconds);
    }
    if (sc.electrodes != 16)
      throw ConfigError("the motor scene is defined for 16 electrodes");
    out = synth::generate(sc);
  } else if (scene == "sleep") {
    synth::SleepSceneConfig sc;
    sc.seed = ga.seed;
    sc.recordings = cfg_get<int>(cfg, "synth", "recordings", sc.recordings);
    sc.epochs_per_recording =
        cfg_get<int>(cfg, "synth", "epochs_per_recording", sc.epochs_per_recording);
    sc.epoch_seconds = cfg_get<double>(cfg, "synth", "epoch_seconds", sc.epoch_seconds);
    sc.electrodes = cfg_get<int>(cfg, "synth", "electrodes", sc.electrodes);
    sc.snr_db = cfg_get<double>(cfg, "synth", "snr_db", sc.snr_db);
    out = synth::generate_sleep_scene(sc);
  } else {
    throw ConfigError("unknown synth.scene '" + scene + "' (motor or sleep)");
  }
  synth::write_synth_store(out, (fs::path(ga.out) / "store").string());
  write_run_json(ga, "synth", cfg);
  std::cout << "wrote store with " << out.collection.datasets.size() << " dataset(s) to "
            << (fs::path(ga.out) / "store").string() << "\n";
  return 0;
}

int cmd_pretrain(const GlobalArgs& ga, const json& cfg) {
  const store::Collection c = store::read_store(resolve_store(cfg, "store"));
  const int folds = cfg_get<int>(cfg, "training", "folds", 5);
  const training::FoldSplit split = training::split_folds(c.subject_ids(), folds, ga.seed);
  const training::TrainConfig base_tc = train_config_from(cfg, ga.seed);
  const model::ModelConfig mc = model_config_from(cfg, c, base_tc.window_seconds);

  std::vector<int> todo;
  if (ga.fold >= 0) todo.push_back(ga.fold);
  else for (int f = 0; f < folds; ++f) todo.push_back(f);

  std::mutex io_mutex;
  std::vector<std::exception_ptr> errors(todo.size());
  auto run_fold = [&](size_t i) {
    try {
      const int fold = todo[i];
      training::TrainConfig tc = base_tc;
      tc.seed = mix_seed(ga.seed, 0xF01Dull + fold);
      const store::Collection train_set =
          training::filter_subjects(c, split.subjects_not_in(fold));
      const model::Checkpoint ckpt = training::pretrain(
          train_set, mc, tc, [&](int epoch, double loss, double acc) {
            std::lock_guard<std::mutex> lock(io_mutex);
            std::cout << "fold " << fold << " epoch " << epoch << " loss " << fmt(loss)
                      << " bin_acc " << fmt(acc) << "\n";
          });
      const std::string dir = fold_dir(ga.out, fold);
      model::save_checkpoint(ckpt, dir);
      Csv curve(fs::path(dir) / "loss_curve.csv");
      curve.row({"epoch", "loss", "bin_accuracy"});
      for (size_t e = 0; e < ckpt.loss_curve.size(); ++e)
        curve.row({std::to_string(e), fmt(ckpt.loss_curve[e].first),
                   fmt(ckpt.loss_curve[e].second)});
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const int jobs = std::max(1, ga.jobs);
  for (size_t start = 0; start < todo.size(); start += jobs) {
    std::vector<std::thread> pool;
    for (size_t i = start; i < std::min(start + jobs, todo.size()); ++i)
      pool.emplace_back(run_fold, i);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  write_run_json(ga, "pretrain", cfg);
  return 0;
}

int cmd_interpret(const GlobalArgs& ga, const json& cfg) {
  const int fold = std::max(ga.fold, 0);
  model::Checkpoint ckpt = model::load_checkpoint(resolve_checkpoint(cfg, fold));
  const store::Collection c = store::read_store(resolve_store(cfg, "store"));
  const int folds = cfg_get<int>(cfg, "training", "folds", 5);
  const training::FoldSplit split = training::split_folds(c.subject_ids(), folds, ga.seed);
  const std::set<std::string> eval_subjects = split.subjects_in(fold);
  const training::TrainConfig tc = train_config_from(cfg, ga.seed);
  const double stride_s = cfg_get<double>(cfg, "interpret", "stride_seconds", 0.25);

  fs::create_directories(ga.out);
  const int C = ckpt.config.components;

  Csv filters(fs::path(ga.out) / "filters.csv");
  filters.row({"component", "mu_hz", "h_hz", "beta"});
  for (int comp = 0; comp < C; ++comp) {
    const auto p = ckpt.model.filter_params(comp);
    filters.row({std::to_string(comp), fmt(p.mu), fmt(p.h), fmt(p.beta)});
  }

  {
    Csv resp(fs::path(ga.out) / "responses.csv");
    std::vector<std::string> head = {"freq_hz"};
    for (int comp = 0; comp < C; ++comp) head.push_back("c" + std::to_string(comp));
    resp.row(head);
    std::vector<SvgSeries> series(C);
    for (int comp = 0; comp < C; ++comp) series[comp].label = "c" + std::to_string(comp);
    for (double f = 0.0; f <= ckpt.config.fs / 2 + 1e-9; f += 0.25) {
      std::vector<std::string> cells = {fmt(f)};
      for (int comp = 0; comp < C; ++comp) {
        const auto p = ckpt.model.filter_params(comp);
        const double r = filterbank::magnitude_response_at(p.mu, p.h, p.beta, f);
        cells.push_back(fmt(r));
        series[comp].points.push_back({f, r});
      }
      resp.row(cells);
    }
    write_svg_lines(fs::path(ga.out) / "responses.svg", "filter magnitude responses", series);
  }

  {
    const Matrix rel = ckpt.model.spatial_relevance();
    Csv spatial(fs::path(ga.out) / "spatial.csv");
    std::vector<std::string> head = {"component"};
    for (long e = 0; e < rel.cols(); ++e) head.push_back("e" + std::to_string(e));
    spatial.row(head);
    for (int comp = 0; comp < C; ++comp) {
      std::vector<std::string> cells = {std::to_string(comp)};
      for (long e = 0; e < rel.cols(); ++e) cells.push_back(fmt(rel(comp, e)));
      spatial.row(cells);
    }
  }

  Csv tcs(fs::path(ga.out) / "timecourses.csv");
  tcs.row({"dataset", "condition", "component", "center_s", "mean_value"});
  const long stride = std::max<long>(1, std::lround(stride_s * ckpt.config.fs));
  for (const store::StoredDataset& sd : c.datasets) {
    for (const auto& [condition, trials] : trials_by_condition(sd, eval_subjects)) {
      Matrix mean;
      Vector centers;
      long count = 0;
      for (const store::TrialData* t : trials) {
        const interpret::LatentTimecourse tc_one =
            interpret::timecourse(ckpt.model, *t, sd.fs, tc, stride);
        if (count == 0) {
          mean = tc_one.values;
          centers = tc_one.centers;
        } else {
          mean += tc_one.values;
        }
        ++count;
      }
      if (count == 0) continue;
      mean /= static_cast<double>(count);
      std::vector<SvgSeries> series(C);
      for (int comp = 0; comp < C; ++comp) {
        series[comp].label = "c" + std::to_string(comp);
        for (long s = 0; s < mean.cols(); ++s) {
          tcs.row({sd.dataset_id, condition, std::to_string(comp), fmt(centers[s]),
                   fmt(mean(comp, s))});
          series[comp].points.push_back({centers[s], mean(comp, s)});
        }
      }
      write_svg_lines(fs::path(ga.out) / ("timecourses_" + sd.dataset_id + "_" + condition +
                                          ".svg"),
                      "mean timecourses " + sd.dataset_id + " / " + condition, series);
    }
  }

  write_run_json(ga, "interpret", cfg);
  return 0;
}

int cmd_consistency(const GlobalArgs& ga, const json& cfg) {
  const int fold = std::max(ga.fold, 0);
  model::Checkpoint ckpt = model::load_checkpoint(resolve_checkpoint(cfg, fold));
  const store::Collection c = store::read_store(resolve_store(cfg, "store"));
  const int folds = cfg_get<int>(cfg, "training", "folds", 5);
  const training::FoldSplit split = training::split_folds(c.subject_ids(), folds, ga.seed);
  const std::set<std::string> eval_subjects = split.subjects_in(fold);
  const training::TrainConfig tc = train_config_from(cfg, ga.seed);
  const double stride_s = cfg_get<double>(cfg, "interpret", "stride_seconds", 0.25);
  const long stride = std::max<long>(1, std::lround(stride_s * ckpt.config.fs));

  fs::create_directories(ga.out);
  Csv out(fs::path(ga.out) / "consistency.csv");
  out.row({"dataset", "condition", "component", "tc", "n_trials"});
  for (const store::StoredDataset& sd : c.datasets) {
    for (const auto& [condition, trials] : trials_by_condition(sd, eval_subjects)) {
      if (trials.size() < 2) continue;
      std::vector<interpret::LatentTimecourse> courses;
      for (const store::TrialData* t : trials)
        courses.push_back(interpret::timecourse(ckpt.model, *t, sd.fs, tc, stride));
      for (int comp = 0; comp < ckpt.config.components; ++comp) {
        std::vector<Vector> series;
        for (const auto& course : courses)
          series.push_back(course.values.row(comp).transpose());
        out.row({sd.dataset_id, condition, std::to_string(comp),
                 fmt(interpret::timecourse_consistency(series)),
                 std::to_string(trials.size())});
      }
    }
  }
  write_run_json(ga, "consistency", cfg);
  return 0;
}

// Latent features of one designated window per trial, for the motor probe.
struct TrialFeatures {
  Matrix features; // N x C
  std::vector<int> labels;
  std::vector<std::string> subjects;
};

TrialFeatures motor_features(model::Model& m, const store::Collection& c,
                             const training::TrainConfig& tc, const std::string& window) {
  TrialFeatures tf;
  std::vector<Vector> rows;
  for (const store::StoredDataset& sd : c.datasets) {
    for (const store::TrialData& t : sd.trials) {
      if (!t.label) continue;
      const double span = (t.valid_end - t.valid_start) / sd.fs;
      const double vs = t.valid_start / sd.fs;
      double start;
      if (window == "pre_trial_baseline") start = vs;
      else if (window == "post_action") start = vs + 0.65 * span;
      else start = vs + 0.25 * span; // action_start / control_trial
      start = std::min(start, t.valid_end / sd.fs - tc.window_seconds);
      rows.push_back(downstream::latent_for_window(m, t, sd.fs, tc, start));
      tf.labels.push_back(*t.label);
      tf.subjects.push_back(t.subject_id);
    }
  }
  if (rows.empty()) throw EmptyDataset("no labeled trials in the store");
  tf.features.resize(static_cast<long>(rows.size()), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) tf.features.row(static_cast<long>(i)) = rows[i];
  return tf;
}

int cmd_downstream(const GlobalArgs& ga, const json& cfg) {
  const store::Collection c = store::read_store(resolve_store(cfg, "store"));
  const int folds = cfg_get<int>(cfg, "training", "folds", 5);
  const training::FoldSplit split = training::split_folds(c.subject_ids(), folds, ga.seed);
  const training::TrainConfig tc = train_config_from(cfg, ga.seed);
  const std::string window = cfg_get<std::string>(cfg, "downstream", "window", "action_start");

  downstream::ProbeConfig pc;
  pc.n_classes = 2;
  pc.epochs = cfg_get<int>(cfg, "downstream", "epochs", pc.epochs);
  pc.batch_size = cfg_get<int>(cfg, "downstream", "batch_size", pc.batch_size);
  pc.learning_rate = cfg_get<double>(cfg, "downstream", "learning_rate", pc.learning_rate);
  pc.weight_decay = cfg_get<double>(cfg, "downstream", "weight_decay", pc.weight_decay);

  std::vector<int> todo;
  if (ga.fold >= 0) todo.push_back(ga.fold);
  else for (int f = 0; f < folds; ++f) todo.push_back(f);

  fs::create_directories(ga.out);
  Csv out(fs::path(ga.out) / "downstream.csv");
  out.row({"fold", "component_a", "component_b", "accuracy", "uar", "macro_f1",
           "probe_params"});
  downstream::MetricReport mean;
  for (int fold : todo) {
    model::Checkpoint ckpt = model::load_checkpoint(resolve_checkpoint(cfg, fold));
    const TrialFeatures tf = motor_features(ckpt.model, c, tc, window);
    const std::set<std::string> eval_subjects = split.subjects_in(fold);

    std::vector<long> train_idx, eval_idx;
    for (long i = 0; i < tf.features.rows(); ++i)
      (eval_subjects.count(tf.subjects[i]) ? eval_idx : train_idx).push_back(i);
    if (train_idx.empty() || eval_idx.empty())
      throw TooFewSubjects("fold split leaves an empty train or eval set");

    // Pick the two components whose designated-window activation correlates
    // most with the label on the training subjects, unless pinned in config.
    std::vector<int> comps;
    if (cfg.contains("downstream") && cfg["downstream"].contains("components"))
      comps = cfg["downstream"]["components"].get<std::vector<int>>();
    else {
      Vector y(static_cast<long>(train_idx.size()));
      for (size_t i = 0; i < train_idx.size(); ++i) y[static_cast<long>(i)] = tf.labels[train_idx[i]];
      std::vector<std::pair<double, int>> ranked;
      for (long comp = 0; comp < tf.features.cols(); ++comp) {
        Vector x(static_cast<long>(train_idx.size()));
        for (size_t i = 0; i < train_idx.size(); ++i)
          x[static_cast<long>(i)] = tf.features(train_idx[i], comp);
        ranked.push_back({-std::abs(stats::pearson(x, y)), static_cast<int>(comp)});
      }
      std::sort(ranked.begin(), ranked.end());
      comps = {ranked[0].second, ranked[1].second};
    }
    if (comps.size() != 2) throw ConfigError("downstream.components must list 2 components");

    Matrix train_feats(static_cast<long>(train_idx.size()), 2);
    std::vector<int> train_labels;
    for (size_t i = 0; i < train_idx.size(); ++i) {
      train_feats(static_cast<long>(i), 0) = tf.features(train_idx[i], comps[0]);
      train_feats(static_cast<long>(i), 1) = tf.features(train_idx[i], comps[1]);
      train_labels.push_back(tf.labels[train_idx[i]]);
    }
    downstream::ProbeConfig fold_pc = pc;
    fold_pc.seed = mix_seed(ga.seed, 0xD09ull + fold);
    const downstream::MotorProbe probe =
        downstream::train_motor_probe(train_feats, train_labels, fold_pc);

    std::vector<int> preds, truth;
    for (long i : eval_idx) {
      Vector x(2);
      x << tf.features(i, comps[0]), tf.features(i, comps[1]);
      preds.push_back(probe.predict(x));
      truth.push_back(tf.labels[i]);
    }
    const downstream::MetricReport r = downstream::metrics(preds, truth);
    out.row({std::to_string(fold), std::to_string(comps[0]), std::to_string(comps[1]),
             fmt(r.accuracy), fmt(r.uar), fmt(r.macro_f1),
             std::to_string(probe.parameter_count())});
    mean.accuracy += r.accuracy;
    mean.uar += r.uar;
    mean.macro_f1 += r.macro_f1;
  }
  out.row({"mean", "", "", fmt(mean.accuracy / todo.size()), fmt(mean.uar / todo.size()),
           fmt(mean.macro_f1 / todo.size()), ""});
  write_run_json(ga, "downstream", cfg);
  return 0;
}

int cmd_fewshot(const GlobalArgs& ga, const json& cfg) {
  const std::string store_dir = resolve_store(cfg, "store");
  const synth::SynthOutput data = synth::read_synth_store(store_dir);
  if (data.stage_labels.empty())
    throw ConfigError("the few-shot command needs per-epoch stage labels in the store");
  const int fold = std::max(ga.fold, 0);
  model::Checkpoint ckpt = model::load_checkpoint(resolve_checkpoint(cfg, fold));
  const training::TrainConfig tc = train_config_from(cfg, ga.seed);

  downstream::LabeledLatents pool;
  std::vector<Vector> rows;
  for (const store::StoredDataset& sd : data.collection.datasets) {
    auto it = data.stage_labels.find(sd.dataset_id);
    if (it == data.stage_labels.end()) continue;
    for (const store::TrialData& t : sd.trials) {
      for (const auto& [epoch, stage] : it->second) {
        const double start = epoch * tc.window_seconds;
        if (std::lround((start + tc.window_seconds) * sd.fs) > t.samples.cols()) continue;
        rows.push_back(downstream::latent_for_window(ckpt.model, t, sd.fs, tc, start));
        pool.labels.push_back(stage);
        pool.subjects.push_back(t.subject_id);
      }
    }
  }
  if (rows.empty()) throw EmptyDataset("no labeled epochs found");
  pool.features.resize(static_cast<long>(rows.size()), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) pool.features.row(static_cast<long>(i)) = rows[i];

  const int folds = cfg_get<int>(cfg, "training", "folds", 5);
  training::FoldSplit split =
      training::split_folds(data.collection.subject_ids(), folds, ga.seed);
  if (ga.fold >= 0) {
    // Only the checkpoint's held-out fold gives honest frozen features; score
    // that single train/eval split.
    training::FoldSplit single;
    single.folds = 1;
    for (const auto& [subject, f] : split.fold_of) single.fold_of[subject] = f == ga.fold ? 0 : 1;
    split = single;
  }

  downstream::ProbeConfig pc;
  pc.n_classes = 5;
  pc.steps = cfg_get<long>(cfg, "downstream", "steps", pc.steps);
  pc.batch_size = cfg_get<int>(cfg, "downstream", "batch_size", pc.batch_size);
  pc.learning_rate = cfg_get<double>(cfg, "downstream", "learning_rate", pc.learning_rate);
  pc.weight_decay = cfg_get<double>(cfg, "downstream", "weight_decay", pc.weight_decay);
  pc.l1_normalize_rows = cfg_get<bool>(cfg, "downstream", "l1_normalize_rows", false);
  pc.seed = ga.seed;

  std::vector<long> budgets = {1, 2, 4, 10, 100};
  if (cfg.contains("downstream") && cfg["downstream"].contains("budgets"))
    budgets = cfg["downstream"]["budgets"].get<std::vector<long>>();

  const auto curve = downstream::fewshot_curve(pool, split, budgets, pc);

  fs::create_directories(ga.out);
  Csv out(fs::path(ga.out) / "fewshot.csv");
  out.row({"budget", "accuracy_mean", "accuracy_std", "uar_mean", "uar_std", "macro_f1_mean",
           "macro_f1_std"});
  SvgSeries uar{"uar", {}};
  for (const auto& row : curve) {
    out.row({std::to_string(row.budget), fmt(row.mean.accuracy), fmt(row.stddev.accuracy),
             fmt(row.mean.uar), fmt(row.stddev.uar), fmt(row.mean.macro_f1),
             fmt(row.stddev.macro_f1)});
    uar.points.push_back({std::log10(static_cast<double>(row.budget)), row.mean.uar});
  }
  write_svg_lines(fs::path(ga.out) / "fewshot.svg", "balanced accuracy vs log10(budget)",
                  {uar});
  write_run_json(ga, "fewshot", cfg);
  return 0;
}

int cmd_blinkprobe(const GlobalArgs& ga, const json& cfg) {
  synth::BlinkProbeConfig bc;
  bc.steps = cfg_get<long>(cfg, "blink", "steps", bc.steps);
  bc.batch_size = cfg_get<int>(cfg, "blink", "batch_size", bc.batch_size);
  bc.learning_rate = cfg_get<double>(cfg, "blink", "learning_rate", bc.learning_rate);
  bc.weight_decay = cfg_get<double>(cfg, "blink", "weight_decay", bc.weight_decay);
  bc.hidden = cfg_get<int>(cfg, "blink", "hidden", bc.hidden);
  bc.kernel = cfg_get<int>(cfg, "blink", "kernel", bc.kernel);
  bc.segment_seconds = cfg_get<double>(cfg, "blink", "segment_seconds", bc.segment_seconds);
  bc.seed = ga.seed;
  const int train_segments = cfg_get<int>(cfg, "blink", "train_segments", 64);
  const int test_segments = cfg_get<int>(cfg, "blink", "test_segments", 16);

  const synth::BlinkData data = synth::generate_blink_data(bc, train_segments, test_segments,
                                                           ga.seed);
  synth::BlinkProbeConfig untrained_cfg = bc;
  untrained_cfg.steps = 0;
  const synth::BlinkProbe untrained = synth::train_blink_probe(data, untrained_cfg);
  const synth::BlinkProbe probe = synth::train_blink_probe(data, bc);
  const double r_untrained = synth::blink_probe_eval(untrained, data, bc.fs);
  const double r_trained = synth::blink_probe_eval(probe, data, bc.fs);

  fs::create_directories(ga.out);
  Csv out(fs::path(ga.out) / "blinkprobe.csv");
  out.row({"r_trained", "r_untrained"});
  out.row({fmt(r_trained), fmt(r_untrained)});

  // Panel data: one held-out segment's input, wideband target, reconstruction.
  const Vector recon = probe.reconstruct(data.test_inputs.front());
  Csv panel(fs::path(ga.out) / "blink_panel.csv");
  panel.row({"t_s", "input", "target", "reconstruction"});
  std::vector<SvgSeries> series(3);
  series[0].label = "input";
  series[1].label = "target";
  series[2].label = "reconstruction";
  for (long i = 0; i < recon.size(); ++i) {
    const double t = i / bc.fs;
    panel.row({fmt(t), fmt(data.test_inputs.front()[i]), fmt(data.test_targets.front()[i]),
               fmt(recon[i])});
    series[0].points.push_back({t, data.test_inputs.front()[i]});
    series[1].points.push_back({t, data.test_targets.front()[i]});
    series[2].points.push_back({t, recon[i]});
  }
  write_svg_lines(fs::path(ga.out) / "blink_panel.svg", "blink reconstruction", series);
  write_run_json(ga, "blinkprobe", cfg);
  std::cout << "blink-window r: trained " << fmt(r_trained) << ", untrained "
            << fmt(r_untrained) << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"interpretable grouped-subnetwork EEG decomposition pipeline"};
  app.require_subcommand(1);

  GlobalArgs ga;
  app.add_option("--config", ga.config_path, "JSON configuration file");
  app.add_option("--out", ga.out, "output directory");
  app.add_option("--seed", ga.seed, "global random seed");
  app.add_option("--jobs", ga.jobs, "parallel fold jobs");
  app.add_option("--fold", ga.fold, "restrict to one cross-validation fold");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic store");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "pretrain fold checkpoints");
  auto* interpret_cmd = app.add_subcommand("interpret", "filter/spatial/timecourse reports");
  auto* consistency_cmd = app.add_subcommand("consistency", "timecourse consistency table");
  auto* downstream_cmd = app.add_subcommand("downstream", "frozen-feature motor probe");
  auto* fewshot_cmd = app.add_subcommand("fewshot", "few-shot sleep probe curve");
  auto* blink_cmd = app.add_subcommand("blinkprobe", "blink reconstruction experiment");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(ga.config_path);
    if (synth_cmd->parsed()) return cmd_synth(ga, cfg);
    if (pretrain_cmd->parsed()) return cmd_pretrain(ga, cfg);
    if (interpret_cmd->parsed()) return cmd_interpret(ga, cfg);
    if (consistency_cmd->parsed()) return cmd_consistency(ga, cfg);
    if (downstream_cmd->parsed()) return cmd_downstream(ga, cfg);
    if (fewshot_cmd->parsed()) return cmd_fewshot(ga, cfg);
    if (blink_cmd->parsed()) return cmd_blinkprobe(ga, cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
