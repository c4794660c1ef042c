#include "eegd3/training.hpp"

#include "eegd3/dsp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using nlohmann::json;

namespace eegd3::training {

std::set<std::string> FoldSplit::subjects_in(int fold) const {
  std::set<std::string> out;
  for (const auto& [s, f] : fold_of)
    if (f == fold) out.insert(s);
  return out;
}

std::set<std::string> FoldSplit::subjects_not_in(int fold) const {
  std::set<std::string> out;
  for (const auto& [s, f] : fold_of)
    if (f != fold) out.insert(s);
  return out;
}

FoldSplit split_folds(const std::vector<std::string>& subjects, int k, std::uint64_t seed) {
  if (k > static_cast<int>(subjects.size()))
    throw TooFewSubjects("fewer subjects than folds");
  std::vector<std::string> order = subjects;
  std::sort(order.begin(), order.end());
  Rng rng = make_rng(seed, 0xF01D);
  std::shuffle(order.begin(), order.end(), rng);
  FoldSplit split;
  split.folds = k;
  for (size_t i = 0; i < order.size(); ++i)
    split.fold_of[order[i]] = static_cast<int>(i % k);
  return split;
}

int assign_bin(long valid_start, long valid_end, double fs, double window_center_seconds,
               int bins) {
  const double vs = valid_start / fs;
  const double ve = valid_end / fs;
  const double width = (ve - vs) / bins;
  const int bin = static_cast<int>(std::floor((window_center_seconds - vs) / width));
  return std::clamp(bin, 0, bins - 1);
}

std::vector<Draw> make_epoch_stream(const store::Collection& c, const TrainConfig& cfg,
                                    Rng& rng) {
  const int nds = static_cast<int>(c.datasets.size());
  if (nds == 0) throw EmptyDataset("no datasets registered");
  long total = 0;
  std::vector<std::discrete_distribution<long>> trial_dist;
  for (const auto& ds : c.datasets) {
    if (ds.trials.empty()) throw EmptyDataset("dataset has no trials: " + ds.dataset_id);
    total += static_cast<long>(ds.trials.size());
    std::vector<double> w;
    for (const auto& t : ds.trials) w.push_back(t.draw_weight);
    trial_dist.emplace_back(w.begin(), w.end());
  }
  const long draws = cfg.epoch_draws > 0 ? cfg.epoch_draws : total;

  std::vector<Draw> out;
  out.reserve(draws);
  std::uniform_int_distribution<int> ds_dist(0, nds - 1);
  for (long i = 0; i < draws; ++i) {
    Draw d;
    d.dataset = ds_dist(rng);
    const auto& ds = c.datasets[d.dataset];
    d.trial = trial_dist[d.dataset](rng);
    const auto& trial = ds.trials[d.trial];
    d.window = dsp::sample_window(trial, ds.fs, cfg.window_seconds, rng);
    const double center = d.window.start_seconds + cfg.window_seconds / 2.0;
    d.bin = assign_bin(trial.valid_start, trial.valid_end, ds.fs, center, cfg.bins);
    out.push_back(std::move(d));
  }
  return out;
}

Matrix preprocess_window(const Matrix& window, double fs, const TrainConfig& cfg) {
  Matrix x = window;
  if (cfg.bandpass_hi > 0.0 && !cfg.filter_trial_level)
    x = dsp::bandpass_zerophase(x, fs, cfg.bandpass_lo, cfg.bandpass_hi, cfg.bandpass_order);
  return dsp::standardize_then_car(x);
}

AdamW::AdamW(std::vector<model::ParamRef> refs, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : refs_(std::move(refs)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& r : refs_) {
    m_.push_back(Vector::Zero(r.size));
    v_.push_back(Vector::Zero(r.size));
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  for (size_t i = 0; i < refs_.size(); ++i) {
    auto& r = refs_[i];
    for (long k = 0; k < r.size; ++k) {
      const double g = r.grad[k];
      if (!std::isfinite(g)) throw DivergenceDetected("non-finite gradient in " + r.name);
      m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g;
      v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g * g;
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      if (r.decay) r.value[k] -= lr_ * wd_ * r.value[k];
      r.value[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

store::Collection filter_subjects(const store::Collection& c,
                                  const std::set<std::string>& keep) {
  store::Collection out;
  out.format_version = c.format_version;
  out.provenance = c.provenance;
  for (const auto& ds : c.datasets) {
    store::StoredDataset copy = ds;
    copy.trials.clear();
    for (const auto& t : ds.trials)
      if (keep.count(t.subject_id)) copy.trials.push_back(t);
    if (!copy.trials.empty()) out.datasets.push_back(std::move(copy));
  }
  return out;
}

model::Checkpoint pretrain(const store::Collection& train_set,
                           const model::ModelConfig& model_cfg, const TrainConfig& cfg,
                           std::function<void(int, double, double)> on_epoch) {
  model::Checkpoint ckpt;
  ckpt.config = model_cfg;
  ckpt.model = model::Model(model_cfg, cfg.seed);
  ckpt.mappings.gamma = cfg.gamma;
  ckpt.mappings.bins = cfg.bins;
  ckpt.mappings.components = model_cfg.components;

  Rng map_rng = make_rng(cfg.seed, 0x3A9);
  std::vector<std::string> dataset_ids;
  for (const auto& ds : train_set.datasets) {
    ckpt.mappings.register_dataset(ds.dataset_id, map_rng, cfg.mapping_init_sigma);
    dataset_ids.push_back(ds.dataset_id);
  }

  // Mapping gradients live beside the raw matrices for the optimizer.
  std::map<std::string, Matrix> map_grads;
  std::vector<model::ParamRef> refs = ckpt.model.param_refs();
  for (auto& [id, m] : ckpt.mappings.raw) {
    map_grads[id] = Matrix::Zero(m.rows(), m.cols());
    refs.push_back({"mapping/" + id, m.data(), map_grads[id].data(), m.size(), true});
  }
  AdamW opt(refs, cfg.learning_rate, cfg.weight_decay);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = make_rng(cfg.seed, 0xE90C + static_cast<std::uint64_t>(epoch));
    Rng dropout_rng = make_rng(cfg.seed, 0xD90 + static_cast<std::uint64_t>(epoch));
    std::vector<Draw> draws = make_epoch_stream(train_set, cfg, epoch_rng);
    const long n_batches = static_cast<long>(draws.size()) / cfg.batch_size;
    double loss_sum = 0.0;
    long correct = 0, seen = 0;

    for (long batch = 0; batch < n_batches; ++batch) {
      std::vector<Matrix> windows;
      std::vector<int> targets;
      std::vector<int> ds_index;
      for (int i = 0; i < cfg.batch_size; ++i) {
        const Draw& d = draws[batch * cfg.batch_size + i];
        const auto& ds = train_set.datasets[d.dataset];
        windows.push_back(preprocess_window(d.window.samples, ds.fs, cfg));
        targets.push_back(d.bin);
        ds_index.push_back(d.dataset);
      }

      model::BatchCache cache;
      const Matrix Z = ckpt.model.forward(windows, true, &dropout_rng, &cache);

      ckpt.model.zero_grad();
      for (auto& [id, g] : map_grads) g.setZero();

      Matrix grad_z = Matrix::Zero(Z.rows(), Z.cols());
      for (int i = 0; i < cfg.batch_size; ++i) {
        const std::string& id = dataset_ids[ds_index[i]];
        const Matrix mstar = ckpt.mappings.effective(id);
        const Vector z = Z.row(i).transpose();
        const Vector p = model::forward_bins(z, mstar);
        const double loss = sequencing::bin_loss(p, targets[i], cfg.smoothing);
        if (!std::isfinite(loss)) throw DivergenceDetected("loss became non-finite");
        loss_sum += loss;
        Eigen::Index argmax;
        p.maxCoeff(&argmax);
        if (static_cast<int>(argmax) == targets[i]) ++correct;
        ++seen;

        const Vector dp = sequencing::bin_loss_grad(p, targets[i], cfg.smoothing) /
                          static_cast<double>(cfg.batch_size);
        grad_z.row(i) += (mstar.transpose() * dp).transpose();
        // rows of the raw mapping, through the semi-normalization
        const Matrix& raw = ckpt.mappings.raw_for(id);
        Matrix& g = map_grads[id];
        for (Eigen::Index r = 0; r < raw.rows(); ++r) {
          const Vector d_mstar_row = dp[r] * z;
          g.row(r) += sequencing::seminormalize_row_backward(raw.row(r).transpose(),
                                                            cfg.gamma, d_mstar_row)
                          .transpose();
        }
      }
      ckpt.model.backward(cache, grad_z);
      opt.step();
      ckpt.model.project_filter_params();
    }

    const double mean_loss = seen ? loss_sum / seen : 0.0;
    const double acc = seen ? static_cast<double>(correct) / seen : 0.0;
    ckpt.loss_curve.emplace_back(mean_loss, acc);
    if (on_epoch) on_epoch(epoch, mean_loss, acc);
  }

  json meta;
  meta["epochs"] = cfg.epochs;
  meta["batch_size"] = cfg.batch_size;
  meta["learning_rate"] = cfg.learning_rate;
  meta["weight_decay"] = cfg.weight_decay;
  meta["window_seconds"] = cfg.window_seconds;
  meta["bins"] = cfg.bins;
  meta["seed"] = cfg.seed;
  meta["bandpass"] = {cfg.bandpass_lo, cfg.bandpass_hi};
  meta["smoothing"] = cfg.smoothing;
  meta["gamma"] = cfg.gamma;
  meta["epoch_definition"] = cfg.epoch_draws > 0
                                 ? "fixed draw count per epoch"
                                 : "one draw per stored trial per epoch";
  meta["epoch_draws"] = cfg.epoch_draws;
  ckpt.metadata_json = meta.dump();
  return ckpt;
}

SleepBinSchedule sleep_bin_setup(double recording_seconds, int bins, double max_hours) {
  SleepBinSchedule s;
  s.bins = bins;
  s.duration_seconds = std::min(recording_seconds, max_hours * 3600.0);
  s.bin_seconds = s.duration_seconds / bins;
  return s;
}

} // namespace eegd3::training
