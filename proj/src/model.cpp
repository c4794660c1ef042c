#include "eegd3/model.hpp"

#include "eegd3/store.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace eegd3::model {

namespace {

double kaiming_bound(long fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); }

Matrix init_matrix(long rows, long cols, long fan_in, Rng& rng) {
  Matrix m(rows, cols);
  const double a = kaiming_bound(fan_in);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = uniform(rng, -a, a);
  return m;
}

// y(c,t) = sum_k w(c,k) x(c, t+k-pad), zero padded; output length T.
Matrix depthwise_conv(const Matrix& x, const Matrix& w, int pad) {
  const long ch = x.rows(), T = x.cols(), k = w.cols();
  Matrix xp = Matrix::Zero(ch, T + 2 * pad);
  xp.middleCols(pad, T) = x;
  Matrix y = Matrix::Zero(ch, T + 2 * pad - k + 1);
  for (long j = 0; j < k; ++j)
    for (long c = 0; c < ch; ++c)
      y.row(c) += w(c, j) * xp.row(c).segment(j, y.cols());
  return y;
}

void depthwise_conv_backward(const Matrix& x, const Matrix& w, int pad, const Matrix& dy,
                             Matrix& dx, Matrix& dw) {
  const long ch = x.rows(), T = x.cols(), k = w.cols();
  Matrix xp = Matrix::Zero(ch, T + 2 * pad);
  xp.middleCols(pad, T) = x;
  Matrix dxp = Matrix::Zero(ch, T + 2 * pad);
  for (long j = 0; j < k; ++j)
    for (long c = 0; c < ch; ++c) {
      dw(c, j) += dy.row(c).dot(xp.row(c).segment(j, dy.cols()));
      dxp.row(c).segment(j, dy.cols()) += w(c, j) * dy.row(c);
    }
  dx += dxp.middleCols(pad, T);
}

Matrix leaky(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
}

Matrix leaky_backward(const Matrix& out, const Matrix& dy, double slope) {
  Matrix dx(dy.rows(), dy.cols());
  for (long r = 0; r < dy.rows(); ++r)
    for (long c = 0; c < dy.cols(); ++c)
      dx(r, c) = dy(r, c) * (out(r, c) >= 0.0 ? 1.0 : slope);
  return dx;
}

// Per-channel batch normalization over (batch, time).
void batchnorm_forward(std::vector<Matrix>& x, const Vector& gamma, const Vector& beta,
                       Vector& run_mean, Vector& run_var, double momentum, double eps,
                       bool train, std::vector<Matrix>& xhat, Vector& istd) {
  const long B = static_cast<long>(x.size());
  const long ch = x[0].rows(), T = x[0].cols();
  const double N = static_cast<double>(B * T);
  xhat.assign(B, Matrix(ch, T));
  istd.resize(ch);
  for (long c = 0; c < ch; ++c) {
    double mean, var;
    if (train) {
      double s = 0.0, s2 = 0.0;
      for (long b = 0; b < B; ++b) {
        s += x[b].row(c).sum();
        s2 += x[b].row(c).squaredNorm();
      }
      mean = s / N;
      var = s2 / N - mean * mean;
      run_mean[c] = (1.0 - momentum) * run_mean[c] + momentum * mean;
      run_var[c] = (1.0 - momentum) * run_var[c] + momentum * var;
    } else {
      mean = run_mean[c];
      var = run_var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    istd[c] = is;
    for (long b = 0; b < B; ++b) {
      xhat[b].row(c) = (x[b].row(c).array() - mean) * is;
      x[b].row(c) = xhat[b].row(c) * gamma[c] + Eigen::RowVectorXd::Constant(T, beta[c]);
    }
  }
}

void batchnorm_backward(const std::vector<Matrix>& xhat, const Vector& istd,
                        const Vector& gamma, bool train, std::vector<Matrix>& dy,
                        Vector& dgamma, Vector& dbeta) {
  const long B = static_cast<long>(dy.size());
  const long ch = dy[0].rows(), T = dy[0].cols();
  const double N = static_cast<double>(B * T);
  for (long c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (long b = 0; b < B; ++b) {
      sum_dy += dy[b].row(c).sum();
      sum_dy_xhat += dy[b].row(c).dot(xhat[b].row(c));
    }
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    if (train) {
      for (long b = 0; b < B; ++b)
        dy[b].row(c) = gamma[c] * istd[c] / N *
                       (N * dy[b].row(c).array() - sum_dy -
                        xhat[b].row(c).array() * sum_dy_xhat);
    } else {
      for (long b = 0; b < B; ++b) dy[b].row(c) *= gamma[c] * istd[c];
    }
  }
}

Matrix avgpool(const Matrix& x, int k) {
  const long ch = x.rows();
  const long out = x.cols() / k; // trailing remainder dropped
  Matrix y = Matrix::Zero(ch, out);
  for (long t = 0; t < out; ++t) y.col(t) = x.middleCols(t * k, k).rowwise().mean();
  return y;
}

Matrix avgpool_backward(const Matrix& dy, int k, long in_len) {
  Matrix dx = Matrix::Zero(dy.rows(), in_len);
  for (long t = 0; t < dy.cols(); ++t)
    for (int j = 0; j < k; ++j) dx.col(t * k + j) = dy.col(t) / static_cast<double>(k);
  return dx;
}

} // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
  if (cfg.kernel1 % 2 == 0 || cfg.kernel2 % 2 == 0)
    throw ConfigError("kernel sizes must be odd");
  if (cfg.pad1 != (cfg.kernel1 - 1) / 2 || cfg.pad2 != (cfg.kernel2 - 1) / 2)
    throw ConfigError("padding must equal (kernel-1)/2");
  Rng rng = make_rng(seed, 0xD3);
  groups.resize(cfg.components);
  const int D = cfg.spatial_filters;
  for (int c = 0; c < cfg.components; ++c) {
    Group& g = groups[c];
    g.filter.resize(1, 3);
    g.filter << cfg.filter_mu_init, cfg.filter_h_init, cfg.filter_beta_init;
    g.spatial = init_matrix(D, cfg.electrodes, cfg.electrodes, rng);
    g.dw1 = init_matrix(D, cfg.kernel1, cfg.kernel1, rng);
    g.pw1 = init_matrix(cfg.ch2(), D, D, rng);
    g.dw2 = init_matrix(cfg.ch2(), cfg.kernel2, cfg.kernel2, rng);
    g.pw2 = init_matrix(cfg.ch3(), cfg.ch2(), cfg.ch2(), rng);
    g.red_w = init_matrix(cfg.ch3(), 1, cfg.ch3(), rng).col(0);
    g.red_b = Vector::Zero(1);
    g.bn1_g = Vector::Ones(D); g.bn1_b = Vector::Zero(D);
    g.bn1_rm = Vector::Zero(D); g.bn1_rv = Vector::Ones(D);
    g.bn2_g = Vector::Ones(cfg.ch2()); g.bn2_b = Vector::Zero(cfg.ch2());
    g.bn2_rm = Vector::Zero(cfg.ch2()); g.bn2_rv = Vector::Ones(cfg.ch2());
    g.bn3_g = Vector::Ones(cfg.ch3()); g.bn3_b = Vector::Zero(cfg.ch3());
    g.bn3_rm = Vector::Zero(cfg.ch3()); g.bn3_rv = Vector::Ones(cfg.ch3());
  }
  zero_grad();
}

void Model::zero_grad() {
  for (Group& g : groups) {
    g.g_filter = Matrix::Zero(1, 3);
    g.g_spatial = Matrix::Zero(g.spatial.rows(), g.spatial.cols());
    g.g_dw1 = Matrix::Zero(g.dw1.rows(), g.dw1.cols());
    g.g_pw1 = Matrix::Zero(g.pw1.rows(), g.pw1.cols());
    g.g_dw2 = Matrix::Zero(g.dw2.rows(), g.dw2.cols());
    g.g_pw2 = Matrix::Zero(g.pw2.rows(), g.pw2.cols());
    g.g_bn1_g = Vector::Zero(g.bn1_g.size()); g.g_bn1_b = Vector::Zero(g.bn1_b.size());
    g.g_bn2_g = Vector::Zero(g.bn2_g.size()); g.g_bn2_b = Vector::Zero(g.bn2_b.size());
    g.g_bn3_g = Vector::Zero(g.bn3_g.size()); g.g_bn3_b = Vector::Zero(g.bn3_b.size());
    g.g_red_w = Vector::Zero(g.red_w.size());
    g.g_red_b = Vector::Zero(1);
  }
}

filterbank::GaussianFilterParams Model::filter_params(int c) const {
  filterbank::GaussianFilterParams p;
  p.mu = groups[c].filter(0, 0);
  p.h = groups[c].filter(0, 1);
  p.beta = groups[c].filter(0, 2);
  return p;
}

Matrix Model::forward(const std::vector<Matrix>& windows, bool train, Rng* dropout_rng,
                      BatchCache* cache) {
  const long B = static_cast<long>(windows.size());
  if (B == 0) throw ShapeMismatch("empty batch");
  const long E = cfg.electrodes, T = cfg.window_samples;
  for (const Matrix& w : windows)
    if (w.rows() != E || w.cols() != T) throw ShapeMismatch("window shape mismatch");

  BatchCache local;
  BatchCache& cc = cache ? *cache : local;
  cc.train = train;
  cc.batch = B;
  cc.freqs_full.resize(T);
  for (long k = 0; k < T; ++k) cc.freqs_full[k] = bin_abs_freq(k, T, cfg.fs);
  cc.input_fft.resize(B);
  for (long b = 0; b < B; ++b) {
    cc.input_fft[b].resize(E);
    for (long e = 0; e < E; ++e)
      cc.input_fft[b][e] = fft_forward(Vector(windows[b].row(e).transpose()));
  }
  cc.comps.assign(cfg.components, GroupCache{});

  const bool use_dropout = train && cfg.dropout_p > 0.0 && dropout_rng != nullptr;
  const double keep = 1.0 - cfg.dropout_p;

  Matrix Z(B, cfg.components);
  const long T2 = cfg.pooled_len();

  for (int c = 0; c < cfg.components; ++c) {
    Group& g = groups[c];
    GroupCache& gc = cc.comps[c];
    const auto fp = filter_params(c);
    const Array F = filterbank::magnitude_response(fp, cc.freqs_full);

    gc.filtered.resize(B);
    std::vector<Matrix> cur(B);
    for (long b = 0; b < B; ++b) {
      Matrix slice(E, T);
      for (long e = 0; e < E; ++e) {
        CVector Y = cc.input_fft[b][e].array() * F.cast<std::complex<double>>();
        slice.row(e) = fft_inverse_real(Y).transpose();
      }
      gc.filtered[b] = std::move(slice);
      cur[b] = g.spatial * gc.filtered[b]; // D x T
    }

    batchnorm_forward(cur, g.bn1_g, g.bn1_b, g.bn1_rm, g.bn1_rv, cfg.bn_momentum, cfg.bn_eps,
                      train, gc.bn1_xhat, gc.bn1_istd);
    gc.act1.resize(B);
    for (long b = 0; b < B; ++b) gc.act1[b] = leaky(cur[b], cfg.leaky_slope);

    gc.dw1_out.resize(B);
    for (long b = 0; b < B; ++b) {
      gc.dw1_out[b] = depthwise_conv(gc.act1[b], g.dw1, cfg.pad1);
      cur[b] = g.pw1 * gc.dw1_out[b]; // (D*F1) x T
    }

    batchnorm_forward(cur, g.bn2_g, g.bn2_b, g.bn2_rm, g.bn2_rv, cfg.bn_momentum, cfg.bn_eps,
                      train, gc.bn2_xhat, gc.bn2_istd);
    gc.act2.resize(B);
    gc.pooled.resize(B);
    gc.drop1_mask.resize(B);
    gc.drop1_out.resize(B);
    for (long b = 0; b < B; ++b) {
      gc.act2[b] = leaky(cur[b], cfg.leaky_slope);
      gc.pooled[b] = avgpool(gc.act2[b], cfg.pool1);
      if (use_dropout) {
        Matrix mask(gc.pooled[b].rows(), gc.pooled[b].cols());
        for (long r = 0; r < mask.rows(); ++r)
          for (long t = 0; t < mask.cols(); ++t)
            mask(r, t) = uniform(*dropout_rng) < keep ? 1.0 / keep : 0.0;
        gc.drop1_mask[b] = mask;
        gc.drop1_out[b] = gc.pooled[b].cwiseProduct(mask);
      } else {
        gc.drop1_mask[b] = Matrix::Ones(gc.pooled[b].rows(), gc.pooled[b].cols());
        gc.drop1_out[b] = gc.pooled[b];
      }
    }

    gc.dw2_out.resize(B);
    for (long b = 0; b < B; ++b) {
      gc.dw2_out[b] = depthwise_conv(gc.drop1_out[b], g.dw2, cfg.pad2);
      cur[b] = g.pw2 * gc.dw2_out[b]; // (D*F1*F2) x T2
    }

    batchnorm_forward(cur, g.bn3_g, g.bn3_b, g.bn3_rm, g.bn3_rv, cfg.bn_momentum, cfg.bn_eps,
                      train, gc.bn3_xhat, gc.bn3_istd);
    gc.act3.resize(B);
    gc.gap.resize(B);
    gc.drop2_mask.resize(B);
    gc.drop2_out.resize(B);
    gc.z.resize(B);
    for (long b = 0; b < B; ++b) {
      gc.act3[b] = leaky(cur[b], cfg.leaky_slope);
      gc.gap[b] = gc.act3[b].rowwise().mean();
      if (use_dropout) {
        Vector mask(gc.gap[b].size());
        for (long r = 0; r < mask.size(); ++r)
          mask[r] = uniform(*dropout_rng) < keep ? 1.0 / keep : 0.0;
        gc.drop2_mask[b] = mask;
        gc.drop2_out[b] = gc.gap[b].cwiseProduct(mask);
      } else {
        gc.drop2_mask[b] = Vector::Ones(gc.gap[b].size());
        gc.drop2_out[b] = gc.gap[b];
      }
      const double a = g.red_w.dot(gc.drop2_out[b]) + g.red_b[0];
      gc.z[b] = 1.0 / (1.0 + std::exp(-a));
      Z(b, c) = gc.z[b];
    }
    (void)T2;
  }
  return Z;
}

Vector Model::forward_one(const Matrix& window) {
  BatchCache cache;
  const Matrix Z = forward({window}, false, nullptr, &cache);
  return Z.row(0).transpose();
}

void Model::backward(const BatchCache& cc, const Matrix& grad_z) {
  const long B = cc.batch;
  const long E = cfg.electrodes, T = cfg.window_samples;

  for (int c = 0; c < cfg.components; ++c) {
    Group& g = groups[c];
    const GroupCache& gc = cc.comps[c];

    // sigmoid + reduction
    std::vector<Vector> d_gap(B);
    for (long b = 0; b < B; ++b) {
      const double z = gc.z[b];
      const double da = grad_z(b, c) * z * (1.0 - z);
      g.g_red_w += da * gc.drop2_out[b];
      g.g_red_b[0] += da;
      Vector d_drop2 = da * g.red_w;
      d_gap[b] = d_drop2.cwiseProduct(gc.drop2_mask[b]);
    }

    // global average pool
    const long T2 = gc.act3[0].cols();
    std::vector<Matrix> d_act3(B);
    for (long b = 0; b < B; ++b) {
      d_act3[b] = (d_gap[b] / static_cast<double>(T2)).replicate(1, T2);
      d_act3[b] = leaky_backward(gc.act3[b], d_act3[b], cfg.leaky_slope);
    }

    batchnorm_backward(gc.bn3_xhat, gc.bn3_istd, g.bn3_g, cc.train, d_act3, g.g_bn3_g,
                       g.g_bn3_b);

    std::vector<Matrix> d_drop1(B);
    for (long b = 0; b < B; ++b) {
      // pw2 then dw2
      g.g_pw2 += d_act3[b] * gc.dw2_out[b].transpose();
      Matrix d_dw2out = g.pw2.transpose() * d_act3[b];
      Matrix dx = Matrix::Zero(gc.drop1_out[b].rows(), gc.drop1_out[b].cols());
      depthwise_conv_backward(gc.drop1_out[b], g.dw2, cfg.pad2, d_dw2out, dx, g.g_dw2);
      d_drop1[b] = dx.cwiseProduct(gc.drop1_mask[b]);
    }

    std::vector<Matrix> d_act2(B);
    for (long b = 0; b < B; ++b) {
      Matrix d_pool = avgpool_backward(d_drop1[b], cfg.pool1, gc.act2[b].cols());
      d_act2[b] = leaky_backward(gc.act2[b], d_pool, cfg.leaky_slope);
    }

    batchnorm_backward(gc.bn2_xhat, gc.bn2_istd, g.bn2_g, cc.train, d_act2, g.g_bn2_g,
                       g.g_bn2_b);

    std::vector<Matrix> d_act1(B);
    for (long b = 0; b < B; ++b) {
      g.g_pw1 += d_act2[b] * gc.dw1_out[b].transpose();
      Matrix d_dw1out = g.pw1.transpose() * d_act2[b];
      Matrix dx = Matrix::Zero(gc.act1[b].rows(), gc.act1[b].cols());
      depthwise_conv_backward(gc.act1[b], g.dw1, cfg.pad1, d_dw1out, dx, g.g_dw1);
      d_act1[b] = leaky_backward(gc.act1[b], dx, cfg.leaky_slope);
    }

    batchnorm_backward(gc.bn1_xhat, gc.bn1_istd, g.bn1_g, cc.train, d_act1, g.g_bn1_g,
                       g.g_bn1_b);

    // spatial, then the spectral filter parameters
    const auto fp = filter_params(c);
    Array dmu, dh, dbeta;
    filterbank::response_gradients(fp, cc.freqs_full, dmu, dh, dbeta);
    const double invT = 1.0 / static_cast<double>(T);
    for (long b = 0; b < B; ++b) {
      g.g_spatial += d_act1[b] * gc.filtered[b].transpose();
      Matrix d_filtered = g.spatial.transpose() * d_act1[b]; // E x T
      for (long e = 0; e < E; ++e) {
        const CVector G = fft_forward(Vector(d_filtered.row(e).transpose()));
        for (long k = 0; k < T; ++k) {
          const double dF = invT * (cc.input_fft[b][e][k] * std::conj(G[k])).real();
          g.g_filter(0, 0) += dF * dmu[k];
          g.g_filter(0, 1) += dF * dh[k];
          g.g_filter(0, 2) += dF * dbeta[k];
        }
      }
    }
  }
}

std::vector<ParamRef> Model::param_refs() {
  std::vector<ParamRef> refs;
  auto add = [&](const std::string& name, Matrix& v, Matrix& g, bool decay) {
    refs.push_back({name, v.data(), g.data(), v.size(), decay});
  };
  auto addv = [&](const std::string& name, Vector& v, Vector& g, bool decay) {
    refs.push_back({name, v.data(), g.data(), v.size(), decay});
  };
  for (int c = 0; c < cfg.components; ++c) {
    Group& g = groups[c];
    const std::string p = "c" + std::to_string(c) + "/";
    add(p + "filter", g.filter, g.g_filter, false);
    add(p + "spatial", g.spatial, g.g_spatial, true);
    addv(p + "bn1_g", g.bn1_g, g.g_bn1_g, false);
    addv(p + "bn1_b", g.bn1_b, g.g_bn1_b, false);
    add(p + "dw1", g.dw1, g.g_dw1, true);
    add(p + "pw1", g.pw1, g.g_pw1, true);
    addv(p + "bn2_g", g.bn2_g, g.g_bn2_g, false);
    addv(p + "bn2_b", g.bn2_b, g.g_bn2_b, false);
    add(p + "dw2", g.dw2, g.g_dw2, true);
    add(p + "pw2", g.pw2, g.g_pw2, true);
    addv(p + "bn3_g", g.bn3_g, g.g_bn3_g, false);
    addv(p + "bn3_b", g.bn3_b, g.g_bn3_b, false);
    addv(p + "red_w", g.red_w, g.g_red_w, true);
    addv(p + "red_b", g.red_b, g.g_red_b, false);
  }
  return refs;
}

void Model::project_filter_params() {
  for (Group& g : groups) {
    g.filter(0, 0) = std::clamp(g.filter(0, 0), 0.0, cfg.fs / 2.0);
    g.filter(0, 1) = std::clamp(g.filter(0, 1), 1.0, cfg.fs);
    g.filter(0, 2) = std::clamp(g.filter(0, 2), 1.0, 16.0);
  }
}

Matrix Model::spatial_relevance() const {
  Matrix rel(cfg.components, cfg.electrodes);
  for (int c = 0; c < cfg.components; ++c)
    rel.row(c) = groups[c].spatial.cwiseAbs().colwise().mean();
  return rel;
}

Vector forward_bins(const Vector& z, const Matrix& mstar) {
  if (mstar.cols() != z.size()) throw ShapeMismatch("mapping/latent size mismatch");
  return mstar * z;
}

namespace {

json config_to_json(const ModelConfig& c) {
  json j;
  j["components"] = c.components;
  j["spatial_filters"] = c.spatial_filters;
  j["f1"] = c.f1; j["f2"] = c.f2;
  j["kernel1"] = c.kernel1; j["pad1"] = c.pad1; j["pool1"] = c.pool1;
  j["kernel2"] = c.kernel2; j["pad2"] = c.pad2;
  j["dropout_p"] = c.dropout_p; j["leaky_slope"] = c.leaky_slope;
  j["electrodes"] = c.electrodes; j["window_samples"] = c.window_samples;
  j["fs"] = c.fs;
  j["bn_momentum"] = c.bn_momentum; j["bn_eps"] = c.bn_eps;
  j["filter_mu_init"] = c.filter_mu_init;
  j["filter_h_init"] = c.filter_h_init;
  j["filter_beta_init"] = c.filter_beta_init;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.components = j.at("components");
  c.spatial_filters = j.at("spatial_filters");
  c.f1 = j.at("f1"); c.f2 = j.at("f2");
  c.kernel1 = j.at("kernel1"); c.pad1 = j.at("pad1"); c.pool1 = j.at("pool1");
  c.kernel2 = j.at("kernel2"); c.pad2 = j.at("pad2");
  c.dropout_p = j.at("dropout_p"); c.leaky_slope = j.at("leaky_slope");
  c.electrodes = j.at("electrodes"); c.window_samples = j.at("window_samples");
  c.fs = j.at("fs");
  c.bn_momentum = j.at("bn_momentum"); c.bn_eps = j.at("bn_eps");
  c.filter_mu_init = j.at("filter_mu_init");
  c.filter_h_init = j.at("filter_h_init");
  c.filter_beta_init = j.at("filter_beta_init");
  return c;
}

std::vector<float> to_f32(const double* p, long n) {
  std::vector<float> out(n);
  for (long i = 0; i < n; ++i) out[i] = static_cast<float>(p[i]);
  return out;
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& ch : out)
    if (ch == '/' || ch == ' ') ch = '_';
  return out;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "tensors");
  Checkpoint& mut = const_cast<Checkpoint&>(ckpt); // param_refs is non-const only
  json j;
  j["format_version"] = 1;
  j["config"] = config_to_json(ckpt.config);
  j["gamma"] = ckpt.mappings.gamma;
  j["bins"] = ckpt.mappings.bins;
  if (!ckpt.metadata_json.empty()) j["metadata"] = json::parse(ckpt.metadata_json);
  json curve = json::array();
  for (const auto& [loss, acc] : ckpt.loss_curve) curve.push_back({loss, acc});
  j["loss_curve"] = curve;

  json tensors = json::array();
  auto dump = [&](const std::string& name, const double* data, std::vector<long> shape) {
    long n = 1;
    for (long d : shape) n *= d;
    const std::string file = sanitize(name);
    store::write_tensor((fs::path(dir) / "tensors" / (file + ".f32")).string(), shape,
                        to_f32(data, n));
    json t;
    t["name"] = name;
    t["file"] = file;
    t["shape"] = shape;
    t["dtype"] = "float32";
    tensors.push_back(t);
  };
  for (ParamRef& r : mut.model.param_refs()) dump(r.name, r.value, {r.size});
  // running statistics travel with the checkpoint
  for (int c = 0; c < ckpt.config.components; ++c) {
    const Group& g = ckpt.model.groups[c];
    const std::string p = "c" + std::to_string(c) + "/";
    dump(p + "bn1_rm", g.bn1_rm.data(), {g.bn1_rm.size()});
    dump(p + "bn1_rv", g.bn1_rv.data(), {g.bn1_rv.size()});
    dump(p + "bn2_rm", g.bn2_rm.data(), {g.bn2_rm.size()});
    dump(p + "bn2_rv", g.bn2_rv.data(), {g.bn2_rv.size()});
    dump(p + "bn3_rm", g.bn3_rm.data(), {g.bn3_rm.size()});
    dump(p + "bn3_rv", g.bn3_rv.data(), {g.bn3_rv.size()});
  }
  json mapping_ids = json::array();
  for (const auto& [id, m] : ckpt.mappings.raw) {
    dump("mapping/" + id, m.data(), {m.rows(), m.cols()});
    mapping_ids.push_back(id);
  }
  j["mappings"] = mapping_ids;
  j["tensors"] = tensors;

  std::ofstream out((fs::path(dir) / "params.json").string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream in((fs::path(dir) / "params.json").string());
  if (!in) throw Error("cannot open checkpoint: " + dir);
  json j;
  in >> j;
  if (j.at("format_version").get<int>() != 1)
    throw VersionMismatch("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.config = config_from_json(j.at("config"));
  ckpt.model = Model(ckpt.config, 0);
  ckpt.mappings.gamma = j.at("gamma");
  ckpt.mappings.bins = j.at("bins");
  ckpt.mappings.components = ckpt.config.components;
  if (j.contains("metadata")) ckpt.metadata_json = j.at("metadata").dump();
  for (const auto& pair : j.at("loss_curve"))
    ckpt.loss_curve.emplace_back(pair[0].get<double>(), pair[1].get<double>());

  std::map<std::string, std::pair<std::vector<long>, std::vector<float>>> loaded;
  for (const auto& t : j.at("tensors")) {
    const std::string name = t.at("name");
    const std::string file = t.at("file");
    auto data = store::read_tensor((fs::path(dir) / "tensors" / (file + ".f32")).string());
    const auto shape = t.at("shape").get<std::vector<long>>();
    if (data.first != shape) throw ShapeMismatch("checkpoint tensor shape mismatch: " + name);
    loaded[name] = std::move(data);
  }

  auto fill = [&](const std::string& name, double* dst, long n) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw Error("checkpoint missing tensor: " + name);
    if (static_cast<long>(it->second.second.size()) != n)
      throw ShapeMismatch("checkpoint tensor size mismatch: " + name);
    for (long i = 0; i < n; ++i) dst[i] = it->second.second[i];
  };
  for (ParamRef& r : ckpt.model.param_refs()) fill(r.name, r.value, r.size);
  for (int c = 0; c < ckpt.config.components; ++c) {
    Group& g = ckpt.model.groups[c];
    const std::string p = "c" + std::to_string(c) + "/";
    fill(p + "bn1_rm", g.bn1_rm.data(), g.bn1_rm.size());
    fill(p + "bn1_rv", g.bn1_rv.data(), g.bn1_rv.size());
    fill(p + "bn2_rm", g.bn2_rm.data(), g.bn2_rm.size());
    fill(p + "bn2_rv", g.bn2_rv.data(), g.bn2_rv.size());
    fill(p + "bn3_rm", g.bn3_rm.data(), g.bn3_rm.size());
    fill(p + "bn3_rv", g.bn3_rv.data(), g.bn3_rv.size());
  }
  for (const auto& id : j.at("mappings")) {
    const std::string name = "mapping/" + id.get<std::string>();
    const auto& [shape, data] = loaded.at(name);
    Matrix m(shape[0], shape[1]);
    std::copy(data.begin(), data.end(), m.data());
    ckpt.mappings.raw[id.get<std::string>()] = std::move(m);
  }
  return ckpt;
}

std::uint64_t param_checksum(Model& m) {
  std::uint64_t h = 1469598103934665603ull;
  for (ParamRef& r : m.param_refs()) {
    const char* bytes = reinterpret_cast<const char*>(r.value);
    for (long i = 0; i < r.size * static_cast<long>(sizeof(double)); ++i) {
      h ^= static_cast<unsigned char>(bytes[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

} // namespace eegd3::model
