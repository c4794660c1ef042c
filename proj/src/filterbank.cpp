#include "eegd3/filterbank.hpp"

#include <cmath>

namespace eegd3::filterbank {

namespace {
const double kLn2 = std::log(2.0);
const double kLnLn2 = std::log(kLn2); // negative
} // namespace

double GaussianFilterParams::alpha() const {
  return h / (2.0 * std::pow(kLn2, 1.0 / beta));
}

GaussianFilterParams clamp_params(const GaussianFilterParams& p, double fs) {
  GaussianFilterParams out = p;
  out.mu = std::clamp(out.mu, 0.0, fs / 2.0);
  out.h = std::clamp(out.h, 1.0, fs);
  out.beta = std::clamp(out.beta, 1.0, 16.0);
  return out;
}

Array magnitude_response(const GaussianFilterParams& p, const Array& freqs) {
  const double a = p.alpha();
  Array out(freqs.size());
  for (Eigen::Index i = 0; i < freqs.size(); ++i) {
    const double u = std::abs(freqs[i] - p.mu) / a;
    out[i] = std::exp(-std::pow(u, p.beta));
  }
  return out;
}

void response_gradients(const GaussianFilterParams& p, const Array& freqs, Array& dmu,
                        Array& dh, Array& dbeta) {
  const double a = p.alpha();
  dmu.resize(freqs.size());
  dh.resize(freqs.size());
  dbeta.resize(freqs.size());
  for (Eigen::Index i = 0; i < freqs.size(); ++i) {
    const double diff = freqs[i] - p.mu;
    const double u = std::abs(diff) / a;
    if (u == 0.0) {
      // Response peak: flat in h and beta; subgradient 0 for the |x-mu| kink.
      dmu[i] = dh[i] = dbeta[i] = 0.0;
      continue;
    }
    const double ub = std::pow(u, p.beta);
    const double F = std::exp(-ub);
    const double sign = diff > 0.0 ? 1.0 : -1.0;
    dmu[i] = F * p.beta * std::pow(u, p.beta - 1.0) * sign / a;
    dh[i] = F * p.beta * ub / p.h;
    dbeta[i] = -F * ub * (std::log(u) - kLnLn2 / p.beta);
  }
}

std::vector<Matrix> apply_filter(const Matrix& window,
                                 const std::vector<GaussianFilterParams>& params, double fs,
                                 ApplyCache* cache) {
  const Eigen::Index E = window.rows();
  const Eigen::Index T = window.cols();
  if (T < 2) throw ShapeMismatch("apply_filter requires T >= 2");

  Array freqs_full(T);
  for (Eigen::Index k = 0; k < T; ++k) freqs_full[k] = bin_abs_freq(k, T, fs);

  std::vector<CVector> X(E);
  for (Eigen::Index e = 0; e < E; ++e) X[e] = fft_forward(Vector(window.row(e).transpose()));

  std::vector<Matrix> out;
  out.reserve(params.size());
  std::vector<Array> responses;
  for (const auto& p : params) {
    const Array F = magnitude_response(p, freqs_full);
    Matrix slice(E, T);
    for (Eigen::Index e = 0; e < E; ++e) {
      CVector Y = X[e].array() * F.cast<std::complex<double>>();
      slice.row(e) = fft_inverse_real(Y).transpose();
    }
    out.push_back(std::move(slice));
    if (cache) responses.push_back(F);
  }

  if (cache) {
    cache->fs = fs;
    cache->T = T;
    cache->input_fft = std::move(X);
    cache->response_full = std::move(responses);
    cache->freqs_full = std::move(freqs_full);
  }
  return out;
}

FilterGrads apply_filter_backward(const ApplyCache& cache, const GaussianFilterParams& p,
                                  const Matrix& grad_out, Matrix* grad_input) {
  const Eigen::Index E = grad_out.rows();
  const Eigen::Index T = grad_out.cols();
  const double invT = 1.0 / static_cast<double>(T);

  Array dmu, dh, dbeta;
  response_gradients(p, cache.freqs_full, dmu, dh, dbeta);
  const Array resp = magnitude_response(p, cache.freqs_full);

  FilterGrads g;
  if (grad_input && grad_input->size() == 0) grad_input->setZero(E, T);
  for (Eigen::Index e = 0; e < E; ++e) {
    const CVector G = fft_forward(Vector(grad_out.row(e).transpose()));
    // dL/dF_k = (1/T) Re( X_k * conj(G_k) ) summed over electrodes.
    for (Eigen::Index k = 0; k < T; ++k) {
      const double dF = invT * (cache.input_fft[e][k] * std::conj(G[k])).real();
      g.mu += dF * dmu[k];
      g.h += dF * dh[k];
      g.beta += dF * dbeta[k];
    }
    if (grad_input) {
      CVector Y = G.array() * resp.cast<std::complex<double>>();
      grad_input->row(e) += fft_inverse_real(Y).transpose();
    }
  }
  return g;
}

} // namespace eegd3::filterbank
