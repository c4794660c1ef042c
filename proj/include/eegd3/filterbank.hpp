#pragma once

#include "eegd3/fftutil.hpp"
#include "eegd3/types.hpp"

namespace eegd3::filterbank {

// Generalized Gaussian magnitude response over frequency: centre mu (Hz),
// full-width-at-half-maximum h (Hz) and shape exponent beta.
struct GaussianFilterParams {
  double mu = 24.0;
  double h = 48.0;
  double beta = 2.0;

  double alpha() const;
};

// Projection box for the trainable parameters.
struct ParamBounds {
  double mu_lo = 0.0, mu_hi = 0.0; // mu_hi filled with fs/2 by clamp()
  double h_lo = 1.0, h_hi = 0.0;   // h_hi filled with fs
  double beta_lo = 1.0, beta_hi = 16.0;
};

GaussianFilterParams clamp_params(const GaussianFilterParams& p, double fs);

// Response at a single frequency, templated so expression types work too.
template <typename Scalar>
Scalar magnitude_response_at(Scalar mu, Scalar h, Scalar beta, Scalar freq) {
  using std::abs; using std::exp; using std::log; using std::pow;
  const Scalar alpha = h / (Scalar(2) * pow(log(Scalar(2)), Scalar(1) / beta));
  const Scalar u = abs(freq - mu) / alpha;
  return exp(-pow(u, beta));
}

Array magnitude_response(const GaussianFilterParams& p, const Array& freqs);

struct FilterGrads {
  double mu = 0.0, h = 0.0, beta = 0.0;
};

// d response / d {mu, h, beta} at each frequency.
void response_gradients(const GaussianFilterParams& p, const Array& freqs, Array& dmu,
                        Array& dh, Array& dbeta);

// Cache of the forward pass, reused by the backward pass.
struct ApplyCache {
  double fs = 0.0;
  Eigen::Index T = 0;
  std::vector<CVector> input_fft;       // per electrode
  std::vector<Array> response_full;     // per component, length T (mirrored bins)
  Array freqs_full;                     // |frequency| of each full-spectrum bin
};

// Filter an [E x T] window with one response per component -> C slices [E x T].
std::vector<Matrix> apply_filter(const Matrix& window,
                                 const std::vector<GaussianFilterParams>& params, double fs,
                                 ApplyCache* cache = nullptr);

// Given dL/d(output slice c), accumulate parameter gradients and, if
// grad_input is non-null, dL/d(input window).
FilterGrads apply_filter_backward(const ApplyCache& cache, const GaussianFilterParams& p,
                                  const Matrix& grad_out, Matrix* grad_input = nullptr);

} // namespace eegd3::filterbank
