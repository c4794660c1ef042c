#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

namespace eegd3 {

using CVector = Eigen::VectorXcd;

inline CVector fft_forward(const Eigen::VectorXd& x) {
  Eigen::FFT<double> fft;
  CVector out;
  CVector in = x.cast<std::complex<double>>();
  fft.fwd(out, in);
  return out;
}

inline CVector fft_forward(const CVector& x) {
  Eigen::FFT<double> fft;
  CVector out;
  fft.fwd(out, x);
  return out;
}

inline CVector fft_inverse(const CVector& x) {
  Eigen::FFT<double> fft;
  CVector out;
  fft.inv(out, x);
  return out;
}

inline Eigen::VectorXd fft_inverse_real(const CVector& x) {
  CVector out = fft_inverse(x);
  return out.real();
}

// Frequency in Hz of bin k of a length-n FFT; negative-frequency bins are
// reported as their absolute frequency, matching a real filter response.
inline double bin_abs_freq(Eigen::Index k, Eigen::Index n, double fs) {
  const Eigen::Index kk = (k <= n / 2) ? k : n - k;
  return static_cast<double>(kk) * fs / static_cast<double>(n);
}

inline Eigen::VectorXd rfft_freqs(Eigen::Index n, double fs) {
  const Eigen::Index bins = n / 2 + 1;
  Eigen::VectorXd f(bins);
  for (Eigen::Index k = 0; k < bins; ++k) f[k] = static_cast<double>(k) * fs / static_cast<double>(n);
  return f;
}

} // namespace eegd3
