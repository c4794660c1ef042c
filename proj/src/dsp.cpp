#include "eegd3/dsp.hpp"

#include "eegd3/fftutil.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace eegd3::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Evaluate the cascade response at normalized angular frequency w.
cplx sos_response(const std::vector<Sos>& sos, double w) {
  const cplx z1 = std::exp(cplx(0.0, -w));
  const cplx z2 = z1 * z1;
  cplx h = 1.0;
  for (const Sos& s : sos)
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

} // namespace

std::vector<Sos> butter_bandpass_sos(double lo, double hi, double fs, int order) {
  if (!(lo > 0.0) || !(lo < hi) || !(hi < fs / 2.0)) throw InvalidBand("require 0 < lo < hi < fs/2");
  if (order < 1) throw InvalidBand("order must be >= 1");

  // Analog Butterworth prototype poles on the left unit semicircle.
  std::vector<cplx> proto;
  for (int k = 1; k <= order; ++k) {
    const double theta = kPi * (2.0 * k + order - 1.0) / (2.0 * order);
    proto.emplace_back(std::cos(theta), std::sin(theta));
  }

  const double w1 = 2.0 * fs * std::tan(kPi * lo / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * hi / fs);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);

  // Lowpass-to-bandpass transform doubles the pole count.
  std::vector<cplx> apoles;
  for (const cplx& p : proto) {
    const cplx pb = p * bw / 2.0;
    const cplx d = std::sqrt(pb * pb - w0 * w0);
    apoles.push_back(pb + d);
    apoles.push_back(pb - d);
  }

  // Bilinear transform.
  std::vector<cplx> zpoles;
  for (const cplx& s : apoles) zpoles.push_back((2.0 * fs + s) / (2.0 * fs - s));

  // Pair conjugates into sections; remaining real poles pair up sorted.
  std::vector<std::pair<cplx, cplx>> pairs;
  std::vector<double> reals;
  const double tol = 1e-10;
  for (const cplx& p : zpoles) {
    if (p.imag() > tol)
      pairs.emplace_back(p, std::conj(p));
    else if (std::abs(p.imag()) <= tol)
      reals.push_back(p.real());
  }
  std::sort(reals.begin(), reals.end());
  for (size_t i = 0; i + 1 < reals.size(); i += 2)
    pairs.emplace_back(cplx(reals[i], 0.0), cplx(reals[i + 1], 0.0));
  if (static_cast<int>(pairs.size()) != order)
    throw Error("internal: unexpected pole pairing in bandpass design");

  // Each section carries one zero at z=1 and one at z=-1: numerator 1 - z^-2.
  std::vector<Sos> sos;
  for (const auto& [p, q] : pairs) {
    Sos s{};
    s.b0 = 1.0; s.b1 = 0.0; s.b2 = -1.0;
    s.a1 = -(p + q).real();
    s.a2 = (p * q).real();
    sos.push_back(s);
  }

  // Unit gain at the warped centre frequency.
  const double wc = 2.0 * std::atan(w0 / (2.0 * fs));
  const double g = std::abs(sos_response(sos, wc));
  sos[0].b0 /= g; sos[0].b1 /= g; sos[0].b2 /= g;
  return sos;
}

Sos notch_biquad(double freq, double fs, double q) {
  if (freq >= fs / 2.0) throw FrequencyAboveNyquist("notch frequency at or above Nyquist");
  const double w0 = 2.0 * kPi * freq / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Sos s{};
  s.b0 = 1.0 / a0;
  s.b1 = -2.0 * std::cos(w0) / a0;
  s.b2 = 1.0 / a0;
  s.a1 = -2.0 * std::cos(w0) / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

Vector sosfilt(const std::vector<Sos>& sos, const Vector& x) {
  Vector y = x;
  for (const Sos& s : sos) {
    // Steady-state initial conditions scaled by the first sample keep edge
    // transients small after reflection padding.
    const double denom = 1.0 + s.a1 + s.a2;
    const double dc = (std::abs(denom) > 1e-12) ? (s.b0 + s.b1 + s.b2) / denom : 0.0;
    double z1 = (dc - s.b0) * y[0];
    double z2 = (s.b2 - s.a2 * dc) * y[0];
    for (Eigen::Index n = 0; n < y.size(); ++n) {
      const double xn = y[n];
      const double yn = s.b0 * xn + z1;
      z1 = s.b1 * xn - s.a1 * yn + z2;
      z2 = s.b2 * xn - s.a2 * yn;
      y[n] = yn;
    }
  }
  return y;
}

Vector filtfilt(const std::vector<Sos>& sos, const Vector& x, long padlen) {
  if (padlen < 0) padlen = 3 * (2 * static_cast<long>(sos.size()) + 1);
  const long n = x.size();
  if (n <= padlen) throw SignalTooShort("signal shorter than filtfilt padding");

  Vector padded(n + 2 * padlen);
  for (long i = 0; i < padlen; ++i) padded[i] = 2.0 * x[0] - x[padlen - i];
  padded.segment(padlen, n) = x;
  for (long i = 0; i < padlen; ++i) padded[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  Vector y = sosfilt(sos, padded);
  y.reverseInPlace();
  y = sosfilt(sos, y);
  y.reverseInPlace();
  return y.segment(padlen, n);
}

Matrix notch(const Matrix& x, double fs, const std::vector<double>& freqs, double q) {
  Matrix out = x;
  for (double f : freqs) {
    const std::vector<Sos> sos = {notch_biquad(f, fs, q)};
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      out.row(r) = filtfilt(sos, out.row(r).transpose()).transpose();
  }
  return out;
}

Matrix bandpass_zerophase(const Matrix& x, double fs, double lo, double hi, int order) {
  const std::vector<Sos> sos = butter_bandpass_sos(lo, hi, fs, order);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    out.row(r) = filtfilt(sos, x.row(r).transpose()).transpose();
  return out;
}

RecordingBuffer notch(const RecordingBuffer& rec, const std::vector<double>& freqs) {
  RecordingBuffer out = rec;
  out.samples = notch(rec.samples, rec.fs, freqs);
  return out;
}

RecordingBuffer butter_bandpass_zerophase(const RecordingBuffer& rec, double lo, double hi,
                                          int order) {
  RecordingBuffer out = rec;
  out.samples = bandpass_zerophase(rec.samples, rec.fs, lo, hi, order);
  return out;
}

Vector resample_fft(const Vector& x, double fs_in, double fs_out) {
  if (fs_out > fs_in) throw Error("resample_fft: upsampling not supported");
  const long n = x.size();
  const long m = std::lround(static_cast<double>(n) * fs_out / fs_in);
  if (m == n && fs_out == fs_in) return x;

  const CVector X = fft_forward(x);
  CVector Y = CVector::Zero(m);
  const long half = m / 2;
  for (long k = 0; k <= half && k <= n / 2; ++k) Y[k] = X[k];
  for (long k = 1; k < m - half; ++k) Y[m - k] = X[n - k];
  if (m % 2 == 0 && half <= n / 2) Y[half] = cplx(X[half].real(), 0.0); // fold Nyquist bin

  Vector y = fft_inverse_real(Y);
  return y * (static_cast<double>(m) / static_cast<double>(n));
}

RecordingBuffer resample_fft(const RecordingBuffer& rec, double fs_out) {
  RecordingBuffer out = rec;
  out.fs = fs_out;
  const Vector first = resample_fft(Vector(rec.samples.row(0).transpose()), rec.fs, fs_out);
  out.samples.resize(rec.channels(), first.size());
  out.samples.row(0) = first.transpose();
  for (Eigen::Index r = 1; r < rec.channels(); ++r)
    out.samples.row(r) =
        resample_fft(Vector(rec.samples.row(r).transpose()), rec.fs, fs_out).transpose();
  return out;
}

Matrix standardize_then_car(const Matrix& window) {
  Matrix out = window;
  const double n = static_cast<double>(window.cols());
  for (Eigen::Index e = 0; e < window.rows(); ++e) {
    const double mean = out.row(e).mean();
    out.row(e).array() -= mean;
    const double sd = std::sqrt(out.row(e).squaredNorm() / n);
    out.row(e) /= (sd + 1e-8);
  }
  out.rowwise() -= out.colwise().mean();
  return out;
}

WindowSample sample_window(const store::TrialData& trial, double fs, double window_seconds,
                           Rng& rng) {
  const long tw = std::lround(window_seconds * fs);
  const long lo = trial.valid_start;
  const long hi = trial.valid_end - tw; // inclusive upper bound for the start
  if (hi < lo) throw TrialTooShort("valid span shorter than window");
  const long start = lo + std::uniform_int_distribution<long>(0, hi - lo)(rng);

  WindowSample w;
  w.fs = fs;
  w.start_seconds = static_cast<double>(start) / fs;
  w.samples = trial.samples.block(0, start, trial.samples.rows(), tw).cast<double>();
  return w;
}

} // namespace eegd3::dsp
