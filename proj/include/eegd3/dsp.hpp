#pragma once

#include "eegd3/rng.hpp"
#include "eegd3/store.hpp"
#include "eegd3/types.hpp"

namespace eegd3::dsp {

// Second-order section, a0 normalized to 1.
struct Sos {
  double b0, b1, b2, a1, a2;
};

std::vector<Sos> butter_bandpass_sos(double lo, double hi, double fs, int order);
Sos notch_biquad(double freq, double fs, double q);

Vector sosfilt(const std::vector<Sos>& sos, const Vector& x);

// Forward-backward filtering with odd-reflection edge padding.
// padlen <= 0 selects the default 3 * (2 * sections + 1).
Vector filtfilt(const std::vector<Sos>& sos, const Vector& x, long padlen = -1);

// Row-wise zero-phase filters on [E x T] data.
Matrix notch(const Matrix& x, double fs, const std::vector<double>& freqs, double q = 30.0);
Matrix bandpass_zerophase(const Matrix& x, double fs, double lo, double hi, int order = 3);

RecordingBuffer notch(const RecordingBuffer& rec, const std::vector<double>& freqs);
RecordingBuffer butter_bandpass_zerophase(const RecordingBuffer& rec, double lo, double hi,
                                          int order = 3);

Vector resample_fft(const Vector& x, double fs_in, double fs_out);
RecordingBuffer resample_fft(const RecordingBuffer& rec, double fs_out);

// Standardize each electrode to zero mean / unit population std (epsilon
// 1e-8), then subtract the across-electrode mean at each timepoint.
Matrix standardize_then_car(const Matrix& window);

// Uniformly sample a window inside the trial's valid span.
WindowSample sample_window(const store::TrialData& trial, double fs, double window_seconds,
                           Rng& rng);

} // namespace eegd3::dsp
