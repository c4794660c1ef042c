#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegd3 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Array = Eigen::ArrayXd;

// Base of all library errors; subcommands map these to nonzero exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MalformedHeader : Error { using Error::Error; };
struct MixedSamplingRates : Error { using Error::Error; };
struct TruncatedRecord : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct ChecksumMismatch : Error { using Error::Error; };
struct MissingChannel : Error { using Error::Error; };
struct FrequencyAboveNyquist : Error { using Error::Error; };
struct InvalidBand : Error { using Error::Error; };
struct SignalTooShort : Error { using Error::Error; };
struct TrialTooShort : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct UnknownDataset : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct TooFewSubjects : Error { using Error::Error; };
struct TooFewTrials : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct DivergenceDetected : Error { using Error::Error; };
struct BudgetExceedsPool : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// Multichannel recording: rows are channels, columns are timepoints.
struct RecordingBuffer {
  Matrix samples;                         // [channels x timepoints]
  double fs = 0.0;                        // Hz
  std::vector<std::string> channel_names; // size == samples.rows()
  std::string subject_id;
  std::string reference = "unknown";      // electrode label, "CAR" or "unknown"

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index timepoints() const { return samples.cols(); }
};

// One fixed-length trial cut from a recording. `recording` indexes into the
// owning collection's buffer list. valid_span marks the non-padded region.
struct Trial {
  int recording = 0;      // index into buffers
  long start = 0;         // sample offset within the recording
  long length = 0;        // samples
  std::string subject_id;
  long valid_start = 0;   // samples, relative to trial start
  long valid_end = 0;     // exclusive
  std::optional<int> label;      // downstream class label, if any
  std::string condition;         // free-form tag, e.g. "MI"/"ME"/"control"
  double draw_weight = 1.0;      // relative oversampling weight within the dataset
};

struct TrialTable {
  std::string dataset_id;
  double trial_seconds = 0.0;
  std::vector<Trial> trials;
};

struct DatasetEntry {
  std::string dataset_id;
  std::vector<std::string> electrodes;
  double fs = 0.0;
  double trial_seconds = 0.0;
  std::vector<std::string> tensor_files; // one stacked tensor per subject
  std::string notes;
};

struct DatasetManifest {
  int format_version = 1;
  std::vector<DatasetEntry> datasets;
  std::string provenance;
};

// A windowed model input: [E x T].
struct WindowSample {
  Matrix samples;
  double fs = 0.0;
  int trial_index = -1;
  double start_seconds = 0.0; // offset of the window within the trial
};

} // namespace eegd3
