#pragma once

#include "eegd3/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace eegd3::edf {

struct SignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dim;
  double physical_min = 0.0;
  double physical_max = 0.0;
  int digital_min = 0;
  int digital_max = 0;
  std::string prefiltering;
  int samples_per_record = 0;
};

// Digital-level view of an EDF file: headers plus raw 16-bit samples per
// signal, concatenated across data records.
struct EdfFile {
  std::string version;
  std::string patient_id;
  std::string recording_id;
  std::string start_date;
  std::string start_time;
  int n_records = 0;
  double record_seconds = 0.0;
  std::vector<SignalHeader> signals;
  std::vector<std::vector<std::int16_t>> digital; // [signal][sample]
};

EdfFile read_file(const std::string& path);

// Re-serialize the data-record payload (everything after the headers)
// exactly as it would appear on disk.
std::vector<char> serialize_payload(const EdfFile& f);

// Calibrated recording: annotation signals dropped, digital samples mapped to
// physical units. Throws MixedSamplingRates if the remaining signals disagree.
RecordingBuffer to_recording(const EdfFile& f, const std::string& subject_id = "");

RecordingBuffer read_edf(const std::string& path, const std::string& subject_id = "");

RecordingBuffer select_channels(const RecordingBuffer& rec,
                                const std::vector<std::string>& names);

} // namespace eegd3::edf
