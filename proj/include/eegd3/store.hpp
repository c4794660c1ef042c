#pragma once

#include "eegd3/types.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace eegd3::store {

// One fixed-length trial held in memory. Samples are float32, matching the
// on-disk representation so round trips are bit-exact.
struct TrialData {
  std::string subject_id;
  Eigen::MatrixXf samples; // [E x T]
  long valid_start = 0;    // samples, relative to trial start
  long valid_end = 0;      // exclusive
  std::optional<int> label;
  std::string condition;
  double draw_weight = 1.0;
};

struct StoredDataset {
  std::string dataset_id;
  double fs = 0.0;
  double trial_seconds = 0.0;
  std::vector<std::string> electrodes;
  bool unitless = false; // source scale unknown (standardization makes it moot)
  std::vector<TrialData> trials;
};

struct Collection {
  int format_version = 1;
  std::string provenance;
  std::vector<StoredDataset> datasets;

  const StoredDataset& dataset(const std::string& id) const;
  std::vector<std::string> subject_ids() const; // unique, sorted
};

// Raw little-endian float32 tensor with a JSON shape/checksum sidecar.
void write_tensor(const std::string& path, const std::vector<long>& shape,
                  const std::vector<float>& data);
std::pair<std::vector<long>, std::vector<float>> read_tensor(const std::string& path);

void write_store(const Collection& c, const std::string& dir);
Collection read_store(const std::string& dir);

// Sidecar sleep-stage labels: CSV `epoch_index,stage`, stages W/REM/N1/N2/N3.
extern const std::vector<std::string> kStageNames;
std::map<long, int> read_stage_csv(const std::string& path);
void write_stage_csv(const std::string& path, const std::map<long, int>& stages);

} // namespace eegd3::store
