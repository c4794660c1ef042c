#include "eegd3/store.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace eegd3::store {

namespace {

std::uint64_t fnv1a(const char* data, size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write: " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string tensor_name(const StoredDataset& ds, const std::string& subject) {
  return ds.dataset_id + "__" + subject;
}

} // namespace

const StoredDataset& Collection::dataset(const std::string& id) const {
  for (const auto& d : datasets)
    if (d.dataset_id == id) return d;
  throw UnknownDataset("unknown dataset: " + id);
}

std::vector<std::string> Collection::subject_ids() const {
  std::set<std::string> s;
  for (const auto& d : datasets)
    for (const auto& t : d.trials) s.insert(t.subject_id);
  return {s.begin(), s.end()};
}

void write_tensor(const std::string& path, const std::vector<long>& shape,
                  const std::vector<float>& data) {
  long n = 1;
  for (long d : shape) n *= d;
  if (n != static_cast<long>(data.size())) throw ShapeMismatch("tensor shape/data mismatch");
  static_assert(sizeof(float) == 4);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write tensor: " + path);
  out.write(reinterpret_cast<const char*>(data.data()), data.size() * 4);
  out.close();

  json meta;
  meta["shape"] = shape;
  meta["dtype"] = "float32";
  meta["checksum"] = hex64(fnv1a(reinterpret_cast<const char*>(data.data()), data.size() * 4));
  write_text(path.substr(0, path.size() - 4) + ".shape.json", meta.dump(2) + "\n");
}

std::pair<std::vector<long>, std::vector<float>> read_tensor(const std::string& path) {
  const json meta = json::parse(read_text(path.substr(0, path.size() - 4) + ".shape.json"));
  std::vector<long> shape = meta.at("shape").get<std::vector<long>>();
  long n = 1;
  for (long d : shape) n *= d;
  const std::string raw = read_text(path);
  if (raw.size() != static_cast<size_t>(n) * 4) throw ShapeMismatch("tensor size mismatch: " + path);
  std::vector<float> data(n);
  std::memcpy(data.data(), raw.data(), raw.size());
  if (hex64(fnv1a(raw.data(), raw.size())) != meta.at("checksum").get<std::string>())
    throw ChecksumMismatch("checksum mismatch: " + path);
  return {shape, data};
}

void write_store(const Collection& c, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "tensors");
  json manifest;
  manifest["format_version"] = c.format_version;
  manifest["provenance"] = c.provenance;
  manifest["datasets"] = json::array();

  for (const auto& ds : c.datasets) {
    // Stack trials per subject into one [n, E, T] tensor, preserving order.
    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<const TrialData*>> by_subject;
    for (const auto& t : ds.trials) {
      if (!by_subject.count(t.subject_id)) subject_order.push_back(t.subject_id);
      by_subject[t.subject_id].push_back(&t);
      if (!t.samples.allFinite()) throw Error("non-finite samples in trial of " + ds.dataset_id);
    }

    json jds;
    jds["dataset_id"] = ds.dataset_id;
    jds["fs"] = ds.fs;
    jds["trial_seconds"] = ds.trial_seconds;
    jds["electrodes"] = ds.electrodes;
    jds["unitless"] = ds.unitless;
    jds["subjects"] = json::array();

    for (const auto& subject : subject_order) {
      const auto& trials = by_subject[subject];
      const long E = trials[0]->samples.rows();
      const long T = trials[0]->samples.cols();
      std::vector<float> flat;
      flat.reserve(trials.size() * E * T);
      json jtrials = json::array();
      for (const TrialData* t : trials) {
        if (t->samples.rows() != E || t->samples.cols() != T)
          throw ShapeMismatch("inconsistent trial shapes in " + ds.dataset_id);
        for (long e = 0; e < E; ++e)
          for (long k = 0; k < T; ++k) flat.push_back(t->samples(e, k));
        json jt;
        jt["valid_start"] = t->valid_start;
        jt["valid_end"] = t->valid_end;
        if (t->label) jt["label"] = *t->label;
        if (!t->condition.empty()) jt["condition"] = t->condition;
        if (t->draw_weight != 1.0) jt["draw_weight"] = t->draw_weight;
        jtrials.push_back(jt);
      }
      const std::string name = tensor_name(ds, subject);
      write_tensor((fs::path(dir) / "tensors" / (name + ".f32")).string(),
                   {static_cast<long>(trials.size()), E, T}, flat);
      json jsub;
      jsub["subject_id"] = subject;
      jsub["tensor"] = name;
      jsub["trials"] = jtrials;
      jds["subjects"].push_back(jsub);
    }
    manifest["datasets"].push_back(jds);
  }
  write_text((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

Collection read_store(const std::string& dir) {
  const json manifest = json::parse(read_text((fs::path(dir) / "manifest.json").string()));
  Collection c;
  c.format_version = manifest.at("format_version").get<int>();
  if (c.format_version != 1)
    throw VersionMismatch("unsupported store format version " + std::to_string(c.format_version));
  c.provenance = manifest.value("provenance", "");

  for (const auto& jds : manifest.at("datasets")) {
    StoredDataset ds;
    ds.dataset_id = jds.at("dataset_id").get<std::string>();
    ds.fs = jds.at("fs").get<double>();
    ds.trial_seconds = jds.at("trial_seconds").get<double>();
    ds.electrodes = jds.at("electrodes").get<std::vector<std::string>>();
    ds.unitless = jds.value("unitless", false);

    for (const auto& jsub : jds.at("subjects")) {
      const std::string subject = jsub.at("subject_id").get<std::string>();
      const std::string tensor = jsub.at("tensor").get<std::string>();
      const std::string tpath = (fs::path(dir) / "tensors" / (tensor + ".f32")).string();
      if (!fs::exists(tpath))
        throw Error("manifest references missing tensor: " + tensor);
      auto [shape, data] = read_tensor(tpath);
      if (shape.size() != 3) throw ShapeMismatch("trial tensor must be rank 3: " + tensor);
      const long n = shape[0], E = shape[1], T = shape[2];
      const auto& jtrials = jsub.at("trials");
      if (static_cast<long>(jtrials.size()) != n)
        throw Error("trial count mismatch for tensor " + tensor);
      for (long i = 0; i < n; ++i) {
        TrialData t;
        t.subject_id = subject;
        t.samples.resize(E, T);
        for (long e = 0; e < E; ++e)
          for (long k = 0; k < T; ++k) t.samples(e, k) = data[(i * E + e) * T + k];
        const auto& jt = jtrials[i];
        t.valid_start = jt.at("valid_start").get<long>();
        t.valid_end = jt.at("valid_end").get<long>();
        if (jt.contains("label")) t.label = jt.at("label").get<int>();
        t.condition = jt.value("condition", "");
        t.draw_weight = jt.value("draw_weight", 1.0);
        ds.trials.push_back(std::move(t));
      }
    }
    c.datasets.push_back(std::move(ds));
  }
  return c;
}

const std::vector<std::string> kStageNames = {"W", "REM", "N1", "N2", "N3"};

std::map<long, int> read_stage_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read stage CSV: " + path);
  std::map<long, int> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("epoch_index", 0) == 0) { first = false; continue; }
    first = false;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("bad stage CSV line: " + line);
    const long idx = std::stol(line.substr(0, comma));
    const std::string stage = line.substr(comma + 1);
    auto it = std::find(kStageNames.begin(), kStageNames.end(), stage);
    if (it == kStageNames.end()) throw Error("unknown sleep stage: " + stage);
    out[idx] = static_cast<int>(it - kStageNames.begin());
  }
  return out;
}

void write_stage_csv(const std::string& path, const std::map<long, int>& stages) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write stage CSV: " + path);
  out << "epoch_index,stage\n";
  for (const auto& [idx, stage] : stages) out << idx << "," << kStageNames.at(stage) << "\n";
}

} // namespace eegd3::store
