#include "eegd3/edf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace eegd3::edf {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(' ');
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(' ');
  return s.substr(b, e - b + 1);
}

std::string take(const std::string& buf, size_t& pos, size_t n) {
  std::string out = buf.substr(pos, n);
  pos += n;
  return out;
}

double parse_num(const std::string& field, const char* what) {
  const std::string t = trim(field);
  if (t.empty()) throw MalformedHeader(std::string("empty numeric field: ") + what);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw MalformedHeader(std::string("bad numeric field '") + t + "' for " + what);
  return v;
}

int parse_int(const std::string& field, const char* what) {
  double v = parse_num(field, what);
  if (v != std::floor(v)) throw MalformedHeader(std::string("non-integer field for ") + what);
  return static_cast<int>(v);
}

bool is_annotation(const std::string& label) {
  return trim(label) == "EDF Annotations";
}

} // namespace

EdfFile read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open EDF file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (content.size() < 256) throw MalformedHeader("file shorter than fixed EDF header");
  size_t pos = 0;

  EdfFile f;
  f.version = take(content, pos, 8);
  if (trim(f.version) != "0") throw MalformedHeader("version field is not '0'");
  f.patient_id = trim(take(content, pos, 80));
  f.recording_id = trim(take(content, pos, 80));
  f.start_date = trim(take(content, pos, 8));
  f.start_time = trim(take(content, pos, 8));
  const int header_bytes = parse_int(take(content, pos, 8), "header bytes");
  take(content, pos, 44); // reserved
  f.n_records = parse_int(take(content, pos, 8), "record count");
  f.record_seconds = parse_num(take(content, pos, 8), "record duration");
  const int ns = parse_int(take(content, pos, 4), "signal count");
  if (ns <= 0 || ns > 10000) throw MalformedHeader("implausible signal count");
  if (header_bytes != 256 + 256 * ns) throw MalformedHeader("header size inconsistent with signal count");
  if (content.size() < static_cast<size_t>(header_bytes))
    throw MalformedHeader("file shorter than declared header");

  // Per-signal headers are stored field-major: all labels, then all
  // transducers, and so on.
  f.signals.resize(ns);
  auto field = [&](size_t width) {
    std::vector<std::string> out(ns);
    for (int s = 0; s < ns; ++s) out[s] = take(content, pos, width);
    return out;
  };
  const auto labels = field(16);
  const auto transducers = field(80);
  const auto dims = field(8);
  const auto pmins = field(8);
  const auto pmaxs = field(8);
  const auto dmins = field(8);
  const auto dmaxs = field(8);
  const auto prefs = field(80);
  const auto sprs = field(8);
  field(32); // reserved

  long samples_per_record_total = 0;
  for (int s = 0; s < ns; ++s) {
    SignalHeader& h = f.signals[s];
    h.label = trim(labels[s]);
    h.transducer = trim(transducers[s]);
    h.physical_dim = trim(dims[s]);
    h.physical_min = parse_num(pmins[s], "physical min");
    h.physical_max = parse_num(pmaxs[s], "physical max");
    h.digital_min = parse_int(dmins[s], "digital min");
    h.digital_max = parse_int(dmaxs[s], "digital max");
    h.prefiltering = trim(prefs[s]);
    h.samples_per_record = parse_int(sprs[s], "samples per record");
    if (h.samples_per_record <= 0) throw MalformedHeader("nonpositive samples per record");
    if (h.digital_max <= h.digital_min) throw MalformedHeader("digital max <= digital min");
    samples_per_record_total += h.samples_per_record;
  }

  if (f.n_records < 0) throw MalformedHeader("negative record count");
  const size_t payload = content.size() - header_bytes;
  const size_t expected = static_cast<size_t>(f.n_records) * samples_per_record_total * 2;
  if (payload < expected) throw TruncatedRecord("EDF data records truncated");

  f.digital.resize(ns);
  for (int s = 0; s < ns; ++s)
    f.digital[s].resize(static_cast<size_t>(f.n_records) * f.signals[s].samples_per_record);

  const unsigned char* p = reinterpret_cast<const unsigned char*>(content.data()) + header_bytes;
  for (int r = 0; r < f.n_records; ++r) {
    for (int s = 0; s < ns; ++s) {
      const int spr = f.signals[s].samples_per_record;
      std::int16_t* dst = f.digital[s].data() + static_cast<size_t>(r) * spr;
      for (int k = 0; k < spr; ++k) {
        const std::uint16_t lo = p[0], hi = p[1];
        dst[k] = static_cast<std::int16_t>(lo | (hi << 8));
        p += 2;
      }
    }
  }
  return f;
}

std::vector<char> serialize_payload(const EdfFile& f) {
  std::vector<char> out;
  long total = 0;
  for (const auto& s : f.signals) total += s.samples_per_record;
  out.reserve(static_cast<size_t>(f.n_records) * total * 2);
  for (int r = 0; r < f.n_records; ++r) {
    for (size_t s = 0; s < f.signals.size(); ++s) {
      const int spr = f.signals[s].samples_per_record;
      for (int k = 0; k < spr; ++k) {
        const std::uint16_t v =
            static_cast<std::uint16_t>(f.digital[s][static_cast<size_t>(r) * spr + k]);
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
      }
    }
  }
  return out;
}

RecordingBuffer to_recording(const EdfFile& f, const std::string& subject_id) {
  std::vector<int> keep;
  for (size_t s = 0; s < f.signals.size(); ++s)
    if (!is_annotation(f.signals[s].label)) keep.push_back(static_cast<int>(s));
  if (keep.empty()) throw Error("EDF file contains no data signals");

  const int spr0 = f.signals[keep[0]].samples_per_record;
  for (int s : keep)
    if (f.signals[s].samples_per_record != spr0)
      throw MixedSamplingRates("signals have differing sampling rates");
  if (f.record_seconds <= 0) throw MalformedHeader("nonpositive record duration");

  RecordingBuffer rec;
  rec.fs = spr0 / f.record_seconds;
  rec.subject_id = subject_id.empty() ? f.patient_id : subject_id;
  const long n = static_cast<long>(f.n_records) * spr0;
  rec.samples.resize(static_cast<Eigen::Index>(keep.size()), n);
  for (size_t i = 0; i < keep.size(); ++i) {
    const SignalHeader& h = f.signals[keep[i]];
    rec.channel_names.push_back(h.label);
    const double scale = (h.physical_max - h.physical_min) /
                         (static_cast<double>(h.digital_max) - h.digital_min);
    for (long t = 0; t < n; ++t) {
      const double d = f.digital[keep[i]][t];
      rec.samples(static_cast<Eigen::Index>(i), t) =
          (d - h.digital_min) * scale + h.physical_min;
    }
  }
  if (!rec.samples.allFinite()) throw Error("non-finite samples after calibration");
  return rec;
}

RecordingBuffer read_edf(const std::string& path, const std::string& subject_id) {
  return to_recording(read_file(path), subject_id);
}

RecordingBuffer select_channels(const RecordingBuffer& rec,
                                const std::vector<std::string>& names) {
  RecordingBuffer out;
  out.fs = rec.fs;
  out.subject_id = rec.subject_id;
  out.reference = rec.reference;
  out.samples.resize(static_cast<Eigen::Index>(names.size()), rec.timepoints());
  for (size_t i = 0; i < names.size(); ++i) {
    auto it = std::find(rec.channel_names.begin(), rec.channel_names.end(), names[i]);
    if (it == rec.channel_names.end()) throw MissingChannel("missing channel: " + names[i]);
    out.samples.row(static_cast<Eigen::Index>(i)) =
        rec.samples.row(it - rec.channel_names.begin());
    out.channel_names.push_back(names[i]);
  }
  return out;
}

} // namespace eegd3::edf
