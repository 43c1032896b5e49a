#include "signet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>

#include "bytes.hpp"
#include "signet/error.hpp"

namespace signet {

std::vector<int> WindowDataset::labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const WindowRecord& r : records) out.push_back(r.label);
  return out;
}

WindowDataset extract_windows(const std::vector<Recording>& recordings, std::size_t window_length,
                              std::size_t offset) {
  if (window_length == 0) throw ConfigError("window length must be positive");
  WindowDataset ds;
  ds.window_length = window_length;
  for (const Recording& rec : recordings) {
    if (offset + window_length > rec.samples) {
      throw DataError("subject '" + rec.subject_id + "': window [" + std::to_string(offset) +
                      "," + std::to_string(offset + window_length) + ") exceeds " +
                      std::to_string(rec.samples) + " samples");
    }
    for (std::size_t c = 0; c < rec.channels; ++c) {
      Tensor w({1, window_length});
      for (std::size_t i = 0; i < window_length; ++i) {
        w[i] = static_cast<double>(rec.at(c, offset + i));
      }
      ds.records.push_back({std::move(w), rec.label, rec.subject_id, c});
    }
  }
  return ds;
}

namespace {

// Largest-remainder allocation of round(fraction * total) picks across
// classes, proportional to class sizes.
std::vector<std::size_t> allocate_per_class(const std::vector<std::size_t>& class_sizes,
                                            double fraction) {
  const std::size_t total = [&] {
    std::size_t t = 0;
    for (std::size_t n : class_sizes) t += n;
    return t;
  }();
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> take(class_sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;  // (-remainder, class)
  std::size_t allocated = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    const double ideal = fraction * static_cast<double>(class_sizes[c]);
    take[c] = static_cast<std::size_t>(ideal);
    take[c] = std::min(take[c], class_sizes[c]);
    allocated += take[c];
    remainders.emplace_back(-(ideal - static_cast<double>(take[c])), c);
  }
  std::sort(remainders.begin(), remainders.end());
  std::size_t i = 0;
  while (allocated < target && i < remainders.size()) {
    const std::size_t c = remainders[i].second;
    if (take[c] < class_sizes[c]) {
      ++take[c];
      ++allocated;
    }
    ++i;
    if (i == remainders.size() && allocated < target) i = 0;  // rare: wrap for tiny classes
  }
  return take;
}

}  // namespace

Split stratified_split(const WindowDataset& dataset, double test_fraction, std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test fraction must be in (0,1)");
  }
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int lbl = dataset.records[i].label;
    if (lbl != 0 && lbl != 1) throw DataError("label must be 0 or 1");
    by_class[static_cast<std::size_t>(lbl)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("stratified split needs both classes present");
  }
  const std::vector<std::size_t> sizes{by_class[0].size(), by_class[1].size()};
  const std::vector<std::size_t> take = allocate_per_class(sizes, test_fraction);

  Rng rng(seed);
  Split split;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<std::size_t> idx = by_class[c];
    shuffle(idx, rng);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < take[c] ? split.test : split.train).push_back(idx[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

Split stratified_split_subjects(const WindowDataset& dataset, double test_fraction,
                                std::uint64_t seed) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ConfigError("test fraction must be in (0,1)");
  }
  // subject ids in first-appearance order, with their labels
  std::vector<std::string> subjects;
  std::vector<int> subject_label;
  std::vector<std::vector<std::size_t>> windows_of;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const WindowRecord& rec = dataset.records[i];
    std::size_t s = 0;
    for (; s < subjects.size(); ++s) {
      if (subjects[s] == rec.subject_id) break;
    }
    if (s == subjects.size()) {
      subjects.push_back(rec.subject_id);
      subject_label.push_back(rec.label);
      windows_of.emplace_back();
    }
    if (subject_label[s] != rec.label) {
      throw DataError("subject '" + rec.subject_id + "' carries two labels");
    }
    windows_of[s].push_back(i);
  }
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    by_class[static_cast<std::size_t>(subject_label[s] != 0)].push_back(s);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("stratified split needs both classes present");
  }
  const std::vector<std::size_t> take =
      allocate_per_class({by_class[0].size(), by_class[1].size()}, test_fraction);
  Rng rng(seed);
  Split split;
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<std::size_t> order = by_class[c];
    shuffle(order, rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& dst = i < take[c] ? split.test : split.train;
      for (std::size_t w : windows_of[order[i]]) dst.push_back(w);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::size_t> stratified_take(const std::vector<std::size_t>& pool,
                                         const std::vector<int>& labels, double fraction,
                                         Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i : pool) by_class[static_cast<std::size_t>(labels[i] != 0)].push_back(i);
  std::vector<std::size_t> sizes;
  for (const auto& v : by_class) sizes.push_back(v.size());
  const std::vector<std::size_t> take = allocate_per_class(sizes, fraction);
  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<std::size_t> idx = by_class[c];
    shuffle(idx, rng);
    picked.insert(picked.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

// ---- synthetic generator ------------------------------------------------------

namespace {

struct Band {
  double lo_hz, hi_hz;
};
constexpr Band kTheta{4.0, 6.0};
constexpr Band kAlpha{9.0, 13.0};
constexpr int kSinusoidsPerBand = 4;
constexpr int kPinkRows = 8;
constexpr double kNoiseAmp = 0.35;

// Class-dependent band amplitudes; identical at separation 0, increasingly
// alpha-dominant (class 0) vs theta-dominant (class 1) as it grows. The
// shifts are asymmetric, so total power separates along with the spectrum.
void class_band_amps(int label, double separation, double& alpha_amp, double& theta_amp) {
  if (label == 0) {
    alpha_amp = 1.0 + separation;
    theta_amp = std::max(1.0 - 0.75 * separation, 0.05);
  } else {
    alpha_amp = std::max(1.0 - separation, 0.05);
    theta_amp = std::max(1.0 - 0.25 * separation, 0.05);
  }
}

// Voss-McCartney pink noise: kPinkRows uniform generators, row r refreshed
// every 2^r samples; the sample is the row sum scaled to unit-ish range.
class PinkNoise {
 public:
  explicit PinkNoise(Rng rng) : rng_(rng) {
    for (double& r : rows_) r = rng_.next_uniform(-1.0, 1.0);
  }

  double next() {
    for (int r = 0; r < kPinkRows; ++r) {
      if (counter_ % (1u << r) == 0) rows_[r] = rng_.next_uniform(-1.0, 1.0);
    }
    ++counter_;
    double sum = 0.0;
    for (double r : rows_) sum += r;
    return sum / kPinkRows;
  }

 private:
  Rng rng_;
  double rows_[kPinkRows] = {};
  std::uint32_t counter_ = 0;
};

}  // namespace

std::vector<Recording> synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.per_class == 0 || spec.channels == 0 || spec.samples == 0) {
    throw ConfigError("synthetic spec counts must be positive");
  }
  if (spec.sampling_hz <= 0.0) throw ConfigError("sampling rate must be positive");
  if (spec.separation < 0.0) throw ConfigError("separation must be nonnegative");
  std::vector<Recording> out;
  Rng root(seed);
  std::size_t subject_index = 0;
  for (int label = 0; label < 2; ++label) {
    double alpha_amp = 0.0, theta_amp = 0.0;
    class_band_amps(label, spec.separation, alpha_amp, theta_amp);
    for (std::size_t s = 0; s < spec.per_class; ++s, ++subject_index) {
      Recording rec;
      char buf[16];
      std::snprintf(buf, sizeof buf, "sub%03zu", subject_index);
      rec.subject_id = buf;
      rec.label = label;
      rec.channels = spec.channels;
      rec.samples = spec.samples;
      rec.sampling_hz = spec.sampling_hz;
      rec.data.resize(spec.channels * spec.samples);
      Rng subject_rng = root.fork(subject_index + 1);
      // Band frequencies, amplitude jitter and base phases are subject
      // traits shared by every channel (one set of oscillators seen at all
      // electrodes); channels add a small phase lag and independent noise.
      struct Sine {
        double freq, amp, phase;
      };
      std::vector<Sine> sines;
      for (const auto& [band, amp] :
           {std::pair{kAlpha, alpha_amp}, std::pair{kTheta, theta_amp}}) {
        // Stratified frequency draws: one sinusoid per equal sub-interval of
        // the band, so each subject covers the whole band instead of
        // clustering near a random corner of it.
        const double step = (band.hi_hz - band.lo_hz) / kSinusoidsPerBand;
        for (int i = 0; i < kSinusoidsPerBand; ++i) {
          Sine sn;
          sn.freq = band.lo_hz + (static_cast<double>(i) + subject_rng.next_unit()) * step;
          sn.amp = amp / std::sqrt(static_cast<double>(kSinusoidsPerBand)) *
                   subject_rng.next_uniform(0.95, 1.05);
          sn.phase = subject_rng.next_uniform(0.0, 2.0 * std::numbers::pi);
          sines.push_back(sn);
        }
      }
      for (std::size_t c = 0; c < spec.channels; ++c) {
        Rng chan_rng = subject_rng.fork(c + 1);
        std::vector<double> phases;
        phases.reserve(sines.size());
        for (const Sine& sn : sines) {
          phases.push_back(sn.phase + chan_rng.next_uniform(-0.4, 0.4));
        }
        PinkNoise pink(chan_rng.fork(0x9e0f));
        for (std::size_t t = 0; t < spec.samples; ++t) {
          const double time = static_cast<double>(t) / spec.sampling_hz;
          double v = kNoiseAmp * pink.next();
          for (std::size_t i = 0; i < sines.size(); ++i) {
            v += sines[i].amp *
                 std::sin(2.0 * std::numbers::pi * sines[i].freq * time + phases[i]);
          }
          rec.data[c * spec.samples + t] = static_cast<float>(v);
        }
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

// ---- CSV + manifest -------------------------------------------------------------

namespace {

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<Recording> load_recordings(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ParseError("cannot open manifest '" + manifest.string() + "'");
  const std::filesystem::path base = manifest.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(manifest.string() + ":1: empty manifest file");
  {
    auto cols = split_csv_line(line);
    if (cols != std::vector<std::string>{"path", "subject_id", "label", "sampling_hz"}) {
      throw ParseError(manifest.string() + ":1: expected header path,subject_id,label,sampling_hz");
    }
  }
  std::vector<Recording> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cols = split_csv_line(line);
    const std::string ctx = manifest.string() + ":" + std::to_string(line_no);
    if (cols.size() != 4) throw ParseError(ctx + ": expected 4 columns, got " + std::to_string(cols.size()));
    Recording rec;
    rec.subject_id = cols[1];
    if (cols[2] == "0") {
      rec.label = 0;
    } else if (cols[2] == "1") {
      rec.label = 1;
    } else {
      throw ParseError(ctx + ": label must be 0 or 1, got '" + cols[2] + "'");
    }
    try {
      rec.sampling_hz = std::stod(cols[3]);
    } catch (const std::exception&) {
      throw ParseError(ctx + ": bad sampling rate '" + cols[3] + "'");
    }
    if (rec.sampling_hz <= 0.0) throw ParseError(ctx + ": sampling rate must be positive");

    const std::filesystem::path rec_path =
        std::filesystem::path(cols[0]).is_absolute() ? std::filesystem::path(cols[0])
                                                     : base / cols[0];
    std::ifstream rf(rec_path);
    if (!rf) throw ParseError(ctx + ": cannot open recording file '" + rec_path.string() + "'");
    std::string row;
    std::size_t row_no = 0;
    while (std::getline(rf, row)) {
      ++row_no;
      if (row.empty() || row == "\r") continue;
      const auto vals = split_csv_line(row);
      const std::string rctx = rec_path.string() + ":" + std::to_string(row_no);
      if (rec.channels == 0) {
        rec.samples = vals.size();
      } else if (vals.size() != rec.samples) {
        throw ParseError(rctx + ": row has " + std::to_string(vals.size()) + " samples, expected " +
                         std::to_string(rec.samples));
      }
      for (const std::string& v : vals) {
        char* end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0') throw ParseError(rctx + ": malformed sample '" + v + "'");
        if (!std::isfinite(d)) throw ParseError(rctx + ": non-finite sample '" + v + "'");
        rec.data.push_back(static_cast<float>(d));
      }
      ++rec.channels;
    }
    if (rec.channels == 0) throw ParseError(ctx + ": recording file '" + rec_path.string() + "' is empty");
    out.push_back(std::move(rec));
  }
  return out;
}

void write_recording_csv(const std::filesystem::path& path, const Recording& rec) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (std::size_t c = 0; c < rec.channels; ++c) {
    for (std::size_t t = 0; t < rec.samples; ++t) {
      if (t) out << ',';
      out << fmt_float(rec.at(c, t));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, const Recording*>>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "path,subject_id,label,sampling_hz\n";
  for (const auto& [rel_path, rec] : entries) {
    char hz[32];
    std::snprintf(hz, sizeof hz, "%.9g", rec->sampling_hz);
    out << rel_path << ',' << rec->subject_id << ',' << rec->label << ',' << hz << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---- binary cache ---------------------------------------------------------------

namespace {
constexpr char kCacheMagic[8] = {'S', 'G', 'N', 'T', 'D', 'A', 'T', '1'};
}  // namespace

void save_cache(const std::filesystem::path& path, const std::vector<Recording>& recordings) {
  std::string buf;
  buf.append(kCacheMagic, sizeof kCacheMagic);
  bytes::put_u32(buf, static_cast<std::uint32_t>(recordings.size()));
  for (const Recording& rec : recordings) {
    bytes::put_u32(buf, static_cast<std::uint32_t>(rec.subject_id.size()));
    buf += rec.subject_id;
    bytes::put_u32(buf, static_cast<std::uint32_t>(rec.label));
    bytes::put_u64(buf, rec.channels);
    bytes::put_u64(buf, rec.samples);
    bytes::put_f64(buf, rec.sampling_hz);
    for (float v : rec.data) bytes::put_f32(buf, v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Recording> load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open cache '" + path.string() + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes::Reader r(buf, path.string());
  if (r.bytes(sizeof kCacheMagic) != std::string(kCacheMagic, sizeof kCacheMagic)) {
    throw ParseError("'" + path.string() + "': not a recording cache");
  }
  const std::uint32_t count = r.u32();
  std::vector<Recording> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Recording rec;
    rec.subject_id = r.bytes(r.u32());
    rec.label = static_cast<int>(r.u32());
    rec.channels = r.u64();
    rec.samples = r.u64();
    rec.sampling_hz = r.f64();
    rec.data.resize(rec.channels * rec.samples);
    for (float& v : rec.data) v = r.f32();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace signet
