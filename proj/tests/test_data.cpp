#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "signet/data.hpp"
#include "signet/error.hpp"

using namespace signet;

namespace {

namespace fs = std::filesystem;

fs::path make_temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("signet_data_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Power in [lo,hi] Hz via a direct DFT over just those bins.
double band_power(const Tensor& window, double fs, double lo, double hi) {
  const std::size_t n = window.numel();
  const std::size_t k_lo = static_cast<std::size_t>(std::ceil(lo * static_cast<double>(n) / fs));
  const std::size_t k_hi = static_cast<std::size_t>(std::floor(hi * static_cast<double>(n) / fs));
  double power = 0.0;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      re += window[t] * std::cos(ang);
      im -= window[t] * std::sin(ang);
    }
    power += re * re + im * im;
  }
  return power / static_cast<double>(n * n);
}

Recording counting_recording(const std::string& id, int label, std::size_t channels,
                             std::size_t samples, float base) {
  Recording rec;
  rec.subject_id = id;
  rec.label = label;
  rec.channels = channels;
  rec.samples = samples;
  rec.data.resize(channels * samples);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < samples; ++t) {
      rec.data[c * samples + t] = base + static_cast<float>(c * samples + t);
    }
  }
  return rec;
}

WindowDataset labeled_dataset(std::size_t n_class0, std::size_t n_class1, std::size_t length = 4) {
  WindowDataset ds;
  ds.window_length = length;
  for (std::size_t i = 0; i < n_class0 + n_class1; ++i) {
    WindowRecord rec;
    rec.window = Tensor({1, length}, static_cast<double>(i));
    rec.label = i < n_class0 ? 0 : 1;
    rec.subject_id = "w" + std::to_string(i);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace

TEST_CASE("extract_windows: one window per channel per subject") {
  std::vector<Recording> recs;
  for (int s = 0; s < 57; ++s) {
    recs.push_back(counting_recording("s" + std::to_string(s), s % 2, 20, 2100,
                                      static_cast<float>(1000 * s)));
  }
  WindowDataset ds = extract_windows(recs, 2000, 0);
  CHECK(ds.size() == 1140);  // 57 * 20
  CHECK(ds.window_length == 2000);
}

TEST_CASE("extract_windows: single channel equals the slice; offsets shift it") {
  Recording rec = counting_recording("only", 1, 1, 10, 0.0f);
  {
    WindowDataset ds = extract_windows({rec}, 6, 0);
    REQUIRE(ds.size() == 1);
    for (std::size_t i = 0; i < 6; ++i) CHECK(ds.records[0].window[i] == static_cast<double>(i));
    CHECK(ds.records[0].label == 1);
    CHECK(ds.records[0].subject_id == "only");
  }
  {
    WindowDataset a = extract_windows({rec}, 6, 0);
    WindowDataset b = extract_windows({rec}, 6, 4);
    CHECK(a.records[0].window.numel() == b.records[0].window.numel());
    CHECK(b.records[0].window[0] == 4.0);
  }
}

TEST_CASE("extract_windows: sentinel values never cross channels or subjects") {
  std::vector<Recording> recs;
  recs.push_back(counting_recording("a", 0, 3, 50, 0.0f));
  recs.push_back(counting_recording("b", 1, 2, 50, 100000.0f));
  WindowDataset ds = extract_windows(recs, 50, 0);
  REQUIRE(ds.size() == 5);
  std::set<double> firsts;
  for (const WindowRecord& rec : ds.records) {
    firsts.insert(rec.window[0]);
    // windows are contiguous runs, so consecutive samples differ by exactly 1
    for (std::size_t i = 1; i < 50; ++i) {
      CHECK(rec.window[i] - rec.window[i - 1] == 1.0);
    }
  }
  CHECK(firsts == std::set<double>{0.0, 50.0, 100.0, 100000.0, 100050.0});
}

TEST_CASE("extract_windows: too-long window names the subject") {
  Recording rec = counting_recording("shorty", 0, 1, 30, 0.0f);
  CHECK_THROWS_WITH_AS(extract_windows({rec}, 40, 0), doctest::Contains("shorty"), DataError);
  CHECK_THROWS_AS(extract_windows({rec}, 30, 1), DataError);
}

TEST_CASE("stratified_split reproduces the fixture sizes") {
  {
    WindowDataset ds = labeled_dataset(551, 551);
    Split split = stratified_split(ds, 0.30, 1);
    CHECK(split.train.size() == 771);
    CHECK(split.test.size() == 331);
  }
  {
    WindowDataset ds = labeled_dataset(285, 285);
    Split split = stratified_split(ds, 0.30, 1);
    CHECK(split.train.size() == 399);
    CHECK(split.test.size() == 171);
  }
  {
    // uneven classes follow the same rounding
    WindowDataset ds = labeled_dataset(650, 452);
    Split split = stratified_split(ds, 0.30, 9);
    CHECK(split.train.size() == 771);
    CHECK(split.test.size() == 331);
  }
}

TEST_CASE("stratified_split: small fixture keeps both classes in test") {
  WindowDataset ds = labeled_dataset(5, 5);
  Split split = stratified_split(ds, 0.30, 3);
  CHECK(split.train.size() == 7);
  CHECK(split.test.size() == 3);
  bool has0 = false, has1 = false;
  for (std::size_t i : split.test) {
    (ds.records[i].label == 0 ? has0 : has1) = true;
  }
  CHECK(has0);
  CHECK(has1);
}

TEST_CASE("stratified_split: determinism, disjoint cover, stratification bound") {
  WindowDataset ds = labeled_dataset(120, 80);
  Split a = stratified_split(ds, 0.30, 77);
  Split b = stratified_split(ds, 0.30, 77);
  Split c = stratified_split(ds, 0.30, 78);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.test != c.test);

  std::set<std::size_t> seen;
  for (std::size_t i : a.train) seen.insert(i);
  for (std::size_t i : a.test) seen.insert(i);
  CHECK(seen.size() == ds.size());

  // per-class test fraction within 2 points of 30%
  for (int label = 0; label < 2; ++label) {
    double total = 0.0, tested = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.records[i].label == label) total += 1.0;
    }
    for (std::size_t i : a.test) {
      if (ds.records[i].label == label) tested += 1.0;
    }
    CHECK(std::abs(tested / total - 0.30) <= 0.02);
  }
}

TEST_CASE("stratified_split rejects single-class data") {
  WindowDataset ds = labeled_dataset(10, 0);
  CHECK_THROWS_AS(stratified_split(ds, 0.30, 1), DataError);
}

TEST_CASE("synth_generate: identical seeds give bit-identical recordings") {
  SynthSpec spec;
  spec.per_class = 2;
  spec.channels = 3;
  spec.samples = 500;
  auto a = synth_generate(spec, 99);
  auto b = synth_generate(spec, 99);
  auto c = synth_generate(spec, 100);
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  CHECK(a.size() == c.size());
  bool any_diff = false;
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].subject_id == b[r].subject_id);
    CHECK(a[r].data == b[r].data);
    any_diff = any_diff || a[r].data != c[r].data;
  }
  CHECK(any_diff);
}

TEST_CASE("synth_generate: zero separation is statistically indistinguishable") {
  SynthSpec spec;
  spec.per_class = 25;
  spec.channels = 4;
  spec.samples = 2000;
  spec.separation = 0.0;
  auto recs = synth_generate(spec, 1234);
  WindowDataset ds = extract_windows(recs, 2000, 0);
  REQUIRE(ds.size() == 200);
  // two-sample mean test on alpha band power at alpha = 0.01
  std::vector<double> p0, p1;
  for (const WindowRecord& rec : ds.records) {
    const double p = band_power(rec.window, spec.sampling_hz, 8.0, 13.0);
    (rec.label == 0 ? p0 : p1).push_back(p);
  }
  auto mean_var = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(v.size() - 1);
    return std::pair{m, s2};
  };
  auto [m0, v0] = mean_var(p0);
  auto [m1, v1] = mean_var(p1);
  const double z = std::abs(m0 - m1) / std::sqrt(v0 / static_cast<double>(p0.size()) +
                                                 v1 / static_cast<double>(p1.size()));
  CHECK(z < 2.576);  // fails to reject at alpha = 0.01
}

TEST_CASE("synth_generate: separation 1 is separable by an alpha-power threshold") {
  SynthSpec spec;
  spec.per_class = 25;
  spec.channels = 4;
  spec.samples = 2000;
  spec.separation = 1.0;
  auto recs = synth_generate(spec, 777);
  WindowDataset ds = extract_windows(recs, 2000, 0);
  std::vector<std::pair<double, int>> scored;
  for (const WindowRecord& rec : ds.records) {
    scored.emplace_back(band_power(rec.window, spec.sampling_hz, 8.0, 13.0), rec.label);
  }
  std::sort(scored.begin(), scored.end());
  // brute-force threshold sweep, both orientations
  std::size_t best = 0;
  for (std::size_t cut = 0; cut <= scored.size(); ++cut) {
    std::size_t correct_lo1 = 0, correct_lo0 = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      const bool below = i < cut;
      if (below == (scored[i].second == 1)) ++correct_lo1;
      if (below == (scored[i].second == 0)) ++correct_lo0;
    }
    best = std::max({best, correct_lo1, correct_lo0});
  }
  const double accuracy = static_cast<double>(best) / static_cast<double>(scored.size());
  CHECK(accuracy >= 0.90);
}

TEST_CASE("manifest loading: empty manifest, simple file, error paths") {
  const fs::path dir = make_temp_dir("manifest");
  {
    std::ofstream m(dir / "empty.csv");
    m << "path,subject_id,label,sampling_hz\n";
  }
  CHECK(load_recordings(dir / "empty.csv").empty());

  {
    std::ofstream rec(dir / "rec0.csv");
    rec << "1,2,3,4,5,6,7,8,9,10\n";
    rec << "-1,-2,-3,-4,-5,-6,-7,-8,-9,-10\n";
    std::ofstream m(dir / "ok.csv");
    m << "path,subject_id,label,sampling_hz\n";
    m << "rec0.csv,subj0,1,250\n";
  }
  auto recs = load_recordings(dir / "ok.csv");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].channels == 2);
  CHECK(recs[0].samples == 10);
  CHECK(recs[0].label == 1);
  CHECK(recs[0].subject_id == "subj0");
  CHECK(recs[0].at(1, 2) == -3.0f);

  {
    std::ofstream m(dir / "missing.csv");
    m << "path,subject_id,label,sampling_hz\n";
    m << "nowhere.csv,subj0,1,250\n";
  }
  CHECK_THROWS_WITH_AS(load_recordings(dir / "missing.csv"), doctest::Contains("nowhere.csv"),
                       ParseError);

  {
    std::ofstream m(dir / "badlabel.csv");
    m << "path,subject_id,label,sampling_hz\n";
    m << "rec0.csv,subj0,2,250\n";
  }
  CHECK_THROWS_WITH_AS(load_recordings(dir / "badlabel.csv"), doctest::Contains("label"),
                       ParseError);

  {
    std::ofstream rec(dir / "ragged.csv");
    rec << "1,2,3\n1,2\n";
    std::ofstream m(dir / "ragged_m.csv");
    m << "path,subject_id,label,sampling_hz\n";
    m << "ragged.csv,subj0,0,250\n";
  }
  CHECK_THROWS_AS(load_recordings(dir / "ragged_m.csv"), ParseError);

  {
    std::ofstream rec(dir / "nan.csv");
    rec << "1,nan,3\n";
    std::ofstream m(dir / "nan_m.csv");
    m << "path,subject_id,label,sampling_hz\n";
    m << "nan.csv,subj0,0,250\n";
  }
  CHECK_THROWS_WITH_AS(load_recordings(dir / "nan_m.csv"), doctest::Contains("non-finite"),
                       ParseError);

  {
    std::ofstream rec(dir / "garbage.csv");
    rec << "1,two,3\n";
    std::ofstream m(dir / "garbage_m.csv");
    m << "path,subject_id,label,sampling_hz\n";
    m << "garbage.csv,subj0,0,250\n";
  }
  CHECK_THROWS_WITH_AS(load_recordings(dir / "garbage_m.csv"), doctest::Contains("malformed"),
                       ParseError);

  {
    std::ofstream m(dir / "badheader.csv");
    m << "file,id,y,hz\n";
  }
  CHECK_THROWS_AS(load_recordings(dir / "badheader.csv"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("csv and cache round-trips preserve samples bit for bit") {
  const fs::path dir = make_temp_dir("roundtrip");
  SynthSpec spec;
  spec.per_class = 2;
  spec.channels = 3;
  spec.samples = 400;
  auto recs = synth_generate(spec, 31415);

  // csv path
  std::vector<std::pair<std::string, const Recording*>> entries;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const std::string name = "rec" + std::to_string(i) + ".csv";
    write_recording_csv(dir / name, recs[i]);
    entries.emplace_back(name, &recs[i]);
  }
  write_manifest(dir / "manifest.csv", entries);
  auto from_csv = load_recordings(dir / "manifest.csv");
  REQUIRE(from_csv.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(from_csv[i].data == recs[i].data);
    CHECK(from_csv[i].subject_id == recs[i].subject_id);
    CHECK(from_csv[i].label == recs[i].label);
    CHECK(from_csv[i].sampling_hz == recs[i].sampling_hz);
  }

  // cache path
  save_cache(dir / "cache.bin", from_csv);
  auto from_cache = load_cache(dir / "cache.bin");
  REQUIRE(from_cache.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(from_cache[i].data == recs[i].data);
    CHECK(from_cache[i].subject_id == recs[i].subject_id);
  }
  CHECK_THROWS_AS(load_cache(dir / "manifest.csv"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("subject-level split keeps whole subjects on one side") {
  SynthSpec spec;
  spec.per_class = 6;
  spec.channels = 3;
  spec.samples = 64;
  auto recs = synth_generate(spec, 5);
  WindowDataset ds = extract_windows(recs, 64, 0);
  Split split = stratified_split_subjects(ds, 0.30, 11);
  std::set<std::string> train_subjects, test_subjects;
  for (std::size_t i : split.train) train_subjects.insert(ds.records[i].subject_id);
  for (std::size_t i : split.test) test_subjects.insert(ds.records[i].subject_id);
  for (const std::string& s : test_subjects) CHECK(train_subjects.count(s) == 0);
  CHECK(train_subjects.size() + test_subjects.size() == 12);
  CHECK(test_subjects.size() == 4);  // round(0.3 * 12), stratified 2 + 2
  CHECK(split.train.size() + split.test.size() == ds.size());
  // both classes present in test
  bool has0 = false, has1 = false;
  for (std::size_t i : split.test) (ds.records[i].label == 0 ? has0 : has1) = true;
  CHECK(has0);
  CHECK(has1);
  // deterministic
  Split again = stratified_split_subjects(ds, 0.30, 11);
  CHECK(again.test == split.test);
}
