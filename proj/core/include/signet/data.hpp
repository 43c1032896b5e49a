#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

// One multichannel recording of a single subject. Samples are stored as
// 32-bit floats, row-major [channels, samples]; the binary cache and the CSV
// path round-trip this representation bit for bit.
struct Recording {
  std::string subject_id;
  int label = 0;  // 0 or 1
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sampling_hz = 250.0;
  std::vector<float> data;  // channels * samples

  float at(std::size_t channel, std::size_t sample) const {
    return data[channel * samples + sample];
  }
};

// One fixed-length window cut from a single channel.
struct WindowRecord {
  Tensor window;  // [1, L]
  int label = 0;
  std::string subject_id;
  std::size_t channel = 0;
};

struct WindowDataset {
  std::vector<WindowRecord> records;
  std::size_t window_length = 0;

  std::size_t size() const { return records.size(); }
  std::vector<int> labels() const;
};

// Train/test index partition; `validation` is carved out of train later by
// the training loop and is empty until then.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> validation;
};

// One window per channel per recording: samples [offset, offset+L) of each
// channel, labels inherited from the subject. Throws DataError naming the
// subject when a recording is too short.
WindowDataset extract_windows(const std::vector<Recording>& recordings, std::size_t window_length,
                              std::size_t offset = 0);

// Deterministic stratified split. The test set size is round(fraction * N),
// allocated per class by largest remainder, then filled by a seeded shuffle
// within each class. Throws DataError when only one class is present.
Split stratified_split(const WindowDataset& dataset, double test_fraction, std::uint64_t seed);

// Stratified pick of round(fraction * pool) indices out of `pool`,
// used to carve a validation subset from the training indices.
std::vector<std::size_t> stratified_take(const std::vector<std::size_t>& pool,
                                         const std::vector<int>& labels, double fraction,
                                         Rng& rng);

// Split at the subject level instead: whole subjects are assigned to train or
// test (stratified by subject label), so no channel of a test subject appears
// in training. The window-level split above mirrors the reference protocol
// and leaks subjects across the boundary; this is the leak-free alternative.
Split stratified_split_subjects(const WindowDataset& dataset, double test_fraction,
                                std::uint64_t seed);

// ---- synthetic generator ----------------------------------------------------
// Stands in for a clinical dataset. Each channel is a sum of band-limited
// sinusoids (theta 4-7 Hz, alpha 8-13 Hz) plus Voss-McCartney pink noise, all
// driven by the SplitMix64 stream documented in rng.hpp, so identical seeds
// reproduce identical recordings bit for bit.
//
// `separation` moves relative band power apart: class 0 gains alpha power and
// loses theta, class 1 the reverse. At 0 the class distributions are
// identical; at 1 a threshold on alpha-band power alone separates most
// windows.
struct SynthSpec {
  std::size_t per_class = 10;
  std::size_t channels = 4;
  std::size_t samples = 2200;
  double separation = 1.0;
  double sampling_hz = 250.0;
};

std::vector<Recording> synth_generate(const SynthSpec& spec, std::uint64_t seed);

// ---- external formats ---------------------------------------------------------
// Recording file: CSV, one row per channel, comma-separated decimal samples,
// no header. Manifest: CSV with header `path,subject_id,label,sampling_hz`;
// paths are resolved relative to the manifest's directory.

std::vector<Recording> load_recordings(const std::filesystem::path& manifest);
void write_recording_csv(const std::filesystem::path& path, const Recording& rec);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, const Recording*>>& entries);

// Binary cache: magic, dimensions header, then IEEE-754 little-endian 32-bit
// samples; bit-exact round-trip with the CSV representation.
void save_cache(const std::filesystem::path& path, const std::vector<Recording>& recordings);
std::vector<Recording> load_cache(const std::filesystem::path& path);

}  // namespace signet
