#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hasr/tensor.h"

namespace hasr {

struct FbankOptions {
  int sample_rate = 16000;
  std::size_t frame_length = 400;  // 25 ms
  std::size_t frame_shift = 160;   // 10 ms
  std::size_t fft_size = 512;
  std::size_t num_mel = 40;
  double preemphasis = 0.97;
  double low_freq = 20.0;
  double high_freq = 7800.0;
  double energy_floor = 1e-10;
};

// Log mel filterbank energies, T x num_mel with
// T = (samples - frame_length) / frame_shift + 1.
Tensor compute_fbank(std::span<const double> samples, const FbankOptions& options = {});

// Centre frequency in Hz of each mel filter.
std::vector<double> mel_center_frequencies(const FbankOptions& options = {});

struct Utterance {
  std::string id;
  std::string speaker_id;
  Tensor features;  // T x dim
  std::string transcript;
};

struct SpeakerStats {
  std::string speaker_id;
  std::vector<double> mean;
  std::vector<double> var;
  std::size_t frames = 0;
};

inline constexpr double kCmvnVarianceFloor = 1e-10;

// Per-speaker mean and variance normalization in place; statistics are pooled
// over all of a speaker's frames in input order.
std::map<std::string, SpeakerStats> accumulate_and_normalize(std::vector<Utterance>& utterances);

// Manifest: UTF-8 TSV "utt_id  speaker_id  source_path  transcript", '#'
// lines ignored. Sources ending in .wav are decoded and passed through
// compute_fbank; anything else is read as a feature file. Relative paths are
// resolved against the manifest's directory.
std::vector<Utterance> load_manifest(const std::filesystem::path& path, std::size_t feature_dim,
                                     const FbankOptions& fbank = {});

struct ManifestRow {
  std::string utt_id;
  std::string speaker_id;
  std::string source;
  std::string transcript;
};
std::vector<ManifestRow> read_manifest_rows(const std::filesystem::path& path);

// Feature file: "FEATv1", u32 T, u32 dim, T*dim little-endian float32.
void write_feature_file(const std::filesystem::path& path, const Tensor& features);
Tensor read_feature_file(const std::filesystem::path& path);

// 16-bit PCM mono WAV, samples scaled to the int16 range.
std::vector<double> read_wav(const std::filesystem::path& path, int expected_rate = 16000);
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate = 16000);

}  // namespace hasr
