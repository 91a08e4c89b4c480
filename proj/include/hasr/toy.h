#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hasr/features.h"

namespace hasr {

// Synthetic speech-like corpus: every word is a fixed chain of phone
// templates, each held for a few frames with speaker offsets and noise.
struct ToyOptions {
  std::size_t num_train = 2000;
  std::size_t num_dev = 200;
  std::size_t num_speakers = 10;
  std::size_t dim = 8;
  // 0 gives every word private templates; otherwise words share this many
  // phone templates (template 0 is silence).
  std::size_t num_phones = 0;
  std::size_t min_words = 2;
  std::size_t max_words = 6;
  std::size_t min_phone_frames = 3;
  std::size_t max_phone_frames = 5;
  // Silence frames before the first and after the last word.
  std::size_t min_edge_silence = 4;
  std::size_t max_edge_silence = 10;
  double noise = 0.4;
  double speaker_offset = 0.5;
  std::uint64_t seed = 7;
};

struct ToyCorpus {
  std::vector<std::string> vocabulary;
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
};

const std::vector<std::string>& toy_vocabulary();

ToyCorpus make_toy_corpus(const ToyOptions& options = {});

// Writes features/<id>.feat, train.tsv, dev.tsv and train.txt (transcripts
// only) under `dir`.
void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);

}  // namespace hasr
