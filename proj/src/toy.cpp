#include "hasr/toy.h"

#include <cstdio>
#include <fstream>
#include <set>

#include "hasr/errors.h"
#include "hasr/parameters.h"

namespace hasr {

const std::vector<std::string>& toy_vocabulary() {
  static const std::vector<std::string> words = {
      "RED",  "BLUE", "GREEN", "CAT",  "DOG",  "FISH", "BIRD", "TREE", "STONE", "RIVER",
      "HILL", "SUN",  "MOON",  "STAR", "WIND", "RAIN", "SNOW", "FIRE", "GOLD",  "IRON"};
  return words;
}

namespace {

struct Speaker {
  std::string id;
  std::vector<double> offset;
};

}  // namespace

ToyCorpus make_toy_corpus(const ToyOptions& o) {
  if (o.num_speakers == 0 || o.dim == 0 || o.num_phones == 1) {
    throw ConfigError("toy corpus needs speakers, a feature dimension and at least two phones");
  }
  if (o.min_words == 0 || o.min_words > o.max_words) throw ConfigError("bad toy word range");
  if (o.min_phone_frames == 0 || o.min_phone_frames > o.max_phone_frames) {
    throw ConfigError("bad toy phone duration range");
  }
  if (o.min_edge_silence > o.max_edge_silence) throw ConfigError("bad toy silence range");
  Rng rng(o.seed);
  ToyCorpus corpus;
  corpus.vocabulary = toy_vocabulary();

  // Template 0 is silence. With num_phones == 0 every word gets private
  // templates; otherwise words are chains over a shared phone inventory.
  auto random_template = [&] {
    std::vector<double> t(o.dim);
    for (double& v : t) v = rng.normal();
    return t;
  };
  std::vector<std::vector<double>> phones{random_template()};
  for (double& v : phones[0]) v *= 0.2;
  for (std::size_t p = 1; p < o.num_phones; ++p) phones.push_back(random_template());

  std::set<std::vector<std::size_t>> used;
  std::vector<std::vector<std::size_t>> pron;
  for (std::size_t w = 0; w < corpus.vocabulary.size(); ++w) {
    std::vector<std::size_t> seq(3 + rng.below(3));
    if (o.num_phones == 0) {
      for (auto& p : seq) {
        p = phones.size();
        phones.push_back(random_template());
      }
    } else {
      do {
        for (auto& p : seq) p = 1 + rng.below(o.num_phones - 1);
      } while (!used.insert(seq).second);
    }
    pron.push_back(seq);
  }

  std::vector<Speaker> speakers;
  for (std::size_t s = 0; s < o.num_speakers; ++s) {
    Speaker spk{"spk" + std::to_string(s), std::vector<double>(o.dim)};
    for (double& v : spk.offset) v = o.speaker_offset * rng.normal();
    speakers.push_back(std::move(spk));
  }

  auto make = [&](const std::string& prefix, std::size_t index) {
    const Speaker& spk = speakers[rng.below(speakers.size())];
    const std::size_t n = o.min_words + rng.below(o.max_words - o.min_words + 1);
    std::vector<std::size_t> frames_phone;
    auto hold = [&](std::size_t phone, std::size_t frames) {
      for (std::size_t f = 0; f < frames; ++f) frames_phone.push_back(phone);
    };
    hold(0, o.min_edge_silence + rng.below(o.max_edge_silence - o.min_edge_silence + 1));
    std::string text;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t w = rng.below(corpus.vocabulary.size());
      if (i) text += ' ';
      text += corpus.vocabulary[w];
      for (std::size_t p : pron[w]) {
        hold(p, o.min_phone_frames + rng.below(o.max_phone_frames - o.min_phone_frames + 1));
      }
    }
    hold(0, o.min_edge_silence + rng.below(o.max_edge_silence - o.min_edge_silence + 1));

    Buffer data(frames_phone.size() * o.dim);
    for (std::size_t t = 0; t < frames_phone.size(); ++t) {
      const auto& tmpl = phones[frames_phone[t]];
      for (std::size_t d = 0; d < o.dim; ++d) {
        data[t * o.dim + d] = tmpl[d] + spk.offset[d] + o.noise * rng.normal();
      }
    }
    char id[64];
    std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), index);
    return Utterance{id, spk.id, Tensor({frames_phone.size(), o.dim}, std::move(data)), text};
  };

  for (std::size_t i = 0; i < o.num_train; ++i) corpus.train.push_back(make("train", i));
  for (std::size_t i = 0; i < o.num_dev; ++i) corpus.dev.push_back(make("dev", i));
  return corpus;
}

void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  auto write_set = [&](const std::vector<Utterance>& utts, const std::string& name) {
    std::ofstream manifest(dir / (name + ".tsv"));
    if (!manifest) throw UserError("cannot write " + (dir / (name + ".tsv")).string());
    manifest << "# utt_id\tspeaker_id\tsource\ttranscript\n";
    for (const Utterance& u : utts) {
      const std::string rel = "features/" + u.id + ".feat";
      write_feature_file(dir / rel, u.features);
      manifest << u.id << '\t' << u.speaker_id << '\t' << rel << '\t' << u.transcript << '\n';
    }
  };
  write_set(corpus.train, "train");
  write_set(corpus.dev, "dev");
  std::ofstream text(dir / "train.txt");
  for (const Utterance& u : corpus.train) text << u.transcript << '\n';
}

}  // namespace hasr
