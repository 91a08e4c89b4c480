// Command-line driver: tokenizer training, segmentation, model training,
// decoding and scoring.

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "hasr/config.h"
#include "hasr/decode.h"
#include "hasr/errors.h"
#include "hasr/eval.h"
#include "hasr/features.h"
#include "hasr/hybrid.h"
#include "hasr/model.h"
#include "hasr/tokenizer.h"
#include "hasr/toy.h"
#include "hasr/units.h"

namespace fs = std::filesystem;
using namespace hasr;

namespace {

bool g_verbose = false;

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  return out;
}

void require_file(const fs::path& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw UserError(std::string(flag) + ": no such file " + path.string());
}

UnitTable load_units(const fs::path& path) {
  auto in = open_in(path);
  return UnitTable::read(in);
}

std::vector<Utterance> load_utterances(const fs::path& manifest, const RunConfig& cfg) {
  FbankOptions fbank;
  fbank.num_mel = cfg.features.num_mel;
  auto utts = load_manifest(manifest, cfg.features.num_mel, fbank);
  if (cfg.features.cmvn) accumulate_and_normalize(utts);
  return utts;
}

RunConfig load_run_config(const std::string& path) {
  return path.empty() ? config_from_json(nlohmann::json::object()) : load_config(path);
}

int cmd_learn_bpe(const fs::path& text, std::size_t merges, const std::string& alphabet,
                  const fs::path& out_merges, const std::string& out_units) {
  auto in = open_in(text);
  const SubwordVocab vocab = learn_bpe(count_words(in), merges, alphabet);
  auto out = open_out(out_merges);
  write_merges(out, vocab);
  if (!out_units.empty()) {
    auto units = open_out(out_units);
    UnitTable(vocab).write(units);
  }
  std::cerr << "learned " << vocab.merges().size() << " merges, " << vocab.units().size()
            << " units\n";
  return 0;
}

int cmd_segment(const fs::path& merges_path, const std::string& alphabet, const std::string& oov) {
  auto in = open_in(merges_path);
  const SubwordVocab vocab(alphabet, read_merges(in));
  const OovPolicy policy = oov == "skip" ? OovPolicy::kSkip : OovPolicy::kReject;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(std::cin, line)) {
    ++lineno;
    std::vector<std::string> units;
    try {
      units = segment_sentence(line, vocab, policy);
    } catch (const UserError& e) {
      throw UserError("input line " + std::to_string(lineno) + ": " + e.what());
    }
    for (std::size_t i = 0; i < units.size(); ++i) std::cout << (i ? " " : "") << units[i];
    std::cout << '\n';
  }
  return 0;
}

int cmd_train(const std::string& config_path, const fs::path& train_manifest,
              const fs::path& dev_manifest, const fs::path& outdir, std::string units_path,
              std::optional<std::uint64_t> seed) {
  require_file(train_manifest, "--manifest-train");
  require_file(dev_manifest, "--manifest-dev");
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.hybrid.seed = *seed;
  if (units_path.empty()) units_path = cfg.paths.units;
  if (units_path.empty()) throw ConfigError("train needs a unit table (--units or paths.units)");
  const UnitTable units = load_units(units_path);

  fs::create_directories(outdir);
  {
    auto echo = open_out(outdir / "config.json");
    echo << config_to_json(cfg).dump(2) << '\n';
    auto copy = open_out(outdir / "units.txt");
    units.write(copy);
  }
  const auto train_set = make_examples(load_utterances(train_manifest, cfg), units,
                                       cfg.tokenizer.oov_policy);
  const auto dev_set = make_examples(load_utterances(dev_manifest, cfg), units,
                                     cfg.tokenizer.oov_policy);
  if (g_verbose) {
    std::cerr << "train " << train_set.size() << " utterances, dev " << dev_set.size() << "\n";
  }
  Model model(cfg.model(), units);
  TrainOptions options;
  options.outdir = outdir;
  options.log = &std::cerr;
  const TrainResult result = train(model, train_set, dev_set, cfg.hybrid, options);
  if (!result.epochs.empty()) {
    std::cerr << "best dev WER " << result.best_wer << "% at epoch " << result.best_epoch << "\n";
  }
  return 0;
}

int cmd_decode(const fs::path& model_path, const fs::path& units_path, const fs::path& input,
               const std::string& config_path, std::optional<std::size_t> beam,
               std::size_t nbest, std::size_t workers, const std::string& out_path) {
  require_file(model_path, "--checkpoint");
  require_file(units_path, "--units");
  require_file(input, "--manifest");
  RunConfig cfg = load_run_config(config_path);
  if (beam) cfg.decode.beam = *beam;
  cfg.decode.validate();
  if (nbest == 0) throw ConfigError("--nbest must be at least 1");
  const Model model = Model::from_checkpoint(read_checkpoint(model_path), load_units(units_path));
  cfg.features.num_mel = model.config().encoder.input_dim;
  const auto utts = load_utterances(input, cfg);

  std::vector<std::string> results(utts.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= utts.size()) return;
      try {
        auto hyps = beam_search(model, utts[i].features, cfg.decode);
        if (hyps.size() > nbest) hyps.resize(nbest);
        std::ostringstream os;
        write_nbest(os, utts[i].id, hyps, model.labels());
        results[i] = os.str();
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = utts.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::max<std::size_t>(workers, 1); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file = open_out(out_path);
    out = &file;
  }
  for (const auto& r : results) *out << r;
  return 0;
}

int cmd_score(const fs::path& ref_path, const fs::path& hyp_path, const std::string& report_path) {
  auto ref_in = open_in(ref_path);
  auto hyp_in = open_in(hyp_path);
  const auto refs = read_references(ref_in);
  const auto hyps = read_best_hypotheses(hyp_in);
  if (hyps.empty()) throw UserError("hypothesis file " + hyp_path.string() + " has no rank-1 rows");
  std::vector<std::string> missing;
  const WerReport report = score_corpus(refs, hyps, &missing);
  for (const auto& id : missing) {
    std::cerr << "warning: no hypothesis for " << id << ", scored as empty\n";
  }
  if (!report_path.empty()) {
    auto out = open_out(report_path);
    write_score_report(out, refs, hyps);
    out << "# " << report.summary() << '\n';
  }
  std::cout << report.summary() << '\n';
  return 0;
}

int cmd_make_toy(const fs::path& outdir, const ToyOptions& options) {
  write_toy_corpus(make_toy_corpus(options), outdir);
  std::cerr << "wrote " << options.num_train << " train and " << options.num_dev
            << " dev utterances to " << outdir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid CTC/attention speech recognizer"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", g_verbose, "Verbose logging");
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the training seed");

  std::string alphabet{kDefaultAlphabet};

  auto* bpe = app.add_subcommand("learn-bpe", "Learn subword merges from transcripts");
  std::string bpe_text, bpe_out, bpe_units;
  std::size_t bpe_merges = 472;
  bpe->add_option("--transcripts,--text", bpe_text, "Transcripts, one sentence per line")->required();
  bpe->add_option("--num-merges", bpe_merges, "Number of merge operations");
  bpe->add_option("--out", bpe_out, "Merge file to write")->required();
  bpe->add_option("--units", bpe_units, "Also write the label table here");
  bpe->add_option("--alphabet", alphabet, "Allowed characters");

  auto* seg = app.add_subcommand("segment", "Segment stdin sentences into subword units");
  std::string seg_merges, seg_oov = "reject";
  seg->add_option("--merges", seg_merges, "Merge file")->required();
  seg->add_option("--oov", seg_oov, "Out-of-alphabet policy")
      ->check(CLI::IsMember({"reject", "skip"}));
  seg->add_option("--alphabet", alphabet, "Allowed characters");

  auto* tr = app.add_subcommand("train", "Train a model");
  std::string tr_config, tr_train, tr_dev, tr_out, tr_units;
  tr->add_option("--config", tr_config, "JSON run configuration");
  tr->add_option("--manifest-train", tr_train, "Training manifest")->required();
  tr->add_option("--manifest-dev", tr_dev, "Development manifest")->required();
  tr->add_option("--outdir", tr_out, "Output directory")->required();
  tr->add_option("--units", tr_units, "Label table");

  auto* dec = app.add_subcommand("decode", "Beam-search decode a manifest");
  std::string dec_model, dec_units, dec_input, dec_config, dec_out;
  std::optional<std::size_t> dec_beam;
  std::size_t dec_nbest = 1, dec_workers = 1;
  dec->add_option("--checkpoint", dec_model, "Checkpoint")->required();
  dec->add_option("--units", dec_units, "Label table used in training")->required();
  dec->add_option("--manifest", dec_input, "Manifest to decode")->required();
  dec->add_option("--config", dec_config, "JSON run configuration");
  dec->add_option("--beam", dec_beam, "Beam width");
  dec->add_option("--nbest", dec_nbest, "Hypotheses per utterance");
  dec->add_option("--workers", dec_workers, "Decoding threads");
  dec->add_option("--out", dec_out, "N-best output (default stdout)");

  auto* sc = app.add_subcommand("score", "Word error rate of rank-1 hypotheses");
  std::string sc_ref, sc_hyp, sc_report;
  sc->add_option("--ref-manifest", sc_ref, "Manifest or id<TAB>text references")->required();
  sc->add_option("--hyp-file", sc_hyp, "N-best file")->required();
  sc->add_option("--report", sc_report, "Per-utterance TSV report");

  auto* toy = app.add_subcommand("make-toy", "Write the synthetic toy corpus");
  std::string toy_out;
  ToyOptions toy_options;
  toy->add_option("--outdir", toy_out, "Output directory")->required();
  toy->add_option("--train", toy_options.num_train, "Training utterances");
  toy->add_option("--dev", toy_options.num_dev, "Development utterances");
  toy->add_option("--corpus-seed", toy_options.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*bpe) return cmd_learn_bpe(bpe_text, bpe_merges, alphabet, bpe_out, bpe_units);
    if (*seg) return cmd_segment(seg_merges, alphabet, seg_oov);
    if (*tr) return cmd_train(tr_config, tr_train, tr_dev, tr_out, tr_units, seed);
    if (*dec) {
      return cmd_decode(dec_model, dec_units, dec_input, dec_config, dec_beam, dec_nbest,
                        dec_workers, dec_out);
    }
    if (*sc) return cmd_score(sc_ref, sc_hyp, sc_report);
    if (*toy) return cmd_make_toy(toy_out, toy_options);
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
