#include "hasr/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "hasr/errors.h"

namespace hasr {

namespace {

// FFTW planning is not thread-safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

std::vector<double> mel_points(const FbankOptions& o) {
  const double lo = hz_to_mel(o.low_freq), hi = hz_to_mel(o.high_freq);
  std::vector<double> pts(o.num_mel + 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(o.num_mel + 1);
  }
  return pts;
}

// Triangular filters over FFT bins 0..fft/2, weights computed on the mel axis.
std::vector<std::vector<double>> mel_weights(const FbankOptions& o) {
  const std::vector<double> pts = mel_points(o);
  const std::size_t bins = o.fft_size / 2 + 1;
  std::vector<std::vector<double>> w(o.num_mel, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < o.num_mel; ++m) {
    const double left = pts[m], center = pts[m + 1], right = pts[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * o.sample_rate / static_cast<double>(o.fft_size);
      const double mel = hz_to_mel(hz);
      if (mel > left && mel < right) {
        w[m][k] = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      }
    }
  }
  return w;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint32_t get_uint(std::istream& in, int bytes, const std::string& what) {
  unsigned char b[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (!in) throw ParseError(what + ": truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FbankOptions& options) {
  const std::vector<double> pts = mel_points(options);
  std::vector<double> centers(options.num_mel);
  for (std::size_t m = 0; m < options.num_mel; ++m) centers[m] = mel_to_hz(pts[m + 1]);
  return centers;
}

Tensor compute_fbank(std::span<const double> samples, const FbankOptions& o) {
  if (o.frame_length > o.fft_size) throw ConfigError("frame_length exceeds fft_size");
  if (samples.size() < o.frame_length) {
    throw ContractError("signal of " + std::to_string(samples.size()) +
                        " samples is shorter than one " + std::to_string(o.frame_length) +
                        "-sample window");
  }
  const std::size_t frames = (samples.size() - o.frame_length) / o.frame_shift + 1;
  const std::size_t bins = o.fft_size / 2 + 1;
  const auto weights = mel_weights(o);

  std::vector<double> window(o.frame_length);
  for (std::size_t n = 0; n < o.frame_length; ++n) {
    window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                       static_cast<double>(o.frame_length - 1));
  }

  double* in = fftw_alloc_real(o.fft_size);
  fftw_complex* spec = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(o.fft_size), in, spec, FFTW_ESTIMATE);
  }

  Buffer out(frames * o.num_mel);
  std::vector<double> frame(o.frame_length), power(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(t * o.frame_shift), o.frame_length,
                frame.begin());
    for (std::size_t n = o.frame_length; n-- > 1;) frame[n] -= o.preemphasis * frame[n - 1];
    frame[0] -= o.preemphasis * frame[0];
    std::fill(in, in + o.fft_size, 0.0);
    for (std::size_t n = 0; n < o.frame_length; ++n) in[n] = frame[n] * window[n];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) power[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    for (std::size_t m = 0; m < o.num_mel; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += weights[m][k] * power[k];
      out[t * o.num_mel + m] = std::log(std::max(e, o.energy_floor));
    }
  }

  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(spec);
  return Tensor({frames, o.num_mel}, std::move(out));
}

std::map<std::string, SpeakerStats> accumulate_and_normalize(std::vector<Utterance>& utterances) {
  std::map<std::string, SpeakerStats> stats;
  for (const Utterance& u : utterances) {
    const std::size_t T = u.features.rows(), d = u.features.cols();
    SpeakerStats& s = stats[u.speaker_id];
    if (s.mean.empty()) {
      s.speaker_id = u.speaker_id;
      s.mean.assign(d, 0.0);
      s.var.assign(d, 0.0);
    } else if (s.mean.size() != d) {
      throw DimensionError("speaker " + u.speaker_id + " mixes feature dimensions");
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += u.features.at(t, j);
    }
    s.frames += T;
  }
  for (auto& [_, s] : stats) {
    for (double& m : s.mean) m /= static_cast<double>(s.frames);
  }
  for (const Utterance& u : utterances) {
    SpeakerStats& s = stats[u.speaker_id];
    const std::size_t T = u.features.rows(), d = u.features.cols();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        const double dev = u.features.at(t, j) - s.mean[j];
        s.var[j] += dev * dev;
      }
    }
  }
  for (auto& [_, s] : stats) {
    for (double& v : s.var) v /= static_cast<double>(s.frames);
  }
  for (Utterance& u : utterances) {
    const SpeakerStats& s = stats[u.speaker_id];
    const std::size_t T = u.features.rows(), d = u.features.cols();
    Buffer norm(T * d);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        norm[t * d + j] = (u.features.at(t, j) - s.mean[j]) / std::sqrt(s.var[j] + kCmvnVarianceFloor);
      }
    }
    u.features = Tensor(u.features.shape(), std::move(norm));
  }
  return stats;
}

std::vector<ManifestRow> read_manifest_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 4 || cols[0].empty() || cols[1].empty() || cols[2].empty()) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) +
                       ": expected 4 tab-separated columns (utt_id, speaker_id, source_path, "
                       "transcript)");
    }
    rows.push_back({cols[0], cols[1], cols[2], cols[3]});
  }
  return rows;
}

std::vector<Utterance> load_manifest(const std::filesystem::path& path, std::size_t feature_dim,
                                     const FbankOptions& fbank) {
  const std::vector<ManifestRow> rows = read_manifest_rows(path);
  const std::filesystem::path base = path.parent_path();
  std::vector<Utterance> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ManifestRow& r = rows[i];
    std::filesystem::path src(r.source);
    if (src.is_relative()) src = base / src;
    Tensor feats;
    try {
      if (src.extension() == ".wav") {
        const std::vector<double> pcm = read_wav(src, fbank.sample_rate);
        feats = compute_fbank(pcm, fbank);
      } else {
        feats = read_feature_file(src);
      }
    } catch (const UserError& e) {
      throw ParseError(path.string() + " row " + std::to_string(i + 1) + " (" + r.utt_id +
                       "): " + e.what());
    }
    if (feats.cols() != feature_dim) {
      throw DimensionError(path.string() + " row " + std::to_string(i + 1) + " (" + r.utt_id +
                           "): features have dimension " + std::to_string(feats.cols()) +
                           ", expected " + std::to_string(feature_dim));
    }
    out.push_back(Utterance{r.utt_id, r.speaker_id, std::move(feats), r.transcript});
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path, const Tensor& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write feature file " + path.string());
  out.write("FEATv1", 6);
  put_u32(out, static_cast<std::uint32_t>(features.rows()));
  put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw UserError("failed writing feature file " + path.string());
}

Tensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open feature file " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in || std::string(magic, 6) != "FEATv1") {
    throw ParseError(path.string() + ": missing FEATv1 header");
  }
  const std::uint32_t T = get_uint(in, 4, path.string());
  const std::uint32_t d = get_uint(in, 4, path.string());
  if (T == 0 || d == 0) throw ParseError(path.string() + ": empty feature matrix");
  Buffer data(static_cast<std::size_t>(T) * d);
  for (double& v : data) v = std::bit_cast<float>(get_uint(in, 4, path.string()));
  return Tensor({T, d}, std::move(data));
}

std::vector<double> read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  const std::string name = path.string();
  if (!in) throw UserError("cannot open audio file " + name);
  char tag[4];
  auto read_tag = [&]() {
    in.read(tag, 4);
    if (!in) throw ParseError(name + ": truncated WAV header");
    return std::string(tag, 4);
  };
  if (read_tag() != "RIFF") throw ParseError(name + ": not a RIFF file");
  get_uint(in, 4, name);
  if (read_tag() != "WAVE") throw ParseError(name + ": not a WAVE file");
  bool have_fmt = false;
  while (true) {
    const std::string id = read_tag();
    const std::uint32_t size = get_uint(in, 4, name);
    if (id == "fmt ") {
      const auto format = get_uint(in, 2, name);
      const auto channels = get_uint(in, 2, name);
      const auto rate = get_uint(in, 4, name);
      get_uint(in, 4, name);
      get_uint(in, 2, name);
      const auto bits = get_uint(in, 2, name);
      if (format != 1 || channels != 1 || bits != 16) {
        throw ParseError(name + ": only 16-bit PCM mono WAV is supported");
      }
      if (static_cast<int>(rate) != expected_rate) {
        throw ParseError(name + ": sample rate " + std::to_string(rate) + ", expected " +
                         std::to_string(expected_rate));
      }
      in.ignore(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError(name + ": data chunk before fmt chunk");
      std::vector<double> samples(size / 2);
      for (double& s : samples) {
        s = static_cast<double>(static_cast<std::int16_t>(get_uint(in, 2, name)));
      }
      return samples;
    } else {
      in.ignore(size + (size & 1));
    }
  }
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write audio file " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  const char fmt[4] = {1, 0, 1, 0};  // PCM, mono
  out.write(fmt, 4);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  const char align[4] = {2, 0, 16, 0};
  out.write(align, 4);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : samples) {
    const auto v = static_cast<std::int16_t>(std::clamp(std::lround(s), -32768L, 32767L));
    const auto u = static_cast<std::uint16_t>(v);
    const char b[2] = {static_cast<char>(u & 0xff), static_cast<char>(u >> 8)};
    out.write(b, 2);
  }
}

}  // namespace hasr
