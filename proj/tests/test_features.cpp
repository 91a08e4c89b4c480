#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hasr/errors.h"
#include "hasr/features.h"
#include "hasr/parameters.h"
#include "support/tempdir.h"

namespace hasr {
namespace {

using testing::TempDir;

std::vector<double> sine(double hz, std::size_t n, double amplitude = 8000.0) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0);
  }
  return s;
}

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

TEST(Fbank, OneSecondGivesNinetyEightFrames) {
  const Tensor f = compute_fbank(sine(440.0, 16000));
  EXPECT_EQ(f.rows(), (16000u - 400u) / 160u + 1u);
  EXPECT_EQ(f.rows(), 98u);
  EXPECT_EQ(f.cols(), 40u);
}

TEST(Fbank, ExactlyOneWindow) {
  EXPECT_EQ(compute_fbank(std::vector<double>(400, 1.0)).rows(), 1u);
}

TEST(Fbank, ShorterThanWindowIsError) {
  EXPECT_THROW(compute_fbank(std::vector<double>(399, 1.0)), UserError);
  EXPECT_THROW(compute_fbank(std::vector<double>{}), UserError);
}

TEST(Fbank, SilenceHitsTheFloorExactly) {
  const Tensor f = compute_fbank(std::vector<double>(16000, 0.0));
  const double floor = std::log(1e-10);
  for (double v : f.data()) ASSERT_EQ(v, floor);
}

TEST(Fbank, MelCentresFollowTheMelScale) {
  const auto centres = mel_center_frequencies();
  ASSERT_EQ(centres.size(), 40u);
  const double lo = hz_to_mel(20.0), hi = hz_to_mel(7800.0);
  for (std::size_t m = 0; m < 40; ++m) {
    EXPECT_NEAR(centres[m], mel_to_hz(lo + (hi - lo) * (m + 1) / 41.0), 1e-6);
  }
}

TEST(Fbank, PureToneArgmaxIsStableAndNearestCentre) {
  const Tensor f = compute_fbank(sine(1000.0, 16000));
  // Oracle: the filter whose centre is closest to 1 kHz on the mel axis.
  const double lo = hz_to_mel(20.0), hi = hz_to_mel(7800.0);
  std::size_t expected = 0;
  double best = 1e300;
  for (std::size_t m = 0; m < 40; ++m) {
    const double d = std::abs(lo + (hi - lo) * (m + 1) / 41.0 - hz_to_mel(1000.0));
    if (d < best) best = d, expected = m;
  }
  for (std::size_t t = 0; t < f.rows(); ++t) {
    std::size_t arg = 0;
    for (std::size_t m = 1; m < 40; ++m) {
      if (f.at(t, m) > f.at(t, arg)) arg = m;
    }
    ASSERT_EQ(arg, expected) << "frame " << t;
  }
}

TEST(Fbank, Deterministic) {
  Rng rng(3);
  std::vector<double> s(5000);
  for (double& v : s) v = 1000.0 * rng.normal();
  const Tensor a = compute_fbank(s), b = compute_fbank(s);
  ASSERT_EQ(a.numel(), b.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.at(i), b.at(i));
}

Utterance utt(std::string id, std::string spk, Tensor x) {
  return Utterance{std::move(id), std::move(spk), std::move(x), ""};
}

TEST(Cmvn, HandExample) {
  std::vector<Utterance> us = {utt("u", "s", Tensor::matrix({{1.0}, {3.0}}))};
  const auto stats = accumulate_and_normalize(us);
  EXPECT_NEAR(us[0].features.at(0, 0), -1.0, 1e-9);
  EXPECT_NEAR(us[0].features.at(1, 0), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(stats.at("s").mean[0], 2.0);
  EXPECT_DOUBLE_EQ(stats.at("s").var[0], 1.0);
  EXPECT_EQ(stats.at("s").frames, 2u);
}

TEST(Cmvn, ConstantColumnBecomesZero) {
  std::vector<Utterance> us = {utt("u", "s", Tensor::matrix({{5.0, 1.0}, {5.0, 2.0}, {5.0, 4.0}}))};
  accumulate_and_normalize(us);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(us[0].features.at(t, 0), 0.0);
}

TEST(Cmvn, PerSpeakerMomentsAndShapes) {
  Rng rng(5);
  std::vector<Utterance> us;
  for (int i = 0; i < 6; ++i) {
    const std::size_t T = 3 + rng.below(20);
    Buffer d(T * 4);
    for (double& v : d) v = 3.0 + 2.0 * rng.normal();
    us.push_back(utt("u" + std::to_string(i), i % 2 ? "a" : "b", Tensor({T, 4}, std::move(d))));
  }
  std::vector<std::size_t> rows;
  for (const auto& u : us) rows.push_back(u.features.rows());
  accumulate_and_normalize(us);
  for (std::size_t i = 0; i < us.size(); ++i) {
    EXPECT_EQ(us[i].features.rows(), rows[i]);
    EXPECT_EQ(us[i].features.cols(), 4u);
  }
  for (const char* spk : {"a", "b"}) {
    for (std::size_t d = 0; d < 4; ++d) {
      double sum = 0, sq = 0, n = 0;
      for (const auto& u : us) {
        if (u.speaker_id != spk) continue;
        for (std::size_t t = 0; t < u.features.rows(); ++t) {
          sum += u.features.at(t, d);
          sq += u.features.at(t, d) * u.features.at(t, d);
          ++n;
        }
      }
      EXPECT_LE(std::abs(sum / n), 1e-6);
      EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0, 1e-4);
    }
  }
}

TEST(Cmvn, SpeakersAreIndependent) {
  auto make = [](double b_scale) {
    return std::vector<Utterance>{utt("a1", "A", Tensor::matrix({{1.0, 2.0}, {4.0, -1.0}})),
                                  utt("b1", "B", Tensor::matrix({{b_scale, 0.0}, {7.0, 1.0}})),
                                  utt("a2", "A", Tensor::matrix({{0.5, 0.25}}))};
  };
  auto x = make(3.0), y = make(-100.0);
  accumulate_and_normalize(x);
  accumulate_and_normalize(y);
  for (std::size_t i : {0u, 2u}) {
    for (std::size_t k = 0; k < x[i].features.numel(); ++k) {
      EXPECT_EQ(x[i].features.at(k), y[i].features.at(k));
    }
  }
}

TEST(FeatureFile, RoundTripIsFloat32) {
  TempDir dir;
  const Tensor x = Tensor::matrix({{0.1, -2.5, 3.0}, {1e-3, 7.0, -0.125}});
  write_feature_file(dir / "x.feat", x);
  const Tensor y = read_feature_file(dir / "x.feat");
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(y.at(i), static_cast<double>(static_cast<float>(x.at(i))));
  }
  EXPECT_EQ(std::filesystem::file_size(dir / "x.feat"), 6u + 8u + 6u * 4u);
}

TEST(FeatureFile, BadHeaderIsParseError) {
  TempDir dir;
  dir.write("bad.feat", "NOTFEAT...");
  EXPECT_THROW(read_feature_file(dir / "bad.feat"), ParseError);
}

TEST(Wav, RoundTripThroughFbank) {
  TempDir dir;
  const auto s = sine(300.0, 1600);
  write_wav(dir / "a.wav", s);
  const auto back = read_wav(dir / "a.wav");
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(back[i], s[i], 0.5 + 1e-9);
  EXPECT_THROW(read_wav(dir / "a.wav", 8000), ParseError);
}

TEST(Manifest, EmptyManifest) {
  TempDir dir;
  const auto p = dir.write("m.tsv", "# only a comment\n");
  EXPECT_TRUE(load_manifest(p, 3).empty());
}

TEST(Manifest, RowsInFileOrder) {
  TempDir dir;
  std::filesystem::create_directories(dir / "f");
  write_feature_file(dir / "f/c.feat", Tensor::zeros({2, 3}));
  write_feature_file(dir / "f/a.feat", Tensor::zeros({4, 3}));
  write_feature_file(dir / "f/b.feat", Tensor::zeros({1, 3}));
  const auto p = dir.write("m.tsv",
                           "c\ts1\tf/c.feat\tHELLO THERE\n"
                           "a\ts2\tf/a.feat\tA\n"
                           "b\ts1\tf/b.feat\tB C\n");
  const auto us = load_manifest(p, 3);
  ASSERT_EQ(us.size(), 3u);
  EXPECT_EQ(us[0].id, "c");
  EXPECT_EQ(us[1].id, "a");
  EXPECT_EQ(us[2].id, "b");
  EXPECT_EQ(us[0].transcript, "HELLO THERE");
  EXPECT_EQ(us[1].speaker_id, "s2");
  EXPECT_EQ(us[1].features.rows(), 4u);
}

TEST(Manifest, WavSourceGoesThroughFbank) {
  TempDir dir;
  write_wav(dir / "a.wav", sine(500.0, 16000));
  const auto p = dir.write("m.tsv", "a\ts\ta.wav\tX\n");
  const auto us = load_manifest(p, 40);
  ASSERT_EQ(us.size(), 1u);
  EXPECT_EQ(us[0].features.rows(), 98u);
  EXPECT_EQ(us[0].features.cols(), 40u);
}

TEST(Manifest, WrongDimensionNamesTheRow) {
  TempDir dir;
  write_feature_file(dir / "ok.feat", Tensor::zeros({2, 3}));
  write_feature_file(dir / "bad.feat", Tensor::zeros({2, 5}));
  const auto p = dir.write("m.tsv", "ok\ts\tok.feat\tA\nbad1\ts\tbad.feat\tB\n");
  try {
    load_manifest(p, 3);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("bad1"), std::string::npos) << e.what();
  }
}

TEST(Manifest, MalformedRowNamesTheLine) {
  TempDir dir;
  const auto p = dir.write("m.tsv", "# header\nonly\ttwo\n");
  try {
    load_manifest(p, 3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Manifest, MissingFile) {
  TempDir dir;
  EXPECT_THROW(load_manifest(dir / "nope.tsv", 3), UserError);
}

}  // namespace
}  // namespace hasr
