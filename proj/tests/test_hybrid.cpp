#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "hasr/checkpoint.h"
#include "hasr/errors.h"
#include "hasr/hybrid.h"
#include "hasr/model.h"
#include "support/tempdir.h"
#include "support/tiny_model.h"

namespace hasr {
namespace {

using testing::random_example;
using testing::TempDir;
using testing::tiny_model_config;
using testing::tiny_units;

GradList gradients(const Model& model, const Example& ex, double lambda, Objective objective) {
  Tape tape;
  const UtteranceLoss loss = utterance_loss(tape, model, ex, lambda, objective, Mode::kTrain);
  GradList g = zero_grads(model.params());
  accumulate_grads(model.params(), tape.backward(loss.total), g);
  return g;
}

std::vector<std::vector<double>> snapshot(const ParameterSet& params) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto d = params.tensor(i).data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

TEST(HybridLoss, Examples) {
  EXPECT_EQ(hybrid_loss(2.0, 1.0, 1.0), 2.0);
  EXPECT_EQ(hybrid_loss(2.0, 1.0, 0.0), 1.0);
  EXPECT_NEAR(hybrid_loss(2.0, 1.0, 0.2), 1.2, 1e-15);
}

TEST(HybridLoss, LinearInLambda) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double c = rng.uniform(0, 50), a = rng.uniform(0, 50), l = rng.uniform(0, 1);
    EXPECT_NEAR(0.5 * (hybrid_loss(c, a, l) + hybrid_loss(c, a, 1.0 - l)), hybrid_loss(c, a, 0.5),
                1e-12);
  }
}

TEST(HybridConfig, LambdaOutsideUnitIntervalIsConfigError) {
  HybridConfig c;
  for (double bad : {-0.1, 1.5, std::nan("")}) {
    c.lambda = bad;
    EXPECT_THROW(c.validate(), ConfigError) << bad;
  }
  c.lambda = 0.0;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 1.0;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(UtteranceLoss, BranchesShareOneEncoding) {
  const Model model(tiny_model_config(), tiny_units());
  Rng rng(2);
  const Example ex = random_example(rng, model.labels(), "u", 9, 3, {1, 2, 4});
  Tape tape(Tape::Mode::kInference);
  const UtteranceLoss l = utterance_loss(tape, model, ex, 0.3, Objective::kHybrid, Mode::kTrain);
  EXPECT_NEAR(l.total.item(), hybrid_loss(l.ctc, l.att, 0.3), 1e-12);
  const UtteranceLoss c = utterance_loss(tape, model, ex, 0.3, Objective::kCtcOnly, Mode::kTrain);
  const UtteranceLoss a = utterance_loss(tape, model, ex, 0.3, Objective::kAttentionOnly, Mode::kTrain);
  EXPECT_EQ(c.total.item(), l.ctc);
  EXPECT_EQ(a.total.item(), l.att);
}

TEST(UtteranceLoss, GradientIsLinearInLambda) {
  const Model model(tiny_model_config(), tiny_units());
  Rng rng(3);
  const Example ex = random_example(rng, model.labels(), "u", 10, 3, {2, 1, 3});
  const GradList gc = gradients(model, ex, 0.0, Objective::kCtcOnly);
  const GradList ga = gradients(model, ex, 0.0, Objective::kAttentionOnly);
  for (double lambda : {0.0, 0.2, 0.5, 0.9, 1.0}) {
    const GradList g = gradients(model, ex, lambda, Objective::kHybrid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < g[i].size(); ++j) {
        ASSERT_NEAR(g[i][j], lambda * gc[i][j] + (1.0 - lambda) * ga[i][j], 1e-8)
            << model.params().name(i) << " lambda " << lambda;
      }
    }
  }
}

TEST(UtteranceLoss, ZeroLambdaGivesNoCtcGradient) {
  const Model model(tiny_model_config(), tiny_units());
  Rng rng(4);
  const Example ex = random_example(rng, model.labels(), "u", 8, 3, {1, 1});
  const GradList g = gradients(model, ex, 0.0, Objective::kHybrid);
  const ParameterSet& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.name(i).rfind("ctc.", 0) != 0) continue;
    for (double v : g[i]) EXPECT_EQ(v, 0.0) << p.name(i);
  }
}

TEST(Trainable, ShortOrUnalignableUtterances) {
  const Model model(tiny_model_config(), tiny_units());
  Rng rng(5);
  const auto& u = model.labels();
  EXPECT_TRUE(trainable(model, random_example(rng, u, "a", 6, 3, {1, 2, 3}), Objective::kHybrid));
  // Output length 3 cannot hold A A A (needs 5 frames).
  const Example rep = random_example(rng, u, "b", 6, 3, {1, 1, 1});
  EXPECT_FALSE(trainable(model, rep, Objective::kHybrid));
  EXPECT_FALSE(trainable(model, rep, Objective::kCtcOnly));
  EXPECT_TRUE(trainable(model, rep, Objective::kAttentionOnly));
  EXPECT_FALSE(trainable(model, random_example(rng, u, "c", 1, 3, {1}), Objective::kAttentionOnly));
  EXPECT_FALSE(trainable(model, random_example(rng, u, "d", 6, 3, {}), Objective::kHybrid));
}

TEST(Trainer, SkippedUtterancesChangeNothing) {
  Model model(tiny_model_config(), tiny_units());
  Rng rng(6);
  const Example bad = random_example(rng, model.labels(), "bad", 4, 3, {1, 1, 1, 1});
  const auto before = snapshot(model.params());
  const auto buffers_before = snapshot(model.buffers());
  Trainer trainer(model, HybridConfig{});
  const StepReport r = trainer.step({&bad});
  EXPECT_FALSE(r.updated);
  EXPECT_EQ(r.skipped, (std::vector<std::string>{"bad"}));
  EXPECT_EQ(snapshot(model.params()), before);
  EXPECT_EQ(snapshot(model.buffers()), buffers_before);
}

TEST(Trainer, SkippedUtteranceDoesNotAlterTheBatchUpdate) {
  Rng rng(7);
  const UnitTable units = tiny_units();
  const Example good = random_example(rng, units, "good", 9, 3, {3, 2});
  const Example bad = random_example(rng, units, "bad", 4, 3, {1, 1, 1, 1});
  Model a(tiny_model_config(), units), b(tiny_model_config(), units);
  Trainer ta(a, HybridConfig{}), tb(b, HybridConfig{});
  ta.step({&good});
  const StepReport r = tb.step({&bad, &good});
  EXPECT_EQ(r.used, 1u);
  EXPECT_EQ(snapshot(a.params()), snapshot(b.params()));
}

TEST(Trainer, NanNamesTheUtterance) {
  Model model(tiny_model_config(), tiny_units());
  Rng rng(8);
  Example ex = random_example(rng, model.labels(), "utt-nan", 8, 3, {1, 2});
  Buffer d(ex.features.data().begin(), ex.features.data().end());
  d[5] = std::nan("");
  ex.features = Tensor({8, 3}, std::move(d));
  Trainer trainer(model, HybridConfig{});
  try {
    trainer.step({&ex});
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("utt-nan"), std::string::npos) << e.what();
  }
}

TEST(Trainer, OverfitsOneUtteranceWithDeskModel) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::desk(8);
  Model model(cfg, tiny_units());
  Rng rng(9);
  const Example ex = random_example(rng, model.labels(), "mem", 40, 8, {1, 4, 2, 3, 4});
  HybridConfig hc;
  Trainer trainer(model, hc);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    const StepReport r = trainer.step({&ex});
    ASSERT_TRUE(r.updated);
    if (step == 0) first = r.loss_sum;
    last = r.loss_sum;
  }
  EXPECT_LE(last, 0.1 * first) << "first " << first << " last " << last;
}

TEST(Trainer, LambdaEndpointsMatchSingleBranchSteps) {
  Rng rng(12);
  const UnitTable units = tiny_units();
  std::vector<Example> data;
  for (int i = 0; i < 4; ++i) {
    data.push_back(random_example(rng, units, "u" + std::to_string(i), 9 + rng.below(4), 3,
                                  {1 + static_cast<LabelId>(rng.below(4)), 3}));
  }
  auto run = [&](double lambda, Objective objective) {
    Model m(tiny_model_config(), units);
    HybridConfig hc;
    hc.lambda = lambda;
    Trainer trainer(m, hc, objective);
    for (int rep = 0; rep < 2; ++rep) {
      trainer.step({&data[0], &data[1]});
      trainer.step({&data[2], &data[3]});
    }
    return std::make_pair(snapshot(m.params()), snapshot(m.buffers()));
  };
  EXPECT_EQ(run(1.0, Objective::kHybrid), run(1.0, Objective::kCtcOnly));
  EXPECT_EQ(run(0.0, Objective::kHybrid), run(0.0, Objective::kAttentionOnly));
  EXPECT_NE(run(0.5, Objective::kHybrid), run(0.5, Objective::kCtcOnly));
}

TEST(Trainer, IdenticalRunsAreBitIdentical) {
  Rng rng(10);
  const UnitTable units = tiny_units();
  std::vector<Example> data;
  for (int i = 0; i < 6; ++i) {
    data.push_back(random_example(rng, units, "u" + std::to_string(i), 8 + rng.below(5), 3,
                                  {1 + static_cast<LabelId>(rng.below(4)), 2}));
  }
  HybridConfig hc;
  hc.epochs = 2;
  hc.batch_size = 2;
  auto run = [&] {
    Model m(tiny_model_config(), units);
    const TrainResult r = train(m, data, data, hc);
    return std::make_pair(snapshot(m.params()), r.epochs.back().train_loss);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Batches, SortedByLengthThenId) {
  Rng rng(11);
  const UnitTable units = tiny_units();
  std::vector<Example> data;
  for (std::size_t T : {9u, 5u, 7u, 5u, 12u}) {
    data.push_back(random_example(rng, units, "u" + std::to_string(data.size()), T, 3, {1}));
  }
  const auto batches = make_batches(data, 2);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0][0]->id, "u1");
  EXPECT_EQ(batches[0][1]->id, "u3");
  EXPECT_EQ(batches[1][0]->id, "u2");
  EXPECT_EQ(batches[2].size(), 1u);
  EXPECT_THROW(make_batches(data, 0), ConfigError);
}

TEST(TrainLoop, ZeroEpochsWritesOnlyTheInitialCheckpoint) {
  TempDir dir;
  Rng rng(12);
  Model model(tiny_model_config(), tiny_units());
  const std::vector<Example> data = {random_example(rng, model.labels(), "u", 8, 3, {1})};
  HybridConfig hc;
  hc.epochs = 0;
  TrainOptions opt;
  opt.outdir = dir.path();
  const TrainResult r = train(model, data, data, hc, opt);
  EXPECT_TRUE(r.epochs.empty());
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch-000.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "epoch-001.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "best.ckpt"));
  std::stringstream expected;
  expected << "# seed 1\n" << kMetricsHeader << '\n';
  EXPECT_EQ(testing::read_text(dir / "metrics.tsv"), expected.str());
}

TEST(TrainLoop, MetricsRowsMatchEpochs) {
  TempDir dir;
  Rng rng(13);
  Model model(tiny_model_config(), tiny_units());
  std::vector<Example> data;
  for (int i = 0; i < 4; ++i) {
    data.push_back(random_example(rng, model.labels(), "u" + std::to_string(i), 8, 3, {2, 3}));
  }
  HybridConfig hc;
  hc.epochs = 3;
  hc.batch_size = 2;
  TrainOptions opt;
  opt.outdir = dir.path();
  const TrainResult r = train(model, data, data, hc, opt);
  ASSERT_EQ(r.epochs.size(), 3u);
  std::stringstream ss(testing::read_text(dir / "metrics.tsv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(ss, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u + 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(lines[2 + e], format_metrics_row(r.epochs[e]));
    EXPECT_TRUE(std::filesystem::exists(dir / ("epoch-00" + std::to_string(e + 1) + ".ckpt")));
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
  // best.ckpt holds the parameters of the best epoch.
  const Model best = Model::from_checkpoint(read_checkpoint(dir / "best.ckpt"), model.labels());
  const Model at = Model::from_checkpoint(
      read_checkpoint(dir / ("epoch-00" + std::to_string(r.best_epoch) + ".ckpt")), model.labels());
  EXPECT_EQ(snapshot(best.params()), snapshot(at.params()));
}

TEST(TrainLoop, MetricsRowFormat) {
  EpochMetrics m{3, 1.5, 2.25, 33.333333, 4.56789};
  EXPECT_EQ(format_metrics_row(m), "3\t1.50000000\t2.25000000\t33.3333\t4.568");
}

TEST(Evaluate, WerOfEmptyOutputIsHundred) {
  Model model(tiny_model_config(), tiny_units());
  Rng rng(14);
  Example ex = random_example(rng, model.labels(), "u", 1, 3, {1, 4});
  // Too short for the encoder: scored as an empty hypothesis.
  EXPECT_EQ(evaluate_wer(model, {ex}), 100.0);
  EXPECT_TRUE(std::isnan(evaluate_loss(model, {ex}, 0.2)));
}

}  // namespace
}  // namespace hasr
