#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "hasr/checkpoint.h"
#include "hasr/errors.h"
#include "hasr/ops.h"
#include "hasr/optim.h"
#include "hasr/parameters.h"
#include "support/gradcheck.h"
#include "support/random.h"

namespace hasr {
namespace {

using testing::check_gradients;
using testing::random_tensor;

void expect_values(const Tensor& t, std::initializer_list<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), expected.size());
  std::size_t i = 0;
  for (double e : expected) EXPECT_NEAR(t.at(i++), e, tol) << "index " << i - 1;
}

TEST(Tensor, RejectsZeroExtentAndMismatchedData) {
  EXPECT_THROW(Tensor::zeros({0, 3}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, Buffer(3)), DimensionError);
}

TEST(Linear, IdentityWeights) {
  Tape tape;
  const Tensor y = linear(tape, Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 0}, {0, 1}}),
                          Tensor::vector({0, 0}));
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  expect_values(y, {1, 2});
}

TEST(Linear, RowsSelectWeightRowsPlusBias) {
  Tape tape;
  const Tensor y = linear(tape, Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{2, 3}, {4, 5}}),
                          Tensor::vector({1, 1}));
  expect_values(y, {3, 4, 5, 6});
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    linear(tape, Tensor::zeros({2, 3}), Tensor::zeros({4, 5}), Tensor::zeros({5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
  }
}

TEST(Linear, WeightGradientMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5}, rng);
  const auto r = check_gradients([&](Tape& t) { return sum(t, linear(t, x, w, b)); }, {w, x, b});
  EXPECT_LE(r.rel_error, 1e-6);
}

TEST(Softmax, UniformEnergies) {
  Tape tape;
  expect_values(softmax(tape, Tensor::vector({0, 0, 0, 0})), {0.25, 0.25, 0.25, 0.25});
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  Tape tape;
  const Tensor p = softmax(tape, Tensor::vector({1000, 0}));
  EXPECT_NEAR(p.at(0), 1.0, 1e-12);
  EXPECT_NEAR(p.at(1), 0.0, 1e-12);
  EXPECT_TRUE(all_finite(p.data()));
}

TEST(Softmax, HandEvaluatedRatio) {
  Tape tape;
  expect_values(softmax(tape, Tensor::vector({std::log(2.0), 0})), {2.0 / 3.0, 1.0 / 3.0}, 1e-15);
}

TEST(Softmax, RowsSumToOneAndIgnoreRowShifts) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({4, 7}, rng, -5, 5, false);
    Buffer shifted(x.buffer());
    for (std::size_t r = 0; r < 4; ++r) {
      const double c = rng.uniform(-100, 100);
      for (std::size_t k = 0; k < 7; ++k) shifted[r * 7 + k] += c;
    }
    Tape tape;
    const Tensor p = softmax(tape, x);
    const Tensor q = softmax(tape, Tensor({4, 7}, shifted));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) {
        EXPECT_GE(p.at(r, k), 0.0);
        EXPECT_NEAR(p.at(r, k), q.at(r, k), 1e-9);
        s += p.at(r, k);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Softmax, NanInputRaises) {
  Tape tape;
  EXPECT_THROW(softmax(tape, Tensor::vector({0, std::numeric_limits<double>::quiet_NaN()})),
               NumericError);
}

TEST(LogSoftmax, MatchesLogOfSoftmax) {
  Rng rng(5);
  const Tensor x = random_tensor({3, 6}, rng, -4, 4, false);
  Tape tape;
  const Tensor p = softmax(tape, x);
  const Tensor lp = log_softmax(tape, x);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(lp.at(i), std::log(p.at(i)), 1e-12);
}

TEST(Elementwise, ValuesAtZero) {
  Tape tape;
  EXPECT_EQ(tanh(tape, Tensor::scalar(0)).item(), 0.0);
  EXPECT_EQ(sigmoid(tape, Tensor::scalar(0)).item(), 0.5);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  Tensor x = random_tensor({6}, rng);
  Tensor w = random_tensor({6}, rng, -1, 1, false);
  for (Activation kind : {Activation::kTanh, Activation::kSigmoid}) {
    const auto r = check_gradients(
        [&](Tape& t) { return sum(t, mul(t, elementwise(t, x, kind), w)); }, {x});
    EXPECT_LE(r.rel_error, 1e-6);
  }
}

TEST(Conv1dFrames, WidthOneIdentityFilter) {
  Tape tape;
  const Tensor y = conv1d_frames(tape, Tensor::vector({1, 1, 1}), Tensor::matrix({{1}}));
  EXPECT_EQ(y.shape(), (Shape{3, 1}));
  expect_values(y, {1, 1, 1});
}

TEST(Conv1dFrames, CenteredBoxFilterWithZeroPadding) {
  Tape tape;
  const Tensor y = conv1d_frames(tape, Tensor::vector({0, 1, 0}), Tensor::matrix({{1, 1, 1}}));
  expect_values(y, {1, 1, 1});
}

TEST(Conv1dFrames, CenteredShiftFilter) {
  Tape tape;
  const Tensor y = conv1d_frames(tape, Tensor::vector({1, 0, 0, 0}), Tensor::matrix({{0, 0, 1}}));
  EXPECT_EQ(y.shape(), (Shape{4, 1}));
  expect_values(y, {0, 1, 0, 0});
}

TEST(Conv1dFrames, MatchesDirectSumAndGradients) {
  Rng rng(9);
  Tensor a = random_tensor({1, 7}, rng);
  for (std::size_t width : {1u, 2u, 4u, 5u, 9u}) {
    Tensor f = random_tensor({3, width}, rng);
    Tape tape;
    const Tensor y = conv1d_frames(tape, a, f);
    const long center = (static_cast<long>(width) - 1) / 2;
    for (long l = 0; l < 7; ++l) {
      for (std::size_t k = 0; k < 3; ++k) {
        double expect = 0.0;
        for (long w = 0; w < static_cast<long>(width); ++w) {
          const long src = l + center - w;
          if (src >= 0 && src < 7) expect += f.at(k, static_cast<std::size_t>(w)) * a.at(static_cast<std::size_t>(src));
        }
        EXPECT_NEAR(y.at(static_cast<std::size_t>(l), k), expect, 1e-12);
      }
    }
    Tensor probe = random_tensor({7, 3}, rng, -1, 1, false);
    const auto r =
        check_gradients([&](Tape& t) { return sum(t, mul(t, conv1d_frames(t, a, f), probe)); }, {a, f});
    EXPECT_LE(r.rel_error, 1e-6) << "width " << width;
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::matrix({{1, 2}, {3, 4}}, true);
  Tape tape;
  const GradientMap g = tape.backward(sum(tape, x));
  for (double v : g.at(x)) EXPECT_EQ(v, 1.0);
}

TEST(Backward, QuadraticDerivative) {
  Tensor x = Tensor::vector({1, 2, 3}, true);
  Tape tape;
  const GradientMap g = tape.backward(sum(tape, mul(tape, x, x)));
  EXPECT_EQ(g.at(x)[0], 2.0);
  EXPECT_EQ(g.at(x)[1], 4.0);
  EXPECT_EQ(g.at(x)[2], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  const Tensor y = scale(tape, x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, SecondCallIsContractError) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  const Tensor l = sum(tape, x);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), ContractError);
}

TEST(Backward, FanOutSumsBothPaths) {
  Rng rng(13);
  Tensor w = random_tensor({3, 3}, rng);
  const Tensor x1 = random_tensor({2, 3}, rng, -1, 1, false);
  const Tensor x2 = random_tensor({2, 3}, rng, -1, 1, false);
  auto path = [&](Tape& t, const Tensor& x) { return sum(t, tanh(t, matmul(t, x, w))); };
  Tape both;
  const GradientMap g = both.backward(add(both, path(both, x1), path(both, x2)));
  Tape t1;
  const GradientMap g1 = t1.backward(path(t1, x1));
  Tape t2;
  const GradientMap g2 = t2.backward(path(t2, x2));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(g.at(w)[i], g1.at(w)[i] + g2.at(w)[i], 1e-14);
  }
}

TEST(Backward, ComposedNetworkMatchesFiniteDifferences) {
  Rng rng(17);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor w1 = random_tensor({5, 6}, rng);
  Tensor b1 = random_tensor({6}, rng);
  Tensor w2 = random_tensor({6, 3}, rng);
  Tensor b2 = random_tensor({3}, rng);
  const std::vector<std::size_t> targets = {0, 2, 1, 2};
  const auto r = check_gradients(
      [&](Tape& t) {
        const Tensor h = tanh(t, linear(t, x, w1, b1));
        return nll(t, softmax(t, linear(t, h, w2, b2)), targets);
      },
      {x, w1, b1, w2, b2});
  EXPECT_LE(r.rel_error, 1e-5);
}

TEST(Ops, EveryPrimitivePassesGradientCheck) {
  Rng rng(19);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor r4 = random_tensor({4}, rng);
  Tensor m = random_tensor({4, 2}, rng);
  Tensor probe = random_tensor({3, 4}, rng, -1, 1, false);
  const std::vector<std::size_t> cols = {1, 3, 0};
  const std::vector<std::size_t> rows = {2, 0, 2};

  const std::vector<std::pair<std::string, testing::LossFn>> cases = {
      {"matmul", [&](Tape& t) { return sum(t, tanh(t, matmul(t, a, m))); }},
      {"add", [&](Tape& t) { return sum(t, mul(t, add(t, a, b), probe)); }},
      {"add_row", [&](Tape& t) { return sum(t, mul(t, add_row(t, a, r4), probe)); }},
      {"mul", [&](Tape& t) { return sum(t, mul(t, a, b)); }},
      {"scale", [&](Tape& t) { return sum(t, mul(t, scale(t, a, -1.7), probe)); }},
      {"weighted_sum",
       [&](Tape& t) { return sum(t, mul(t, weighted_sum(t, a, 0.3, b, 0.7), probe)); }},
      {"softmax", [&](Tape& t) { return sum(t, mul(t, softmax(t, a), probe)); }},
      {"log_softmax", [&](Tape& t) { return sum(t, mul(t, log_softmax(t, a), probe)); }},
      {"nll", [&](Tape& t) { return nll(t, softmax(t, a), cols); }},
      {"pick_sum", [&](Tape& t) { return pick_sum(t, tanh(t, a), cols); }},
      {"concat_cols",
       [&](Tape& t) { return sum(t, tanh(t, matmul(t, concat_cols(t, {a, b}), random_tensor({8, 2}, rng, -1, 1, false)))); }},
      {"slice_cols", [&](Tape& t) { return sum(t, tanh(t, slice_cols(t, a, 1, 3))); }},
      {"row", [&](Tape& t) { return sum(t, tanh(t, row(t, a, 1))); }},
      {"select_rows", [&](Tape& t) { return sum(t, tanh(t, select_rows(t, a, rows))); }},
      {"stack_rows",
       [&](Tape& t) { return sum(t, tanh(t, stack_rows(t, {r4, row(t, a, 0), r4}))); }},
      {"concat_rows", [&](Tape& t) { return sum(t, mul(t, tanh(t, concat_rows(t, {a, b})), concat_rows(t, {probe, probe}))); }},
      {"slice_rows", [&](Tape& t) { return sum(t, tanh(t, slice_rows(t, a, 1, 3))); }},
      {"reshape", [&](Tape& t) { return sum(t, tanh(t, reshape(t, a, {2, 6}))); }},
  };
  for (const auto& [name, fn] : cases) {
    // Random matrices drawn inside a loss must not change between evaluations.
    Rng saved = rng;
    auto stable = [&, fn = fn](Tape& t) {
      rng = saved;
      return fn(t);
    };
    const auto r = check_gradients(stable, {a, b, r4, m});
    EXPECT_LE(r.rel_error, 1e-5) << name;
  }
}

TEST(LstmCell, GradientsMatchFiniteDifferences) {
  Rng rng(23);
  Tensor gates = random_tensor({1, 12}, rng, -2, 2);
  Tensor c_prev = random_tensor({1, 3}, rng);
  Tensor p1 = random_tensor({1, 3}, rng, -1, 1, false);
  Tensor p2 = random_tensor({1, 3}, rng, -1, 1, false);
  const auto r = check_gradients(
      [&](Tape& t) {
        const LstmCellOutput o = lstm_cell(t, gates, c_prev);
        return add(t, sum(t, mul(t, o.h, p1)), sum(t, mul(t, o.c, p2)));
      },
      {gates, c_prev});
  EXPECT_LE(r.rel_error, 1e-6);
}

TEST(BatchNorm, NormalizesColumnsAndPassesGradientCheck) {
  Rng rng(29);
  Tensor x = random_tensor({6, 3}, rng, -3, 3);
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng);
  {
    Tape tape;
    ColumnMoments m;
    const Tensor y = batch_norm_time(tape, x, Tensor::filled({3}, 1.0), Tensor::zeros({3}), 0.0, &m);
    for (std::size_t k = 0; k < 3; ++k) {
      double mean = 0, var = 0;
      for (std::size_t t = 0; t < 6; ++t) mean += y.at(t, k) / 6;
      for (std::size_t t = 0; t < 6; ++t) var += (y.at(t, k) - mean) * (y.at(t, k) - mean) / 6;
      EXPECT_NEAR(mean, 0.0, 1e-12);
      EXPECT_NEAR(var, 1.0, 1e-9);
    }
    EXPECT_EQ(m.mean.size(), 3u);
  }
  Tensor probe = random_tensor({6, 3}, rng, -1, 1, false);
  const auto r = check_gradients(
      [&](Tape& t) { return sum(t, mul(t, batch_norm_time(t, x, gamma, beta, 1e-5), probe)); },
      {x, gamma, beta});
  EXPECT_LE(r.rel_error, 1e-5);
}

TEST(ClipGlobalNorm, SmallNormUnchanged) {
  GradList g = {Buffer{0.6, 0.8}};
  const double norm = clip_global_norm(g, 5.0);
  EXPECT_DOUBLE_EQ(norm, 1.0);
  EXPECT_EQ(g[0][0], 0.6);
  EXPECT_EQ(g[0][1], 0.8);
}

TEST(ClipGlobalNorm, ScalesByMaxOverNorm) {
  GradList g = {Buffer{3, 4}};
  clip_global_norm(g, 1.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[0][1], 0.8, 1e-15);
}

TEST(ClipGlobalNorm, PostNormIsMinOfPreNormAndLimitAndIdempotent) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    GradList g;
    for (int p = 0; p < 4; ++p) {
      Buffer b(1 + rng.below(6));
      for (double& v : b) v = rng.uniform(-3, 3);
      g.push_back(b);
    }
    const double limit = rng.uniform(0.1, 8.0);
    const double pre = global_norm(g);
    clip_global_norm(g, limit);
    EXPECT_NEAR(global_norm(g), std::min(pre, limit), 1e-9);
    EXPECT_LE(global_norm(g), limit + 1e-9);
    GradList again = g;
    clip_global_norm(again, limit);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < g[i].size(); ++j) EXPECT_NEAR(again[i][j], g[i][j], 1e-15);
    }
  }
}

TEST(ClipGlobalNorm, NonPositiveLimitRejected) {
  GradList g = {Buffer{1.0}};
  EXPECT_THROW(clip_global_norm(g, 0.0), ConfigError);
}

class AdadeltaTest : public ::testing::Test {
 protected:
  void SetUp() override { x = params.add("x", Tensor::vector({0.5, -0.25}, true)); }
  ParameterSet params;
  Tensor x;
};

TEST_F(AdadeltaTest, ZeroGradientLeavesParametersAndDecaysAverage) {
  AdadeltaState state = make_adadelta_state(params);
  state.sq_grad[0] = {2.0, 4.0};
  adadelta_step(params, {Buffer{0.0, 0.0}}, state);
  EXPECT_EQ(x.at(0), 0.5);
  EXPECT_EQ(x.at(1), -0.25);
  EXPECT_DOUBLE_EQ(state.sq_grad[0][0], 0.95 * 2.0);
  EXPECT_DOUBLE_EQ(state.sq_grad[0][1], 0.95 * 4.0);
}

TEST_F(AdadeltaTest, FirstStepMagnitude) {
  AdadeltaState state = make_adadelta_state(params);
  adadelta_step(params, {Buffer{1.0, 1.0}}, state);
  const double expect = std::sqrt(1e-8) / std::sqrt(0.05 * 1.0 + 1e-8);
  EXPECT_NEAR(0.5 - x.at(0), expect, 1e-15);
  EXPECT_GE(state.sq_update[0][0], 0.0);
}

TEST_F(AdadeltaTest, RepeatedGradientsApproachFixedPoint) {
  AdadeltaState state = make_adadelta_state(params);
  std::vector<double> steps;
  for (int i = 0; i < 100; ++i) {
    const double before = x.at(0);
    adadelta_step(params, {Buffer{1.0, 1.0}}, state);
    steps.push_back(before - x.at(0));
    for (double v : state.sq_grad[0]) EXPECT_GE(v, 0.0);
    for (double v : state.sq_update[0]) EXPECT_GE(v, 0.0);
  }
  // Independent scalar simulation of the same recurrences.
  double eg = 0, ed = 0;
  for (int i = 0; i < 100; ++i) {
    eg = 0.95 * eg + 0.05;
    const double d = std::sqrt(ed + 1e-8) / std::sqrt(eg + 1e-8);
    ed = 0.95 * ed + 0.05 * d * d;
    EXPECT_NEAR(steps[static_cast<std::size_t>(i)], d, 1e-12);
  }
  for (std::size_t i = 11; i < steps.size(); ++i) EXPECT_GE(steps[i], steps[i - 1]);
}

TEST_F(AdadeltaTest, ShapeMismatchIsContractError) {
  AdadeltaState state = make_adadelta_state(params);
  EXPECT_THROW(adadelta_step(params, {Buffer{1.0}}, state), ContractError);
}

TEST(Checkpoint, RoundTripsShapesValuesAndMetadata) {
  Rng rng(37);
  Checkpoint ckpt;
  ckpt.metadata = R"({"k": 1})";
  ckpt.entries.push_back({"a.w", random_tensor({3, 4}, rng, -1, 1, false)});
  ckpt.entries.push_back({"b", random_tensor({5}, rng, -1, 1, false)});
  const Checkpoint back = decode_checkpoint(encode_checkpoint(ckpt));
  EXPECT_EQ(back.metadata, ckpt.metadata);
  ASSERT_EQ(back.entries.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.entries[i].name, ckpt.entries[i].name);
    EXPECT_EQ(back.entries[i].tensor.shape(), ckpt.entries[i].tensor.shape());
    for (std::size_t j = 0; j < ckpt.entries[i].tensor.numel(); ++j) {
      EXPECT_EQ(back.entries[i].tensor.at(j), ckpt.entries[i].tensor.at(j));
    }
  }
  const std::string bytes = encode_checkpoint(ckpt);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), kCheckpointVersion);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
}

}  // namespace
}  // namespace hasr
