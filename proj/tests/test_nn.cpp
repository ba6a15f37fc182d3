#include "test_util.hpp"

#include "vadvae/errors.hpp"
#include "vadvae/nn.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vadvae;
using vadvae::testing::check_gradients;

TEST(Linear, IdentityWeightsPassInputThrough) {
  Rng rng(0);
  Linear layer(3, 3, rng);
  layer.weight.mutable_value() = Matrix::Identity(3, 3);
  const Matrix x = rng.normal_matrix(4, 3);
  EXPECT_EQ(layer(Tensor::constant(x)).value(), x);
}

TEST(Linear, HandComputedAffineMap) {
  Rng rng(0);
  Linear layer(1, 1, rng);
  layer.weight.mutable_value()(0, 0) = 2.0;
  layer.bias.mutable_value()(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(layer(Tensor::row({3.0})).item(), 7.0);
}

TEST(Linear, BiasGradientAccumulatesOverBatch) {
  Rng rng(0);
  Linear layer(2, 3, rng);
  TapeScope scope;
  backward(sum(layer(Tensor::constant(rng.normal_matrix(4, 2)))));
  EXPECT_TRUE(layer.bias.grad().isApproxToConstant(4.0));
}

TEST(Linear, ShapeMismatchIsDimensionError) {
  Rng rng(0);
  Linear layer(2, 3, rng);
  EXPECT_THROW(layer(Tensor::constant(Matrix::Ones(1, 3))), DimensionError);
}

TEST(Init, UniformBoundsAndZeroBias) {
  Rng rng(7);
  Linear layer(16, 8, rng);
  EXPECT_LE(layer.weight.value().cwiseAbs().maxCoeff(), 0.25);
  EXPECT_TRUE(layer.bias.value().isZero());
  GruCell cell(4, 9, rng);
  EXPECT_LE(cell.w_hidden.value().cwiseAbs().maxCoeff(), 1.0 / 3.0);
  EXPECT_LE(cell.w_input.value().cwiseAbs().maxCoeff(), 0.5);
}

TEST(Init, SameSeedSameParameters) {
  Rng a(42), b(42);
  GruCell ca(5, 6, a), cb(5, 6, b);
  EXPECT_EQ(ca.w_input.value(), cb.w_input.value());
  EXPECT_EQ(ca.w_hidden.value(), cb.w_hidden.value());
}

class EncoderTest : public ::testing::Test {
 protected:
  Rng rng{3};
  Embedding embedding{10, 4, rng};
  GruCell cell{4, 5, rng};
};

TEST_F(EncoderTest, SingleTokenIsOneStepFromZero) {
  const std::vector<int> ids{7};
  const Tensor h = encode_sequence(embedding, cell, ids);
  Tensor x = add_row(matmul(embedding.lookup(ids), cell.w_input), cell.b_input);
  EXPECT_TRUE(h.value().isApprox(cell.step(x, Tensor::zeros(1, 5)).value(), 1e-14));
}

TEST_F(EncoderTest, OrderSensitive) {
  const std::vector<int> a{1, 2, 3, 4};
  const std::vector<int> b{4, 3, 2, 1};
  EXPECT_GT((encode_sequence(embedding, cell, a).value() - encode_sequence(embedding, cell, b).value())
                .cwiseAbs()
                .maxCoeff(),
            1e-6);
}

TEST_F(EncoderTest, GradientReachesOnlyInputRows) {
  const std::vector<int> ids{2, 5, 2};
  TapeScope scope;
  backward(sum(encode_sequence(embedding, cell, ids)));
  const Matrix g = embedding.table.grad();
  for (Index r = 0; r < g.rows(); ++r) {
    const bool used = r == 2 || r == 5;
    EXPECT_EQ(g.row(r).isZero(), !used) << "row " << r;
  }
}

TEST_F(EncoderTest, BatchedRaggedMatchesSequential) {
  const std::vector<std::vector<int>> seqs{{1, 2, 3, 4, 5}, {6, 7}, {8, 9, 1}};
  const Matrix batched = encode_batch(embedding, cell, seqs).value();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    EXPECT_TRUE(batched.row(static_cast<Index>(i))
                    .isApprox(encode_sequence(embedding, cell, seqs[i]).value().row(0), 1e-13));
  }
}

TEST_F(EncoderTest, Errors) {
  const std::vector<int> empty;
  EXPECT_THROW(encode_sequence(embedding, cell, empty), UsageError);
  const std::vector<int> oov{3, 10};
  EXPECT_THROW(encode_sequence(embedding, cell, oov), DataError);
}

TEST_F(EncoderTest, HiddenStateStaysFiniteOverLongInputs) {
  std::vector<int> ids(512);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(rng.below(10));
  const Matrix h = encode_sequence(embedding, cell, ids).value();
  EXPECT_TRUE(h.allFinite());
  EXPECT_LE(h.cwiseAbs().maxCoeff(), 1.0);
}

TEST_F(EncoderTest, GradientsMatchFiniteDifferences) {
  const std::vector<std::vector<int>> seqs{{1, 2, 3}, {4, 5}};
  const Matrix w = rng.normal_matrix(2, 5);
  auto f = [&] { return sum(encode_batch(embedding, cell, seqs) * Tensor::constant(w)); };
  const auto r = check_gradients(f, {embedding.table, cell.w_input, cell.w_hidden, cell.b_input, cell.b_hidden});
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Decoder, SingleSymbolVocabularyHasZeroLoss) {
  Rng rng(0);
  Embedding emb(1, 3, rng);
  GruCell cell(3, 4, rng);
  Linear init(2, 4, rng), out(4, 1, rng);
  const Tensor z = Tensor::constant(rng.normal_matrix(1, 2));
  EXPECT_NEAR(decode_autoregressive(emb, cell, init, out, z, {{0, 0, 0}}).item(), 0.0, 1e-12);
}

TEST(Decoder, UniformLogitsGiveLogVocab) {
  Rng rng(0);
  Embedding emb(50, 3, rng);
  GruCell cell(3, 4, rng);
  Linear init(2, 4, rng), out(4, 50, rng);
  out.weight.mutable_value().setZero();
  const Tensor z = Tensor::constant(rng.normal_matrix(2, 2));
  EXPECT_NEAR(decode_autoregressive(emb, cell, init, out, z, {{0, 5, 9, 1}, {0, 7, 1}}).item(),
              std::log(50.0), 1e-12);
}

TEST(Decoder, InitialLossWithinSanityBand) {
  Rng rng(5);
  Embedding emb(30, 8, rng);
  GruCell cell(8, 16, rng);
  Linear init(6, 16, rng), out(16, 30, rng);
  const Tensor z = Tensor::constant(rng.normal_matrix(3, 6));
  const double loss =
      decode_autoregressive(emb, cell, init, out, z, {{0, 4, 5, 6, 2}, {0, 9, 2}, {0, 11, 12, 2}}).item();
  EXPECT_GE(loss, 0.0);
  EXPECT_LE(loss, std::log(30.0) + 1.0);
}

TEST(Decoder, RejectsDegenerateGold) {
  Rng rng(0);
  Embedding emb(5, 3, rng);
  GruCell cell(3, 4, rng);
  Linear init(2, 4, rng), out(4, 5, rng);
  const Tensor z = Tensor::constant(rng.normal_matrix(1, 2));
  EXPECT_THROW(decode_autoregressive(emb, cell, init, out, z, {{}}), UsageError);
}

TEST(Decoder, OverfitsOneSentence) {
  Rng rng(11);
  Embedding emb(12, 8, rng);
  GruCell cell(8, 16, rng);
  Linear init(4, 16, rng), out(16, 12, rng);
  const Tensor z = Tensor::constant(rng.normal_matrix(1, 4));
  const std::vector<std::vector<int>> gold{{0, 5, 7, 9, 2}};
  ParameterList params;
  append_parameters(params, "emb", emb.parameters());
  append_parameters(params, "cell", cell.parameters());
  append_parameters(params, "init", init.parameters());
  append_parameters(params, "out", out.parameters());
  AdamOptions o;
  o.peak_lr = 1e-2;
  o.warmup_ratio = 0.0;
  o.weight_decay = 0.0;
  Adam adam(params, o, 200);
  double loss = 0.0;
  for (int s = 0; s < 200; ++s) {
    TapeScope scope;
    adam.zero_grad();
    Tensor l = decode_autoregressive(emb, cell, init, out, z, gold);
    loss = l.item();
    backward(l);
    adam.step();
  }
  EXPECT_LT(loss, 0.1);
}

TEST(Decoder, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  Embedding emb(7, 3, rng);
  GruCell cell(3, 4, rng);
  Linear init(2, 4, rng), out(4, 7, rng);
  Tensor z = Tensor::parameter(rng.normal_matrix(2, 2));
  const std::vector<std::vector<int>> gold{{0, 3, 4, 2}, {0, 5, 2}};
  auto f = [&] { return decode_autoregressive(emb, cell, init, out, z, gold); };
  const auto r = check_gradients(f, {z, emb.table, cell.w_hidden, init.weight, out.weight, out.bias});
  EXPECT_TRUE(r.ok()) << r.first_failure;
}

TEST(Dropout, InvertedScalingAndIdentityAtZero) {
  Rng rng(1);
  const Tensor x = Tensor::constant(Matrix::Ones(200, 50));
  EXPECT_EQ(dropout(x, 0.0, rng).value(), x.value());
  const Matrix y = dropout(x, 0.5, rng).value();
  for (Index i = 0; i < y.size(); ++i) {
    EXPECT_TRUE(y.data()[i] == 0.0 || y.data()[i] == 2.0);
  }
  EXPECT_NEAR(y.mean(), 1.0, 0.05);
}

namespace {

AdamOptions plain(double lr, double warmup = 0.0, double wd = 0.0) {
  AdamOptions o;
  o.peak_lr = lr;
  o.warmup_ratio = warmup;
  o.weight_decay = wd;
  return o;
}

}  // namespace

TEST(Adam, QuadraticBowl) {
  Tensor w = Tensor::parameter(Matrix::Constant(1, 1, 1.0));
  Adam adam({{"w", w}}, plain(0.1), 200);
  for (int s = 0; s < 200; ++s) {
    TapeScope scope;
    adam.zero_grad();
    backward(sum(square(w)));
    adam.step();
  }
  EXPECT_LT(std::abs(w.value()(0, 0)), 1e-3);
}

TEST(Adam, ConvexQuadraticConvergesWithin500Steps) {
  // f(w) = sum (w - c)^2 with c fixed.
  const Matrix c = (Matrix(1, 4) << 0.5, -1.0, 2.0, 0.0).finished();
  Tensor w = Tensor::parameter(Matrix::Zero(1, 4));
  Adam adam({{"w", w}}, plain(0.05), 500);
  for (int s = 0; s < 500; ++s) {
    TapeScope scope;
    adam.zero_grad();
    backward(sum(square(w - Tensor::constant(c))));
    adam.step();
  }
  EXPECT_LT((w.value() - c).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Adam, WarmupEndpoints) {
  Tensor w = Tensor::parameter(Matrix::Zero(1, 1));
  Adam adam({{"w", w}}, plain(1e-3, 0.2), 100);
  EXPECT_EQ(adam.warmup_steps(), 20);
  EXPECT_DOUBLE_EQ(adam.lr_at(0), 0.0);
  EXPECT_DOUBLE_EQ(adam.lr_at(10), 5e-4);
  EXPECT_DOUBLE_EQ(adam.lr_at(20), 1e-3);
  EXPECT_DOUBLE_EQ(adam.lr_at(90), 1e-3);
}

TEST(Adam, DecoupledDecayShrinksWithoutGradient) {
  Tensor w = Tensor::parameter(Matrix::Constant(1, 1, 2.0));
  Adam adam({{"w", w}}, plain(0.1, 0.0, 0.5), 10);
  double previous = 2.0;
  for (int s = 0; s < 10; ++s) {
    adam.step();
    const double now = std::abs(w.value()(0, 0));
    EXPECT_LT(now, previous);
    previous = now;
  }
  EXPECT_EQ(adam.steps_taken(), 10);
}

TEST(GruSequence, MatchesRepeatedStepsWithCarry) {
  Rng rng(21);
  GruCell cell(3, 4, rng);
  const Matrix xp = rng.normal_matrix(3 * 2, 12);
  const Matrix h0 = rng.normal_matrix(2, 4);
  const std::vector<std::size_t> lengths{3, 1};
  const Matrix stacked = gru_sequence(cell, Tensor::constant(xp), Tensor::constant(h0), lengths).value();
  Tensor h = Tensor::constant(h0);
  for (Index t = 0; t < 3; ++t) {
    const Matrix next = cell.step(Tensor::constant(xp.middleRows(2 * t, 2)), h).value();
    Matrix expected = next;
    if (t >= 1) expected.row(1) = h.value().row(1);
    EXPECT_TRUE(stacked.middleRows(2 * t, 2).isApprox(expected, 1e-14)) << "step " << t;
    h = Tensor::constant(expected);
  }
}

TEST(GruSequence, GradientsMatchFiniteDifferences) {
  Rng rng(22);
  GruCell cell(3, 4, rng);
  Tensor xp = Tensor::parameter(rng.normal_matrix(4 * 3, 12));
  Tensor h0 = Tensor::parameter(rng.normal_matrix(3, 4));
  const std::vector<std::size_t> lengths{4, 2, 3};
  const Matrix w = rng.normal_matrix(12, 4);
  auto f = [&] { return sum(gru_sequence(cell, xp, h0, lengths) * Tensor::constant(w)); };
  const auto r = check_gradients(f, {xp, h0, cell.w_hidden, cell.b_hidden});
  EXPECT_TRUE(r.ok()) << r.first_failure;
  const std::vector<std::size_t> wrong{4, 2};
  EXPECT_THROW(gru_sequence(cell, xp, h0, wrong), DimensionError);
}
