#include "uld/repr/checkpoint.hpp"
#include "uld/repr/encoder.hpp"

#include "support/finite_difference.hpp"
#include "support/segments.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace uld;
using repr::EncoderDims;
using repr::EncoderStack;
using repr::Params;

namespace {

EncoderDims small_dims(bool discrete = false) {
  EncoderDims d;
  d.observation_dim = 3;
  d.action_dim = discrete ? 3 : 2;
  d.discrete_actions = discrete;
  d.state_dim = 4;
  d.state_action_dim = 5;
  d.hidden = 6;
  d.hidden_layers = 2;
  d.n_bins = 7;
  d.bin_half_range = 3.0;
  return d;
}

Tensor random_matrix(Index r, Index c, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor::Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return Tensor::from_matrix(m);
}

double max_abs_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    out = std::max(out, (a[i].value() - b[i].value()).cwiseAbs().maxCoeff());
  return out;
}

// Perturbs every online parameter so online and target differ.
void nudge(EncoderStack& stack, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& p : stack.parameters())
    for (Index i = 0; i < p.size(); ++i) p.data()[i] += n(rng);
}

oracle::SegmentShape shape_for(const EncoderDims& d) {
  oracle::SegmentShape s;
  s.observation_dim = d.observation_dim;
  s.action_dim = d.action_dim;
  s.discrete = d.discrete_actions;
  return s;
}

}  // namespace

// ------------------------------------------------------------------ codec

TEST(TwoHot, CentersStrictlyIncreasingWithExactZeroMiddle) {
  repr::TwoHotCodec codec;
  ASSERT_EQ(codec.size(), 51);
  for (int i = 1; i < codec.size(); ++i) EXPECT_LT(codec.centers()[i - 1], codec.centers()[i]);
  EXPECT_EQ(codec.centers()[25], 0.0);
  EXPECT_NEAR(codec.centers()[50], std::expm1(10.0), 1e-6);
  EXPECT_EQ(codec.centers()[0], -codec.centers()[50]);
}

TEST(TwoHot, ZeroIsUnitMassOnCenter) {
  repr::TwoHotCodec codec;
  const auto p = codec.encode(0.0);
  EXPECT_EQ(p[25], 1.0);
  EXPECT_EQ(p.sum(), 1.0);
}

TEST(TwoHot, GridPointIsOneHot) {
  repr::TwoHotCodec codec;
  for (int i : {0, 3, 24, 26, 40, 50}) {
    const auto p = codec.encode(codec.centers()[i]);
    EXPECT_DOUBLE_EQ(p[i], 1.0) << i;
    EXPECT_DOUBLE_EQ(p.cwiseAbs().sum(), 1.0) << i;
  }
}

TEST(TwoHot, MassOnTwoBracketingBins) {
  repr::TwoHotCodec codec;
  const auto p = codec.encode(37.3);
  int nonzero = 0, first = -1;
  for (int i = 0; i < codec.size(); ++i)
    if (p[i] != 0.0) {
      ++nonzero;
      if (first < 0) first = i;
    }
  ASSERT_EQ(nonzero, 2);
  EXPECT_LE(codec.centers()[first], 37.3);
  EXPECT_GE(codec.centers()[first + 1], 37.3);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(TwoHot, DecodeRecoversExampleValues) {
  repr::TwoHotCodec codec;
  for (double r : {-312.7, -1.3, 0.02, 37.3, 980.0}) {
    const double back = codec.decode(codec.encode(r));
    EXPECT_LE(std::abs(back - r) / std::abs(r), 1e-3) << r;
  }
}

TEST(TwoHot, OutOfRangeClampsToEdgeBins) {
  repr::TwoHotCodec codec(7, 2.0);
  EXPECT_EQ(codec.encode(1e9)[6], 1.0);
  EXPECT_EQ(codec.encode(-1e9)[0], 1.0);
  EXPECT_THROW(codec.encode(std::nan("")), std::invalid_argument);
  EXPECT_THROW(repr::TwoHotCodec(8, 1.0), std::invalid_argument);
}

// ------------------------------------------------------------------ encoders

TEST(Encoder, TargetShapesMirrorOnline) {
  std::mt19937_64 rng(1);
  EncoderStack stack(EncoderDims{.observation_dim = 5, .action_dim = 2}, rng);
  const auto online = stack.encoder_parameters();
  const auto target = stack.target_parameters();
  ASSERT_EQ(online.size(), target.size());
  for (std::size_t i = 0; i < online.size(); ++i) {
    EXPECT_EQ(online[i].shape(), target[i].shape());
    EXPECT_FALSE(target[i].requires_grad());
  }
  EXPECT_EQ(stack.model_matrix().shape(), (Shape{64, 64 + 51 + 1}));
  EXPECT_EQ(max_abs_diff(online, target), 0.0);
}

TEST(Encoder, EncodeStateDeterministicAndBounded) {
  std::mt19937_64 rng(2);
  EncoderStack stack(EncoderDims{.observation_dim = 6, .action_dim = 1}, rng);
  const Tensor obs = random_matrix(32, 6, -10.0, 10.0, rng);
  const Tensor a = stack.encode_state(obs), b = stack.encode_state(obs);
  EXPECT_TRUE(a.value() == b.value());
  EXPECT_EQ(a.cols(), 64);
  EXPECT_LT(a.value().cwiseAbs().maxCoeff(), 5.0);

  // Huge pre-activations saturate tanh to exactly 1 in fp64, so the cap is
  // reached but never exceeded.
  for (auto& p : stack.parameters()) p.value() *= 50.0;
  EXPECT_LE(stack.encode_state(obs).value().cwiseAbs().maxCoeff(), 5.0);
}

TEST(Encoder, EncodeStateRejectsDimensionMismatch) {
  std::mt19937_64 rng(3);
  EncoderStack stack(small_dims(), rng);
  EXPECT_THROW(stack.encode_state(Tensor(Shape{2, 4})), repr::RepresentationError);
}

TEST(Encoder, EncodeStateActionRejectsOutOfRangeAction) {
  std::mt19937_64 rng(4);
  EncoderStack stack(small_dims(), rng);
  const Tensor z = stack.encode_state(random_matrix(2, 3, -1, 1, rng));
  EXPECT_THROW(stack.encode_state_action(z, Tensor::matrix(2, 2, {0.0, 1.5, 0.0, 0.0})),
               repr::RepresentationError);
  EXPECT_THROW(stack.encode_state_action(z, Tensor(Shape{2, 3})), repr::RepresentationError);
  EXPECT_NO_THROW(stack.encode_state_action(z, Tensor::matrix(2, 2, {-1.0, 1.0, 0.3, -0.2})));

  EncoderStack discrete(small_dims(true), rng);
  const Tensor zd = discrete.encode_state(random_matrix(1, 3, -1, 1, rng));
  EXPECT_THROW(discrete.encode_state_action(zd, Tensor::matrix(1, 3, {-1.0, 0.0, 0.0})),
               repr::RepresentationError);
}

TEST(Encoder, DistinctActionsGiveDistinctEmbeddings) {
  std::mt19937_64 rng(5);
  EncoderStack stack(EncoderDims{.observation_dim = 4, .action_dim = 4, .discrete_actions = true}, rng);
  const Tensor z = stack.encode_state(random_matrix(1, 4, -1, 1, rng));
  std::vector<Tensor::Matrix> outs;
  for (int a = 0; a < 4; ++a) {
    Tensor::Matrix act = Tensor::Matrix::Zero(1, 4);
    act(0, a) = 1.0;
    outs.push_back(stack.encode_state_action(z, Tensor::from_matrix(act)).value());
    EXPECT_LT(outs.back().cwiseAbs().maxCoeff(), 5.0);
  }
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      EXPECT_GT((outs[i] - outs[j]).cwiseAbs().maxCoeff(), 1e-3) << i << "," << j;
  // Determinism.
  Tensor::Matrix act = Tensor::Matrix::Zero(1, 4);
  act(0, 0) = 1.0;
  EXPECT_TRUE(stack.encode_state_action(z, Tensor::from_matrix(act)).value() == outs[0]);
}

TEST(Encoder, ModelStepIsLinearWithThreeHeads) {
  std::mt19937_64 rng(6);
  EncoderStack stack(EncoderDims{.observation_dim = 2, .action_dim = 1}, rng);
  const Tensor z1 = random_matrix(3, 64, -5, 5, rng), z2 = random_matrix(3, 64, -5, 5, rng);
  const double a = 0.7, b = -2.3;
  const auto lhs = stack.model_step(z1 * a + z2 * b);
  const auto o1 = stack.model_step(z1), o2 = stack.model_step(z2);
  EXPECT_EQ(lhs.next_state.cols(), 64);
  EXPECT_EQ(lhs.reward_logits.cols(), 51);
  EXPECT_EQ(lhs.terminal.cols(), 1);
  auto check = [&](const Tensor& l, const Tensor& x, const Tensor& y) {
    EXPECT_LE((l.value() - (a * x.value() + b * y.value())).cwiseAbs().maxCoeff(), 1e-10);
  };
  check(lhs.next_state, o1.next_state, o2.next_state);
  check(lhs.reward_logits, o1.reward_logits, o2.reward_logits);
  check(lhs.terminal, o1.terminal, o2.terminal);

  const auto zero = stack.model_step(Tensor(Shape{1, 64}));
  EXPECT_EQ(zero.next_state.value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(zero.reward_logits.value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(zero.terminal.item(), 0.0);
}

// ------------------------------------------------------------------ sync

TEST(Encoder, SyncCopiesExactlyAndIsIdempotent) {
  std::mt19937_64 rng(7);
  EncoderStack stack(small_dims(), rng);
  nudge(stack, rng);
  EXPECT_GT(max_abs_diff(stack.encoder_parameters(), stack.target_parameters()), 0.0);
  stack.sync_targets();
  EXPECT_EQ(max_abs_diff(stack.encoder_parameters(), stack.target_parameters()), 0.0);
  std::vector<Tensor::Matrix> once;
  for (const auto& p : stack.target_parameters()) once.push_back(p.value());
  stack.sync_targets();
  const auto twice = stack.target_parameters();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_TRUE(once[i] == twice[i].value());
}

// ------------------------------------------------------------------ loss

TEST(RepresentationLoss, AllWeightsZeroGivesZeroLossAndGradients) {
  std::mt19937_64 rng(8);
  EncoderStack stack(small_dims(), rng);
  const auto batch = oracle::random_segments(shape_for(stack.dims()), rng);
  const auto loss = repr::representation_loss(stack, batch, 3, {0.0, 0.0, 0.0}, true);
  EXPECT_EQ(loss.total.item(), 0.0);
  auto params = stack.parameters();
  zero_grad(params);
  backward(loss.total);
  for (const auto& p : params) EXPECT_TRUE(!p.has_grad() || p.grad().cwiseAbs().maxCoeff() == 0.0);
}

TEST(RepresentationLoss, HorizonOneDynamicsTermMatchesDefinition) {
  std::mt19937_64 rng(9);
  EncoderStack stack(small_dims(), rng);
  nudge(stack, rng);
  auto shape = shape_for(stack.dims());
  shape.allow_early_end = false;
  const auto batch = oracle::random_segments(shape, rng);
  const auto loss = repr::representation_loss(stack, batch, 1, {0.0, 1.0, 0.0}, false);

  double expected = 0.0;
  const auto pred = stack.model_step(
      stack.encode_state_action(stack.encode_state(batch.observations[0]), batch.actions[0]));
  const auto target = stack.encode_state(batch.next_observations[0], Params::kTarget);
  for (Index b = 0; b < batch.batch_size(); ++b)
    expected += (pred.next_state.value().row(b) - target.value().row(b)).squaredNorm();
  expected /= static_cast<double>(batch.batch_size());
  EXPECT_NEAR(loss.total.item(), expected, 1e-12);
  EXPECT_NEAR(loss.dynamics, expected, 1e-12);
}

TEST(RepresentationLoss, TerminalTermIgnoredUntilFirstTerminal) {
  std::mt19937_64 rng(10);
  EncoderStack stack(small_dims(), rng);
  const auto batch = oracle::random_segments(shape_for(stack.dims()), rng);
  const auto before = repr::representation_loss(stack, batch, 3, {0.0, 0.0, 1.0}, false);
  const auto after = repr::representation_loss(stack, batch, 3, {0.0, 0.0, 1.0}, true);
  EXPECT_EQ(before.total.item(), 0.0);
  EXPECT_GT(after.total.item(), 0.0);
  EXPECT_NEAR(after.total.item(), after.terminal, 1e-15);
}

TEST(RepresentationLoss, MaskedOffsetsDoNotContribute) {
  std::mt19937_64 rng(11);
  EncoderStack stack(small_dims(), rng);
  auto shape = shape_for(stack.dims());
  shape.allow_early_end = false;
  auto batch = oracle::random_segments(shape, rng);
  for (auto& v : batch.valid) v[0] = 0.0;  // item 0 contributes nothing...
  batch.valid[0][0] = 1.0;                 // ...except its first transition
  const double base = repr::representation_loss(stack, batch, 3, {}, true).total.item();
  // Scrambling item 0's later offsets must not change the loss.
  for (int k = 1; k < 3; ++k) {
    batch.rewards[k][0] = 1e3;
    batch.next_observations[k].value().row(0).setConstant(9.0);
  }
  EXPECT_EQ(repr::representation_loss(stack, batch, 3, {}, true).total.item(), base);
}

TEST(RepresentationLoss, FiniteForBoundedObservations) {
  std::mt19937_64 rng(12);
  EncoderStack stack(EncoderDims{.observation_dim = 3, .action_dim = 2}, rng);
  for (auto& p : stack.parameters()) p.value() *= 20.0;
  auto shape = shape_for(stack.dims());
  shape.batch = 16;
  shape.reward_scale = 1e4;
  const auto batch = oracle::random_segments(shape, rng);
  const auto loss = repr::representation_loss(stack, batch, 3, {}, true);
  EXPECT_TRUE(std::isfinite(loss.total.item()));
}

TEST(RepresentationLoss, GradientsMatchFiniteDifferences) {
  for (bool discrete : {false, true}) {
    for (int draw = 0; draw < 5; ++draw) {
      std::mt19937_64 rng(100 + draw);
      EncoderStack stack(small_dims(discrete), rng);
      nudge(stack, rng);
      const auto batch = oracle::random_segments(shape_for(stack.dims()), rng);
      auto params = stack.parameters();
      zero_grad(params);
      backward(repr::representation_loss(stack, batch, 3, {1.0, 1.0, 1.0}, true).total);
      auto check = oracle::compare_with_finite_differences(params, [&] {
        return repr::representation_loss(stack, batch, 3, {1.0, 1.0, 1.0}, true).total.item();
      });
      EXPECT_LE(check.relative_error, 1e-5) << "discrete=" << discrete << " draw=" << draw;
    }
  }
}

TEST(RepresentationLoss, NoGradientReachesTargetEncoder) {
  std::mt19937_64 rng(13);
  EncoderStack stack(small_dims(), rng);
  const auto batch = oracle::random_segments(shape_for(stack.dims()), rng);
  backward(repr::representation_loss(stack, batch, 3, {}, true).total);
  for (const auto& p : stack.target_parameters())
    EXPECT_TRUE(!p.has_grad() || p.grad().cwiseAbs().maxCoeff() == 0.0);
  bool any = false;
  for (const auto& p : stack.parameters()) any = any || (p.has_grad() && p.grad().cwiseAbs().maxCoeff() > 0);
  EXPECT_TRUE(any);
}

TEST(RepresentationLoss, RejectsHorizonBeyondSegment) {
  std::mt19937_64 rng(14);
  EncoderStack stack(small_dims(), rng);
  const auto batch = oracle::random_segments(shape_for(stack.dims()), rng);
  EXPECT_THROW(repr::representation_loss(stack, batch, 4, {}, true), repr::RepresentationError);
}

// ------------------------------------------------------------------ checkpoint

TEST(Checkpoint, EncoderRoundTripIsBitExact) {
  std::mt19937_64 rng(15);
  EncoderStack stack(small_dims(), rng);
  nudge(stack, rng);
  const auto path = std::filesystem::temp_directory_path() / "uld_repr_test.ckpt";
  repr::save_encoder(path, stack);
  const auto loaded = repr::load_encoder(path);
  EXPECT_EQ(loaded.dims(), stack.dims());
  const auto a = stack.named_arrays(), b = loaded.named_arrays();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(a[i].second.value() == b[i].second.value()) << a[i].first;
  }
  const Tensor obs = random_matrix(2, 3, -1, 1, rng);
  EXPECT_TRUE(stack.encode_state(obs).value() == loaded.encode_state(obs).value());
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptOrMismatchedFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto bogus = dir / "uld_not_a_ckpt.bin";
  { std::ofstream(bogus) << "hello"; }
  EXPECT_THROW(repr::read_checkpoint(bogus), repr::CheckpointError);

  std::mt19937_64 rng(16);
  EncoderStack stack(small_dims(), rng);
  const auto path = dir / "uld_shape.ckpt";
  repr::save_encoder(path, stack);
  auto dims = small_dims();
  dims.hidden = 7;
  EncoderStack other(dims, rng);
  EXPECT_THROW(repr::read_checkpoint(path).load_into(other.named_arrays()), repr::CheckpointError);

  // Truncation is detected.
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  EXPECT_THROW(repr::read_checkpoint(path), repr::CheckpointError);
  std::filesystem::remove(path);
  std::filesystem::remove(bogus);
}
