#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "neuroclip/dynamic_filter.hpp"
#include "neuroclip/eeg_encoder.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/grad_check.hpp"
#include "neuroclip/ops.hpp"
#include "neuroclip/parameter.hpp"

using namespace neuroclip;

namespace {

// Direct zero-padded cross-correlation, one loop per index.
Tensor naive_filter(const Tensor& img, const Tensor& f, std::size_t kh, std::size_t kw) {
  const std::size_t B = img.dim(0), H = img.dim(2), W = img.dim(3);
  Tensor out({B, 3, H, W});
  auto o = out.mutable_data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j) {
              const long yy = long(y + i) - long(kh / 2), xx = long(x + j) - long(kw / 2);
              if (yy < 0 || xx < 0 || yy >= long(H) || xx >= long(W)) continue;
              acc += img.at({b, c, std::size_t(yy), std::size_t(xx)}) * f.at({b, c * kh * kw + i * kw + j});
            }
          o[((b * 3 + c) * H + y) * W + x] = acc;
        }
  return out;
}

}  // namespace

TEST(Perturb, IdentityAtInitIsBitwise) {
  std::mt19937_64 rng(1);
  const Tensor e = Tensor::randn({3, 4, 5}, rng);
  EXPECT_TRUE(bitwise_equal(perturb(e, PerturbationParams::identity(4, 5)), e));
}

TEST(Perturb, WorkedExample) {
  const Tensor e({1, 1, 2}, {1, 2});
  const PerturbationParams p{Tensor({1, 2}, {2, 2}), Tensor({1, 2}, {1, 1})};
  const Tensor out = perturb(e, p);
  EXPECT_EQ(out.data()[0], 3.0);
  EXPECT_EQ(out.data()[1], 5.0);
}

TEST(Perturb, GainGradientIsTheSignalSummedOverBatch) {
  std::mt19937_64 rng(2);
  const Tensor e = Tensor::randn({1, 3, 4}, rng);
  PerturbationParams p = PerturbationParams::identity(3, 4);
  p.gain = trainable(Tensor::uniform({3, 4}, rng, 0.5, 1.5));
  sum(perturb(e, p)).backward();
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_DOUBLE_EQ(p.gain.grad()[i], e.data()[i]);

  const std::vector<Parameter> params = {{"gain", p.gain}};
  const auto report = grad_check([&] { return sum(perturb(e, p)); }, params, {.tolerance = 1e-6});
  EXPECT_TRUE(report.passed) << format_report(report);
}

TEST(Perturb, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(perturb(Tensor({2, 3, 4}), PerturbationParams::identity(3, 5)), DimensionError);
}

TEST(Encode, ConstantMap) {
  std::mt19937_64 rng(3);
  LightProjectorParams p{Tensor({6, 4}, 0.0), Tensor({4}, {1, 0, 0, 0})};
  const Tensor z = encode(Tensor::randn({3, 2, 3}, rng), p);
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_NEAR(z.at({b, 0}), 1.0, 1e-12);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(z.at({b, k}), 0.0);
  }
}

TEST(Encode, DeskShapeAndUnitRows) {
  std::mt19937_64 rng(4);
  const LightProjectorParams p = LightProjectorParams::init(17 * 250, 128, rng);
  const Tensor z = encode(Tensor::randn({4, 17, 250}, rng), p);
  EXPECT_EQ(z.shape(), (Shape{4, 128}));
  for (std::size_t b = 0; b < 4; ++b) {
    double n = 0.0;
    for (std::size_t k = 0; k < 128; ++k) n += z.at({b, k}) * z.at({b, k});
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(Encode, LinearBeforeNormalization) {
  std::mt19937_64 rng(5);
  LightProjectorParams p = LightProjectorParams::init(12, 5, rng);
  p.bias = Tensor({5}, 0.0);
  const Tensor e1 = Tensor::randn({2, 3, 4}, rng), e2 = Tensor::randn({2, 3, 4}, rng);
  const Tensor lhs = encode_linear(add(scale(e1, 2.5), scale(e2, -0.75)), p);
  const Tensor rhs = add(scale(encode_linear(e1, p), 2.5), scale(encode_linear(e2, p), -0.75));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Encode, FeatureMismatchIsDimensionError) {
  std::mt19937_64 rng(6);
  const LightProjectorParams p = LightProjectorParams::init(12, 5, rng);
  EXPECT_THROW(encode(Tensor({2, 3, 5}), p), DimensionError);
}

TEST(Encode, EncoderNames) {
  EXPECT_NO_THROW(check_encoder_name("lightprojector"));
  try {
    check_encoder_name("eegnet");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("not implemented"), std::string::npos);
  }
  EXPECT_THROW(check_encoder_name("resnet"), ConfigError);
}

TEST(FilterGenerator, SeventyFiveTapsForFiveByFive) {
  std::mt19937_64 rng(7);
  const FilterGeneratorParams p = FilterGeneratorParams::init({}, rng);
  EXPECT_EQ(p.taps(), 75u);
  EXPECT_EQ(generate_filters(Tensor::uniform({2, 3, 16, 16}, rng, 0, 1), p).shape(), (Shape{2, 75}));
}

TEST(FilterGenerator, IdenticalImagesGiveIdenticalKernels) {
  std::mt19937_64 rng(8);
  const FilterGeneratorParams p = FilterGeneratorParams::init({}, rng);
  const Tensor one = Tensor::uniform({1, 3, 12, 12}, rng, 0, 1);
  const Tensor two = concat(std::vector<Tensor>{one, one}, 0);
  const Tensor f = generate_filters(two, p);
  for (std::size_t k = 0; k < 75; ++k) EXPECT_EQ(f.at({0, k}), f.at({1, k}));
}

TEST(FilterGenerator, InitialKernelsAreNearDelta) {
  std::mt19937_64 rng(9);
  const FilterGeneratorParams p = FilterGeneratorParams::init({}, rng);
  const Tensor f = generate_filters(Tensor::uniform({3, 3, 16, 16}, rng, 0, 1), p);
  EXPECT_LT(max_abs_diff(f, delta_filters(3, 5, 5)), 0.1);
}

TEST(FilterGenerator, TooSmallImageIsDimensionError) {
  std::mt19937_64 rng(10);
  const FilterGeneratorParams p = FilterGeneratorParams::init({}, rng);
  EXPECT_THROW(generate_filters(Tensor({1, 3, 6, 6}), p), DimensionError);
}

TEST(DynamicFilter, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(11);
  const Tensor img = Tensor::uniform({2, 3, 9, 7}, rng, 0, 1);
  for (std::size_t k : {1u, 3u, 5u}) EXPECT_EQ(max_abs_diff(apply_dynamic_filter(img, delta_filters(2, k, k), k, k), img), 0.0);
}

TEST(DynamicFilter, UniformKernelOnConstantImage) {
  const Tensor img({1, 3, 8, 8}, 0.7);
  const Tensor f({1, 75}, 1.0 / 25.0);
  const Tensor out = apply_dynamic_filter(img, f, 5, 5);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const bool interior = y >= 2 && y < 6 && x >= 2 && x < 6;
        if (interior)
          EXPECT_NEAR(out.at({0, c, y, x}), 0.7, 1e-12);
        else
          EXPECT_LT(out.at({0, c, y, x}), 0.7);
      }
}

TEST(DynamicFilter, MatchesNaiveConvolution) {
  std::mt19937_64 rng(12);
  for (std::size_t trial = 0; trial < 10; ++trial) {
    const std::size_t kh = 1 + 2 * (trial % 3), kw = 1 + 2 * ((trial + 1) % 3);
    const Tensor img = Tensor::randn({2, 3, 6 + trial % 4, 5 + trial % 3}, rng);
    const Tensor f = Tensor::randn({2, 3 * kh * kw}, rng);
    EXPECT_LT(max_abs_diff(apply_dynamic_filter(img, f, kh, kw), naive_filter(img, f, kh, kw)), 1e-9)
        << kh << "x" << kw;
  }
}

TEST(DynamicFilter, LinearInTheImage) {
  std::mt19937_64 rng(13);
  const Tensor a = Tensor::randn({2, 3, 7, 7}, rng), b = Tensor::randn({2, 3, 7, 7}, rng);
  const Tensor f = Tensor::randn({2, 27}, rng);
  const Tensor lhs = apply_dynamic_filter(add(scale(a, 1.5), scale(b, -2.0)), f, 3, 3);
  const Tensor rhs = add(scale(apply_dynamic_filter(a, f, 3, 3), 1.5), scale(apply_dynamic_filter(b, f, 3, 3), -2.0));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(DynamicFilter, EvenKernelIsConfigError) {
  EXPECT_THROW(apply_dynamic_filter(Tensor({1, 3, 6, 6}), Tensor({1, 48}), 4, 4), ConfigError);
  EXPECT_THROW(delta_filters(1, 2, 3), ConfigError);
}

TEST(DynamicFilter, GradientsReachImageAndGenerator) {
  std::mt19937_64 rng(14);
  FilterGeneratorParams p = FilterGeneratorParams::init({3, 3, 4, 4, 8}, rng);
  p.fc2_w = trainable(Tensor::randn(p.fc2_w.shape(), rng, 0.3));
  const Tensor img = trainable(Tensor::uniform({2, 3, 8, 8}, rng, 0, 1));
  const Tensor r = Tensor::randn({2, 3, 8, 8}, rng);
  const auto f = [&] { return sum(mul(apply_dynamic_filter(img, generate_filters(img, p), 3, 3), r)); };
  const std::vector<Parameter> params = {{"images", img}, {"fc2_w", p.fc2_w}, {"conv1_w", p.conv1_w}};
  const auto report = grad_check(f, params);
  EXPECT_TRUE(report.passed) << format_report(report);
}
