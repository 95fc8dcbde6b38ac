#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "semidirect/error.hpp"
#include "semidirect/imaging.hpp"

using namespace semidirect;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST(Image, RejectsNonFinite) {
  EXPECT_THROW(Image(2, 1, std::vector<float>{0.0f, std::nanf("")}), Error);
  EXPECT_THROW(Image(2, 2, std::vector<float>{0.0f}), Error);
}

TEST(SampleBilinear, IntegerCoordinateIsExact) {
  const Image img = random_image(7, 5, 1);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) EXPECT_EQ(*sample_bilinear(img, {x, y}), img(x, y));
  }
}

TEST(SampleBilinear, MidpointAndBounds) {
  Image img(2, 2);
  img(1, 0) = 1.0f;
  img(1, 1) = 1.0f;
  EXPECT_DOUBLE_EQ(*sample_bilinear(img, {0.5, 0.0}), 0.5);
  EXPECT_FALSE(sample_bilinear(img, {-0.5, 0.0}));
  EXPECT_FALSE(sample_bilinear(img, {0.0, 1.0001}));
  EXPECT_TRUE(sample_bilinear(img, {1.0, 1.0}));
}

TEST(SampleBilinear, ContinuousAcrossCellEdges) {
  const Image img = random_image(9, 9, 2);
  for (int x = 1; x < 8; ++x) {
    for (double y : {0.3, 2.7, 5.5}) {
      const double left = *sample_bilinear(img, {x - 1e-12, y});
      const double right = *sample_bilinear(img, {x + 1e-12, y});
      EXPECT_LT(std::abs(left - right), 1e-9);
    }
  }
}

TEST(SampleBilinear, GradientIsDerivativeOfInterpolant) {
  const Image img = random_image(8, 8, 3);
  const Vector2d u(3.3, 4.6);
  const auto s = sample_bilinear_with_gradient(img, u);
  ASSERT_TRUE(s);
  const double h = 1e-6;
  const double du = (*sample_bilinear(img, u + Vector2d(h, 0)) - *sample_bilinear(img, u - Vector2d(h, 0))) / (2 * h);
  const double dv = (*sample_bilinear(img, u + Vector2d(0, h)) - *sample_bilinear(img, u - Vector2d(0, h))) / (2 * h);
  EXPECT_NEAR(s->du, du, 1e-7);
  EXPECT_NEAR(s->dv, dv, 1e-7);
}

TEST(Gradient, ConstantRampAndTooSmall) {
  const GradientImage flat = gradient(Image(6, 6, 0.4f));
  for (float g : flat.gx) EXPECT_EQ(g, 0.0f);
  const int w = 16;
  Image ramp(w, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < w; ++x) ramp(x, y) = static_cast<float>(x) / w;
  }
  const GradientImage g = gradient(ramp);
  for (int y = 1; y < 4; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      EXPECT_NEAR(g.gx[static_cast<std::size_t>(y * w + x)], 1.0 / w, 1e-7);
      EXPECT_NEAR(g.gy[static_cast<std::size_t>(y * w + x)], 0.0, 1e-7);
    }
  }
  EXPECT_EQ(g.gx[0], 0.0f);
  EXPECT_EQ(g.gx[static_cast<std::size_t>(w + w - 1)], 0.0f);
  try {
    gradient(Image(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
  }
}

TEST(Pyramid, SingleLevelAndConstant) {
  const Image img = random_image(32, 24, 4);
  const ImagePyramid p1 = build_pyramid(img, 1);
  ASSERT_EQ(p1.size(), 1);
  EXPECT_EQ(p1.level(0).data()[5], img.data()[5]);
  const ImagePyramid pc = build_pyramid(Image(64, 64, 0.3f), 4);
  for (int l = 0; l < 4; ++l) {
    for (float v : pc.level(l).data()) EXPECT_FLOAT_EQ(v, 0.3f);
  }
}

TEST(Pyramid, CheckerboardAveragesToHalf) {
  Image img(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) img(x, y) = static_cast<float>((x + y) % 2);
  }
  const Image half = downsample(img);
  EXPECT_EQ(half.width(), 8);
  for (float v : half.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Pyramid, DimensionsAndMeanConservation) {
  const Image img = random_image(64, 48, 5);
  const ImagePyramid p = build_pyramid(img, 3);
  EXPECT_EQ(p.level(1).width(), 32);
  EXPECT_EQ(p.level(2).height(), 12);
  for (int l = 1; l < 3; ++l) EXPECT_NEAR(p.level(l).mean(), img.mean(), 1e-6);
  const ImagePyramid odd = build_pyramid(random_image(37, 21, 6), 2);
  EXPECT_EQ(odd.level(1).width(), 18);
  EXPECT_EQ(odd.level(1).height(), 10);
}

TEST(Pyramid, TooManyLevels) {
  try {
    build_pyramid(Image(32, 32), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyLevels);
  }
}

TEST(Rectify, IdentityMap) {
  const Image img = random_image(40, 30, 7);
  const RectifiedImage out = rectify(img, RectificationMap::identity(40, 30));
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(out.image.data()[i], img.data()[i], 1e-12);
    EXPECT_EQ(out.valid[i], 1);
  }
}

TEST(Rectify, DownsampledOutputSize) {
  const RectifiedImage out = rectify(Image(1280, 1024, 0.2f), RectificationMap::identity(1280, 1024, 2), StereoSide::Right);
  EXPECT_EQ(out.image.width(), 640);
  EXPECT_EQ(out.image.height(), 512);
  EXPECT_FLOAT_EQ(out.image(100, 100), 0.2f);
}

TEST(Rectify, TranslationMapShiftsImage) {
  const Image img = random_image(30, 20, 8);
  RectificationMap map = RectificationMap::identity(30, 20);
  for (float& x : map.left_x) x += 2.25f;
  const RectifiedImage out = rectify(img, map);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 27; ++x) {
      EXPECT_NEAR(out.image(x, y), *sample_bilinear(img, {x + 2.25, y}), 1e-6);
    }
    EXPECT_EQ(out.valid[static_cast<std::size_t>(y * 30 + 29)], 0);
    EXPECT_EQ(out.image(29, y), 0.0f);
  }
}

TEST(Rectify, DimensionMismatch) {
  try {
    rectify(Image(10, 10), RectificationMap::identity(12, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(RectificationMap, FileRoundTrip) {
  RectificationMap map = RectificationMap::identity(12, 9);
  map.right_y[5] = 3.75f;
  map.left_x[7] = std::numeric_limits<float>::quiet_NaN();
  const auto path = std::filesystem::temp_directory_path() / "semidirect_lut_test.bin";
  save_rectification_map(map, path);
  EXPECT_EQ(std::filesystem::file_size(path), 16u + 4u * 4u * 12u * 9u);
  const RectificationMap back = load_rectification_map(path, 3);
  EXPECT_EQ(back.width, 12);
  EXPECT_EQ(back.factor, 3);
  EXPECT_EQ(back.right_y[5], 3.75f);
  EXPECT_TRUE(std::isnan(back.left_x[7]));
  std::filesystem::remove(path);
  EXPECT_THROW(load_rectification_map(path), Error);
}
