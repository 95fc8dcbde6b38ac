#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "semidirect/geometry.hpp"

namespace semidirect {

/// Row-major single-channel intensity image, values normalized to [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f);
  Image(int width, int height, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const float* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  double mean() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// Central-difference gradients; border pixels are zero.
struct GradientImage {
  int width = 0;
  int height = 0;
  std::vector<float> gx;
  std::vector<float> gy;

  float magnitude(int x, int y) const {
    const std::size_t i = static_cast<std::size_t>(y) * width + x;
    return std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  }
};

/// Bilinear interpolation; empty when u lies outside [0, w-1] x [0, h-1].
std::optional<double> sample_bilinear(const Image& img, const Vector2d& u);

/// Bilinear value together with the exact derivative of the interpolant.
struct BilinearSample {
  double value;
  double du;
  double dv;
};
std::optional<BilinearSample> sample_bilinear_with_gradient(const Image& img, const Vector2d& u);

GradientImage gradient(const Image& img);

struct ImagePyramid {
  std::vector<Image> levels;

  const Image& level(int i) const { return levels.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(levels.size()); }
};

/// Minimum side length of the coarsest pyramid level.
inline constexpr int kMinPyramidSide = 8;

/// 2x2 block average of `img`, dimensions rounded down.
Image downsample(const Image& img);
ImagePyramid build_pyramid(const Image& img, int levels);

/// Per-pixel source coordinates of a rectified stereo pair. Map entries that
/// are non-finite or fall outside the source image are invalid.
struct RectificationMap {
  int width = 0;   ///< map (and raw source) width
  int height = 0;  ///< map (and raw source) height
  int factor = 1;  ///< output downsampling factor c
  std::vector<float> left_x, left_y;
  std::vector<float> right_x, right_y;

  int output_width() const { return width / factor; }
  int output_height() const { return height / factor; }

  static RectificationMap identity(int width, int height, int factor = 1);
};

enum class StereoSide { Left, Right };

struct RectifiedImage {
  Image image;
  std::vector<std::uint8_t> valid;  ///< 1 where every contributing map entry was valid
};

RectifiedImage rectify(const Image& raw, const RectificationMap& map, StereoSide side = StereoSide::Left);

/// Reads an "SDRLUT01" lookup-table file: 16-byte header (magic, u32 width,
/// u32 height) followed by float32 planes left_x, left_y, right_x, right_y,
/// row-major little-endian.
RectificationMap load_rectification_map(const std::filesystem::path& path, int factor = 1);
void save_rectification_map(const RectificationMap& map, const std::filesystem::path& path);

}  // namespace semidirect
