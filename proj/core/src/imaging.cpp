#include "semidirect/imaging.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "semidirect/error.hpp"

namespace semidirect {

Image::Image(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
}

Image::Image(int width, int height, std::vector<float> data) : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0 || data_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "image buffer does not match width*height");
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite intensity");
  }
}

double Image::mean() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

namespace {

struct BilinearCell {
  int x0, y0, x1, y1;
  double a, b;
};

std::optional<BilinearCell> locate(const Image& img, const Vector2d& u) {
  const double x = u.x();
  const double y = u.y();
  const int w = img.width();
  const int h = img.height();
  if (w == 0 || h == 0) return std::nullopt;
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return std::nullopt;
  int x0 = std::min(static_cast<int>(x), std::max(w - 2, 0));
  int y0 = std::min(static_cast<int>(y), std::max(h - 2, 0));
  return BilinearCell{x0, y0, std::min(x0 + 1, w - 1), std::min(y0 + 1, h - 1), x - x0, y - y0};
}

}  // namespace

std::optional<double> sample_bilinear(const Image& img, const Vector2d& u) {
  const auto c = locate(img, u);
  if (!c) return std::nullopt;
  const double i00 = img(c->x0, c->y0);
  const double i10 = img(c->x1, c->y0);
  const double i01 = img(c->x0, c->y1);
  const double i11 = img(c->x1, c->y1);
  return (1.0 - c->b) * ((1.0 - c->a) * i00 + c->a * i10) + c->b * ((1.0 - c->a) * i01 + c->a * i11);
}

std::optional<BilinearSample> sample_bilinear_with_gradient(const Image& img, const Vector2d& u) {
  const auto c = locate(img, u);
  if (!c) return std::nullopt;
  const double i00 = img(c->x0, c->y0);
  const double i10 = img(c->x1, c->y0);
  const double i01 = img(c->x0, c->y1);
  const double i11 = img(c->x1, c->y1);
  BilinearSample s;
  s.value = (1.0 - c->b) * ((1.0 - c->a) * i00 + c->a * i10) + c->b * ((1.0 - c->a) * i01 + c->a * i11);
  s.du = (1.0 - c->b) * (i10 - i00) + c->b * (i11 - i01);
  s.dv = (1.0 - c->a) * (i01 - i00) + c->a * (i11 - i10);
  return s;
}

GradientImage gradient(const Image& img) {
  const int w = img.width();
  const int h = img.height();
  if (w < 3 || h < 3) throw Error(ErrorCode::ImageTooSmall, "gradient needs at least 3x3 pixels");
  GradientImage g;
  g.width = w;
  g.height = h;
  g.gx.assign(img.size(), 0.0f);
  g.gy.assign(img.size(), 0.0f);
  for (int y = 1; y < h - 1; ++y) {
    const float* up = img.row(y - 1);
    const float* mid = img.row(y);
    const float* down = img.row(y + 1);
    float* gx = g.gx.data() + static_cast<std::size_t>(y) * w;
    float* gy = g.gy.data() + static_cast<std::size_t>(y) * w;
    for (int x = 1; x < w - 1; ++x) {
      gx[x] = 0.5f * (mid[x + 1] - mid[x - 1]);
      gy[x] = 0.5f * (down[x] - up[x]);
    }
  }
  return g;
}

Image downsample(const Image& img) {
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    const float* r0 = img.row(2 * y);
    const float* r1 = img.row(2 * y + 1);
    for (int x = 0; x < w; ++x) {
      out(x, y) = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
    }
  }
  return out;
}

ImagePyramid build_pyramid(const Image& img, int levels) {
  if (levels < 1) throw Error(ErrorCode::InvalidArgument, "pyramid needs at least one level");
  const int coarse_w = img.width() >> (levels - 1);
  const int coarse_h = img.height() >> (levels - 1);
  if (coarse_w < kMinPyramidSide || coarse_h < kMinPyramidSide) {
    throw Error(ErrorCode::TooManyLevels, std::to_string(levels) + " levels leave the coarsest level below 8x8");
  }
  ImagePyramid p;
  p.levels.reserve(static_cast<std::size_t>(levels));
  p.levels.push_back(img);
  for (int i = 1; i < levels; ++i) p.levels.push_back(downsample(p.levels.back()));
  return p;
}

RectificationMap RectificationMap::identity(int width, int height, int factor) {
  RectificationMap m;
  m.width = width;
  m.height = height;
  m.factor = factor;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  m.left_x.resize(n);
  m.left_y.resize(n);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      m.left_x[i] = static_cast<float>(x);
      m.left_y[i] = static_cast<float>(y);
    }
  }
  m.right_x = m.left_x;
  m.right_y = m.left_y;
  return m;
}

RectifiedImage rectify(const Image& raw, const RectificationMap& map, StereoSide side) {
  if (map.factor < 1) throw Error(ErrorCode::InvalidArgument, "downsample factor must be >= 1");
  if (raw.width() != map.width || raw.height() != map.height) {
    throw Error(ErrorCode::DimensionMismatch, "raw image does not match rectification map");
  }
  const auto& mx = side == StereoSide::Left ? map.left_x : map.right_x;
  const auto& my = side == StereoSide::Left ? map.left_y : map.right_y;
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  if (mx.size() != n || my.size() != n) throw Error(ErrorCode::DimensionMismatch, "map planes have wrong size");

  const int c = map.factor;
  const int ow = map.output_width();
  const int oh = map.output_height();
  RectifiedImage out{Image(ow, oh), std::vector<std::uint8_t>(static_cast<std::size_t>(ow) * oh, 0)};
  const double inv_area = 1.0 / (c * c);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double sum = 0.0;
      bool valid = true;
      for (int dy = 0; dy < c && valid; ++dy) {
        for (int dx = 0; dx < c; ++dx) {
          const std::size_t i = static_cast<std::size_t>(y * c + dy) * map.width + (x * c + dx);
          const auto v = sample_bilinear(raw, {mx[i], my[i]});
          if (!v) {
            valid = false;
            break;
          }
          sum += *v;
        }
      }
      if (valid) {
        out.image(x, y) = static_cast<float>(sum * inv_area);
        out.valid[static_cast<std::size_t>(y) * ow + x] = 1;
      }
    }
  }
  return out;
}

namespace {

constexpr std::array<char, 8> kLutMagic = {'S', 'D', 'R', 'L', 'U', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "LUT I/O assumes a little-endian host");

}  // namespace

RectificationMap load_rectification_map(const std::filesystem::path& path, int factor) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::array<char, 8> magic{};
  std::uint32_t w = 0;
  std::uint32_t h = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in || magic != kLutMagic) throw Error(ErrorCode::IoFailure, path.string() + ": not an SDRLUT01 file");
  if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16) throw Error(ErrorCode::IoFailure, path.string() + ": bad size");

  RectificationMap m;
  m.width = static_cast<int>(w);
  m.height = static_cast<int>(h);
  m.factor = factor;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  for (auto* plane : {&m.left_x, &m.left_y, &m.right_x, &m.right_y}) {
    plane->resize(n);
    in.read(reinterpret_cast<char*>(plane->data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (!in) throw Error(ErrorCode::IoFailure, path.string() + ": truncated LUT");
  return m;
}

void save_rectification_map(const RectificationMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, path.string());
  const auto w = static_cast<std::uint32_t>(map.width);
  const auto h = static_cast<std::uint32_t>(map.height);
  out.write(kLutMagic.data(), kLutMagic.size());
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (const auto* plane : {&map.left_x, &map.left_y, &map.right_x, &map.right_y}) {
    out.write(reinterpret_cast<const char*>(plane->data()), static_cast<std::streamsize>(plane->size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::IoFailure, path.string());
}

}  // namespace semidirect
