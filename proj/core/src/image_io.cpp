#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "semidirect/dataset_io.hpp"
#include "semidirect/error.hpp"

namespace semidirect {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r') throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
    throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  }
  return f;
}

int max_code(int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorCode::InvalidArgument, "bit depth must be 8 or 16, got " + std::to_string(bit_depth));
  }
  return (1 << bit_depth) - 1;
}

std::uint16_t quantize(float v, int max) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(c * max));
}

// libpng reports errors by longjmp. Everything the jump could skip lives in
// this struct, owned by the caller, so no automatic object is bypassed.
struct PngState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;
  std::vector<png_bytep> rows;
  char message[256] = {};
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

bool read_png_rows(PngState& s) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_init_io(s.png, s.file);
  png_read_info(s.png, s.info);
  const int color = png_get_color_type(s.png, s.info);
  const int depth = png_get_bit_depth(s.png, s.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(s.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(s.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(s.png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(s.png, 1, -1, -1);
  }
  png_read_update_info(s.png, s.info);
  s.width = png_get_image_width(s.png, s.info);
  s.height = png_get_image_height(s.png, s.info);
  s.bit_depth = png_get_bit_depth(s.png, s.info);
  const std::size_t stride = png_get_rowbytes(s.png, s.info);
  s.bytes.resize(stride * s.height);
  s.rows.resize(s.height);
  for (png_uint_32 y = 0; y < s.height; ++y) s.rows[y] = s.bytes.data() + y * stride;
  png_read_image(s.png, s.rows.data());
  png_read_end(s.png, nullptr);
  return true;
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  PngState s;
  s.file = file.get();
  s.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &s, png_error_handler, png_warning_handler);
  if (!s.png) throw Error(ErrorCode::IoFailure, "libpng initialization failed");
  s.info = png_create_info_struct(s.png);
  const bool ok = s.info && read_png_rows(s);
  png_destroy_read_struct(&s.png, s.info ? &s.info : nullptr, nullptr);
  if (!ok) throw Error(ErrorCode::IoFailure, path.string() + ": " + s.message);

  const int w = static_cast<int>(s.width);
  const int h = static_cast<int>(s.height);
  Image img(w, h);
  if (s.bit_depth == 16) {
    for (int y = 0; y < h; ++y) {
      const std::uint8_t* row = s.rows[static_cast<std::size_t>(y)];
      for (int x = 0; x < w; ++x) img(x, y) = static_cast<float>((row[2 * x] << 8 | row[2 * x + 1]) / 65535.0);
    }
  } else {
    for (int y = 0; y < h; ++y) {
      const std::uint8_t* row = s.rows[static_cast<std::size_t>(y)];
      for (int x = 0; x < w; ++x) img(x, y) = static_cast<float>(row[x] / 255.0);
    }
  }
  return img;
}

bool write_png_rows(PngState& s) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_init_io(s.png, s.file);
  png_set_IHDR(s.png, s.info, s.width, s.height, s.bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(s.png, s.info);
  png_write_image(s.png, s.rows.data());
  png_write_end(s.png, nullptr);
  return true;
}

// PGM header tokens may be separated by whitespace and `#` comments.
std::string next_token(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string t = next_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(t, &used);
    if (used == t.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::IoFailure, path.string() + ": bad PGM header field '" + t + "'");
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") throw Error(ErrorCode::IoFailure, path.string() + ": not a greyscale PGM");
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const int maxval = header_int(in, path);
  if (maxval > 65535) throw Error(ErrorCode::IoFailure, path.string() + ": PGM maxval above 65535");

  Image img(w, h);
  const double scale = 1.0 / maxval;
  if (magic == "P2") {
    for (float& v : img.data()) {
      int code = 0;
      if (!(in >> code)) throw Error(ErrorCode::IoFailure, path.string() + ": truncated PGM");
      v = static_cast<float>(code * scale);
    }
    return img;
  }
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * bytes_per);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw Error(ErrorCode::IoFailure, path.string() + ": truncated PGM");
  }
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int code = bytes_per == 1 ? buf[i] : (buf[2 * i] << 8 | buf[2 * i + 1]);
    data[i] = static_cast<float>(code * scale);
  }
  return img;
}

void write_pgm_codes(const std::vector<std::uint16_t>& codes, int w, int h, int maxval,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out << "P5\n" << w << ' ' << h << '\n' << maxval << '\n';
  std::vector<unsigned char> buf;
  buf.reserve(codes.size() * 2);
  for (std::uint16_t c : codes) {
    if (maxval > 255) buf.push_back(static_cast<unsigned char>(c >> 8));
    buf.push_back(static_cast<unsigned char>(c & 0xFF));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

std::filesystem::path scale_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".scale";
  return p;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, "no image at " + path.string());
  unsigned char sig[8] = {};
  {
    std::ifstream in(path, std::ios::binary);
    in.read(reinterpret_cast<char*>(sig), 8);
  }
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) return read_pgm(path);
  throw Error(ErrorCode::IoFailure, path.string() + ": neither PNG nor PGM");
}

void write_png(const Image& image, const std::filesystem::path& path, int bit_depth) {
  const int max = max_code(bit_depth);
  const int w = image.width();
  const int h = image.height();
  const std::size_t stride = static_cast<std::size_t>(w) * (bit_depth / 8);

  PngState s;
  s.width = static_cast<png_uint_32>(w);
  s.height = static_cast<png_uint_32>(h);
  s.bit_depth = bit_depth;
  s.bytes.resize(stride * h);
  for (int y = 0; y < h; ++y) {
    std::uint8_t* row = s.bytes.data() + y * stride;
    for (int x = 0; x < w; ++x) {
      const std::uint16_t c = quantize(image(x, y), max);
      if (bit_depth == 16) {
        row[2 * x] = static_cast<std::uint8_t>(c >> 8);
        row[2 * x + 1] = static_cast<std::uint8_t>(c & 0xFF);
      } else {
        row[x] = static_cast<std::uint8_t>(c);
      }
    }
  }
  s.rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) s.rows[static_cast<std::size_t>(y)] = s.bytes.data() + y * stride;

  FilePtr file = open_file(path, "wb");
  s.file = file.get();
  s.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &s, png_error_handler, png_warning_handler);
  if (!s.png) throw Error(ErrorCode::IoFailure, "libpng initialization failed");
  s.info = png_create_info_struct(s.png);
  const bool ok = s.info && write_png_rows(s);
  png_destroy_write_struct(&s.png, s.info ? &s.info : nullptr);
  if (!ok) throw Error(ErrorCode::IoFailure, path.string() + ": " + s.message);
  if (std::fflush(s.file) != 0) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

void write_pgm(const Image& image, const std::filesystem::path& path, int bit_depth) {
  const int max = max_code(bit_depth);
  std::vector<std::uint16_t> codes;
  codes.reserve(image.size());
  for (float v : image.data()) codes.push_back(quantize(v, max));
  write_pgm_codes(codes, image.width(), image.height(), max, path);
}

void write_depth_pgm(const DepthMap& depth, const std::filesystem::path& path) {
  double max_d = 0.0;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (depth.valid(x, y)) max_d = std::max(max_d, depth.idepth(x, y));
    }
  }
  const double scale = max_d > 0.0 ? max_d / 65535.0 : 1.0;
  std::vector<std::uint16_t> codes(static_cast<std::size_t>(depth.width()) * depth.height(), 0);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      const long c = std::lround(depth.idepth(x, y) / scale);
      codes[depth.index(x, y)] = static_cast<std::uint16_t>(std::clamp(c, 1L, 65535L));
    }
  }
  write_pgm_codes(codes, depth.width(), depth.height(), 65535, path);

  std::ofstream side(scale_path(path));
  if (!side) throw Error(ErrorCode::IoFailure, "cannot create " + scale_path(path).string());
  side.precision(17);
  side << scale << '\n';
  if (!side) throw Error(ErrorCode::IoFailure, "write failed for " + scale_path(path).string());
}

DepthMap read_depth_pgm(const std::filesystem::path& path) {
  std::ifstream side(scale_path(path));
  if (!side) throw Error(ErrorCode::MissingFile, "cannot open " + scale_path(path).string());
  double scale = 0.0;
  if (!(side >> scale) || !(scale > 0.0)) {
    throw Error(ErrorCode::MalformedLine, scale_path(path).string() + " line 1: expected a positive scale");
  }
  const Image codes = read_pgm(path);
  DepthMap depth(codes.width(), codes.height());
  const double variance = scale * scale / 12.0;
  for (int y = 0; y < codes.height(); ++y) {
    for (int x = 0; x < codes.width(); ++x) {
      const long c = std::lround(static_cast<double>(codes(x, y)) * 65535.0);
      if (c > 0) depth.set(x, y, static_cast<double>(c) * scale, variance);
    }
  }
  return depth;
}

}  // namespace semidirect
