#include "gspcd/image_io.hpp"

#include <png.h>

#include <csetjmp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace gspcd::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw InputError("cannot open " + path.string());
  return f;
}

void png_warning_handler(png_structp, png_const_charp) {}

void write_png_bytes(const std::filesystem::path& path, int height, int width, int channels,
                     const std::vector<std::uint8_t>& bytes) {
  if (channels != 1 && channels != 3) throw InputError("PNG output supports 1 or 3 channels");
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  const std::size_t stride = std::size_t(width) * channels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed writing PNG " + path.string());
  }
  {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r) {
      png_write_row(png, const_cast<png_bytep>(bytes.data() + r * stride));
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
}

std::uint8_t to_byte(double v) { return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

imaging::ImageRaster read_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, 8, f.get()) != 8 || png_sig_cmp(sig.data(), 0, 8) != 0)
    throw InputError(path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  imaging::ImageRaster img;
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt PNG " + path.string());
  }
  {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);

    img.height = int(png_get_image_height(png, info));
    img.width = int(png_get_image_width(png, info));
    img.channels = int(png_get_channels(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buf.resize(rowbytes * img.height);
    rows.resize(img.height);
    for (int r = 0; r < img.height; ++r) rows[r] = buf.data() + r * rowbytes;
    png_read_image(png, rows.data());

    img.data.resize(img.pixel_count() * img.channels);
    if (out_depth == 16) {
      for (std::size_t i = 0; i < img.data.size(); ++i) {
        std::uint16_t v;
        std::memcpy(&v, buf.data() + 2 * i, 2);
        img.data[i] = v / 65535.0;
      }
    } else {
      for (int r = 0; r < img.height; ++r) {
        for (std::size_t j = 0; j < std::size_t(img.width) * img.channels; ++j) {
          img.data[r * std::size_t(img.width) * img.channels + j] = rows[r][j] / 255.0;
        }
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const imaging::ImageRaster& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
  write_png_bytes(path, img.height, img.width, img.channels, bytes);
}

std::vector<std::filesystem::path> write_png_bands(const std::filesystem::path& path, const imaging::ImageRaster& img) {
  if (img.channels == 1 || img.channels == 3) {
    write_png(path, img);
    return {path};
  }
  std::vector<std::filesystem::path> written;
  for (int q = 0; q < img.channels; ++q) {
    imaging::ImageRaster band(img.height, img.width, 1);
    for (std::size_t p = 0; p < band.pixel_count(); ++p) band.data[p] = img.data[p * img.channels + q];
    std::filesystem::path name = path;
    name.replace_filename(path.stem().string() + "_band" + std::to_string(q) + path.extension().string());
    write_png(name, band);
    written.push_back(std::move(name));
  }
  return written;
}

void write_png_normalized(const std::filesystem::path& path, const PixelGrid& grid) {
  const double lo = grid.size() ? grid.minCoeff() : 0.0;
  const double hi = grid.size() ? grid.maxCoeff() : 0.0;
  const double span = hi - lo;
  std::vector<std::uint8_t> bytes(grid.size(), 0);
  if (span > 0.0) {
    const double* src = grid.data();
    for (Index i = 0; i < grid.size(); ++i) bytes[i] = to_byte((src[i] - lo) / span);
  }
  write_png_bytes(path, int(grid.rows()), int(grid.cols()), 1, bytes);
}

void write_png_labels(const std::filesystem::path& path, const LabelGrid& labels) {
  std::vector<std::uint8_t> bytes(labels.size());
  const std::uint8_t* src = labels.data();
  for (Index i = 0; i < labels.size(); ++i) bytes[i] = src[i] ? 255 : 0;
  write_png_bytes(path, int(labels.rows()), int(labels.cols()), 1, bytes);
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw InputError("truncated GSPM header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

void write_gspm(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write("GSPM", 4);
  put_u32(os, std::uint32_t(m.rows()));
  put_u32(os, std::uint32_t(m.cols()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(m(r, c));
      unsigned char b[8];
      for (int k = 0; k < 8; ++k) b[k] = std::uint8_t(bits >> (8 * k));
      os.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  if (!os) throw InputError("failed writing " + path.string());
}

Matrix read_gspm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "GSPM", 4) != 0) throw InputError(path.string() + " is not a GSPM file");
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      unsigned char b[8];
      if (!is.read(reinterpret_cast<char*>(b), 8)) throw InputError("truncated GSPM payload");
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= std::uint64_t(b[k]) << (8 * k);
      m(r, c) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

imaging::ImageRaster load_image(const std::filesystem::path& path, int gspm_channels) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (ext == ".png") return read_png(path);

  if (gspm_channels < 1) throw InputError("channel count must be positive");
  Matrix m = read_gspm(path);
  if (m.cols() % gspm_channels != 0) throw InputError("GSPM width is not a multiple of the channel count");
  imaging::ImageRaster img(int(m.rows()), int(m.cols() / gspm_channels), gspm_channels);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) img.data[std::size_t(r) * m.cols() + c] = m(r, c);
  }
  img.validate();
  return img;
}

LabelGrid load_labels(const std::filesystem::path& path) {
  imaging::ImageRaster img = load_image(path, 1);
  LabelGrid out(img.height, img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      bool on = false;
      for (int q = 0; q < img.channels; ++q) on = on || img.at(r, c, q) > 0.0;
      out(r, c) = on ? 1 : 0;
    }
  }
  return out;
}

}  // namespace gspcd::io
