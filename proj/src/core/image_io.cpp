// SPDX-License-Identifier: Apache-2.0

#include "gmbinet/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "gmbinet/errors.hpp"

namespace gmbinet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr std::size_t kMessageSize = 256;

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  auto* buf = static_cast<char*>(png_get_error_ptr(png));
  if (buf != nullptr) std::snprintf(buf, kMessageSize, "%s", message);
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
};

// The setjmp frames below hold only plain pointers and integers; all C++
// objects live in the callers.
bool png_read_header(png_structp png, png_infop info, std::FILE* file, PngHeader* header) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if ((color & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  header->width = png_get_image_width(png, info);
  header->height = png_get_image_height(png, info);
  header->channels = png_get_channels(png, info);
  return true;
}

bool png_read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

bool png_write_all(png_structp png, png_infop info, std::FILE* file, png_uint_32 width, png_uint_32 height,
                   int color_type, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  char message[kMessageSize] = "";
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, message, png_fail, png_warn);
  if (png == nullptr) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  auto fail = [&](const std::string& what) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(what);
  };
  PngHeader header;
  if (info == nullptr || !png_read_header(png, info, file.get(), &header)) {
    fail("unreadable PNG " + path.string() + ": " + message);
  }
  if (header.channels != 1 && header.channels != 3) fail("unsupported channel layout in " + path.string());
  Image8 image;
  image.width = header.width;
  image.height = header.height;
  image.channels = header.channels;
  const auto stride = static_cast<std::size_t>(image.width * image.channels);
  image.pixels.resize(stride * static_cast<std::size_t>(image.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = image.pixels.data() + y * stride;
  if (!png_read_rows(png, rows.data())) fail("unreadable PNG " + path.string() + ": " + message);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const Image8& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw IoError("write_png supports 1 or 3 channels");
  if (image.pixels.size() != static_cast<std::size_t>(image.width * image.height * image.channels)) {
    throw IoError("write_png: pixel buffer does not match the image size");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  char message[kMessageSize] = "";
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, message, png_fail, png_warn);
  if (png == nullptr) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  const auto stride = static_cast<std::size_t>(image.width * image.channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = const_cast<png_bytep>(image.pixels.data() + y * stride);
  const bool ok = info != nullptr &&
                  png_write_all(png, info, file.get(), static_cast<png_uint_32>(image.width),
                                static_cast<png_uint_32>(image.height),
                                image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, rows.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError("failed writing PNG " + path.string() + ": " + message);
}

}  // namespace gmbinet
