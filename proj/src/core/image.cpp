#include "image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace viewgen {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint32_t level(float v, std::uint32_t max) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint32_t>(std::lround(static_cast<double>(c) * max));
}

}  // namespace

Image Image::blank(int channels, int height, int width, float fill) {
  Image img;
  img.channels = channels;
  img.height = height;
  img.width = width;
  img.data.assign(static_cast<std::size_t>(channels) * height * width, fill);
  return img;
}

Tensor<float> image_to_tensor(const Image& image) {
  return Tensor<float>({static_cast<std::size_t>(image.channels),
                        static_cast<std::size_t>(image.height),
                        static_cast<std::size_t>(image.width)},
                       image.data);
}

Image tensor_to_image(const Tensor<float>& tensor) {
  Shape s = tensor.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  require(s.size() == 3, ErrorCode::kInvalidShape,
          "expected an image tensor [C,H,W], got " + shape_string(tensor.shape()));
  Image img;
  img.channels = static_cast<int>(s[0]);
  img.height = static_cast<int>(s[1]);
  img.width = static_cast<int>(s[2]);
  img.data.assign(tensor.data().begin(), tensor.data().end());
  return img;
}

Image batch_image(const Tensor<float>& tensor, std::size_t b) {
  require(tensor.rank() == 4 && b < tensor.dim(0), ErrorCode::kInvalidShape,
          "batch_image: no slice " + std::to_string(b) + " in " + shape_string(tensor.shape()));
  Image img;
  img.channels = static_cast<int>(tensor.dim(1));
  img.height = static_cast<int>(tensor.dim(2));
  img.width = static_cast<int>(tensor.dim(3));
  const std::size_t n = img.plane() * img.channels;
  auto src = tensor.data().subspan(b * n, n);
  img.data.assign(src.begin(), src.end());
  return img;
}

float quantize(float value, int bits) {
  const std::uint32_t max = (1u << bits) - 1;
  return static_cast<float>(static_cast<double>(level(value, max)) / max);
}

void write_png(const std::filesystem::path& path, const Image& image, int bits) {
  require(image.channels == 1 || image.channels == 3, ErrorCode::kInvalidArgument,
          "write_png: need 1 or 3 channels, got " + std::to_string(image.channels));
  require(bits == 8 || bits == 16, ErrorCode::kInvalidArgument, "write_png: bits must be 8 or 16");
  require(image.width > 0 && image.height > 0, ErrorCode::kInvalidShape, "write_png: empty image");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(image.width) * image.channels * bytes_per_sample;
  const std::uint32_t max = (1u << bits) - 1;
  std::vector<png_byte> buffer(row_bytes * image.height);
  for (int y = 0; y < image.height; ++y) {
    png_byte* row = buffer.data() + y * row_bytes;
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const std::uint32_t v = level(image.at(c, y, x), max);
        const std::size_t o = (static_cast<std::size_t>(x) * image.channels + c) * bytes_per_sample;
        if (bits == 8) {
          row[o] = static_cast<png_byte>(v);
        } else {
          row[o] = static_cast<png_byte>(v >> 8);
          row[o + 1] = static_cast<png_byte>(v & 0xff);
        }
      }
    }
  }

  FilePtr file(std::fopen(path.c_str(), "wb"));
  require(file != nullptr, ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kInternal, "libpng initialization failed");
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * row_bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, bits,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  require(std::fflush(file.get()) == 0, ErrorCode::kIo, "failed flushing " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  require(file != nullptr, ErrorCode::kIo, "cannot open " + path.string());
  png_byte sig[8];
  require(std::fread(sig, 1, 8, file.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0,
          ErrorCode::kFormat, path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kInternal, "libpng initialization failed");
  }
  // Declared before setjmp so a longjmp never skips their construction.
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::kFormat, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int bits = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img = Image::blank(channels, height, width);
  const double max = bits == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    const png_byte* row = rows[y];
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * channels + c;
        const std::uint32_t v = bits == 16 ? (std::uint32_t(row[2 * i]) << 8) | row[2 * i + 1] : row[i];
        img.at(c, y, x) = static_cast<float>(v / max);
      }
    }
  }
  return img;
}

}  // namespace viewgen
