#include "mazelab/image_io.hpp"

#include <png.h>

#include <cstring>

#include "mazelab/errors.hpp"
#include "mazelab/serialization.hpp"

namespace mazelab {

namespace {

std::vector<std::uint8_t> encode(int w, int h, std::uint32_t format, const std::uint8_t* pixels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr))
    throw Error(std::string("png encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr))
    throw Error(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

}  // namespace

RgbaImage sprite_image(const Sprite& sprite, int scale) {
  if (scale < 1) throw InvalidArgument("sprite scale must be positive");
  RgbaImage img;
  img.width = img.height = sprite.size * scale;
  img.data.resize(static_cast<std::size_t>(img.width) * img.height * 4);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto& p = sprite.pixels[static_cast<std::size_t>(y / scale) * sprite.size + x / scale];
      std::memcpy(&img.data[(static_cast<std::size_t>(y) * img.width + x) * 4], p.data(), 4);
    }
  return img;
}

Observation contact_sheet(std::span<const Sprite> sprites, int scale, Rgb background) {
  if (sprites.empty()) throw InvalidArgument("contact sheet needs at least one sprite");
  const int cell = sprites.front().size * scale;
  const int margin = cell / 4;
  Observation sheet(static_cast<int>(sprites.size()) * (cell + margin) + margin, cell + 2 * margin, background);
  for (std::size_t i = 0; i < sprites.size(); ++i) {
    const Sprite& s = sprites[i];
    const int x0 = margin + static_cast<int>(i) * (cell + margin);
    for (int y = 0; y < s.size * scale; ++y)
      for (int x = 0; x < s.size * scale; ++x)
        if (s.opaque(x / scale, y / scale)) sheet.set(x0 + x, margin + y, s.colour_at(x / scale, y / scale));
  }
  return sheet;
}

std::vector<std::uint8_t> encode_png(const Observation& img) {
  return encode(img.width, img.height, PNG_FORMAT_RGB, img.data.data());
}

std::vector<std::uint8_t> encode_png(const RgbaImage& img) {
  return encode(img.width, img.height, PNG_FORMAT_RGBA, img.data.data());
}

void write_png(const std::filesystem::path& path, const Observation& img) { write_file_atomic(path, encode_png(img)); }
void write_png(const std::filesystem::path& path, const RgbaImage& img) { write_file_atomic(path, encode_png(img)); }

RgbaImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw ParseError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGBA;
  RgbaImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ParseError(path.string() + ": " + image.message);
  }
  return out;
}

}  // namespace mazelab
