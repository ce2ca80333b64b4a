#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mazelab/render.hpp"

namespace mazelab {

struct RgbaImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major RGBA
};

// Nearest-neighbour upscale; transparent pixels stay transparent.
RgbaImage sprite_image(const Sprite& sprite, int scale = 1);

// Sprites laid out in one row on a solid background, each `scale` times its
// design size with a one-cell margin.
Observation contact_sheet(std::span<const Sprite> sprites, int scale, Rgb background);

std::vector<std::uint8_t> encode_png(const Observation& img);
std::vector<std::uint8_t> encode_png(const RgbaImage& img);
void write_png(const std::filesystem::path& path, const Observation& img);
void write_png(const std::filesystem::path& path, const RgbaImage& img);
// Always decodes to RGBA. Throws ParseError on malformed files.
RgbaImage read_png(const std::filesystem::path& path);

}  // namespace mazelab
