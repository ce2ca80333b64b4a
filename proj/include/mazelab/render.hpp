#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mazelab/env.hpp"

namespace mazelab {

inline constexpr int kAgentViewPx = 64;
inline constexpr int kHumanViewPx = 512;

enum class Resolution { AgentView, HumanView };
inline constexpr int pixels(Resolution r) { return r == Resolution::AgentView ? kAgentViewPx : kHumanViewPx; }

// H x W x 3 RGB bytes, row-major.
struct Observation {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Observation() = default;
  Observation(int w, int h, Rgb fill = {}) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < data.size(); i += 3) {
      data[i] = fill.r;
      data[i + 1] = fill.g;
      data[i + 2] = fill.b;
    }
  }

  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  Rgb at(int x, int y) const {
    const auto o = offset(x, y);
    return {data[o], data[o + 1], data[o + 2]};
  }
  void set(int x, int y, Rgb c) {
    const auto o = offset(x, y);
    data[o] = c.r;
    data[o + 1] = c.g;
    data[o + 2] = c.b;
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

// Square RGBA sprite; alpha 0 marks transparent pixels.
struct Sprite {
  Shape shape = Shape::Line;
  int size = 0;
  std::vector<std::array<std::uint8_t, 4>> pixels;

  bool opaque(int x, int y) const { return pixels[static_cast<std::size_t>(y) * size + x][3] != 0; }
  Rgb colour_at(int x, int y) const {
    const auto& p = pixels[static_cast<std::size_t>(y) * size + x];
    return {p[0], p[1], p[2]};
  }
  int opaque_count() const;
};

inline constexpr int kSpriteDesignPx = 12;
inline constexpr Rgb kMouseColour{200, 200, 200};
inline constexpr Rgb kGreyBackground{128, 128, 128};
inline constexpr Rgb kWallOnBlack{60, 60, 60};
inline constexpr Rgb kWallDefault{100, 100, 100};
inline constexpr int kTextureCount = 9;

Rgb wall_colour(const BackgroundSpec& bg);

// Throws InvalidColour unless every channel is 0 or 255. Mouse sprites
// ignore the argument and use kMouseColour.
Sprite make_sprite(Shape shape, Rgb colour, int size = kSpriteDesignPx);
inline Sprite make_sprite(Shape shape, Colour colour, int size = kSpriteDesignPx) {
  return make_sprite(shape, to_rgb(colour), size);
}

// Bundled 64x64 background textures, ids 0..kTextureCount-1. Channels stay in
// [16, 239] so a texture pixel can never equal a pure object colour.
const Observation& texture(int id);

struct RenderOptions {
  bool draw_mouse = true;
  Rgb mouse_colour = kMouseColour;
};

// Simplified-mode renderer. Geometry is laid out on the 64-pixel agent grid
// (integer cell size, symmetric wall border) and rasterized at the requested
// resolution, so HumanView is an exact 8x refinement of AgentView.
Observation render(const Level& level, const EpisodeState& state, Resolution resolution,
                   const RenderOptions& options = {});
Observation render(const Level& level, const EpisodeState& state, int resolution_px,
                   const RenderOptions& options = {});

// Renders the static part of a level once and composites the mouse per
// frame. Output bytes equal render(level, state, AgentView) for every
// non-terminal state.
class FrameRenderer {
 public:
  explicit FrameRenderer(const Level& level, const RenderOptions& options = {});
  void draw(const EpisodeState& state, std::span<std::uint8_t> out) const;
  Observation draw(const EpisodeState& state) const;

 private:
  Observation base_;
  Sprite mouse_;
  int cell_ = 0;
  int border_ = 0;
  bool draw_mouse_ = true;
};

// Faithful-mode renderer: real-valued cell size (512 / grid_size), padded
// objects with a thin line, meant to be downsampled afterwards.
Observation render_faithful(const Level& level, const EpisodeState& state, int resolution_px = kHumanViewPx);

enum class DownsampleMethod { NearestNeighbor, BoxFilter };
std::string_view method_name(DownsampleMethod m);
std::optional<DownsampleMethod> parse_method(std::string_view name);

Observation downsample(const Observation& img, int target_w, int target_h, DownsampleMethod method);

enum class Channel { R, G, B };
Observation channel_view(const Observation& obs, Channel channel);

// Pixels exactly equal to the colour.
int object_visibility(const Observation& obs, Rgb sprite_colour);

struct DisappearanceRates {
  int n_levels = 0;
  std::optional<double> line_invisible_rate;  // empty when n_levels == 0
  std::optional<double> gem_invisible_rate;
};

// Renders faithful-mode levels (red line, yellow gem, black background) at
// 512x512, downsamples to 64x64 and counts levels where each object vanishes.
DisappearanceRates disappearance_study(int grid_size, int n_levels, DownsampleMethod method, std::uint64_t seed);

struct ChannelHistogram {
  Channel channel = Channel::R;
  std::array<std::uint64_t, 256> counts{};
  double mean() const;
};
std::array<ChannelHistogram, 3> texture_histogram(const Observation& img);

}  // namespace mazelab
