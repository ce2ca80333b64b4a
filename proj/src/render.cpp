#include "mazelab/render.hpp"

#include <algorithm>
#include <cmath>

#include "mazelab/errors.hpp"
#include "mazelab/rng.hpp"

namespace mazelab {

namespace {

bool is_pure(Rgb c) {
  auto ok = [](std::uint8_t v) { return v == 0 || v == 255; };
  return ok(c.r) && ok(c.g) && ok(c.b);
}

Rgb background_pixel(const BackgroundSpec& bg, int design_x, int design_y) {
  switch (bg.kind) {
    case BackgroundSpec::Kind::Black: return {0, 0, 0};
    case BackgroundSpec::Kind::Grey: return kGreyBackground;
    case BackgroundSpec::Kind::Texture: return texture(bg.texture_id).at(design_x, design_y);
  }
  return {};
}

Observation make_texture(int id) {
  constexpr int kSize = kAgentViewPx;
  constexpr int kSpacing = 8;
  constexpr int kLattice = kSize / kSpacing + 1;
  CounterRng rng(derive_key(fnv1a64("texture"), static_cast<std::uint64_t>(id)));

  std::array<double, 3> bias{};
  for (double& b : bias) b = 128.0 + (rng.uniform01() - 0.5) * 100.0;
  std::array<std::vector<double>, 3> lattice;
  for (auto& l : lattice) {
    l.resize(kLattice * kLattice);
    for (double& v : l) v = (rng.uniform01() - 0.5) * 120.0;
  }

  Observation img(kSize, kSize);
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const int gx = x / kSpacing;
      const int gy = y / kSpacing;
      const double fx = static_cast<double>(x % kSpacing) / kSpacing;
      const double fy = static_cast<double>(y % kSpacing) / kSpacing;
      std::array<std::uint8_t, 3> px{};
      for (int c = 0; c < 3; ++c) {
        const auto& l = lattice[c];
        auto at = [&](int i, int j) { return l[j * kLattice + i]; };
        const double top = at(gx, gy) * (1 - fx) + at(gx + 1, gy) * fx;
        const double bottom = at(gx, gy + 1) * (1 - fx) + at(gx + 1, gy + 1) * fx;
        const double v = bias[c] + top * (1 - fy) + bottom * fy;
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 16L, 239L));
      }
      img.set(x, y, {px[0], px[1], px[2]});
    }
  }
  return img;
}

// Draws design-grid geometry at `scale` output pixels per design pixel.
class Raster {
 public:
  Raster(Observation& out, int scale) : out_(out), scale_(scale) {}

  void fill_design_rect(int x0, int y0, int w, int h, Rgb c) {
    for (int y = y0 * scale_; y < (y0 + h) * scale_; ++y)
      for (int x = x0 * scale_; x < (x0 + w) * scale_; ++x) out_.set(x, y, c);
  }

  void blit(const Sprite& s, int x0, int y0) {
    for (int y = 0; y < s.size * scale_; ++y) {
      for (int x = 0; x < s.size * scale_; ++x) {
        const int sx = x / scale_;
        const int sy = y / scale_;
        if (s.opaque(sx, sy)) out_.set(x0 * scale_ + x, y0 * scale_ + y, s.colour_at(sx, sy));
      }
    }
  }

 private:
  Observation& out_;
  int scale_;
};

}  // namespace

int Sprite::opaque_count() const {
  return static_cast<int>(std::count_if(pixels.begin(), pixels.end(), [](const auto& p) { return p[3] != 0; }));
}

Rgb wall_colour(const BackgroundSpec& bg) {
  return bg.kind == BackgroundSpec::Kind::Black ? kWallOnBlack : kWallDefault;
}

Sprite make_sprite(Shape shape, Rgb colour, int size) {
  if (size < 4) throw InvalidArgument("sprite size must be >= 4");
  if (shape != Shape::Mouse && !is_pure(colour)) throw InvalidColour("object colours must use channels of 0 or 255");
  if (shape == Shape::Mouse) colour = kMouseColour;

  Sprite s;
  s.shape = shape;
  s.size = size;
  s.pixels.assign(static_cast<std::size_t>(size) * size, {0, 0, 0, 0});
  auto paint = [&](int x, int y) { s.pixels[static_cast<std::size_t>(y) * size + x] = {colour.r, colour.g, colour.b, 255}; };

  const int mid = size / 2;
  switch (shape) {
    case Shape::Line: {
      const int thickness = std::max(1, size / 6);
      const int margin = std::max(1, size / 12);
      for (int y = mid - thickness / 2; y < mid - thickness / 2 + thickness; ++y)
        for (int x = margin; x < size - margin; ++x) paint(x, y);
      break;
    }
    case Shape::Gem: {
      const int half = std::max(1, size / 4);
      for (int i = -(half - 1); i <= half - 1; ++i) {
        const int width = 2 * (half - std::abs(i));
        for (int x = mid - width / 2; x < mid + width / 2; ++x) paint(x, mid + i);
      }
      break;
    }
    case Shape::Mouse: {
      const double r = 0.3 * size;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double dx = x + 0.5 - size / 2.0;
          const double dy = y + 0.5 - size / 2.0;
          if (dx * dx + dy * dy <= r * r) paint(x, y);
        }
      break;
    }
  }
  return s;
}

const Observation& texture(int id) {
  if (id < 0 || id >= kTextureCount) throw InvalidArgument("texture id out of range: " + std::to_string(id));
  static const std::array<Observation, kTextureCount> textures = [] {
    std::array<Observation, kTextureCount> t;
    for (int i = 0; i < kTextureCount; ++i) t[i] = make_texture(i);
    return t;
  }();
  return textures[id];
}

Observation render(const Level& level, const EpisodeState& state, Resolution resolution,
                   const RenderOptions& options) {
  return render(level, state, pixels(resolution), options);
}

Observation render(const Level& level, const EpisodeState& state, int resolution_px, const RenderOptions& options) {
  if (resolution_px <= 0 || resolution_px % kAgentViewPx != 0)
    throw InvalidArgument("simplified render resolution must be a positive multiple of 64");
  const int scale = resolution_px / kAgentViewPx;
  const int g = level.grid.size();
  const int cell = kAgentViewPx / g;
  if (cell < 4) throw InvalidConfig("grid too large for the simplified renderer");
  const int border = (kAgentViewPx - cell * g) / 2;
  const BackgroundSpec& bg = level.config.background;
  const Rgb wall = wall_colour(bg);

  Observation out(resolution_px, resolution_px, wall);
  Raster raster(out, scale);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      if (!level.grid.is_open({r, c})) continue;
      const int x0 = border + c * cell;
      const int y0 = border + r * cell;
      if (bg.kind == BackgroundSpec::Kind::Texture) {
        for (int y = y0 * scale; y < (y0 + cell) * scale; ++y)
          for (int x = x0 * scale; x < (x0 + cell) * scale; ++x)
            out.set(x, y, background_pixel(bg, x / scale, y / scale));
      } else {
        raster.fill_design_rect(x0, y0, cell, cell, background_pixel(bg, x0, y0));
      }
    }
  }
  for (const PlacedObject& obj : level.objects) {
    if (state.done() && state.termination.kind == Termination::Kind::ReachedObject &&
        level.objects[state.termination.object_index].pos == obj.pos)
      continue;
    raster.blit(make_sprite(obj.spec.shape, obj.spec.colour, cell), border + obj.pos.col * cell,
                border + obj.pos.row * cell);
  }
  if (options.draw_mouse) {
    Sprite mouse = make_sprite(Shape::Mouse, Colour::Black, cell);
    for (auto& p : mouse.pixels)
      if (p[3]) p = {options.mouse_colour.r, options.mouse_colour.g, options.mouse_colour.b, 255};
    raster.blit(mouse, border + state.agent_pos.col * cell, border + state.agent_pos.row * cell);
  }
  return out;
}

FrameRenderer::FrameRenderer(const Level& level, const RenderOptions& options) : draw_mouse_(options.draw_mouse) {
  RenderOptions no_mouse = options;
  no_mouse.draw_mouse = false;
  base_ = render(level, reset(level), Resolution::AgentView, no_mouse);
  cell_ = kAgentViewPx / level.grid.size();
  border_ = (kAgentViewPx - cell_ * level.grid.size()) / 2;
  mouse_ = make_sprite(Shape::Mouse, Colour::Black, cell_);
  for (auto& p : mouse_.pixels)
    if (p[3]) p = {options.mouse_colour.r, options.mouse_colour.g, options.mouse_colour.b, 255};
}

void FrameRenderer::draw(const EpisodeState& state, std::span<std::uint8_t> out) const {
  if (out.size() != base_.data.size()) throw ShapeError("frame buffer has the wrong size");
  std::copy(base_.data.begin(), base_.data.end(), out.begin());
  if (!draw_mouse_) return;
  const int x0 = border_ + state.agent_pos.col * cell_;
  const int y0 = border_ + state.agent_pos.row * cell_;
  for (int y = 0; y < cell_; ++y)
    for (int x = 0; x < cell_; ++x) {
      if (!mouse_.opaque(x, y)) continue;
      const Rgb c = mouse_.colour_at(x, y);
      const std::size_t o = base_.offset(x0 + x, y0 + y);
      out[o] = c.r;
      out[o + 1] = c.g;
      out[o + 2] = c.b;
    }
}

Observation FrameRenderer::draw(const EpisodeState& state) const {
  Observation out = base_;
  draw(state, out.data);
  return out;
}

Observation render_faithful(const Level& level, const EpisodeState& state, int resolution_px) {
  const int g = level.grid.size();
  const double cs = static_cast<double>(resolution_px) / g;
  const BackgroundSpec& bg = level.config.background;
  Observation out(resolution_px, resolution_px, wall_colour(bg));
  auto edge = [&](int i) { return static_cast<int>(std::floor(i * cs)); };

  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const bool open = level.grid.is_open({r, c});
      for (int y = edge(r); y < edge(r + 1); ++y)
        for (int x = edge(c); x < edge(c + 1); ++x)
          out.set(x, y,
                  open ? background_pixel(bg, x * kAgentViewPx / resolution_px, y * kAgentViewPx / resolution_px)
                       : wall_colour(bg));
    }
  }

  // Objects are drawn with padding inside their cell; the line is thin.
  auto draw = [&](GridPos p, Shape shape, Rgb colour) {
    const double cx = (p.col + 0.5) * cs;
    const double cy = (p.row + 0.5) * cs;
    for (int y = edge(p.row); y < edge(p.row + 1); ++y) {
      for (int x = edge(p.col); x < edge(p.col + 1); ++x) {
        const double dx = std::abs(x + 0.5 - cx);
        const double dy = std::abs(y + 0.5 - cy);
        bool inside = false;
        switch (shape) {
          case Shape::Line: inside = dy <= 0.1 * cs && dx <= 0.3 * cs; break;
          case Shape::Gem: inside = dx + dy <= 0.27 * cs; break;
          case Shape::Mouse: inside = dx * dx + dy * dy <= 0.09 * cs * cs; break;
        }
        if (inside) out.set(x, y, colour);
      }
    }
  };
  for (const PlacedObject& obj : level.objects) draw(obj.pos, obj.spec.shape, to_rgb(obj.spec.colour));
  draw(state.agent_pos, Shape::Mouse, kMouseColour);
  return out;
}

std::string_view method_name(DownsampleMethod m) {
  return m == DownsampleMethod::NearestNeighbor ? "nearest" : "box";
}

std::optional<DownsampleMethod> parse_method(std::string_view name) {
  if (name == "nearest" || name == "nn" || name == "nearest-neighbor") return DownsampleMethod::NearestNeighbor;
  if (name == "box" || name == "box-filter") return DownsampleMethod::BoxFilter;
  return std::nullopt;
}

Observation downsample(const Observation& img, int target_w, int target_h, DownsampleMethod method) {
  if (target_w <= 0 || target_h <= 0) throw InvalidArgument("downsample target dimensions must be positive");
  if (target_w > img.width || target_h > img.height)
    throw InvalidArgument("downsample target must not exceed the source size");

  Observation out(target_w, target_h);
  const auto sw = static_cast<std::int64_t>(img.width);
  const auto sh = static_cast<std::int64_t>(img.height);
  for (int y = 0; y < target_h; ++y) {
    for (int x = 0; x < target_w; ++x) {
      if (method == DownsampleMethod::NearestNeighbor) {
        const auto sx = static_cast<int>((2 * x + 1) * sw / (2 * target_w));
        const auto sy = static_cast<int>((2 * y + 1) * sh / (2 * target_h));
        out.set(x, y, img.at(sx, sy));
        continue;
      }
      const auto x0 = static_cast<int>(x * sw / target_w);
      const auto x1 = static_cast<int>(((x + 1) * sw + target_w - 1) / target_w);
      const auto y0 = static_cast<int>(y * sh / target_h);
      const auto y1 = static_cast<int>(((y + 1) * sh + target_h - 1) / target_h);
      std::array<std::uint64_t, 3> sum{};
      for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) {
          const Rgb p = img.at(xx, yy);
          sum[0] += p.r;
          sum[1] += p.g;
          sum[2] += p.b;
        }
      const std::uint64_t n = static_cast<std::uint64_t>(x1 - x0) * (y1 - y0);
      auto round_half_up = [n](std::uint64_t s) { return static_cast<std::uint8_t>((2 * s + n) / (2 * n)); };
      out.set(x, y, {round_half_up(sum[0]), round_half_up(sum[1]), round_half_up(sum[2])});
    }
  }
  return out;
}

Observation channel_view(const Observation& obs, Channel channel) {
  Observation out = obs;
  const auto c = static_cast<std::size_t>(channel);
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    const std::uint8_t v = obs.data[i + c];
    out.data[i] = out.data[i + 1] = out.data[i + 2] = v;
  }
  return out;
}

int object_visibility(const Observation& obs, Rgb sprite_colour) {
  int n = 0;
  for (std::size_t i = 0; i < obs.data.size(); i += 3)
    n += (obs.data[i] == sprite_colour.r && obs.data[i + 1] == sprite_colour.g && obs.data[i + 2] == sprite_colour.b);
  return n;
}

DisappearanceRates disappearance_study(int grid_size, int n_levels, DownsampleMethod method, std::uint64_t seed) {
  if (grid_size < 3) throw InvalidConfig("grid_size must be >= 3");
  DisappearanceRates out;
  out.n_levels = n_levels;
  if (n_levels <= 0) return out;

  const ObjectSpec line{Shape::Line, Colour::Red, Role::Target};
  const ObjectSpec gem{Shape::Gem, Colour::Yellow, Role::Distractor};
  int line_gone = 0;
  int gem_gone = 0;
  for (int i = 0; i < n_levels; ++i) {
    LevelConfig cfg;
    cfg.grid_size = grid_size;
    cfg.objects = {line, gem};
    cfg.seed = derive_key(namespaced_seed("study/downsample", seed), static_cast<std::uint64_t>(i));
    const Level level = make_level(cfg);
    const Observation full = render_faithful(level, reset(level), kHumanViewPx);
    const Observation small = downsample(full, kAgentViewPx, kAgentViewPx, method);
    line_gone += object_visibility(small, to_rgb(line.colour)) == 0;
    gem_gone += object_visibility(small, to_rgb(gem.colour)) == 0;
  }
  out.line_invisible_rate = static_cast<double>(line_gone) / n_levels;
  out.gem_invisible_rate = static_cast<double>(gem_gone) / n_levels;
  return out;
}

double ChannelHistogram::mean() const {
  std::uint64_t n = 0;
  double s = 0;
  for (int i = 0; i < 256; ++i) {
    n += counts[i];
    s += static_cast<double>(counts[i]) * i;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

std::array<ChannelHistogram, 3> texture_histogram(const Observation& img) {
  std::array<ChannelHistogram, 3> h;
  h[0].channel = Channel::R;
  h[1].channel = Channel::G;
  h[2].channel = Channel::B;
  for (std::size_t i = 0; i < img.data.size(); i += 3)
    for (int c = 0; c < 3; ++c) ++h[c].counts[img.data[i + c]];
  return h;
}

}  // namespace mazelab
