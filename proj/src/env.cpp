#include "mazelab/env.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

#include "mazelab/errors.hpp"
#include "mazelab/rng.hpp"

namespace mazelab {

namespace {

constexpr std::array<Rgb, 8> kColourTable = {{
    {0, 0, 0},
    {255, 0, 0},
    {0, 255, 0},
    {0, 0, 255},
    {255, 255, 0},
    {0, 255, 255},
    {255, 0, 255},
    {255, 255, 255},
}};

constexpr std::array<std::string_view, 8> kColourNames = {"black",  "red",  "green",   "blue",
                                                          "yellow", "cyan", "magenta", "white"};

std::string pos_str(GridPos p) {
  std::ostringstream os;
  os << '(' << p.row << ',' << p.col << ')';
  return os.str();
}

}  // namespace

Rgb to_rgb(Colour c) { return kColourTable[static_cast<std::size_t>(c)]; }

std::optional<Colour> pure_colour(Rgb rgb) {
  for (Colour c : kAllColours) {
    if (to_rgb(c) == rgb) return c;
  }
  return std::nullopt;
}

std::string_view colour_name(Colour c) { return kColourNames[static_cast<std::size_t>(c)]; }

std::optional<Colour> parse_colour(std::string_view name) {
  if (name == "purple") return Colour::Magenta;
  for (Colour c : kAllColours) {
    if (colour_name(c) == name) return c;
  }
  return std::nullopt;
}

std::string_view shape_name(Shape s) {
  switch (s) {
    case Shape::Line: return "line";
    case Shape::Gem: return "gem";
    case Shape::Mouse: return "mouse";
  }
  return "?";
}

std::optional<Shape> parse_shape(std::string_view name) {
  if (name == "line") return Shape::Line;
  if (name == "gem") return Shape::Gem;
  if (name == "mouse") return Shape::Mouse;
  return std::nullopt;
}

std::string background_name(const BackgroundSpec& bg) {
  switch (bg.kind) {
    case BackgroundSpec::Kind::Black: return "black";
    case BackgroundSpec::Kind::Grey: return "grey";
    case BackgroundSpec::Kind::Texture: return "texture" + std::to_string(bg.texture_id);
  }
  return "?";
}

std::optional<BackgroundSpec> parse_background(std::string_view name) {
  if (name == "black") return BackgroundSpec::black();
  if (name == "grey" || name == "gray") return BackgroundSpec::grey();
  if (name.starts_with("texture")) {
    auto digits = name.substr(7);
    if (digits.empty()) return std::nullopt;
    int id = 0;
    for (char ch : digits) {
      if (ch < '0' || ch > '9') return std::nullopt;
      id = id * 10 + (ch - '0');
    }
    return BackgroundSpec::texture(id);
  }
  return std::nullopt;
}

GridPos offset(GridPos p, Action a) {
  switch (a) {
    case Action::Up: return {p.row - 1, p.col};
    case Action::Down: return {p.row + 1, p.col};
    case Action::Left: return {p.row, p.col - 1};
    case Action::Right: return {p.row, p.col + 1};
  }
  return p;
}

int MazeGrid::open_degree(GridPos p) const {
  int d = 0;
  for (Action a : kAllActions) d += is_open(offset(p, a)) ? 1 : 0;
  return d;
}

std::vector<GridPos> MazeGrid::open_cells() const {
  std::vector<GridPos> out;
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c)
      if (is_open({r, c})) out.push_back({r, c});
  return out;
}

std::optional<std::size_t> Level::object_at(GridPos p) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].pos == p) return i;
  return std::nullopt;
}

MazeGrid generate_maze(std::uint64_t seed, int size) {
  if (size < 3) throw InvalidConfig("maze size must be >= 3, got " + std::to_string(size));

  MazeGrid grid(size);
  CounterRng rng(seed);
  const int last_room = (size % 2 == 1) ? size - 1 : size - 2;
  auto is_room = [&](GridPos p) {
    return p.row >= 0 && p.col >= 0 && p.row <= last_room && p.col <= last_room && p.row % 2 == 0 &&
           p.col % 2 == 0;
  };
  auto room_step = [](GridPos p, Action a) {
    GridPos mid = offset(p, a);
    return std::pair{mid, offset(mid, a)};
  };

  const int rooms_per_side = last_room / 2 + 1;
  const auto room_count = static_cast<std::uint64_t>(rooms_per_side) * rooms_per_side;
  const auto first = rng.uniform_int(room_count);
  GridPos start{static_cast<int>(first / rooms_per_side) * 2, static_cast<int>(first % rooms_per_side) * 2};

  grid.set_open(start, true);
  std::vector<GridPos> stack{start};
  std::vector<std::pair<GridPos, GridPos>> choices;
  while (!stack.empty()) {
    const GridPos cur = stack.back();
    choices.clear();
    for (Action a : kAllActions) {
      auto [mid, next] = room_step(cur, a);
      if (is_room(next) && !grid.is_open(next)) choices.emplace_back(mid, next);
    }
    if (choices.empty()) {
      stack.pop_back();
      continue;
    }
    auto [mid, next] = choices[rng.uniform_int(choices.size())];
    grid.set_open(mid, true);
    grid.set_open(next, true);
    stack.push_back(next);
  }

  // Only rooms can be dead ends: an open connector always joins two open rooms.
  std::vector<GridPos> walls;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int r = 0; r <= last_room; r += 2) {
      for (int c = 0; c <= last_room; c += 2) {
        const GridPos room{r, c};
        if (grid.open_degree(room) >= 2) continue;
        walls.clear();
        for (Action a : kAllActions) {
          auto [mid, next] = room_step(room, a);
          if (is_room(next) && !grid.is_open(mid)) walls.push_back(mid);
        }
        if (walls.empty()) continue;
        grid.set_open(walls[rng.uniform_int(walls.size())], true);
        changed = true;
      }
    }
  }
  return grid;
}

Level place_objects(const MazeGrid& grid, std::uint64_t seed, const std::vector<ObjectSpec>& specs) {
  if (specs.empty() || specs.size() > 2)
    throw PlacementError("a level holds 1 or 2 objects, got " + std::to_string(specs.size()));
  std::vector<GridPos> cells = grid.open_cells();
  if (cells.size() < specs.size() + 1)
    throw PlacementError("need " + std::to_string(specs.size() + 1) + " open cells, grid has " +
                         std::to_string(cells.size()));

  // Partial Fisher-Yates: first slots are the objects, the next is the start.
  CounterRng rng(seed);
  const std::size_t picks = specs.size() + 1;
  for (std::size_t i = 0; i < picks; ++i) {
    const auto j = i + rng.uniform_int(cells.size() - i);
    std::swap(cells[i], cells[j]);
  }

  Level level;
  level.grid = grid;
  for (std::size_t i = 0; i < specs.size(); ++i) level.objects.push_back({specs[i], cells[i]});
  level.start = cells[specs.size()];
  level.config.grid_size = grid.size();
  level.config.objects = specs;
  level.config.seed = seed;
  return level;
}

Level make_level(const LevelConfig& config) {
  MazeGrid grid = generate_maze(derive_key(config.seed, "maze"), config.grid_size);
  Level level = place_objects(grid, derive_key(config.seed, "place"), config.objects);
  level.config = config;
  return level;
}

EpisodeState reset(const Level& level) {
  EpisodeState s;
  s.level = &level;
  s.agent_pos = level.start;
  return s;
}

StepOutcome step(const EpisodeState& state, Action action) {
  if (state.level == nullptr) throw ContractViolation("episode state has no level");
  if (state.done()) throw ContractViolation("step called on a finished episode");

  const Level& level = *state.level;
  StepOutcome out;
  out.next_state = state;
  EpisodeState& next = out.next_state;

  const GridPos dest = offset(state.agent_pos, action);
  if (level.grid.is_open(dest)) next.agent_pos = dest;
  next.steps_taken += 1;

  if (auto hit = level.object_at(next.agent_pos)) {
    const ObjectSpec& spec = level.objects[*hit].spec;
    next.termination = {Termination::Kind::ReachedObject, *hit};
    out.terminated = true;
    out.object_reached = spec;
    out.reward = spec.role == Role::Target ? kGoalReward : 0.0;
  } else if (next.steps_taken >= level.config.max_steps) {
    next.termination = {Termination::Kind::Timeout, 0};
    out.terminated = true;
  }
  return out;
}

std::vector<Violation> validate_grid(const MazeGrid& grid) {
  std::vector<Violation> out;
  const auto cells = grid.open_cells();
  if (cells.size() < 2) {
    out.push_back({"too-few-open-cells", std::to_string(cells.size()) + " open cells"});
    return out;
  }
  for (GridPos p : cells) {
    if (grid.open_degree(p) < 2)
      out.push_back({"dead-end", "cell " + pos_str(p) + " has degree " + std::to_string(grid.open_degree(p))});
  }

  std::vector<std::uint8_t> seen(static_cast<std::size_t>(grid.size()) * grid.size(), 0);
  auto idx = [&](GridPos p) { return static_cast<std::size_t>(p.row) * grid.size() + p.col; };
  std::queue<GridPos> q;
  q.push(cells.front());
  seen[idx(cells.front())] = 1;
  std::size_t reached = 0;
  while (!q.empty()) {
    GridPos p = q.front();
    q.pop();
    ++reached;
    for (Action a : kAllActions) {
      GridPos n = offset(p, a);
      if (grid.is_open(n) && !seen[idx(n)]) {
        seen[idx(n)] = 1;
        q.push(n);
      }
    }
  }
  if (reached != cells.size())
    out.push_back({"disconnected", std::to_string(reached) + " of " + std::to_string(cells.size()) +
                                       " open cells reachable"});
  return out;
}

std::vector<Violation> validate_level(const Level& level) {
  std::vector<Violation> out = validate_grid(level.grid);
  if (level.objects.empty() || level.objects.size() > 2)
    out.push_back({"object-count", std::to_string(level.objects.size()) + " objects"});

  std::vector<std::pair<std::string, GridPos>> points{{"start", level.start}};
  for (std::size_t i = 0; i < level.objects.size(); ++i)
    points.emplace_back("object " + std::to_string(i), level.objects[i].pos);

  for (const auto& [name, p] : points) {
    if (!level.grid.is_open(p)) out.push_back({"not-open", name + " at " + pos_str(p) + " is not an open cell"});
  }
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i].second == points[j].second)
        out.push_back({"collision", points[i].first + " and " + points[j].first + " share " +
                                        pos_str(points[i].second)});
  return out;
}

}  // namespace mazelab
