#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mazelab {

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// The eight pure colours: every channel is 0 or 255.
enum class Colour : std::uint8_t { Black, Red, Green, Blue, Yellow, Cyan, Magenta, White };
inline constexpr std::array<Colour, 8> kAllColours = {Colour::Black, Colour::Red,    Colour::Green,
                                                      Colour::Blue,  Colour::Yellow, Colour::Cyan,
                                                      Colour::Magenta, Colour::White};

Rgb to_rgb(Colour c);
std::optional<Colour> pure_colour(Rgb rgb);
std::string_view colour_name(Colour c);
std::optional<Colour> parse_colour(std::string_view name);

enum class Shape : std::uint8_t { Line, Gem, Mouse };
std::string_view shape_name(Shape s);
std::optional<Shape> parse_shape(std::string_view name);

enum class Role : std::uint8_t { Target, Distractor };

struct ObjectSpec {
  Shape shape = Shape::Line;
  Colour colour = Colour::Yellow;
  Role role = Role::Target;
  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct BackgroundSpec {
  enum class Kind : std::uint8_t { Black, Grey, Texture };
  Kind kind = Kind::Black;
  int texture_id = 0;  // only meaningful for Texture

  static BackgroundSpec black() { return {}; }
  static BackgroundSpec grey() { return {Kind::Grey, 0}; }
  static BackgroundSpec texture(int id) { return {Kind::Texture, id}; }
  friend bool operator==(const BackgroundSpec&, const BackgroundSpec&) = default;
};
std::string background_name(const BackgroundSpec& bg);
std::optional<BackgroundSpec> parse_background(std::string_view name);

inline constexpr int kDefaultGridSize = 5;
inline constexpr int kDefaultMaxSteps = 500;
inline constexpr double kGoalReward = 10.0;

// Open/wall occupancy over size x size cells. Outside the grid is wall.
class MazeGrid {
 public:
  MazeGrid() = default;
  explicit MazeGrid(int size) : size_(size), open_(static_cast<std::size_t>(size) * size, 0) {}

  int size() const { return size_; }
  bool in_bounds(GridPos p) const { return p.row >= 0 && p.row < size_ && p.col >= 0 && p.col < size_; }
  bool is_open(GridPos p) const { return in_bounds(p) && open_[index(p)] != 0; }
  void set_open(GridPos p, bool open) { open_[index(p)] = open ? 1 : 0; }

  int open_degree(GridPos p) const;
  std::vector<GridPos> open_cells() const;
  const std::vector<std::uint8_t>& cells() const { return open_; }

  friend bool operator==(const MazeGrid&, const MazeGrid&) = default;

 private:
  std::size_t index(GridPos p) const { return static_cast<std::size_t>(p.row) * size_ + p.col; }

  int size_ = 0;
  std::vector<std::uint8_t> open_;
};

struct LevelConfig {
  int grid_size = kDefaultGridSize;
  std::vector<ObjectSpec> objects;
  BackgroundSpec background;
  std::uint64_t seed = 0;
  int max_steps = kDefaultMaxSteps;
  friend bool operator==(const LevelConfig&, const LevelConfig&) = default;
};

struct PlacedObject {
  ObjectSpec spec;
  GridPos pos;
  friend bool operator==(const PlacedObject&, const PlacedObject&) = default;
};

struct Level {
  MazeGrid grid;
  std::vector<PlacedObject> objects;
  GridPos start;
  LevelConfig config;

  // Index into objects of whatever sits on p, if anything.
  std::optional<std::size_t> object_at(GridPos p) const;
  friend bool operator==(const Level&, const Level&) = default;
};

enum class Action : std::uint8_t { Up, Down, Left, Right };
inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions = {Action::Up, Action::Down, Action::Left,
                                                                Action::Right};
GridPos offset(GridPos p, Action a);

struct Termination {
  enum class Kind : std::uint8_t { None, ReachedObject, Timeout };
  Kind kind = Kind::None;
  std::size_t object_index = 0;  // valid for ReachedObject
  friend bool operator==(const Termination&, const Termination&) = default;
};

struct EpisodeState {
  const Level* level = nullptr;
  GridPos agent_pos;
  int steps_taken = 0;
  Termination termination;

  bool done() const { return termination.kind != Termination::Kind::None; }
  friend bool operator==(const EpisodeState&, const EpisodeState&) = default;
};

struct StepOutcome {
  EpisodeState next_state;
  double reward = 0.0;
  bool terminated = false;
  std::optional<ObjectSpec> object_reached;
};

// Randomized DFS over rooms at even coordinates, then dead ends are removed by
// opening random connector walls. Throws InvalidConfig when size < 3.
MazeGrid generate_maze(std::uint64_t seed, int size);

// Start and object cells drawn uniformly without replacement from open cells.
Level place_objects(const MazeGrid& grid, std::uint64_t seed, const std::vector<ObjectSpec>& specs);

// Full level from a config: maze and placement streams both derive from config.seed.
Level make_level(const LevelConfig& config);

EpisodeState reset(const Level& level);
StepOutcome step(const EpisodeState& state, Action action);

struct Violation {
  std::string kind;  // "dead-end", "disconnected", ...
  std::string detail;
};
std::vector<Violation> validate_level(const Level& level);
std::vector<Violation> validate_grid(const MazeGrid& grid);

}  // namespace mazelab
