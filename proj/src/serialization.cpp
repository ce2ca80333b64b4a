#include "mazelab/serialization.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>

namespace mazelab {

namespace {

void reject_unknown(const Json& j, std::string_view what, const std::set<std::string>& known) {
  if (!j.is_object()) throw ParseError(std::string(what) + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ParseError(std::string(what) + ": unknown field '" + key + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& out, std::string_view what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(what) + "." + key + ": " + e.what());
  }
}

std::string to_hex(const unsigned char* data, unsigned int n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (unsigned int i = 0; i < n; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 15]);
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return to_hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string object_id(const ObjectSpec& spec) {
  return std::string(colour_name(spec.colour)) + "_" + std::string(shape_name(spec.shape));
}

ObjectSpec parse_object(std::string_view id, Role role) {
  const auto sep = id.rfind('_');
  if (sep == std::string_view::npos) throw ParseError("object id '" + std::string(id) + "' is not <colour>_<shape>");
  const auto colour = parse_colour(id.substr(0, sep));
  const auto shape = parse_shape(id.substr(sep + 1));
  if (!colour) throw ParseError("unknown colour in object id '" + std::string(id) + "'");
  if (!shape || *shape == Shape::Mouse) throw ParseError("object shape must be line or gem in '" + std::string(id) + "'");
  return {*shape, *colour, role};
}

Json to_json(const ObjectSpec& spec) { return object_id(spec); }
Json to_json(const BackgroundSpec& bg) { return background_name(bg); }

Json to_json(const LevelConfig& cfg) {
  Json objects = Json::array();
  for (const auto& o : cfg.objects) objects.push_back(to_json(o));
  return {{"grid_size", cfg.grid_size}, {"objects", objects},   {"background", to_json(cfg.background)},
          {"seed", cfg.seed},           {"max_steps", cfg.max_steps}};
}

Json to_json(const PPOConfig& c) {
  return {{"gamma", c.gamma},
          {"lam", c.lam},
          {"clip", c.clip},
          {"learning_rate", c.learning_rate},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"epochs", c.epochs},
          {"minibatches", c.minibatches},
          {"num_envs", c.num_envs},
          {"steps_per_env", c.steps_per_env},
          {"total_steps", c.total_steps},
          {"seed", c.seed}};
}

Json to_json(const NetworkSpec& spec) {
  Json conv = Json::array();
  for (const auto& c : spec.conv) conv.push_back({{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}});
  return {{"height", spec.height}, {"width", spec.width},   {"channels", spec.channels},
          {"conv", conv},          {"hidden", spec.hidden}, {"actions", spec.actions}};
}

Json to_json(const std::vector<TensorInfo>& layout) {
  Json out = Json::array();
  for (const auto& t : layout) out.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"offset", t.offset}});
  return out;
}

LevelConfig level_config_from_json(const Json& j) {
  reject_unknown(j, "env", {"grid_size", "objects", "background", "seed", "max_steps"});
  LevelConfig cfg;
  read(j, "grid_size", cfg.grid_size, "env");
  read(j, "seed", cfg.seed, "env");
  read(j, "max_steps", cfg.max_steps, "env");
  if (j.contains("background")) {
    const auto& b = j.at("background");
    if (!b.is_string()) throw ParseError("env.background: expected a string");
    auto bg = parse_background(b.get<std::string>());
    if (!bg) throw ParseError("env.background: unknown background '" + b.get<std::string>() + "'");
    cfg.background = *bg;
  }
  if (j.contains("objects")) {
    const auto& objs = j.at("objects");
    if (!objs.is_array()) throw ParseError("env.objects: expected an array");
    for (std::size_t i = 0; i < objs.size(); ++i) {
      if (!objs[i].is_string()) throw ParseError("env.objects[" + std::to_string(i) + "]: expected a string");
      cfg.objects.push_back(parse_object(objs[i].get<std::string>(), i == 0 ? Role::Target : Role::Distractor));
    }
  }
  if (cfg.grid_size < 3) throw ParseError("env.grid_size: must be >= 3");
  if (cfg.max_steps < 1) throw ParseError("env.max_steps: must be >= 1");
  if (cfg.objects.empty() || cfg.objects.size() > 2) throw ParseError("env.objects: need 1 or 2 objects");
  return cfg;
}

PPOConfig ppo_config_from_json(const Json& j) {
  reject_unknown(j, "ppo",
                 {"gamma", "lam", "clip", "learning_rate", "entropy_coef", "value_coef", "max_grad_norm", "epochs",
                  "minibatches", "num_envs", "steps_per_env", "total_steps", "seed"});
  PPOConfig c;
  read(j, "gamma", c.gamma, "ppo");
  read(j, "lam", c.lam, "ppo");
  read(j, "clip", c.clip, "ppo");
  read(j, "learning_rate", c.learning_rate, "ppo");
  read(j, "entropy_coef", c.entropy_coef, "ppo");
  read(j, "value_coef", c.value_coef, "ppo");
  read(j, "max_grad_norm", c.max_grad_norm, "ppo");
  read(j, "epochs", c.epochs, "ppo");
  read(j, "minibatches", c.minibatches, "ppo");
  read(j, "num_envs", c.num_envs, "ppo");
  read(j, "steps_per_env", c.steps_per_env, "ppo");
  read(j, "total_steps", c.total_steps, "ppo");
  read(j, "seed", c.seed, "ppo");
  try {
    c.validate();
  } catch (const InvalidConfig& e) {
    throw ParseError(std::string("ppo: ") + e.what());
  }
  return c;
}

NetworkSpec network_spec_from_json(const Json& j) {
  reject_unknown(j, "network", {"height", "width", "channels", "conv", "hidden", "actions"});
  NetworkSpec spec;
  read(j, "height", spec.height, "network");
  read(j, "width", spec.width, "network");
  read(j, "channels", spec.channels, "network");
  read(j, "hidden", spec.hidden, "network");
  read(j, "actions", spec.actions, "network");
  if (j.contains("conv")) {
    spec.conv.clear();
    for (const auto& c : j.at("conv")) {
      reject_unknown(c, "network.conv", {"filters", "kernel", "stride"});
      ConvSpec cs;
      read(c, "filters", cs.filters, "network.conv");
      read(c, "kernel", cs.kernel, "network.conv");
      read(c, "stride", cs.stride, "network.conv");
      spec.conv.push_back(cs);
    }
  }
  try {
    spec.validate();
  } catch (const ShapeError& e) {
    throw ParseError(std::string("network: ") + e.what());
  }
  return spec;
}

std::vector<TensorInfo> layout_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("layout: expected an array");
  std::vector<TensorInfo> out;
  for (const auto& t : j) {
    TensorInfo info;
    read(t, "name", info.name, "layout");
    read(t, "rows", info.rows, "layout");
    read(t, "cols", info.cols, "layout");
    read(t, "offset", info.offset, "layout");
    out.push_back(std::move(info));
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_hex(std::string_view text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace mazelab
