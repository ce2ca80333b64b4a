#include "mazelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mazelab/serialization.hpp"

namespace mazelab {

namespace {

constexpr char kMagic[8] = {'M', 'Z', 'L', 'B', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointError::Kind::Corrupt, std::string("checkpoint truncated while reading ") + what);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string env_geometry_hash(int grid_size, const NetworkSpec& spec) {
  const std::string canonical = "renderer=" + std::string(kRendererId) + ";grid=" + std::to_string(grid_size) +
                                ";obs=" + std::to_string(spec.height) + "x" + std::to_string(spec.width) + "x" +
                                std::to_string(spec.channels);
  return sha256_hex(canonical).substr(0, 16);
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& cp) {
  const Json header = {{"network", to_json(cp.spec())},
                       {"layout", to_json(cp.params.layout)},
                       {"ppo", to_json(cp.ppo)},
                       {"env", to_json(cp.env_config)},
                       {"training_seed", cp.training_seed},
                       {"env_config_hash", cp.env_config_hash},
                       {"rng_algorithm", cp.rng_algorithm},
                       {"optimizer", cp.optimizer},
                       {"total_steps", cp.total_steps}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, cp.format_version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put<std::uint64_t>(out, cp.params.count());
  for (Eigen::Index i = 0; i < cp.params.values.size(); ++i) put<float>(out, cp.params.values[i]);
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const std::optional<std::string>& expected_env_hash) {
  using Kind = CheckpointError::Kind;
  Reader r(bytes);
  const auto magic = r.take(sizeof kMagic, "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError(Kind::Corrupt, "not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                     " is not supported (expected " +
                                                     std::to_string(kCheckpointVersion) + ")");
  const auto header_len = r.get<std::uint32_t>("header length");
  const auto header_bytes = r.take(header_len, "header");
  const auto count = r.get<std::uint64_t>("parameter count");
  if (count > r.remaining() / sizeof(float))
    throw CheckpointError(Kind::Corrupt, "checkpoint truncated: parameter block shorter than declared");
  const auto param_bytes = r.take(count * sizeof(float), "parameters");
  const std::size_t body_end = r.pos();
  const auto checksum = r.get<std::uint64_t>("checksum");
  if (r.remaining() != 0) throw CheckpointError(Kind::Corrupt, "trailing bytes after checkpoint");
  if (checksum != fnv1a(bytes.first(body_end))) throw CheckpointError(Kind::Corrupt, "checkpoint checksum mismatch");

  Checkpoint cp;
  try {
    const Json h = Json::parse(header_bytes.begin(), header_bytes.end());
    cp.params.spec = network_spec_from_json(h.at("network"));
    cp.params.layout = layout_from_json(h.at("layout"));
    cp.ppo = ppo_config_from_json(h.at("ppo"));
    cp.env_config = level_config_from_json(h.at("env"));
    cp.training_seed = h.at("training_seed").get<std::uint64_t>();
    cp.env_config_hash = h.at("env_config_hash").get<std::string>();
    cp.rng_algorithm = h.at("rng_algorithm").get<std::string>();
    cp.optimizer = h.at("optimizer").get<std::string>();
    cp.total_steps = h.at("total_steps").get<std::int64_t>();
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::Corrupt, std::string("bad checkpoint header: ") + e.what());
  }
  cp.format_version = version;
  if (cp.params.layout != parameter_layout(cp.params.spec))
    throw CheckpointError(Kind::Corrupt, "parameter layout does not match the network spec");
  std::size_t expected = 0;
  for (const auto& t : cp.params.layout) expected += t.size();
  if (expected != count) throw CheckpointError(Kind::Corrupt, "parameter count does not match the layout");

  cp.params.values.resize(static_cast<Eigen::Index>(count));
  std::memcpy(cp.params.values.data(), param_bytes.data(), param_bytes.size());

  const std::string own = env_geometry_hash(cp.env_config.grid_size, cp.spec());
  if (cp.env_config_hash != own)
    throw CheckpointError(Kind::HashMismatch, "checkpoint env hash " + cp.env_config_hash +
                                                  " does not match its own config (" + own + ")");
  if (expected_env_hash && *expected_env_hash != cp.env_config_hash)
    throw CheckpointError(Kind::HashMismatch, "checkpoint was trained for env geometry " + cp.env_config_hash +
                                                  ", requested " + *expected_env_hash);
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
  try {
    write_file_atomic(path, serialize_checkpoint(cp));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Io, e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<std::string>& expected_env_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected_env_hash);
}

std::string checkpoint_hash(const Checkpoint& cp) { return sha256_hex(serialize_checkpoint(cp)); }

}  // namespace mazelab
