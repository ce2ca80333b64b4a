#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mazelab/env.hpp"
#include "mazelab/network.hpp"
#include "mazelab/ppo.hpp"

namespace mazelab {

using Json = nlohmann::json;

// Object specs use the compact form "yellow_line" / "red_gem".
std::string object_id(const ObjectSpec& spec);
ObjectSpec parse_object(std::string_view id, Role role = Role::Target);

Json to_json(const ObjectSpec& spec);
Json to_json(const BackgroundSpec& bg);
Json to_json(const LevelConfig& cfg);
Json to_json(const PPOConfig& cfg);
Json to_json(const NetworkSpec& spec);
Json to_json(const std::vector<TensorInfo>& layout);

// Each reader throws ParseError naming the offending field. Missing fields
// keep their defaults; unknown fields are rejected.
LevelConfig level_config_from_json(const Json& j);
PPOConfig ppo_config_from_json(const Json& j);
NetworkSpec network_spec_from_json(const Json& j);
std::vector<TensorInfo> layout_from_json(const Json& j);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace mazelab
