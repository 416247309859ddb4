#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace ionlock {

using Rng = std::mt19937_64;

// Streams are named "module:purpose:index" and derived from one root seed.
std::string stream_name(std::string_view module, std::string_view purpose, std::uint64_t index);
std::uint64_t stream_key(std::uint64_t root_seed, std::string_view name);
Rng make_stream(std::uint64_t root_seed, std::string_view name);

} // namespace ionlock
