#include "ionlock/rng.hpp"

namespace ionlock {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

std::string stream_name(std::string_view module, std::string_view purpose, std::uint64_t index)
{
    std::string s;
    s.reserve(module.size() + purpose.size() + 24);
    s.append(module).append(":").append(purpose).append(":").append(std::to_string(index));
    return s;
}

std::uint64_t stream_key(std::uint64_t root_seed, std::string_view name)
{
    return splitmix64(splitmix64(root_seed) ^ fnv1a(name));
}

Rng make_stream(std::uint64_t root_seed, std::string_view name)
{
    std::uint64_t k = stream_key(root_seed, name);
    std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    return Rng(seq);
}

} // namespace ionlock
