#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace casejudge {

/// Uniform draw from [0, n) by rejection. std::uniform_int_distribution is
/// implementation-defined, and seeded outputs must match across platforms.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n)
{
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

/// Engine seeded from a user seed plus a content digest (hex, >= 16 chars).
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::string_view hex_digest = {})
{
    auto word = [&](std::size_t off) -> std::uint32_t {
        if (hex_digest.size() < off + 8) return 0;
        std::uint32_t v = 0;
        for (char c : hex_digest.substr(off, 8)) {
            v = v * 16 + static_cast<std::uint32_t>(c <= '9' ? c - '0' : (c | 0x20) - 'a' + 10);
        }
        return v;
    };
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), word(0), word(8)};
    return std::mt19937_64(seq);
}

}  // namespace casejudge
