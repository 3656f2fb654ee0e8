// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace finsent {

/// FNV-1a over a byte range. Also used for corpus fingerprints, so the
/// constants must never change.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// splitmix64: tiny, fast, and fully portable. std:: distributions are not
/// specified bit-exactly across standard libraries, and reports must be
/// byte-identical under a fixed seed, so all randomness goes through this.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, n). n == 0 returns 0.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    /// Uniform double in [0, 1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Derives a child seed from (master, index). Used for few-shot repeats:
/// run i of master seed m draws its shots with derive_seed(m, i).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    char buf[16];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((master >> (8 * i)) & 0xff);
    for (int i = 0; i < 8; ++i) buf[8 + i] = static_cast<char>((index >> (8 * i)) & 0xff);
    return SplitMix64(fnv1a64(std::string_view(buf, 16))).next();
}

/// Derives a child seed from (master, tag) for independent random streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((master >> (8 * i)) & 0xff);
    return SplitMix64(fnv1a64(tag, fnv1a64(std::string_view(buf, 8)))).next();
}

/// Fisher-Yates with the portable generator.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace finsent
