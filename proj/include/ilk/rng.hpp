#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace ilk {

/// splitmix64 step; used to derive independent stream seeds from a master seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Seed for a named sub-stream (tag) of a master seed. Pure.
inline uint64_t derive_seed(uint64_t master, uint64_t tag) {
    uint64_t s = master ^ (0x9e3779b97f4a7c15ull * (tag + 1));
    splitmix64(s);
    return splitmix64(s);
}

/// Deterministic RNG wrapper. mt19937_64 output is pinned by the standard,
/// and the bounded draw avoids std::uniform_int_distribution (whose mapping
/// is implementation-defined), so streams are reproducible across platforms.
class Rng {
public:
    Rng() : gen_(0) {}
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform value in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return p > 0.0 && uniform01() < p; }

    uint16_t next_u16() { return static_cast<uint16_t>(next_u64() & 0xffff); }

    template <typename It>
    void fill_bytes(It first, It last) {
        uint64_t buf = 0;
        int have = 0;
        for (; first != last; ++first) {
            if (have == 0) {
                buf = next_u64();
                have = 8;
            }
            *first = static_cast<uint8_t>(buf & 0xff);
            buf >>= 8;
            --have;
        }
    }

private:
    std::mt19937_64 gen_;
};

/// FNV-1a, the stable 64-bit hash used for names, traces and input classes.
inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a_str(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace ilk
