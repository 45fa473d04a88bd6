#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace evo::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// A stream is addressed by (seed, stream_id); draw k of a stream is a pure
// function of (seed, stream_id, k), which is what makes parallel ensembles
// reproducible under any scheduling.
class Philox4x32 {
public:
    Philox4x32(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          counter_{0u, 0u, static_cast<std::uint32_t>(stream_id),
                   static_cast<std::uint32_t>(stream_id >> 32)} {}

    std::array<std::uint32_t, 4> next_block() {
        std::array<std::uint32_t, 4> x = counter_;
        std::array<std::uint32_t, 2> k = key_;
        for (int round = 0; round < 10; ++round) {
            x = one_round(x, k);
            k[0] += 0x9E3779B9u;
            k[1] += 0xBB67AE85u;
        }
        // Block counter lives in words 0..1; words 2..3 hold the stream id.
        if (++counter_[0] == 0) ++counter_[1];
        return x;
    }

private:
    static std::array<std::uint32_t, 4> one_round(const std::array<std::uint32_t, 4>& x,
                                                  const std::array<std::uint32_t, 2>& k) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * x[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * x[2];
        return {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k[0],
                static_cast<std::uint32_t>(p1),
                static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k[1],
                static_cast<std::uint32_t>(p0)};
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_;
};

// Uniform double in (0,1) from two 32-bit words: 53 significant bits, offset
// by half an ulp so 0 and 1 are never produced.
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal draws via Box-Muller; one Philox block yields two normals.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream_id) : eng_(seed, stream_id) {}

    double next() {
        if (cached_) {
            cached_ = false;
            return cache_;
        }
        const auto b = eng_.next_block();
        const double u1 = uniform_open(b[0], b[1]);
        const double u2 = uniform_open(b[2], b[3]);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        cached_ = true;
        return r * std::cos(a);
    }

private:
    Philox4x32 eng_;
    double cache_ = 0.0;
    bool cached_ = false;
};

// Uniform doubles in (0,1), two per block.
class UniformStream {
public:
    UniformStream(std::uint64_t seed, std::uint64_t stream_id) : eng_(seed, stream_id) {}

    double next() {
        if (cached_) {
            cached_ = false;
            return cache_;
        }
        const auto b = eng_.next_block();
        cache_ = uniform_open(b[2], b[3]);
        cached_ = true;
        return uniform_open(b[0], b[1]);
    }

    // Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(next() * static_cast<double>(n)) % n;
    }

private:
    Philox4x32 eng_;
    double cache_ = 0.0;
    bool cached_ = false;
};

// splitmix64 finalizer; used to derive decorrelated sub-seeds from a master
// seed and a purpose tag.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt));
}

} // namespace evo::rng
