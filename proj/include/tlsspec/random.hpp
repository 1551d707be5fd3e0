// random.hpp: Seeded random streams with a portable uniform mapping.

#pragma once

#include <cstdint>
#include <random>

namespace tlsspec {

// mt19937_64 with the top 53 bits mapped to [0, 1). std::uniform_real_distribution is
// implementation-defined, which would make stored datasets depend on the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent stream for (global seed, sample index, substream).
    static Rng derive(std::uint64_t seed, std::uint64_t index, std::uint32_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32), stream};
        return Rng(seq);
    }

    std::uint64_t next_u64() { return engine_(); }
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

private:
    explicit Rng(std::seed_seq& seq) : engine_(seq) {}
    std::mt19937_64 engine_;
};

}  // namespace tlsspec
