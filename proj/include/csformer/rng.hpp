#pragma once

#include <cstdint>
#include <string_view>

namespace csformer {

// Deterministic xoshiro-free generator: splitmix64 keyed by (seed, stream
// name). Every random draw in the project flows from one user seed through a
// named sub-stream ("init", "shuffle", "noise", per-tensor names), so any
// component can be reproduced in isolation.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream);

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit mantissa.
    double next_uniform01();

    // Uniform in [-a, a].
    double next_uniform_sym(double a);

    // Standard normal via Box-Muller.
    double next_normal();

    // Shuffle helper for index vectors (Fisher-Yates).
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Combines a user seed with a stream name into a sub-stream seed.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream);

} // namespace csformer
