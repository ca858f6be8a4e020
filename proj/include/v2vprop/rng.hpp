#pragma once

#include <cstdint>
#include <random>

namespace v2vprop {

// Portable random source: std::mt19937_64 (fully specified by the standard)
// with hand-written transforms, so a seed produces the same stream with every
// compiler and standard library.
//   uniform  : top 53 bits of one engine output, in [0, 1)
//   normal   : Marsaglia polar method, spare value cached
//   gamma    : Marsaglia-Tsang squeeze (shape < 1 boosted by U^(1/shape))
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform();
    double normal();
    // Gamma(shape, scale); mean shape * scale.
    double gamma(double shape, double scale);
    double exponential() { return gamma(1.0, 1.0); }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream seed for sub-stream `index` (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace v2vprop
