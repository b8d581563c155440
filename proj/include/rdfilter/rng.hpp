#pragma once

// Counter-based random number generation. Every draw is a pure function of
// (seed, domain, step, member, counter), so simulations and filters produce
// bit-identical results regardless of evaluation order or thread count.

#include <cmath>
#include <cstdint>

namespace rdf {

// Distinct constants keep draws for different purposes decorrelated even when
// they share the same (seed, step, member) key.
enum class RngDomain : std::uint64_t {
    kInit = 0x243f6a8885a308d3ull,       // initial condition perturbations
    kStateNoise = 0x13198a2e03707344ull, // process noise increments
    kObsNoise = 0xa4093822299f31d0ull,   // measurement noise
    kResample = 0x082efa98ec4e6c89ull,   // ancestor selection
};

// Finalizer from splitmix64: a bijective 64-bit mixer with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// A keyed stream of i.i.d. draws addressed by counter. Copyable and trivially
// shareable across threads: no mutable state.
class RngStream {
public:
    RngStream(std::uint64_t seed, RngDomain domain, std::uint64_t step,
              std::uint64_t member) noexcept {
        std::uint64_t k = mix64(seed + static_cast<std::uint64_t>(domain));
        k = mix64(k ^ (step * 0xd1342543de82ef95ull));
        key_ = mix64(k ^ (member * 0xaf251af3b0f025b5ull));
    }

    std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix64(key_ ^ (counter * 0x9e3779b97f4a7c15ull));
    }

    // Uniform on the open interval (0, 1); 53-bit resolution, never 0 or 1.
    double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    // Box-Muller pair: two independent standard normals per pair index.
    void normal_pair(std::uint64_t pair_index, double& z0, double& z1) const noexcept {
        const double u1 = uniform(2 * pair_index);
        const double u2 = uniform(2 * pair_index + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        z0 = r * std::cos(a);
        z1 = r * std::sin(a);
    }

    // Single standard normal addressed by counter. Counters 2k and 2k+1 map to
    // the two halves of pair k, so mixed pair/single access stays consistent.
    double normal(std::uint64_t counter) const noexcept {
        double z0, z1;
        normal_pair(counter >> 1, z0, z1);
        return (counter & 1) ? z1 : z0;
    }

private:
    std::uint64_t key_;
};

} // namespace rdf
