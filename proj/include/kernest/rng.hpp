#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace kernest {

// SplitMix64 finalizer. Used to derive independent stream seeds from a master
// seed so every replication and stream is reproducible on its own.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for a named sub-stream: mixes the parts in order.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) noexcept;

// Random stream with a fully specified bit sequence: std::mt19937_64 (whose
// output is fixed by the standard) plus portable conversions to doubles.
// The std:: distributions are avoided because their algorithms vary across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    // Uniform on (0, 1).
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Standard normal via Box-Muller; the second variate is cached.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace kernest
