#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace plu {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mixes a base seed with any number of stream identifiers (scene id,
// proposal index, epoch, ...) into an independent child seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = splitmix64(base);
    for (auto p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

// Salts for derive_seed, one per independent random stream.
namespace stream {
inline constexpr std::uint64_t world = 1;
inline constexpr std::uint64_t scene = 2;
inline constexpr std::uint64_t objectness = 3;
inline constexpr std::uint64_t weak = 4;
inline constexpr std::uint64_t strong = 5;
inline constexpr std::uint64_t domains = 6;
inline constexpr std::uint64_t shuffle = 7;
inline constexpr std::uint64_t init = 8;
inline constexpr std::uint64_t finetune = 9;
inline constexpr std::uint64_t head = 10;
inline constexpr std::uint64_t tasks = 11;
} // namespace stream

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double sd = 1.0) {
        return std::normal_distribution<double>(mean, sd)(engine_);
    }
    // Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }
    bool bernoulli(double p) { return uniform() < p; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace plu
