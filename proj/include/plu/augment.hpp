#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plu/error.hpp"
#include "plu/rng.hpp"

namespace plu {

// Feature-space perturbations standing in for image augmentations.
struct AugmentParams {
    double weak_sigma = 0.05;
    double strong_sigma = 0.2;
    double strong_drop = 0.3;

    void validate() const {
        if (weak_sigma < 0.0 || strong_sigma < 0.0) throw ConfigError("augmentation sigma must be >= 0");
        if (strong_drop < 0.0 || strong_drop >= 1.0) throw ConfigError("plu.strong_drop must lie in [0, 1)");
    }
};

inline std::vector<double> weak_augment(std::span<const double> x, std::uint64_t seed, double sigma = 0.05) {
    std::vector<double> out(x.begin(), x.end());
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (auto& v : out) v += rng.normal(0.0, sigma);
    return out;
}

// Gaussian noise followed by inverted dropout.
inline std::vector<double> strong_augment(std::span<const double> x, std::uint64_t seed, double sigma = 0.2,
                                          double p_drop = 0.3) {
    std::vector<double> out(x.begin(), x.end());
    if (sigma == 0.0 && p_drop == 0.0) return out;
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - p_drop);
    for (auto& v : out) {
        const double noisy = v + (sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0);
        const bool drop = p_drop > 0.0 && rng.bernoulli(p_drop);
        v = drop ? 0.0 : noisy * keep_scale;
    }
    return out;
}

} // namespace plu
