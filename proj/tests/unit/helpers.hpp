#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "casr/image.hpp"

namespace testing {

inline casr::ImageBuffer random_image(int w, int h, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    casr::ImageBuffer img(w, h, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) img.set(x, y, ch, u(rng));
    return img;
}

/// Smooth texture with a few oriented sinusoids, seeded.
inline casr::ImageBuffer texture_image(int w, int h, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double fx[3], fy[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
        fx[k] = 0.05 + 0.4 * u(rng);
        fy[k] = 0.05 + 0.4 * u(rng);
        ph[k] = 6.283 * u(rng);
        amp[k] = 0.1 + 0.1 * u(rng);
    }
    casr::ImageBuffer img(w, h, c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double v = 0.5;
                for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k] + ch);
                img.set(x, y, ch, static_cast<float>(v));
            }
    return img;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const std::filesystem::path p = std::filesystem::path(CASR_TEST_TMP) / name;
    std::filesystem::create_directories(p);
    return p;
}

inline double max_abs_diff(const casr::ImageBuffer& a, const casr::ImageBuffer& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b.data()[i]));
    return m;
}

}  // namespace testing
