#pragma once

#include "parallax/io/image_io.hpp"

namespace parallax {

namespace detail {

// Perceptually uniform ramp (viridis control points), linearly interpolated.
inline std::array<double, 3> colormap(double t) {
    static constexpr double kStops[9][3] = {
        {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
        {0.207, 0.372, 0.553}, {0.164, 0.471, 0.558}, {0.128, 0.567, 0.551},
        {0.135, 0.659, 0.518}, {0.267, 0.749, 0.441}, {0.993, 0.906, 0.144}};
    t = std::clamp(t, 0.0, 1.0) * 8.0;
    const int i = std::min(static_cast<int>(t), 7);
    const double f = t - i;
    std::array<double, 3> c;
    for (int ch = 0; ch < 3; ++ch)
        c[static_cast<size_t>(ch)] =
            (1 - f) * kStops[i][ch] + f * kStops[i + 1][ch];
    return c;
}

// Inverse depth normalized to [0,1] per image (near = 1).
inline std::vector<double> normalized_inverse_depth(const Tensor& depth) {
    std::vector<double> inv(depth.values().size());
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (size_t i = 0; i < inv.size(); ++i) {
        const double d = depth.values()[i];
        inv[i] = 1.0 / std::max(d, 1e-6);
        if (std::isfinite(inv[i])) {
            lo = std::min(lo, inv[i]);
            hi = std::max(hi, inv[i]);
        }
    }
    const double span = hi - lo < 1e-12 ? 1.0 : hi - lo;
    for (double& v : inv) v = (v - lo) / span;
    return inv;
}

}  // namespace detail

// Grayscale panel of normalized inverse depth.
inline void write_depth_gray(const std::string& path, const Tensor& depth) {
    const auto inv = detail::normalized_inverse_depth(depth);
    std::vector<double> gray(inv.size());
    for (size_t i = 0; i < inv.size(); ++i) gray[i] = inv[i] * 255.0;
    write_pgm(path, Tensor::from(depth.shape(), std::move(gray)));
}

// Color-mapped panel of normalized inverse depth.
inline void write_depth_color(const std::string& path, const Tensor& depth) {
    const int h = depth.shape()[0], w = depth.shape()[1];
    const auto inv = detail::normalized_inverse_depth(depth);
    std::vector<double> rgb(static_cast<size_t>(3) * h * w);
    for (int i = 0; i < h * w; ++i) {
        const auto c = detail::colormap(inv[static_cast<size_t>(i)]);
        for (int ch = 0; ch < 3; ++ch)
            rgb[static_cast<size_t>(ch) * h * w + i] = c[static_cast<size_t>(ch)];
    }
    write_ppm(path, Tensor::from({3, h, w}, std::move(rgb)));
}

}  // namespace parallax
