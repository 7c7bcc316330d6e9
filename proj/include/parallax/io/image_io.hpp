#pragma once

#include <cstring>
#include <fstream>

#include "parallax/core/tensor.hpp"

namespace parallax {

// Lossless 8-bit binary PPM (P6) for RGB frames in [0,1].
inline void write_ppm(const std::string& path, const Tensor& image) {
    check(image.shape().size() == 3 && image.shape()[0] == 3,
          "write_ppm: image must be (3,H,W), got " + shape_str(image.shape()));
    const int h = image.shape()[1], w = image.shape()[2];
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "write_ppm: cannot open " + path);
    f << "P6\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    const auto& v = image.values();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double val = v[(static_cast<size_t>(c) * h + y) * w + x];
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::clamp(std::lround(val * 255.0), 0l, 255l));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    check(f.good(), "write_ppm: write failed for " + path);
}

namespace detail {

inline void skip_pnm_whitespace(std::istream& is) {
    for (;;) {
        int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            return;
        }
    }
}

}  // namespace detail

inline Tensor read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    check(magic == "P6", "read_ppm: " + path + " is not a binary PPM");
    detail::skip_pnm_whitespace(f);
    int w, h, maxval;
    f >> w;
    detail::skip_pnm_whitespace(f);
    f >> h;
    detail::skip_pnm_whitespace(f);
    f >> maxval;
    check(maxval == 255, "read_ppm: only 8-bit images supported");
    f.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(f.good(), "read_ppm: truncated file " + path);
    std::vector<double> v(raw.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                v[(static_cast<size_t>(c) * h + y) * w + x] =
                    raw[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
    return Tensor::from({3, h, w}, std::move(v));
}

// 8-bit binary PGM (P5) for instance-index maps and grayscale output.
inline void write_pgm(const std::string& path, const Tensor& map) {
    check(map.shape().size() == 2, "write_pgm: map must be (H,W), got " + shape_str(map.shape()));
    const int h = map.shape()[0], w = map.shape()[1];
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "write_pgm: cannot open " + path);
    f << "P5\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            row[static_cast<size_t>(x)] = static_cast<unsigned char>(
                std::clamp(std::lround(map.values()[static_cast<size_t>(y) * w + x]), 0l, 255l));
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    check(f.good(), "write_pgm: write failed for " + path);
}

inline Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_pgm: cannot open " + path);
    std::string magic;
    f >> magic;
    check(magic == "P5", "read_pgm: " + path + " is not a binary PGM");
    detail::skip_pnm_whitespace(f);
    int w, h, maxval;
    f >> w;
    detail::skip_pnm_whitespace(f);
    f >> h;
    detail::skip_pnm_whitespace(f);
    f >> maxval;
    f.get();
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    check(f.good(), "read_pgm: truncated file " + path);
    std::vector<double> v(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) v[i] = raw[i];
    return Tensor::from({h, w}, std::move(v));
}

// Grayscale portable float map (Pf), 32-bit floats, negative scale marking
// little-endian. Rows are stored bottom-to-top per the format. NaN is the
// invalid-pixel sentinel.
inline void write_pfm(const std::string& path, const Tensor& map) {
    check(map.shape().size() == 2, "write_pfm: map must be (H,W), got " + shape_str(map.shape()));
    const int h = map.shape()[0], w = map.shape()[1];
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "write_pfm: cannot open " + path);
    f << "Pf\n" << w << ' ' << h << "\n-1.0\n";
    std::vector<float> row(static_cast<size_t>(w));
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x)
            row[static_cast<size_t>(x)] =
                static_cast<float>(map.values()[static_cast<size_t>(y) * w + x]);
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    check(f.good(), "write_pfm: write failed for " + path);
}

inline Tensor read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "read_pfm: cannot open " + path);
    std::string magic;
    f >> magic;
    check(magic == "Pf", "read_pfm: " + path + " is not a grayscale PFM");
    int w, h;
    double scale;
    f >> w >> h >> scale;
    check(scale < 0, "read_pfm: big-endian PFM not supported");
    f.get();
    std::vector<double> v(static_cast<size_t>(w) * h);
    std::vector<float> row(static_cast<size_t>(w));
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        check(f.good(), "read_pfm: truncated file " + path);
        for (int x = 0; x < w; ++x) v[static_cast<size_t>(y) * w + x] = row[static_cast<size_t>(x)];
    }
    return Tensor::from({h, w}, std::move(v));
}

}  // namespace parallax
