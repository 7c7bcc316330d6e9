#pragma once

#include "parallax/geometry/se3.hpp"

namespace parallax {

// Pinhole intrinsics. Camera frame: +x right, +y down, +z forward; pixel
// coordinates are zero-indexed with integer centers.
struct Intrinsics {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

    Intrinsics() = default;
    Intrinsics(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
        check(fx > 0.0 && fy > 0.0, "Intrinsics: focal lengths must be positive");
    }

    // Intrinsics of the image one 2x average-pool level down. A pooled pixel
    // j covers source pixels {2j, 2j+1}, so its center maps to 2j + 0.5.
    Intrinsics scaled_down() const { return Intrinsics(fx / 2, fy / 2, (cx - 0.5) / 2, (cy - 0.5) / 2); }

    Intrinsics scaled_down(int levels) const {
        Intrinsics k = *this;
        for (int i = 0; i < levels; ++i) k = k.scaled_down();
        return k;
    }

    // Mirror around the vertical axis of a width-W image.
    Intrinsics flipped_horizontal(int width) const {
        return Intrinsics(fx, fy, static_cast<double>(width - 1) - cx, cy);
    }

    // Row-major 3x3 matrix line: fx 0 cx 0 fy cy 0 0 1.
    std::string serialize() const {
        std::ostringstream os;
        os.precision(17);
        os << fx << " 0 " << cx << " 0 " << fy << " " << cy << " 0 0 1";
        return os.str();
    }

    static Intrinsics parse(const std::string& line) {
        std::istringstream is(line);
        double m[9];
        for (double& v : m)
            check(static_cast<bool>(is >> v), "Intrinsics::parse: expected 9 numbers, got '" + line + "'");
        check(m[1] == 0 && m[3] == 0 && m[6] == 0 && m[7] == 0 && m[8] == 1,
              "Intrinsics::parse: matrix is not an upper-triangular pinhole K");
        return Intrinsics(m[0], m[4], m[2], m[5]);
    }
};

// Constant pixel-coordinate grids (H,W).
inline Tensor pixel_grid_x(int h, int w) {
    std::vector<double> v(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v[static_cast<size_t>(y) * w + x] = x;
    return Tensor::from({h, w}, std::move(v));
}

inline Tensor pixel_grid_y(int h, int w) {
    std::vector<double> v(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v[static_cast<size_t>(y) * w + x] = y;
    return Tensor::from({h, w}, std::move(v));
}

// Camera-frame 3D points (3,H,W) for a positive depth map (H,W):
// X = (x-cx)/fx * D, Y = (y-cy)/fy * D, Z = D.
inline Tensor unproject(const Tensor& depth, const Intrinsics& k) {
    check(depth.shape().size() == 2, "unproject: depth must be (H,W), got " +
                                         shape_str(depth.shape()));
    for (double d : depth.values())
        check(d > 0.0, "unproject: depth must be strictly positive");
    const int h = depth.shape()[0], w = depth.shape()[1];
    Tensor xn = (pixel_grid_x(h, w) - k.cx) / k.fx;  // constant grids
    Tensor yn = (pixel_grid_y(h, w) - k.cy) / k.fy;
    Tensor x = reshape(xn * depth, {1, h, w});
    Tensor y = reshape(yn * depth, {1, h, w});
    Tensor z = reshape(depth, {1, h, w});
    return concat({x, y, z}, 0);
}

// Projected pixel coordinates (2,H,W) of camera-frame points (3,H,W). The
// depth used for division is clamped at kMinProjectDepth to stay finite;
// callers mask such points invalid.
inline Tensor project(const Tensor& points, const Intrinsics& k) {
    check(points.shape().size() == 3 && points.shape()[0] == 3,
          "project: points must be (3,H,W), got " + shape_str(points.shape()));
    const int h = points.shape()[1], w = points.shape()[2];
    Tensor x = slice(points, {0, 0, 0}, {1, h, w});
    Tensor y = slice(points, {1, 0, 0}, {2, h, w});
    Tensor z = maximum(slice(points, {2, 0, 0}, {3, h, w}), Tensor::scalar(kMinProjectDepth));
    Tensor u = (x / z) * k.fx + k.cx;
    Tensor v = (y / z) * k.fy + k.cy;
    return concat({u, v}, 0);
}

// Applies a rigid transform to a point map (3,H,W).
inline Tensor transform_points(const Tensor& points, const PoseTensors& pose) {
    check(points.shape().size() == 3 && points.shape()[0] == 3,
          "transform_points: points must be (3,H,W), got " + shape_str(points.shape()));
    const int h = points.shape()[1], w = points.shape()[2];
    Tensor x = slice(points, {0, 0, 0}, {1, h, w});
    Tensor y = slice(points, {1, 0, 0}, {2, h, w});
    Tensor z = slice(points, {2, 0, 0}, {3, h, w});
    Tensor xo = pose.r[0] * x + pose.r[1] * y + pose.r[2] * z + pose.t[0];
    Tensor yo = pose.r[3] * x + pose.r[4] * y + pose.r[5] * z + pose.t[1];
    Tensor zo = pose.r[6] * x + pose.r[7] * y + pose.r[8] * z + pose.t[2];
    return concat({xo, yo, zo}, 0);
}

}  // namespace parallax
