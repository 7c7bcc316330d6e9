#pragma once

#include "parallax/geometry/camera.hpp"

namespace parallax {

// Reconstructed frame plus the {0,1} mask of target pixels whose source
// coordinates landed inside the source image (and in front of the camera).
struct WarpResult {
    Tensor image;  // (C,H,W)
    Tensor valid;  // (1,H,W), constant
};

namespace detail {

// Coordinates a rounding error away from the frame border count as inside;
// without the snap an identity warp can mark border pixels invalid.
inline constexpr double kCoordSnapEps = 1e-9;

inline bool snap_coord(double& v, int limit) {
    if (v >= 0.0 && v <= limit) return true;
    if (v > -kCoordSnapEps && v < 0.0) {
        v = 0.0;
        return true;
    }
    if (v > limit && v < limit + kCoordSnapEps) {
        v = limit;
        return true;
    }
    return false;
}

}  // namespace detail

// Bilinear sampling of img (C,H,W) at coords (2,H,W) holding (x,y) pixel
// positions. Out-of-range pixels sample 0 and are reported invalid; a
// coordinate is valid iff x in [0,W-1] and y in [0,H-1]. Differentiable in
// both img and coords.
inline std::pair<Tensor, Tensor> bilinear_sample(const Tensor& img, const Tensor& coords) {
    check(img.shape().size() == 3, "bilinear_sample: image must be (C,H,W), got " +
                                       shape_str(img.shape()));
    check(coords.shape().size() == 3 && coords.shape()[0] == 2,
          "bilinear_sample: coords must be (2,H,W), got " + shape_str(coords.shape()));
    check(all_finite(coords.values()), "bilinear_sample: coords must be finite");
    const int c_n = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    const int oh = coords.shape()[1], ow = coords.shape()[2];
    const int np = oh * ow;

    const auto& iv = img.values();
    const auto& cv = coords.values();
    std::vector<double> out(static_cast<size_t>(c_n) * np, 0.0);
    std::vector<double> valid(static_cast<size_t>(np), 0.0);

    const auto pixel = [&](int c, int yy, int xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return iv[(static_cast<size_t>(c) * h + yy) * w + xx];
    };

    for (int p = 0; p < np; ++p) {
        double x = cv[static_cast<size_t>(p)];
        double y = cv[static_cast<size_t>(np + p)];
        if (!detail::snap_coord(x, w - 1) || !detail::snap_coord(y, h - 1)) continue;
        valid[static_cast<size_t>(p)] = 1.0;
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const double wx = x - x0;
        const double wy = y - y0;
        for (int c = 0; c < c_n; ++c) {
            const double v00 = pixel(c, y0, x0);
            const double v01 = pixel(c, y0, x0 + 1);
            const double v10 = pixel(c, y0 + 1, x0);
            const double v11 = pixel(c, y0 + 1, x0 + 1);
            out[static_cast<size_t>(c) * np + p] = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                                   wy * ((1 - wx) * v10 + wx * v11);
        }
    }

    detail::Node* img_node = img.node();
    detail::Node* crd_node = coords.node();
    const bool img_w = img.requires_grad();
    const bool crd_w = coords.requires_grad();
    Tensor sampled = detail::finish_op(
        {c_n, oh, ow}, std::move(out), {img, coords},
        [img_node, crd_node, img_w, crd_w, c_n, h, w, np](const std::vector<double>& g) {
            std::vector<double>* gi = img_w ? &detail::grad_buf(*img_node) : nullptr;
            std::vector<double>* gc = crd_w ? &detail::grad_buf(*crd_node) : nullptr;
            const std::vector<double>& iv2 = img_node->values;
            const std::vector<double>& cv2 = crd_node->values;
            const auto pixel = [&](int c, int yy, int xx) -> double {
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
                return iv2[(static_cast<size_t>(c) * h + yy) * w + xx];
            };
            const auto scatter = [&](int c, int yy, int xx, double val) {
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) return;
                (*gi)[(static_cast<size_t>(c) * h + yy) * w + xx] += val;
            };
            for (int p = 0; p < np; ++p) {
                double x = cv2[static_cast<size_t>(p)];
                double y = cv2[static_cast<size_t>(np + p)];
                if (!detail::snap_coord(x, w - 1) || !detail::snap_coord(y, h - 1)) continue;
                const int x0 = static_cast<int>(std::floor(x));
                const int y0 = static_cast<int>(std::floor(y));
                const double wx = x - x0;
                const double wy = y - y0;
                double gx = 0.0, gy = 0.0;
                for (int c = 0; c < c_n; ++c) {
                    const double go = g[static_cast<size_t>(c) * np + p];
                    if (go == 0.0) continue;
                    if (gi) {
                        scatter(c, y0, x0, go * (1 - wy) * (1 - wx));
                        scatter(c, y0, x0 + 1, go * (1 - wy) * wx);
                        scatter(c, y0 + 1, x0, go * wy * (1 - wx));
                        scatter(c, y0 + 1, x0 + 1, go * wy * wx);
                    }
                    if (gc) {
                        const double v00 = pixel(c, y0, x0);
                        const double v01 = pixel(c, y0, x0 + 1);
                        const double v10 = pixel(c, y0 + 1, x0);
                        const double v11 = pixel(c, y0 + 1, x0 + 1);
                        gx += go * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
                        gy += go * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
                    }
                }
                if (gc) {
                    (*gc)[static_cast<size_t>(p)] += gx;
                    (*gc)[static_cast<size_t>(np + p)] += gy;
                }
            }
        });
    return {sampled, Tensor::from({1, oh, ow}, std::move(valid))};
}

// Inverse warp: reconstructs the target frame by sampling I_src at the
// coordinates of the target's unprojected points moved by the transform.
// With invert_motion the 6-vector is applied in the opposite direction
// (needed when warping the next frame back onto the middle one).
// Differentiable w.r.t. I_src, D_tgt and the motion parameters.
inline WarpResult warp(const Tensor& i_src, const Tensor& d_tgt, const Tensor& motion,
                       const Intrinsics& k, bool invert_motion = false) {
    check(i_src.shape().size() == 3, "warp: source image must be (C,H,W), got " +
                                         shape_str(i_src.shape()));
    check(d_tgt.shape().size() == 2, "warp: target depth must be (H,W), got " +
                                         shape_str(d_tgt.shape()));
    check(i_src.shape()[1] == d_tgt.shape()[0] && i_src.shape()[2] == d_tgt.shape()[1],
          "warp: image " + shape_str(i_src.shape()) + " and depth " + shape_str(d_tgt.shape()) +
              " disagree");
    const int h = d_tgt.shape()[0], w = d_tgt.shape()[1];

    Tensor points = unproject(d_tgt, k);
    PoseTensors pose = se3_to_pose_tensors(motion, invert_motion);
    Tensor moved = transform_points(points, pose);
    Tensor coords = project(moved, k);
    auto [sampled, in_bounds] = bilinear_sample(i_src, coords);

    // points at or behind the projection plane are invalid regardless of
    // where their clamped projection landed
    std::vector<double> valid_v = in_bounds.values();
    const auto& mv = moved.values();
    const size_t zoff = static_cast<size_t>(2) * h * w;
    for (size_t p = 0; p < static_cast<size_t>(h) * w; ++p)
        if (mv[zoff + p] <= kMinProjectDepth) valid_v[p] = 0.0;
    Tensor valid = Tensor::from({1, h, w}, std::move(valid_v));

    return WarpResult{mul(sampled, valid), valid};
}

inline WarpResult warp(const Tensor& i_src, const Tensor& d_tgt, const SE3Params& motion,
                       const Intrinsics& k, bool invert_motion = false) {
    return warp(i_src, d_tgt, motion.tensor(), k, invert_motion);
}

// Nearest-neighbor warp of a value map (used for instance masks, which must
// stay binary). Not differentiable; operates on current values only.
// Out-of-bounds or behind-camera pixels return fill.
inline Tensor warp_nearest(const Tensor& src_map, const Tensor& d_tgt, const SE3Params& motion,
                           const Intrinsics& k, bool invert_motion = false, double fill = 0.0) {
    check(src_map.shape().size() == 2, "warp_nearest: map must be (H,W), got " +
                                           shape_str(src_map.shape()));
    const int h = d_tgt.shape()[0], w = d_tgt.shape()[1];
    Tensor points = unproject(d_tgt.detach(), k);
    PoseTensors pose = se3_to_pose_tensors(motion.tensor(), invert_motion);
    Tensor moved = transform_points(points, pose);
    Tensor coords = project(moved, k);
    const auto& cv = coords.values();
    const auto& mv = moved.values();
    const auto& sv = src_map.values();
    std::vector<double> out(static_cast<size_t>(h) * w, fill);
    const size_t np = static_cast<size_t>(h) * w;
    for (size_t p = 0; p < np; ++p) {
        if (mv[2 * np + p] <= kMinProjectDepth) continue;
        double x = cv[p];
        double y = cv[np + p];
        if (!detail::snap_coord(x, w - 1) || !detail::snap_coord(y, h - 1)) continue;
        const int xi = static_cast<int>(std::lround(x));
        const int yi = static_cast<int>(std::lround(y));
        out[p] = sv[static_cast<size_t>(std::clamp(yi, 0, h - 1)) * w +
                    static_cast<size_t>(std::clamp(xi, 0, w - 1))];
    }
    return Tensor::from({h, w}, std::move(out));
}

}  // namespace parallax
