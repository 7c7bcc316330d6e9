#pragma once

#include "parallax/warp/warp.hpp"

namespace parallax {

struct LossWeights {
    double l1 = 0.85;
    double ssim = 0.15;
    double smooth = 0.04;
    double size_constraint = 0.0005;
    double l2_reg = 0.05;

    void validate() const {
        check(l1 >= 0 && ssim >= 0 && smooth >= 0 && size_constraint >= 0 && l2_reg >= 0,
              "LossWeights: weights must be non-negative");
    }
};

// One learnable positive scalar per object category id.
struct HeightPriors {
    std::vector<Tensor> p;

    void ensure_category(int id, double init = 1.0) {
        check(id >= 0, "HeightPriors: category id must be non-negative");
        while (static_cast<int>(p.size()) <= id)
            p.push_back(Tensor::from({1}, {init}).set_requires_grad());
    }

    const Tensor& for_category(int id) const {
        check(id >= 0 && id < static_cast<int>(p.size()),
              "HeightPriors: unknown category " + std::to_string(id));
        return p[static_cast<size_t>(id)];
    }

    // Positivity is a hard invariant; call after every optimizer step.
    void project_positive(double floor = 1e-2) {
        for (Tensor& t : p)
            for (double& v : t.mutable_values())
                if (v < floor) v = floor;
    }

    std::vector<Tensor> parameters() const { return p; }
};

// A binary instance mask with its category id (for the size-constraint loss).
struct ObjectMask {
    Tensor mask;  // (H,W) in {0,1}
    int category = 0;
};

namespace detail {

// Mean over channels of |a - b|, as an (H,W) map.
inline Tensor l1_residual_map(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "residual: shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ");
    return mean(abs(sub(a, b)), {0});
}

// Combines two per-pixel residual maps under their validity masks: the
// per-pixel minimum where both warps are valid, the valid one where only one
// is, zero where neither. Gradients flow only through the selected branch.
inline Tensor masked_min(const Tensor& rp, const Tensor& rn, const Tensor& vp, const Tensor& vn) {
    Tensor both = mul(vp, vn);
    Tensor only_p = mul(vp, sub(Tensor::scalar(1.0), vn));
    Tensor only_n = mul(vn, sub(Tensor::scalar(1.0), vp));
    return add(add(mul(both, minimum(rp, rn)), mul(only_p, rp)), mul(only_n, rn));
}

}  // namespace detail

// Minimum-reprojection photometric loss: per-pixel L1 residuals of both warps
// against the middle frame, validity-masked, min-combined, averaged over all
// pixels (uncovered pixels contribute zero to the numerator).
inline Tensor reconstruction_loss(const WarpResult& warp_prev, const WarpResult& warp_next,
                                  const Tensor& i2) {
    const int h = i2.shape()[1], w = i2.shape()[2];
    Tensor rp = detail::l1_residual_map(warp_prev.image, i2);
    Tensor rn = detail::l1_residual_map(warp_next.image, i2);
    Tensor vp = reshape(warp_prev.valid, {h, w});
    Tensor vn = reshape(warp_next.valid, {h, w});
    return mean(detail::masked_min(rp, rn, vp, vn));
}

namespace detail {

// Depthwise 3x3 mean pooling with valid padding: (C,H,W) -> (C,H-2,W-2).
inline Tensor box3_mean(const Tensor& img) {
    const int c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    Tensor as_batch = reshape(img, {c, 1, h, w});
    Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
    Tensor pooled = conv2d(as_batch, kernel, 1, Padding::valid);
    return reshape(pooled, {c, h - 2, w - 2});
}

}  // namespace detail

// Per-pixel (1-SSIM)/2, channel-averaged: (C,H,W) x2 -> (H-2,W-2).
// SSIM uses 3x3 mean pooling with C1=0.01^2, C2=0.03^2.
inline Tensor ssim_dissimilarity_map(const Tensor& a, const Tensor& b) {
    check(a.shape() == b.shape(), "ssim: shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ");
    check(a.shape().size() == 3 && a.shape()[1] > 2 && a.shape()[2] > 2,
          "ssim: image too small for 3x3 pooling, got " + shape_str(a.shape()));
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    Tensor mu_a = detail::box3_mean(a);
    Tensor mu_b = detail::box3_mean(b);
    Tensor sigma_a = sub(detail::box3_mean(mul(a, a)), mul(mu_a, mu_a));
    Tensor sigma_b = sub(detail::box3_mean(mul(b, b)), mul(mu_b, mu_b));
    Tensor sigma_ab = sub(detail::box3_mean(mul(a, b)), mul(mu_a, mu_b));
    Tensor num = mul(mul(mu_a, mu_b) * 2.0 + kC1, mul(sigma_ab, Tensor::scalar(2.0)) + kC2);
    Tensor den = mul(add(mul(mu_a, mu_a), mul(mu_b, mu_b)) + kC1, add(sigma_a, sigma_b) + kC2);
    Tensor ssim = div(num, den);
    return mean((1.0 - ssim) * 0.5, {0});
}

inline Tensor ssim_loss(const Tensor& a, const Tensor& b) {
    return mean(ssim_dissimilarity_map(a, b));
}

namespace detail {

// Erodes a validity map to the SSIM grid: a pooled pixel counts as valid iff
// all nine source pixels are valid.
inline Tensor erode3_valid(const Tensor& valid) {
    const int h = valid.shape()[1], w = valid.shape()[2];
    std::vector<double> out(static_cast<size_t>(h - 2) * (w - 2), 0.0);
    const auto& v = valid.values();
    for (int y = 0; y < h - 2; ++y)
        for (int x = 0; x < w - 2; ++x) {
            bool all = true;
            for (int dy = 0; dy < 3 && all; ++dy)
                for (int dx = 0; dx < 3; ++dx)
                    if (v[static_cast<size_t>(y + dy) * w + (x + dx)] < 0.5) {
                        all = false;
                        break;
                    }
            out[static_cast<size_t>(y) * (w - 2) + x] = all ? 1.0 : 0.0;
        }
    return Tensor::from({h - 2, w - 2}, std::move(out));
}

}  // namespace detail

// SSIM analogue of the minimum-reprojection rule: per-warp dissimilarity maps
// are min-combined pixelwise under eroded validity masks. Undersized images
// (below the 3x3 pooling window) contribute zero.
inline Tensor ssim_min_loss(const WarpResult& warp_prev, const WarpResult& warp_next,
                            const Tensor& i2) {
    const int h = i2.shape()[1], w = i2.shape()[2];
    if (h < 3 || w < 3) return Tensor::scalar(0.0);
    Tensor mp = ssim_dissimilarity_map(warp_prev.image, i2);
    Tensor mn = ssim_dissimilarity_map(warp_next.image, i2);
    Tensor vp = detail::erode3_valid(warp_prev.valid);
    Tensor vn = detail::erode3_valid(warp_next.valid);
    return mean(detail::masked_min(mp, mn, vp, vn));
}

// D / mean(D); the result has mean one.
inline Tensor normalize_depth(const Tensor& d) {
    return div(d, mean(d));
}

// Edge-aware first-order smoothness of mean-normalized inverse depth:
// mean(|dx d| * exp(-|dx I|)) + mean(|dy d| * exp(-|dy I|)), image gradients
// channel-averaged.
inline Tensor smoothness_loss(const Tensor& depth, const Tensor& image) {
    check(depth.shape().size() == 2, "smoothness: depth must be (H,W)");
    check(image.shape().size() == 3 && image.shape()[1] == depth.shape()[0] &&
              image.shape()[2] == depth.shape()[1],
          "smoothness: depth " + shape_str(depth.shape()) + " and image " +
              shape_str(image.shape()) + " are not aligned");
    const int h = depth.shape()[0], w = depth.shape()[1];
    const int c = image.shape()[0];
    Tensor disp = div(Tensor::scalar(1.0), depth);
    Tensor d = normalize_depth(disp);  // mean-normalized disparity

    Tensor dx_d = abs(sub(slice(d, {0, 1}, {h, w}), slice(d, {0, 0}, {h, w - 1})));
    Tensor dy_d = abs(sub(slice(d, {1, 0}, {h, w}), slice(d, {0, 0}, {h - 1, w})));
    Tensor dx_i = mean(abs(sub(slice(image, {0, 0, 1}, {c, h, w}),
                               slice(image, {0, 0, 0}, {c, h, w - 1}))),
                       {0});
    Tensor dy_i = mean(abs(sub(slice(image, {0, 1, 0}, {c, h, w}),
                               slice(image, {0, 0, 0}, {c, h - 1, w}))),
                       {0});
    return add(mean(mul(dx_d, exp(neg(dx_i)))), mean(mul(dy_d, exp(neg(dy_i)))));
}

// Height of the mask's bounding box in pixels (0 for an empty mask).
inline int mask_pixel_height(const Tensor& mask) {
    const int h = mask.shape()[0], w = mask.shape()[1];
    int top = -1, bottom = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.values()[static_cast<size_t>(y) * w + x] > 0.5) {
                if (top < 0) top = y;
                bottom = y;
            }
    return top < 0 ? 0 : bottom - top + 1;
}

// Object-size constraint: ties each object's depth to the pinhole-projected
// depth of its learnable category height prior, fy * p / h, both sides scaled
// by the mean depth of the frame. Invariant under joint positive scaling of
// depth and priors. Empty masks are skipped and counted.
inline Tensor size_constraint_loss(const Tensor& depth, const std::vector<ObjectMask>& objects,
                                   HeightPriors& priors, const Intrinsics& k,
                                   int* skipped_empty = nullptr) {
    Tensor mean_depth = mean(depth);
    Tensor loss = Tensor::scalar(0.0);
    for (const ObjectMask& obj : objects) {
        const int hpix = mask_pixel_height(obj.mask);
        const double npix = [&] {
            double s = 0.0;
            for (double v : obj.mask.values()) s += v > 0.5 ? 1.0 : 0.0;
            return s;
        }();
        if (hpix == 0 || npix == 0.0) {
            if (skipped_empty) ++(*skipped_empty);
            continue;
        }
        priors.ensure_category(obj.category);
        Tensor prior = reshape(priors.for_category(obj.category), {});
        Tensor d_approx = prior * (k.fy / hpix);
        Tensor masked_abs_diff = mul(abs(sub(depth, d_approx)), obj.mask);
        Tensor per_object = div(div(sum(masked_abs_diff), Tensor::scalar(npix)), mean_depth);
        loss = add(loss, per_object);
    }
    return loss;
}

// Raw L2 term over weight tensors: sum of squares / 2.
inline Tensor l2_regularization(const std::vector<Tensor>& weights) {
    Tensor acc = Tensor::scalar(0.0);
    for (const Tensor& w : weights) acc = add(acc, sum(mul(w, w)));
    return acc * 0.5;
}

struct ScaleComponents {
    Tensor rec;     // scalar
    Tensor ssim;    // scalar
    Tensor smooth;  // scalar
};

// Weighted multi-scale assembly: sum_i a1*rec_i + a2*ssim_i + a3*(1/2^i)*sm_i,
// plus the full-scale size constraint and L2 regularization when provided.
inline Tensor total_loss(const std::vector<ScaleComponents>& scales, const LossWeights& w,
                         const Tensor& size_constraint = Tensor(),
                         const Tensor& l2_raw = Tensor()) {
    w.validate();
    check(scales.size() == 4, "total_loss: expected 4 scales, got " +
                                  std::to_string(scales.size()));
    Tensor total = Tensor::scalar(0.0);
    for (size_t i = 0; i < 4; ++i) {
        check(scales[i].rec.defined() && scales[i].ssim.defined() && scales[i].smooth.defined(),
              "total_loss: missing component at scale " + std::to_string(i));
        const double sm_factor = w.smooth / static_cast<double>(1 << i);
        total = add(total, add(scales[i].rec * w.l1,
                               add(scales[i].ssim * w.ssim, scales[i].smooth * sm_factor)));
    }
    if (size_constraint.defined()) total = add(total, size_constraint * w.size_constraint);
    if (l2_raw.defined()) total = add(total, l2_raw * w.l2_reg);
    return total;
}

}  // namespace parallax
