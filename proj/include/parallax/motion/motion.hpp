#pragma once

#include <map>

#include "parallax/loss/losses.hpp"
#include "parallax/net/networks.hpp"

namespace parallax {

// Instance segmentation for a triplet, stored as per-frame index maps:
// pixel value k > 0 marks instance k, 0 is background. Index k refers to the
// same object in all three frames; per-frame masks are disjoint by
// construction.
struct InstanceMasks {
    std::array<Tensor, 3> maps;          // (H,W) each
    std::map<int, int> categories;       // instance id -> category id

    bool empty() const { return !maps[0].defined(); }

    // Sorted instance ids present in any frame.
    std::vector<int> instance_ids() const {
        std::vector<int> ids;
        for (const Tensor& m : maps)
            for (double v : m.values()) {
                const int id = static_cast<int>(v);
                if (id > 0 && std::find(ids.begin(), ids.end(), id) == ids.end())
                    ids.push_back(id);
            }
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    int category_of(int instance) const {
        auto it = categories.find(instance);
        return it == categories.end() ? 0 : it->second;
    }
};

// Binary mask of one instance from an index map.
inline Tensor instance_mask(const Tensor& index_map, int id) {
    std::vector<double> v(index_map.values().size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i)
        if (static_cast<int>(index_map.values()[i]) == id) v[i] = 1.0;
    return Tensor::from(index_map.shape(), std::move(v));
}

// O_0(S): complement of the union of all instance masks.
inline Tensor static_mask(const Tensor& index_map) {
    std::vector<double> v(index_map.values().size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i)
        if (static_cast<int>(index_map.values()[i]) == 0) v[i] = 1.0;
    return Tensor::from(index_map.shape(), std::move(v));
}

// V = O_0(S1) * O_0(S2) * O_0(S3): pixels static in all three frames.
inline Tensor ego_input_mask(const Tensor& s1, const Tensor& s2, const Tensor& s3) {
    check(s1.shape() == s2.shape() && s2.shape() == s3.shape(),
          "ego_input_mask: mask shapes differ");
    Tensor v = mul(mul(static_mask(s1), static_mask(s2)), static_mask(s3));
    return v;
}

// Ego-motion from the masked triplet: both transforms from one forward pass
// over the channel-concatenated images, each multiplied by V.
inline std::pair<Tensor, Tensor> estimate_ego(const Tensor& i1, const Tensor& i2,
                                              const Tensor& i3, const Tensor& v,
                                              const MotionNet& net) {
    const int h = i1.shape()[1], w = i1.shape()[2];
    Tensor vm = reshape(v, {1, h, w});
    Tensor stacked = concat({mul(i1, vm), mul(i2, vm), mul(i3, vm)}, 0);
    return net.forward(stacked);
}

struct ObjectMotion {
    int instance = 0;
    Tensor m12;  // 6-vector
    Tensor m23;  // 6-vector
    bool defaulted_12 = false;  // zeroed because the instance left a frame
    bool defaulted_23 = false;
};

// Per-object motion from the ego-compensated triplet. The warped previous and
// next frames (and their nearest-warped masks) must have ego motion already
// removed; inputs are detached so the object branch trains only the object
// network. An instance with an empty middle mask gets zero motion for both
// pairs; an empty warped mask zeroes the corresponding pair only.
inline std::vector<ObjectMotion> estimate_object_motion(
    const Tensor& warped_prev, const Tensor& i2, const Tensor& warped_next,
    const Tensor& mask_prev_warped, const Tensor& mask2, const Tensor& mask_next_warped,
    const std::vector<int>& instance_ids, const MotionNet& net) {
    const int h = i2.shape()[1], w = i2.shape()[2];
    Tensor prev = warped_prev.detach();
    Tensor next = warped_next.detach();
    Tensor mid = i2.detach();
    std::vector<ObjectMotion> out;
    for (int id : instance_ids) {
        ObjectMotion om;
        om.instance = id;
        Tensor o1 = instance_mask(mask_prev_warped, id);
        Tensor o2 = instance_mask(mask2, id);
        Tensor o3 = instance_mask(mask_next_warped, id);
        const double n1 = sum(o1).value();
        const double n2 = sum(o2).value();
        const double n3 = sum(o3).value();
        if (n2 == 0.0) {
            om.m12 = Tensor::zeros({6});
            om.m23 = Tensor::zeros({6});
            om.defaulted_12 = om.defaulted_23 = true;
            out.push_back(om);
            continue;
        }
        Tensor stacked = concat({mul(prev, reshape(o1, {1, h, w})),
                                 mul(mid, reshape(o2, {1, h, w})),
                                 mul(next, reshape(o3, {1, h, w}))},
                                0);
        auto [m12, m23] = net.forward(stacked);
        om.m12 = m12;
        om.m23 = m23;
        if (n1 == 0.0) {
            om.m12 = Tensor::zeros({6});
            om.defaulted_12 = true;
        }
        if (n3 == 0.0) {
            om.m23 = Tensor::zeros({6});
            om.defaulted_23 = true;
        }
        out.push_back(om);
    }
    return out;
}

struct CompositeWarp {
    WarpResult composite;          // the combined reconstruction
    WarpResult ego;                // the plain ego warp (before compositing)
    double uncovered_fraction = 0; // pixels claimed by neither V nor any O_i
};

// Full warping: static region from the ego warp gated by V, each object
// region from its own motion warp applied on top of the (detached) ego warp,
// gated by O_i(S_2). Gating masks are disjoint, so no pixel is written twice;
// pixels outside V and all object masks stay unfilled (zero, invalid) and are
// excluded from the losses.
inline CompositeWarp full_warp(const Tensor& i_src, const Tensor& d_tgt, const Tensor& ego_motion,
                               const std::vector<std::pair<Tensor, Tensor>>& object_motion_masks,
                               const Tensor& v, const Intrinsics& k, bool invert_motion = false) {
    const int h = d_tgt.shape()[0], w = d_tgt.shape()[1];
    CompositeWarp out;
    out.ego = warp(i_src, d_tgt, ego_motion, k, invert_motion);

    Tensor v1 = reshape(v, {1, h, w});
    Tensor image = mul(out.ego.image, v1);
    Tensor valid = mul(out.ego.valid, v1);
    Tensor coverage = v1;

    // object appearance is re-warped from the ego-compensated frame; the ego
    // image is detached so these regions train the object branch and depth
    Tensor ego_image_frozen = out.ego.image.detach();
    for (const auto& [motion, mask2] : object_motion_masks) {
        Tensor o = reshape(mask2, {1, h, w});
        WarpResult ow = warp(ego_image_frozen, d_tgt, motion, k, invert_motion);
        image = add(image, mul(ow.image, o));
        valid = add(valid, mul(ow.valid, o));
        coverage = add(coverage, o);
    }

    double uncovered = 0.0;
    for (double c : coverage.values()) {
        check(c <= 1.0 + 1e-9, "full_warp: compositing masks overlap");
        if (c < 0.5) uncovered += 1.0;
    }
    out.uncovered_fraction = uncovered / static_cast<double>(h * w);
    out.composite = WarpResult{image, valid};
    return out;
}

struct MotionVector {
    std::array<double, 3> mean_displacement{0, 0, 0};
    std::array<double, 3> direction{0, 0, 0};  // unit vector (zero if no motion)
};

// Mean 3D displacement of the object's unprojected points under its motion
// transform, in scene units, with the unit direction alongside.
inline MotionVector object_motion_vector(const SE3Params& motion, const Tensor& depth,
                                         const Tensor& mask, const Intrinsics& k) {
    check(depth.shape() == mask.shape(), "object_motion_vector: depth/mask shapes differ");
    const int h = depth.shape()[0], w = depth.shape()[1];
    const Pose4x4 t = se3_to_matrix(motion);
    MotionVector mv;
    double count = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.values()[static_cast<size_t>(y) * w + x] <= 0.5) continue;
            const double d = depth.values()[static_cast<size_t>(y) * w + x];
            const std::array<double, 3> p = {(x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d};
            const std::array<double, 3> q = t.apply(p);
            for (int i = 0; i < 3; ++i)
                mv.mean_displacement[static_cast<size_t>(i)] += q[static_cast<size_t>(i)] - p[static_cast<size_t>(i)];
            count += 1.0;
        }
    check(count > 0.0, "object_motion_vector: empty mask");
    double norm = 0.0;
    for (double& c : mv.mean_displacement) {
        c /= count;
        norm += c * c;
    }
    norm = std::sqrt(norm);
    if (norm > 1e-12)
        for (int i = 0; i < 3; ++i)
            mv.direction[static_cast<size_t>(i)] = mv.mean_displacement[static_cast<size_t>(i)] / norm;
    return mv;
}

}  // namespace parallax
