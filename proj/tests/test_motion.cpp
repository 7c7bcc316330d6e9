#include <gtest/gtest.h>

#include "parallax/core/random.hpp"
#include "parallax/motion/motion.hpp"

using namespace parallax;

namespace {

Tensor index_map_with_rect(int h, int w, int id, int y0, int x0, int y1, int x1) {
    Tensor m = Tensor::zeros({h, w});
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.mutable_values()[static_cast<size_t>(y) * w + x] = id;
    return m;
}

Tensor random_image(Rng& rng, int c, int h, int w) {
    std::vector<double> v(static_cast<size_t>(c) * h * w);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    return Tensor::from({c, h, w}, std::move(v));
}

}  // namespace

TEST(MaskAlgebra, StaticMaskTrivials) {
    // no objects -> all ones
    Tensor empty = Tensor::zeros({4, 6});
    for (double v : static_mask(empty).values()) EXPECT_DOUBLE_EQ(v, 1.0);
    // one mask covering the left half -> right half ones
    Tensor half = index_map_with_rect(4, 6, 1, 0, 0, 4, 3);
    Tensor sm = static_mask(half);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x)
            EXPECT_DOUBLE_EQ(sm.at({y, x}), x < 3 ? 0.0 : 1.0);
    // two disjoint masks covering the whole frame -> all zeros
    Tensor full = index_map_with_rect(4, 6, 1, 0, 0, 4, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 3; x < 6; ++x) full.mutable_values()[static_cast<size_t>(y) * 6 + x] = 2;
    for (double v : static_mask(full).values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(MaskAlgebra, EgoInputMask) {
    // all frames object-free -> all ones
    Tensor s = Tensor::zeros({4, 4});
    for (double v : ego_input_mask(s, s, s).values()) EXPECT_DOUBLE_EQ(v, 1.0);
    // object only in frame 2 at region R -> V zero exactly on R
    Tensor s2 = index_map_with_rect(4, 4, 3, 1, 1, 3, 3);
    Tensor v = ego_input_mask(s, s2, s);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            EXPECT_DOUBLE_EQ(v.at({y, x}), (y >= 1 && y < 3 && x >= 1 && x < 3) ? 0.0 : 1.0);
}

TEST(MaskAlgebra, EgoInputMaskDefinitionalOnRandomMasks) {
    Rng rng(5);
    const int h = 6, w = 9;
    auto random_map = [&]() {
        Tensor m = Tensor::zeros({h, w});
        for (double& v : m.mutable_values()) v = rng.uniform_int(0, 2);  // ids 0..2
        return m;
    };
    Tensor s1 = random_map(), s2 = random_map(), s3 = random_map();
    Tensor v = ego_input_mask(s1, s2, s3);
    for (int i = 0; i < h * w; ++i) {
        const bool all_static = s1.values()[static_cast<size_t>(i)] == 0 &&
                                s2.values()[static_cast<size_t>(i)] == 0 &&
                                s3.values()[static_cast<size_t>(i)] == 0;
        EXPECT_DOUBLE_EQ(v.values()[static_cast<size_t>(i)], all_static ? 1.0 : 0.0);
    }
}

TEST(MaskAlgebra, InstanceIdsAndCategories) {
    InstanceMasks masks;
    masks.maps[0] = index_map_with_rect(4, 4, 2, 0, 0, 2, 2);
    masks.maps[1] = index_map_with_rect(4, 4, 1, 2, 2, 4, 4);
    masks.maps[2] = Tensor::zeros({4, 4});
    masks.categories = {{1, 3}, {2, 5}};
    EXPECT_EQ(masks.instance_ids(), (std::vector<int>{1, 2}));
    EXPECT_EQ(masks.category_of(1), 3);
    EXPECT_EQ(masks.category_of(2), 5);
    EXPECT_EQ(masks.category_of(9), 0);
}

TEST(EstimateEgo, ZeroInitHeadGivesZeroMotion) {
    Rng rng(6);
    MotionNet net(3);
    const int h = 16, w = 32;
    Tensor v = Tensor::full({h, w}, 1.0);
    auto [e12, e23] = estimate_ego(random_image(rng, 3, h, w), random_image(rng, 3, h, w),
                                   random_image(rng, 3, h, w), v, net);
    for (double x : e12.values()) EXPECT_DOUBLE_EQ(x, 0.0);
    for (double x : e23.values()) EXPECT_DOUBLE_EQ(x, 0.0);
}

TEST(EstimateEgo, MaskedRegionsDoNotInfluenceOutput) {
    Rng rng(7);
    MotionNet net(5);
    // nonzero head so outputs depend on the input
    NamedTensors params = net.named_parameters();
    Rng wr(8);
    for (double& x : params[params.size() - 2].second.mutable_values()) x = wr.uniform(-0.3, 0.3);

    const int h = 16, w = 32;
    Tensor v = Tensor::full({h, w}, 1.0);
    for (int y = 4; y < 10; ++y)
        for (int x = 6; x < 20; ++x) v.mutable_values()[static_cast<size_t>(y) * w + x] = 0.0;
    Tensor i1 = random_image(rng, 3, h, w), i2 = random_image(rng, 3, h, w),
           i3 = random_image(rng, 3, h, w);
    auto [a12, a23] = estimate_ego(i1, i2, i3, v, net);

    // perturb pixels strictly inside the masked-out region
    Tensor i2b = i2.detach();
    for (int y = 5; y < 9; ++y)
        for (int x = 8; x < 18; ++x)
            i2b.mutable_values()[(static_cast<size_t>(1) * h + y) * w + x] = 0.99;
    auto [b12, b23] = estimate_ego(i1, i2b, i3, v, net);
    EXPECT_EQ(a12.values(), b12.values());
    EXPECT_EQ(a23.values(), b23.values());
}

TEST(ObjectMotion, NoInstancesGiveEmptyResult) {
    MotionNet net(1);
    Rng rng(9);
    const int h = 16, w = 16;
    Tensor img = random_image(rng, 3, h, w);
    auto motions = estimate_object_motion(img, img, img, Tensor::zeros({h, w}),
                                          Tensor::zeros({h, w}), Tensor::zeros({h, w}), {}, net);
    EXPECT_TRUE(motions.empty());
}

TEST(ObjectMotion, AbsentInstanceDefaultsToZeroAndFlagged) {
    MotionNet net(1);
    Rng rng(10);
    const int h = 16, w = 16;
    Tensor img = random_image(rng, 3, h, w);
    Tensor s2 = index_map_with_rect(h, w, 1, 4, 4, 10, 10);
    // instance present in frame 2 but absent from both warped masks
    auto motions = estimate_object_motion(img, img, img, Tensor::zeros({h, w}), s2,
                                          Tensor::zeros({h, w}), {1}, net);
    ASSERT_EQ(motions.size(), 1u);
    EXPECT_TRUE(motions[0].defaulted_12);
    EXPECT_TRUE(motions[0].defaulted_23);
    for (double v : motions[0].m12.values()) EXPECT_DOUBLE_EQ(v, 0.0);
    // absent from the middle frame entirely
    auto m2 = estimate_object_motion(img, img, img, s2, Tensor::zeros({h, w}), s2, {1}, net);
    ASSERT_EQ(m2.size(), 1u);
    EXPECT_TRUE(m2[0].defaulted_12 && m2[0].defaulted_23);
}

TEST(FullWarp, NoObjectsReducesToEgoWarpWhereStatic) {
    Rng rng(11);
    const int h = 16, w = 24;
    Tensor img = random_image(rng, 3, h, w);
    Tensor depth = Tensor::full({h, w}, 5.0);
    Intrinsics k(20, 20, (w - 1) / 2.0, (h - 1) / 2.0);
    Tensor ego = Tensor::from({6}, {0.1, -0.05, 0.02, 0.003, -0.002, 0.001});
    Tensor v = Tensor::full({h, w}, 1.0);
    CompositeWarp cw = full_warp(img, depth, ego, {}, v, k);
    WarpResult plain = warp(img, depth, ego, k);
    EXPECT_EQ(cw.composite.image.values(), plain.image.values());
    EXPECT_EQ(cw.composite.valid.values(), plain.valid.values());
    EXPECT_DOUBLE_EQ(cw.uncovered_fraction, 0.0);
}

TEST(FullWarp, ZeroObjectMotionMatchesEgoWarpOnUnion) {
    Rng rng(12);
    const int h = 16, w = 24;
    Tensor img = random_image(rng, 3, h, w);
    Tensor depth = Tensor::full({h, w}, 5.0);
    Intrinsics k(20, 20, (w - 1) / 2.0, (h - 1) / 2.0);
    Tensor ego = Tensor::zeros({6});  // identity ego keeps comparison exact

    Tensor s2 = index_map_with_rect(h, w, 1, 4, 6, 10, 14);
    Tensor o1 = instance_mask(s2, 1);
    Tensor v = static_mask(s2);
    CompositeWarp cw = full_warp(img, depth, ego, {{Tensor::zeros({6}), o1}}, v, k);
    WarpResult plain = warp(img, depth, ego, k);
    // with identity ego and zero object motion the composite equals the ego
    // warp on V union the object mask = everywhere
    for (int i = 0; i < cw.composite.image.size(); ++i)
        EXPECT_NEAR(cw.composite.image.values()[static_cast<size_t>(i)],
                    plain.image.values()[static_cast<size_t>(i)], 1e-12);
    EXPECT_DOUBLE_EQ(cw.uncovered_fraction, 0.0);
}

TEST(FullWarp, PartitionOfCompositingWeights) {
    const int h = 12, w = 18;
    Tensor s1 = index_map_with_rect(h, w, 1, 2, 2, 6, 6);
    Tensor s2 = index_map_with_rect(h, w, 1, 2, 3, 6, 7);
    Tensor s3 = index_map_with_rect(h, w, 1, 2, 4, 6, 8);
    Tensor v = ego_input_mask(s1, s2, s3);
    Tensor o1 = instance_mask(s2, 1);
    // weights V + sum O_i are <= 1 everywhere
    for (int i = 0; i < h * w; ++i) {
        const double sum_w = v.values()[static_cast<size_t>(i)] + o1.values()[static_cast<size_t>(i)];
        EXPECT_LE(sum_w, 1.0);
    }
    // pixels in the S1-only region belong to neither term (uncovered)
    Rng rng(13);
    Tensor img = random_image(rng, 3, h, w);
    Tensor depth = Tensor::full({h, w}, 4.0);
    Intrinsics k(15, 15, (w - 1) / 2.0, (h - 1) / 2.0);
    CompositeWarp cw = full_warp(img, depth, Tensor::zeros({6}), {{Tensor::zeros({6}), o1}}, v, k);
    EXPECT_GT(cw.uncovered_fraction, 0.0);
    // when masks tile the frame (single-frame masks only), equality holds
    Tensor v_single = static_mask(s2);
    for (int i = 0; i < h * w; ++i)
        EXPECT_DOUBLE_EQ(v_single.values()[static_cast<size_t>(i)] + o1.values()[static_cast<size_t>(i)], 1.0);
}

TEST(FullWarp, ObjectBranchPerturbationStaysInsideObjectRegions) {
    Rng rng(14);
    const int h = 16, w = 24;
    Tensor img = random_image(rng, 3, h, w);
    std::vector<double> dv(static_cast<size_t>(h) * w);
    for (double& d : dv) d = rng.uniform(3.0, 8.0);
    Tensor depth = Tensor::from({h, w}, dv);
    Intrinsics k(20, 20, (w - 1) / 2.0, (h - 1) / 2.0);
    Tensor ego = Tensor::from({6}, {0.06, 0.02, -0.04, 0.002, 0.001, -0.002});
    Tensor s2 = index_map_with_rect(h, w, 1, 5, 8, 11, 16);
    Tensor o1 = instance_mask(s2, 1);
    Tensor v = static_mask(s2);

    Tensor m_a = Tensor::from({6}, {0.02, 0.0, 0.0, 0.0, 0.0, 0.0});
    Tensor m_b = Tensor::from({6}, {-0.05, 0.03, 0.01, 0.004, -0.003, 0.002});
    CompositeWarp a = full_warp(img, depth, ego, {{m_a, o1}}, v, k);
    CompositeWarp b = full_warp(img, depth, ego, {{m_b, o1}}, v, k);
    double max_outside = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h * w; ++i) {
            if (o1.values()[static_cast<size_t>(i)] > 0.5) continue;
            const size_t idx = static_cast<size_t>(c) * h * w + static_cast<size_t>(i);
            max_outside = std::max(max_outside, std::abs(a.composite.image.values()[idx] -
                                                         b.composite.image.values()[idx]));
        }
    EXPECT_DOUBLE_EQ(max_outside, 0.0);
}

TEST(FullWarp, EgoParametersGetNoGradientFromObjectPixels) {
    Rng rng(15);
    const int h = 16, w = 24;
    Tensor img = random_image(rng, 3, h, w);
    Tensor depth = Tensor::full({h, w}, 5.0).set_requires_grad();
    Intrinsics k(20, 20, (w - 1) / 2.0, (h - 1) / 2.0);
    Tensor ego = Tensor::from({6}, {0.05, -0.02, 0.01, 0.001, 0.002, -0.001}).set_requires_grad();
    Tensor obj_motion = Tensor::from({6}, {0.03, 0.01, 0.0, 0.0, 0.0, 0.0}).set_requires_grad();
    Tensor s2 = index_map_with_rect(h, w, 1, 5, 8, 11, 16);
    Tensor o1 = instance_mask(s2, 1);
    Tensor v = static_mask(s2);

    Tape tape;
    CompositeWarp cw = full_warp(img, depth, ego, {{obj_motion, o1}}, v, k);
    // loss restricted to object pixels only
    Tensor loss = sum(mul(cw.composite.image, reshape(o1, {1, h, w})));
    tape.backward(loss);
    ASSERT_TRUE(ego.has_grad());
    for (double g : ego.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
    // while the object motion and depth do receive gradient there
    ASSERT_TRUE(obj_motion.has_grad());
    double obj_sum = 0.0, depth_sum = 0.0;
    for (double g : obj_motion.grad()) obj_sum += std::abs(g);
    for (double g : depth.grad()) depth_sum += std::abs(g);
    EXPECT_GT(obj_sum, 0.0);
    EXPECT_GT(depth_sum, 0.0);
}

TEST(ObjectMotionVectors, IdentityGivesZero) {
    Tensor depth = Tensor::full({8, 8}, 4.0);
    Tensor mask = instance_mask(index_map_with_rect(8, 8, 1, 2, 2, 6, 6), 1);
    Intrinsics k(8, 8, 3.5, 3.5);
    MotionVector mv = object_motion_vector(SE3Params::zero(), depth, mask, k);
    for (double c : mv.mean_displacement) EXPECT_DOUBLE_EQ(c, 0.0);
    for (double c : mv.direction) EXPECT_DOUBLE_EQ(c, 0.0);
}

TEST(ObjectMotionVectors, PureTranslationReportedExactly) {
    Tensor depth = Tensor::full({8, 8}, 4.0);
    Tensor mask = instance_mask(index_map_with_rect(8, 8, 1, 1, 1, 7, 7), 1);
    Intrinsics k(8, 8, 3.5, 3.5);
    MotionVector mv = object_motion_vector(SE3Params::translation(0.5, 0, 0), depth, mask, k);
    EXPECT_NEAR(mv.mean_displacement[0], 0.5, 1e-12);
    EXPECT_NEAR(mv.mean_displacement[1], 0.0, 1e-12);
    EXPECT_NEAR(mv.mean_displacement[2], 0.0, 1e-12);
    EXPECT_NEAR(mv.direction[0], 1.0, 1e-12);
}

TEST(ObjectMotionVectors, RotationAboutCentroidNearlyCancels) {
    // rotation about the region centroid: mean displacement ~ 0 by symmetry
    const int h = 17, w = 17;
    Tensor depth = Tensor::full({h, w}, 6.0);
    Tensor mask = instance_mask(index_map_with_rect(h, w, 1, 4, 4, 13, 13), 1);
    Intrinsics k(10, 10, (w - 1) / 2.0, (h - 1) / 2.0);
    // centroid of the masked points in 3D
    double cx = 0, cy = 0, cz = 0, n = 0;
    for (int y = 4; y < 13; ++y)
        for (int x = 4; x < 13; ++x) {
            cx += (x - k.cx) / k.fx * 6.0;
            cy += (y - k.cy) / k.fy * 6.0;
            cz += 6.0;
            n += 1;
        }
    cx /= n;
    cy /= n;
    cz /= n;
    SE3Params rot;
    rot.v[5] = 0.3;  // rotation about z
    Pose4x4 about_centroid = compose(
        compose(se3_to_matrix(SE3Params::translation(cx, cy, cz)), se3_to_matrix(rot)),
        se3_to_matrix(SE3Params::translation(-cx, -cy, -cz)));
    MotionVector mv = object_motion_vector(matrix_to_se3(about_centroid), depth, mask, k);
    for (double c : mv.mean_displacement) EXPECT_NEAR(c, 0.0, 1e-9);
}

TEST(ObjectMotionVectors, EmptyMaskRejected) {
    Tensor depth = Tensor::full({4, 4}, 4.0);
    Intrinsics k(4, 4, 1.5, 1.5);
    EXPECT_THROW(object_motion_vector(SE3Params::zero(), depth, Tensor::zeros({4, 4}), k),
                 std::runtime_error);
}
