#include <gtest/gtest.h>

#include <filesystem>

#include "parallax/train/trainer.hpp"

using namespace parallax;

namespace {

SceneConfig micro_config() {
    SceneConfig cfg;
    cfg.height = 16;
    cfg.width = 48;
    cfg.margin = 10;
    cfg.texture_scale = 4.0;
    cfg.max_translation = 0.25;
    return cfg;
}

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(TrainConfig, DefaultsMatchReferenceHyperparameters) {
    TrainConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.learning_rate, 0.0002);
    EXPECT_DOUBLE_EQ(cfg.weights.l1, 0.85);
    EXPECT_DOUBLE_EQ(cfg.weights.ssim, 0.15);
    EXPECT_DOUBLE_EQ(cfg.weights.smooth, 0.04);
    EXPECT_DOUBLE_EQ(cfg.weights.size_constraint, 0.0005);
    EXPECT_DOUBLE_EQ(cfg.weights.l2_reg, 0.05);
    EXPECT_EQ(cfg.batch_size, 4);
    RefineConfig rcfg;
    EXPECT_EQ(rcfg.steps, 20);
    EXPECT_THROW([] { RefineConfig bad; bad.steps = 0; bad.validate(); }(), std::runtime_error);
}

TEST(Pipeline, ZeroMotionTripletHasOnlySmoothnessAndL2) {
    // identical frames + zero-init motion head: warps are exact identities,
    // so photometric terms vanish regardless of the depth estimate
    SceneConfig cfg = micro_config();
    cfg.zero_motion = true;
    SceneSample s = generate_rigid(3, cfg);
    Models m(TrainConfig::Mode::baseline, 5);
    Tape tape;
    SampleResult r = compute_sample_loss(m, s.triplet, LossWeights{}, nullptr);
    EXPECT_NEAR(r.rec, 0.0, 1e-12);
    EXPECT_NEAR(r.ssim, 0.0, 1e-12);
    const double l2 = l2_regularization(m.l2_weights()).value();
    LossWeights w;
    const double floor = w.smooth * r.smooth + w.l2_reg * l2;  // upper bound: all scales at a3
    EXPECT_LE(r.total.value(), floor + 1e-9);
    EXPECT_GT(r.total.value(), 0.0);
}

TEST(Pipeline, BaselineModeIgnoresMasksEntirely) {
    SceneConfig cfg = micro_config();
    cfg.min_objects = cfg.max_objects = 1;
    SceneSample with_masks = generate_dynamic(7, cfg);
    SceneSample stripped = with_masks;
    stripped.triplet.masks = InstanceMasks{};

    Models m(TrainConfig::Mode::baseline, 9);
    Tape t1;
    SampleResult a = compute_sample_loss(m, with_masks.triplet, LossWeights{}, nullptr);
    Tape t2;
    SampleResult b = compute_sample_loss(m, stripped.triplet, LossWeights{}, nullptr);
    EXPECT_EQ(a.total.value(), b.total.value());
    EXPECT_EQ(a.e12.values(), b.e12.values());
    EXPECT_EQ(a.depth_pyramid[0].values(), b.depth_pyramid[0].values());
}

TEST(Pipeline, MotionModeUsesMasksAndReportsCoverage) {
    SceneConfig cfg = micro_config();
    cfg.min_objects = cfg.max_objects = 2;
    SceneSample s = generate_dynamic(11, cfg);
    Models m(TrainConfig::Mode::motion, 13);
    m.priors.ensure_category(1);
    m.priors.ensure_category(2);
    Tape tape;
    SampleResult r = compute_sample_loss(m, s.triplet, LossWeights{}, &m.priors);
    EXPECT_EQ(r.motions.size(), s.objects.size());
    EXPECT_GE(r.uncovered_fraction, 0.0);
    EXPECT_LT(r.uncovered_fraction, 0.5);
    EXPECT_GT(r.size_constraint, 0.0);
    EXPECT_TRUE(std::isfinite(r.total.value()));
}

TEST(TrainStep, LossDescendsOnFrozenBatch) {
    SceneConfig cfg = micro_config();
    std::vector<SceneSample> data = {generate_rigid(21, cfg)};
    Models m(TrainConfig::Mode::baseline, 17);
    TrainConfig tc;
    tc.steps = 100;
    tc.batch_size = 1;
    tc.learning_rate = 2e-4;
    Adam opt(m.trainable_parameters(), {.lr = tc.learning_rate});
    std::vector<const FrameTriplet*> batch = {&data[0].triplet};
    double prev = std::numeric_limits<double>::infinity();
    int improved = 0;
    for (int i = 0; i < 100; ++i) {
        const StepStats s = train_step(m, batch, tc.weights, opt);
        if (s.total <= prev) ++improved;
        prev = s.total;
    }
    EXPECT_GE(improved, 80);
}

TEST(Train, StepsZeroLeavesCheckpointAtInitialization) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "parallax_train0";
    fs::create_directories(dir);
    SceneConfig cfg = micro_config();
    std::vector<SceneSample> data = {generate_rigid(31, cfg)};

    Models init(TrainConfig::Mode::baseline, 23);
    init.save((dir / "init.ckpt").string());
    Models m(TrainConfig::Mode::baseline, 23);
    TrainConfig tc;
    tc.steps = 0;
    const std::string csv = train(m, data, tc);
    m.save((dir / "after.ckpt").string());
    EXPECT_EQ(file_bytes((dir / "init.ckpt").string()), file_bytes((dir / "after.ckpt").string()));
    EXPECT_EQ(csv, "step,rec,ssim,smooth,sc,total\n");
    fs::remove_all(dir);
}

TEST(Train, EmptyDatasetRejected) {
    Models m(TrainConfig::Mode::baseline, 1);
    TrainConfig tc;
    EXPECT_THROW(train(m, {}, tc), std::runtime_error);
}

TEST(Train, DeterministicGivenSeed) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "parallax_det";
    fs::create_directories(dir);
    SceneConfig cfg = micro_config();
    std::vector<SceneSample> data;
    for (uint64_t i = 0; i < 3; ++i) data.push_back(generate_rigid(40 + i, cfg));

    auto run = [&](const std::string& name) {
        Models m(TrainConfig::Mode::baseline, 29);
        TrainConfig tc;
        tc.steps = 4;
        tc.batch_size = 2;
        tc.seed = 77;
        const std::string csv = train(m, data, tc);
        m.save((dir / name).string());
        return csv;
    };
    const std::string csv1 = run("a.ckpt");
    const std::string csv2 = run("b.ckpt");
    EXPECT_EQ(csv1, csv2);
    EXPECT_EQ(file_bytes((dir / "a.ckpt").string()), file_bytes((dir / "b.ckpt").string()));
    EXPECT_NE(csv1, "step,rec,ssim,smooth,sc,total\n");
    fs::remove_all(dir);
}

TEST(Train, MotionModeKeepsPriorsPositive) {
    SceneConfig cfg = micro_config();
    cfg.min_objects = cfg.max_objects = 1;
    std::vector<SceneSample> data = {generate_dynamic(51, cfg), generate_dynamic(60, cfg)};
    Models m(TrainConfig::Mode::motion, 31);
    TrainConfig tc;
    tc.steps = 6;
    tc.batch_size = 1;
    tc.mode = TrainConfig::Mode::motion;
    train(m, data, tc);
    ASSERT_FALSE(m.priors.p.empty());
    for (const Tensor& p : m.priors.p) EXPECT_GT(p.values()[0], 0.0);
}

TEST(Train, NonFiniteLossAbortsWithComponentDump) {
    SceneConfig cfg = micro_config();
    SceneSample s = generate_rigid(61, cfg);
    s.triplet.frames[0].mutable_values()[5] = std::numeric_limits<double>::quiet_NaN();
    Models m(TrainConfig::Mode::baseline, 37);
    Adam opt(m.trainable_parameters(), {.lr = 1e-4});
    std::vector<const FrameTriplet*> batch = {&s.triplet};
    try {
        train_step(m, batch, LossWeights{}, opt);
        FAIL() << "expected abort";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("non-finite"), std::string::npos);
        EXPECT_NE(msg.find("rec="), std::string::npos);
        EXPECT_NE(msg.find("smooth="), std::string::npos);
    }
}

TEST(Refine, ZeroLearningRateIsBitIdenticalToUnrefined) {
    SceneConfig cfg = micro_config();
    std::vector<SceneSample> seq;
    for (uint64_t i = 0; i < 2; ++i) seq.push_back(generate_rigid(70 + i, cfg));
    Models m(TrainConfig::Mode::baseline, 41);
    RefineConfig rc;
    rc.steps = 3;
    rc.learning_rate = 0.0;
    RefineOutputs out = online_refine(m, seq, rc);
    ASSERT_EQ(out.refined_depth.size(), seq.size());
    for (size_t i = 0; i < seq.size(); ++i)
        EXPECT_EQ(out.refined_depth[i].values(), out.unrefined_depth[i].values());
}

TEST(Refine, StaticWindowIsSkipped) {
    SceneConfig cfg = micro_config();
    cfg.zero_motion = true;  // identical frames: no photometric change
    std::vector<SceneSample> seq = {generate_rigid(81, cfg)};
    Models m(TrainConfig::Mode::baseline, 43);
    RefineConfig rc;
    rc.steps = 2;
    RefineOutputs out = online_refine(m, seq, rc);
    ASSERT_EQ(out.skipped_static.size(), 1u);
    EXPECT_TRUE(out.skipped_static[0]);
    EXPECT_EQ(out.refined_depth[0].values(), out.unrefined_depth[0].values());
}

TEST(Refine, MovingWindowRunsOptimization) {
    SceneConfig cfg = micro_config();
    std::vector<SceneSample> seq = {generate_rigid(91, cfg)};
    Models m(TrainConfig::Mode::baseline, 47);
    RefineConfig rc;
    rc.steps = 2;
    RefineOutputs out = online_refine(m, seq, rc);
    EXPECT_FALSE(out.skipped_static[0]);
    EXPECT_NE(out.refined_depth[0].values(), out.unrefined_depth[0].values());
}

TEST(Refine, EmptySequenceRejected) {
    Models m(TrainConfig::Mode::baseline, 1);
    EXPECT_THROW(online_refine(m, {}, RefineConfig{}), std::runtime_error);
}

TEST(Models, CloneAndCheckpointRoundTrip) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "parallax_models";
    fs::create_directories(dir);
    Models m(TrainConfig::Mode::motion, 53);
    m.priors.ensure_category(0, 1.7);
    m.priors.ensure_category(1, 0.9);
    const std::string path = (dir / "m.ckpt").string();
    m.save(path);
    Models loaded = Models::load(path);
    EXPECT_TRUE(loaded.has_object_model());
    ASSERT_EQ(loaded.priors.p.size(), 2u);
    EXPECT_DOUBLE_EQ(loaded.priors.p[0].values()[0], 1.7);
    Models cloned = loaded.clone();
    const std::string path2 = (dir / "c.ckpt").string();
    cloned.save(path2);
    EXPECT_EQ(file_bytes(path), file_bytes(path2));
    fs::remove_all(dir);
}

TEST(Models, GradientIsolationEgoGetsNoGradientFromObjectRegions) {
    // end-to-end: in motion mode, zero out every loss pixel outside the
    // object masks and verify ego-motion parameter gradients vanish
    SceneConfig cfg = micro_config();
    cfg.min_objects = cfg.max_objects = 1;
    cfg.object_size_min = 0.35;
    cfg.object_size_max = 0.45;
    SceneSample s = generate_dynamic(95, cfg);
    Models m(TrainConfig::Mode::motion, 59);
    m.priors.ensure_category(1);
    m.priors.ensure_category(2);

    const int h = cfg.height, w = cfg.width;
    Tensor o = instance_mask(s.triplet.masks.maps[1], s.objects[0].id);
    Tensor v = ego_input_mask(s.triplet.masks.maps[0], s.triplet.masks.maps[1],
                              s.triplet.masks.maps[2]);
    Tape tape;
    auto [e12, e23] = estimate_ego(s.triplet.frames[0], s.triplet.frames[1], s.triplet.frames[2],
                                   v, m.ego);
    auto depths = m.depth.forward(s.triplet.frames[1]);
    WarpResult w12 = warp(s.triplet.frames[0], depths[0], e12, s.triplet.k);
    WarpResult w32 = warp(s.triplet.frames[2], depths[0], e23, s.triplet.k, true);
    Tensor s12 = warp_nearest(s.triplet.masks.maps[0], depths[0], SE3Params::from_tensor(e12),
                              s.triplet.k);
    Tensor s32 = warp_nearest(s.triplet.masks.maps[2], depths[0], SE3Params::from_tensor(e23),
                              s.triplet.k, true);
    auto motions = estimate_object_motion(w12.image, s.triplet.frames[1], w32.image, s12,
                                          s.triplet.masks.maps[1], s32, {s.objects[0].id},
                                          *m.object);
    // make the object branch non-trivial (nonzero head weights)
    NamedTensors obj_params = m.object->named_parameters();
    for (double& x : obj_params[obj_params.size() - 2].second.mutable_values()) x = 0.05;
    CompositeWarp cw = full_warp(s.triplet.frames[0], depths[0], e12,
                                 {{motions[0].m12, o}}, v, s.triplet.k);
    Tensor loss = sum(mul(cw.composite.image, reshape(o, {1, h, w})));
    tape.backward(loss);
    for (const auto& [name, p] : m.ego.named_parameters()) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) EXPECT_DOUBLE_EQ(g, 0.0) << name;
    }
}
