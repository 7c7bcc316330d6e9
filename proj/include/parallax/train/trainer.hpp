#pragma once

#include <functional>
#include <optional>

#include "parallax/net/checkpoint.hpp"
#include "parallax/synth/scenes.hpp"

namespace parallax {

struct TrainConfig {
    enum class Mode { baseline, motion };

    double learning_rate = 0.0002;
    LossWeights weights;  // 0.85 / 0.15 / 0.04 / 0.0005, l2 0.05
    int batch_size = 4;
    int steps = 1000;
    uint64_t seed = 1;
    Mode mode = Mode::baseline;

    void validate() const {
        check(learning_rate >= 0, "TrainConfig: negative learning rate");
        check(batch_size >= 1 && steps >= 0, "TrainConfig: bad batch size or step count");
        weights.validate();
    }
};

struct RefineConfig {
    int steps = 20;  // N optimization steps per window
    double learning_rate = 0.0002;
    LossWeights weights;
    double static_skip_threshold = 2e-3;  // mean inter-frame photometric diff
    bool flip_augmentation = true;

    void validate() const {
        check(steps >= 1, "RefineConfig: N must be >= 1");
        check(learning_rate >= 0, "RefineConfig: negative learning rate");
    }
};

// The trainable state: depth network, ego-motion network, and in motion mode
// the object-motion network plus the per-category height priors.
class Models {
public:
    Models(TrainConfig::Mode mode, uint64_t seed)
        : mode_(mode), depth(seed * 4 + 1), ego(seed * 4 + 2) {
        ego.set_name("ego");
        if (mode == TrainConfig::Mode::motion) {
            object.emplace(seed * 4 + 3);
            object->set_name("objmotion");
        }
    }

    TrainConfig::Mode mode() const { return mode_; }
    bool has_object_model() const { return object.has_value(); }

    NamedTensors named_parameters() const {
        NamedTensors out = depth.named_parameters();
        for (auto& p : ego.named_parameters()) out.push_back(p);
        if (object)
            for (auto& p : object->named_parameters()) out.push_back(p);
        for (size_t i = 0; i < priors.p.size(); ++i)
            out.emplace_back("priors.cat" + std::to_string(i), priors.p[i]);
        return out;
    }

    std::vector<Tensor> trainable_parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    std::vector<Tensor> l2_weights() const {
        std::vector<Tensor> out = depth.weight_tensors();
        for (auto& t : ego.weight_tensors()) out.push_back(t);
        if (object)
            for (auto& t : object->weight_tensors()) out.push_back(t);
        return out;
    }

    void save(const std::string& path) const { save_checkpoint(path, named_parameters()); }

    static Models load(const std::string& path) {
        NamedTensors loaded = load_checkpoint(path);
        const bool motion = checkpoint_has_tensor(loaded, "objmotion.enc1.w");
        Models m(motion ? TrainConfig::Mode::motion : TrainConfig::Mode::baseline, 0);
        for (int c = 0;; ++c) {
            if (!checkpoint_has_tensor(loaded, "priors.cat" + std::to_string(c))) break;
            m.priors.ensure_category(c);
        }
        apply_checkpoint(loaded, m.named_parameters());
        return m;
    }

    // Deep copy of all parameter values into a fresh model of the same shape.
    Models clone() const {
        Models m(mode_, 0);
        for (size_t i = 0; i < priors.p.size(); ++i) m.priors.ensure_category(static_cast<int>(i));
        NamedTensors src = named_parameters();
        NamedTensors dst = m.named_parameters();
        check(src.size() == dst.size(), "Models::clone: parameter registry mismatch");
        for (size_t i = 0; i < src.size(); ++i)
            dst[i].second.mutable_values() = src[i].second.values();
        return m;
    }

    TrainConfig::Mode mode_;
    DepthNet depth;
    MotionNet ego;
    std::optional<MotionNet> object;
    HeightPriors priors;
};

// ---------------------------------------------------------------------------
// Pyramids
// ---------------------------------------------------------------------------

namespace detail {

inline std::array<Tensor, 4> image_pyramid(const Tensor& img) {
    std::array<Tensor, 4> out;
    out[0] = img;
    for (int i = 1; i < 4; ++i) out[static_cast<size_t>(i)] = avg_pool2(out[static_cast<size_t>(i) - 1]);
    return out;
}

// Stride-2 decimation keeps index maps integer-valued and disjoint.
inline Tensor decimate2(const Tensor& map) {
    const int h = map.shape()[0], w = map.shape()[1];
    std::vector<double> v(static_cast<size_t>(h / 2) * (w / 2));
    for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x)
            v[static_cast<size_t>(y) * (w / 2) + x] = map.values()[static_cast<size_t>(2 * y) * w + 2 * x];
    return Tensor::from({h / 2, w / 2}, std::move(v));
}

inline std::array<Tensor, 4> map_pyramid(const Tensor& map) {
    std::array<Tensor, 4> out;
    out[0] = map;
    for (int i = 1; i < 4; ++i) out[static_cast<size_t>(i)] = decimate2(out[static_cast<size_t>(i) - 1]);
    return out;
}

inline std::array<Intrinsics, 4> intrinsics_pyramid(const Intrinsics& k) {
    std::array<Intrinsics, 4> out;
    out[0] = k;
    for (int i = 1; i < 4; ++i) out[static_cast<size_t>(i)] = out[static_cast<size_t>(i) - 1].scaled_down();
    return out;
}

inline Tensor flip_image(const Tensor& img) {
    const int c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    std::vector<double> v(img.values().size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                v[(static_cast<size_t>(ch) * h + y) * w + x] =
                    img.values()[(static_cast<size_t>(ch) * h + y) * w + (w - 1 - x)];
    return Tensor::from(img.shape(), std::move(v));
}

inline Tensor flip_map(const Tensor& map) {
    const int h = map.shape()[0], w = map.shape()[1];
    std::vector<double> v(map.values().size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            v[static_cast<size_t>(y) * w + x] = map.values()[static_cast<size_t>(y) * w + (w - 1 - x)];
    return Tensor::from(map.shape(), std::move(v));
}

}  // namespace detail

inline FrameTriplet flip_triplet(const FrameTriplet& t) {
    FrameTriplet out;
    for (int f = 0; f < 3; ++f) {
        out.frames[static_cast<size_t>(f)] = detail::flip_image(t.frames[static_cast<size_t>(f)]);
        if (t.has_masks())
            out.masks.maps[static_cast<size_t>(f)] = detail::flip_map(t.masks.maps[static_cast<size_t>(f)]);
    }
    out.masks.categories = t.masks.categories;
    out.k = t.k.flipped_horizontal(t.width());
    return out;
}

// ---------------------------------------------------------------------------
// Forward pipeline and per-sample loss
// ---------------------------------------------------------------------------

struct SampleResult {
    Tensor total;  // scalar loss (undefined when losses were not requested)
    std::array<Tensor, 4> depth_pyramid;
    Tensor e12, e23;
    std::vector<ObjectMotion> motions;
    double rec = 0, ssim = 0, smooth = 0, size_constraint = 0;  // unweighted sums over scales
    double uncovered_fraction = 0;  // full-scale composite, motion mode
    int skipped_empty_masks = 0;
};

// Runs the full forward pass and builds the training loss. Pipeline order:
// masks -> ego-motion -> ego warps -> object motions -> composite warps ->
// losses. Baseline mode never reads the masks.
inline SampleResult compute_sample_loss(const Models& m, const FrameTriplet& t,
                                        const LossWeights& weights, HeightPriors* priors) {
    const bool motion_mode = m.has_object_model();
    const auto i1p = detail::image_pyramid(t.frames[0]);
    const auto i2p = detail::image_pyramid(t.frames[1]);
    const auto i3p = detail::image_pyramid(t.frames[2]);
    const auto kp = detail::intrinsics_pyramid(t.k);
    const int h = t.height(), w = t.width();

    SampleResult res;
    res.depth_pyramid = m.depth.forward(t.frames[1]);

    const bool use_masks = motion_mode && t.has_masks();
    Tensor v_full = use_masks
                        ? ego_input_mask(t.masks.maps[0], t.masks.maps[1], t.masks.maps[2])
                        : Tensor::full({h, w}, 1.0);
    std::tie(res.e12, res.e23) = estimate_ego(t.frames[0], t.frames[1], t.frames[2], v_full, m.ego);

    // object motions, estimated once at full scale on the ego-compensated triplet
    std::vector<int> ids;
    std::array<Tensor, 4> v_pyr, s2_pyr;
    if (use_masks) {
        ids = t.masks.instance_ids();
        v_pyr = detail::map_pyramid(v_full);
        s2_pyr = detail::map_pyramid(t.masks.maps[1]);
        if (!ids.empty()) {
            WarpResult w12 = warp(t.frames[0], res.depth_pyramid[0], res.e12, t.k);
            WarpResult w32 = warp(t.frames[2], res.depth_pyramid[0], res.e23, t.k, true);
            const SE3Params e12v = SE3Params::from_tensor(res.e12);
            const SE3Params e23v = SE3Params::from_tensor(res.e23);
            Tensor s12 = warp_nearest(t.masks.maps[0], res.depth_pyramid[0], e12v, t.k);
            Tensor s32 = warp_nearest(t.masks.maps[2], res.depth_pyramid[0], e23v, t.k, true);
            res.motions = estimate_object_motion(w12.image, t.frames[1], w32.image, s12,
                                                 t.masks.maps[1], s32, ids, *m.object);
        }
    }

    std::vector<ScaleComponents> scales(4);
    for (int i = 0; i < 4; ++i) {
        const Tensor& d2 = res.depth_pyramid[static_cast<size_t>(i)];
        WarpResult wp, wn;
        if (use_masks && !ids.empty()) {
            std::vector<std::pair<Tensor, Tensor>> mm12, mm23;
            for (const ObjectMotion& om : res.motions) {
                Tensor o = instance_mask(s2_pyr[static_cast<size_t>(i)], om.instance);
                mm12.emplace_back(om.m12, o);
                mm23.emplace_back(om.m23, o);
            }
            CompositeWarp c12 = full_warp(i1p[static_cast<size_t>(i)], d2, res.e12, mm12,
                                          v_pyr[static_cast<size_t>(i)], kp[static_cast<size_t>(i)]);
            CompositeWarp c32 = full_warp(i3p[static_cast<size_t>(i)], d2, res.e23, mm23,
                                          v_pyr[static_cast<size_t>(i)], kp[static_cast<size_t>(i)], true);
            wp = c12.composite;
            wn = c32.composite;
            if (i == 0) res.uncovered_fraction = c12.uncovered_fraction;
        } else {
            wp = warp(i1p[static_cast<size_t>(i)], d2, res.e12, kp[static_cast<size_t>(i)]);
            wn = warp(i3p[static_cast<size_t>(i)], d2, res.e23, kp[static_cast<size_t>(i)], true);
        }
        scales[static_cast<size_t>(i)].rec = reconstruction_loss(wp, wn, i2p[static_cast<size_t>(i)]);
        scales[static_cast<size_t>(i)].ssim = ssim_min_loss(wp, wn, i2p[static_cast<size_t>(i)]);
        scales[static_cast<size_t>(i)].smooth = smoothness_loss(d2, i2p[static_cast<size_t>(i)]);
        res.rec += scales[static_cast<size_t>(i)].rec.value();
        res.ssim += scales[static_cast<size_t>(i)].ssim.value();
        res.smooth += scales[static_cast<size_t>(i)].smooth.value();
    }

    Tensor sc;
    if (use_masks && priors && !ids.empty()) {
        std::vector<ObjectMask> objs;
        for (int id : ids) {
            ObjectMask om;
            om.mask = instance_mask(t.masks.maps[1], id);
            om.category = t.masks.category_of(id);
            objs.push_back(om);
        }
        sc = size_constraint_loss(res.depth_pyramid[0], objs, *priors, t.k,
                                  &res.skipped_empty_masks);
        res.size_constraint = sc.value();
    }

    Tensor l2 = l2_regularization(m.l2_weights());
    res.total = total_loss(scales, weights, sc, l2);
    return res;
}

// Inference-only depth prediction (no tape, full resolution).
inline Tensor predict_depth(const Models& m, const Tensor& image) {
    return m.depth.forward(image)[0];
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_number(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace detail

struct StepStats {
    double total = 0, rec = 0, ssim = 0, smooth = 0, size_constraint = 0;
};

// One optimizer step over a batch: per-sample tapes run sequentially and the
// gradients accumulate additively before the shared Adam update. A non-finite
// loss aborts with the component values in the message.
inline StepStats train_step(Models& m, const std::vector<const FrameTriplet*>& batch,
                            const LossWeights& weights, Adam& opt) {
    check(!batch.empty(), "train_step: empty batch");
    StepStats stats;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const FrameTriplet* t : batch) {
        Tape tape;
        SampleResult r = compute_sample_loss(m, *t, weights, &m.priors);
        const double total = r.total.value();
        if (!std::isfinite(total))
            fail("train_step: non-finite loss (rec=" + std::to_string(r.rec) +
                 " ssim=" + std::to_string(r.ssim) + " smooth=" + std::to_string(r.smooth) +
                 " sc=" + std::to_string(r.size_constraint) + ")");
        stats.total += total * inv_b;
        stats.rec += r.rec * inv_b;
        stats.ssim += r.ssim * inv_b;
        stats.smooth += r.smooth * inv_b;
        stats.size_constraint += r.size_constraint * inv_b;
        tape.backward(r.total * inv_b);
    }
    // parameters the batch never touched (e.g. the object branch on a batch
    // without instances) have a zero gradient by definition
    for (const Tensor& p : opt.params())
        if (!p.has_grad()) detail::grad_buf(*p.node());
    opt.step();
    m.priors.project_positive();
    return stats;
}

// Full training run. Deterministic in (models seed, config, dataset): batch
// sampling uses its own seeded stream. Returns the per-step loss-curve CSV
// (step, L_rec, L_ssim, L_sm, L_sc, total).
inline std::string train(Models& m, const std::vector<SceneSample>& dataset,
                         const TrainConfig& cfg,
                         const std::function<void(int, const StepStats&)>& on_step = {}) {
    cfg.validate();
    check(!dataset.empty(), "train: empty dataset");

    if (m.has_object_model())
        for (const SceneSample& s : dataset)
            for (const auto& [id, cat] : s.triplet.masks.categories) m.priors.ensure_category(cat);

    Adam opt(m.trainable_parameters(), {.lr = cfg.learning_rate});
    Rng batch_rng(cfg.seed ^ 0x5eedbeefULL);

    std::ostringstream csv;
    csv << "step,rec,ssim,smooth,sc,total\n";
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const FrameTriplet*> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int idx = batch_rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
            batch.push_back(&dataset[static_cast<size_t>(idx)].triplet);
        }
        const StepStats s = train_step(m, batch, cfg.weights, opt);
        csv << step << ',' << detail::csv_number(s.rec) << ',' << detail::csv_number(s.ssim)
            << ',' << detail::csv_number(s.smooth) << ',' << detail::csv_number(s.size_constraint)
            << ',' << detail::csv_number(s.total) << '\n';
        if (on_step) on_step(step, s);
    }
    return csv.str();
}

// ---------------------------------------------------------------------------
// Online refinement
// ---------------------------------------------------------------------------

struct RefineOutputs {
    std::vector<Tensor> refined_depth;    // middle-frame depth after N steps per window
    std::vector<Tensor> unrefined_depth;  // pristine-checkpoint predictions
    std::vector<bool> skipped_static;     // windows skipped by the static-state guard
};

// Keeps optimizing on each sliding window at inference time. Weights persist
// across consecutive windows within the sequence (fresh Adam state at the
// start); windows with almost no inter-frame photometric change are skipped.
// Each step trains on the window and its horizontal mirror.
inline RefineOutputs online_refine(const Models& checkpoint, const std::vector<SceneSample>& sequence,
                                   const RefineConfig& cfg) {
    cfg.validate();
    check(!sequence.empty(), "online_refine: sequence must contain at least one 3-frame window");

    RefineOutputs out;
    for (const SceneSample& s : sequence)
        out.unrefined_depth.push_back(predict_depth(checkpoint, s.triplet.frames[1]));

    Models working = checkpoint.clone();
    if (working.has_object_model())
        for (const SceneSample& s : sequence)
            for (const auto& [id, cat] : s.triplet.masks.categories)
                working.priors.ensure_category(cat);
    Adam opt(working.trainable_parameters(), {.lr = cfg.learning_rate});

    for (const SceneSample& s : sequence) {
        const FrameTriplet& t = s.triplet;
        const double d12 = mean(abs(sub(t.frames[1], t.frames[0]))).value();
        const double d23 = mean(abs(sub(t.frames[2], t.frames[1]))).value();
        const bool is_static = std::max(d12, d23) < cfg.static_skip_threshold;
        out.skipped_static.push_back(is_static);
        if (!is_static) {
            std::vector<FrameTriplet> window = {t};
            if (cfg.flip_augmentation) window.push_back(flip_triplet(t));
            std::vector<const FrameTriplet*> batch;
            for (const FrameTriplet& wt : window) batch.push_back(&wt);
            for (int n = 0; n < cfg.steps; ++n) train_step(working, batch, cfg.weights, opt);
        }
        out.refined_depth.push_back(predict_depth(working, t.frames[1]));
    }
    return out;
}

}  // namespace parallax
