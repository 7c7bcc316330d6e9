#pragma once

#include "parallax/motion/motion.hpp"

namespace parallax {

// A triplet as consumed by training: three RGB frames, intrinsics and
// (optionally) instance masks.
struct FrameTriplet {
    std::array<Tensor, 3> frames;  // (3,H,W), values in [0,1]
    InstanceMasks masks;           // maps undefined when no masks were provided
    Intrinsics k;

    int height() const { return frames[0].shape()[1]; }
    int width() const { return frames[0].shape()[2]; }
    bool has_masks() const { return !masks.empty(); }
};

// Ground truth of one synthetic object. The motion transforms follow the
// warp's source-read convention (they move middle-frame points to where the
// object surface was in the other frame), so for world velocity v the
// transform is a translation by -v.
struct ObjectGT {
    int id = 0;
    int category = 0;
    double depth = 0;                       // canonical depth of the object plane
    std::array<double, 3> velocity{0, 0, 0};  // world units per frame step
    SE3Params m12, m23;
    bool zero_apparent_motion = false;  // moves with the camera
};

// A synthetic triplet with exact ground truth.
struct SceneSample {
    FrameTriplet triplet;
    std::array<Tensor, 3> gt_depth;  // (H,W)
    SE3Params gt_ego12, gt_ego23;
    std::vector<ObjectGT> objects;
    uint64_t seed = 0;
};

struct SceneConfig {
    int height = 128;
    int width = 416;
    double focal_factor = 0.9;  // fx = fy = factor * width

    // background planes
    int min_planes = 2, max_planes = 4;
    double depth_min = 8.0, depth_max = 30.0;

    // camera motion per frame step
    double max_translation = 0.35;
    double max_rotation = 0.006;  // radians
    bool zero_motion = false;

    // texture
    double texture_contrast = 0.6;  // peak-to-peak target, must be >= 0.3
    double texture_scale = 7.0;     // feature size in pixels
    int margin = 24;                // canvas extension beyond the frame

    // objects (generate_dynamic)
    int min_objects = 1, max_objects = 3;
    double object_depth_min = 3.5, object_depth_max = 6.5;
    double object_size_min = 0.28, object_size_max = 0.42;  // fraction of frame height
    double max_object_speed = 0.12;  // world units per step
    int categories = 2;
    bool degenerate_preset = false;  // all objects move exactly with the camera

    Intrinsics intrinsics() const {
        const double f = focal_factor * width;
        return Intrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0);
    }

    void validate() const {
        check(height % 8 == 0 && width % 8 == 0, "SceneConfig: resolution must be divisible by 8");
        check(texture_contrast >= 0.3, "SceneConfig: texture contrast below 0.3 makes depth unobservable");
        check(depth_min >= 1.0 && depth_max <= 50.0 && depth_min < depth_max,
              "SceneConfig: depth range must lie within [1,50]");
        check(max_translation >= 0 && max_rotation >= 0, "SceneConfig: negative motion bounds");
    }
};

namespace detail {

inline double bilinear_plane(const double* p, int h, int w, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(x), w - 2 < 0 ? 0 : w - 2);
    const int y0 = std::min(static_cast<int>(y), h - 2 < 0 ? 0 : h - 2);
    const double fx = x - x0, fy = y - y0;
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    return (1 - fy) * ((1 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1]) +
           fy * ((1 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1]);
}

// Band-limited random texture: a sum of random-phase sinusoids rescaled to
// the exact requested peak-to-peak contrast around 0.5 per channel.
inline std::vector<double> make_texture(Rng& rng, int h, int w, double scale, double contrast) {
    std::vector<double> tex(static_cast<size_t>(3) * h * w, 0.0);
    const double kbase = 2.0 * M_PI / scale;
    for (int c = 0; c < 3; ++c) {
        double* plane = tex.data() + static_cast<size_t>(c) * h * w;
        for (int wave = 0; wave < 6; ++wave) {
            const double k = kbase * rng.uniform(0.35, 1.0);
            const double theta = rng.uniform(0, 2 * M_PI);
            const double kx = k * std::cos(theta), ky = k * std::sin(theta);
            const double phase = rng.uniform(0, 2 * M_PI);
            const double amp = rng.uniform(0.5, 1.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    plane[y * w + x] += amp * std::sin(kx * x + ky * y + phase);
        }
        double lo = plane[0], hi = plane[0];
        for (int i = 0; i < h * w; ++i) {
            lo = std::min(lo, plane[i]);
            hi = std::max(hi, plane[i]);
        }
        const double span = hi - lo < 1e-9 ? 1.0 : hi - lo;
        for (int i = 0; i < h * w; ++i)
            plane[i] = 0.5 + contrast * ((plane[i] - lo) / span - 0.5);
    }
    return tex;
}

struct PlaneSurface {
    double z;
    double u0, u1;  // canonical canvas x-range (overlapping neighbours)
    std::vector<double> texture;  // (3, ch, cw) canvas-sized
};

struct ObjectSurface {
    int id;
    int category;
    double z;
    double rx0, ry0, rx1, ry1;  // canonical frame-pixel rectangle
    std::array<double, 3> vel;
    std::vector<double> texture;  // (3, th, tw)
    int th, tw;
};

struct SceneGeometry {
    std::vector<PlaneSurface> planes;
    std::vector<ObjectSurface> objects;
    Intrinsics k;
    int h, w, margin, ch, cw;
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int object_id = 0;  // 0 = background
    double rgb[3] = {0, 0, 0};
};

// Casts the ray of pixel (x,y) in a camera with pose cam_to_world and returns
// the nearest surface hit. Frame offset shifts the moving objects.
inline Hit cast_ray(const SceneGeometry& g, const Pose4x4& cam_to_world, int frame_offset,
                    double x, double y) {
    const double dx = (x - g.k.cx) / g.k.fx;
    const double dy = (y - g.k.cy) / g.k.fy;
    const std::array<double, 3> origin = {cam_to_world.at(0, 3), cam_to_world.at(1, 3),
                                          cam_to_world.at(2, 3)};
    std::array<double, 3> dir;
    for (int r = 0; r < 3; ++r)
        dir[static_cast<size_t>(r)] = cam_to_world.at(r, 0) * dx + cam_to_world.at(r, 1) * dy +
                                      cam_to_world.at(r, 2);

    Hit best;
    const double cxc = g.k.cx + g.margin, cyc = g.k.cy + g.margin;

    for (const ObjectSurface& obj : g.objects) {
        const double off_x = frame_offset * obj.vel[0];
        const double off_y = frame_offset * obj.vel[1];
        const double off_z = frame_offset * obj.vel[2];
        const double zp = obj.z + off_z;
        if (std::abs(dir[2]) < 1e-12) continue;
        const double t = (zp - origin[2]) / dir[2];
        if (t <= 0.1 || t >= best.t) continue;
        const double px = origin[0] + t * dir[0] - off_x;
        const double py = origin[1] + t * dir[1] - off_y;
        const double u = g.k.fx * px / obj.z + g.k.cx;
        const double v = g.k.fy * py / obj.z + g.k.cy;
        if (u < obj.rx0 || u > obj.rx1 || v < obj.ry0 || v > obj.ry1) continue;
        Hit hit;
        hit.t = t;
        hit.object_id = obj.id;
        for (int c = 0; c < 3; ++c)
            hit.rgb[c] = bilinear_plane(obj.texture.data() + static_cast<size_t>(c) * obj.th * obj.tw,
                                        obj.th, obj.tw, u - obj.rx0, v - obj.ry0);
        best = hit;
    }

    for (const PlaneSurface& pl : g.planes) {
        if (std::abs(dir[2]) < 1e-12) continue;
        const double t = (pl.z - origin[2]) / dir[2];
        if (t <= 0.1 || t >= best.t) continue;
        const double px = origin[0] + t * dir[0];
        const double py = origin[1] + t * dir[1];
        const double u = g.k.fx * px / pl.z + cxc;
        const double v = g.k.fy * py / pl.z + cyc;
        if (u < pl.u0 || u > pl.u1 || v < -0.49 || v > g.ch - 0.51) continue;
        Hit hit;
        hit.t = t;
        hit.object_id = 0;
        for (int c = 0; c < 3; ++c)
            hit.rgb[c] = bilinear_plane(pl.texture.data() + static_cast<size_t>(c) * g.ch * g.cw,
                                        g.ch, g.cw, u, v);
        best = hit;
    }
    return best;
}

inline SceneSample render_scene(const SceneGeometry& g, const SE3Params& step,
                                const std::vector<ObjectSurface>& objects, uint64_t seed,
                                const SceneConfig& cfg) {
    SceneSample s;
    s.seed = seed;
    s.triplet.k = g.k;
    const Pose4x4 g_step = se3_to_matrix(step);
    // camera poses: middle frame is the canonical/world frame
    const std::array<Pose4x4, 3> poses = {invert(g_step), Pose4x4::identity(), g_step};
    s.gt_ego12 = step;  // E_(1->2) = W1^-1 * W2 = step
    s.gt_ego23 = step;

    const int h = g.h, w = g.w;
    for (int f = 0; f < 3; ++f) {
        std::vector<double> img(static_cast<size_t>(3) * h * w, 0.0);
        std::vector<double> dep(static_cast<size_t>(h) * w, cfg.depth_max);
        std::vector<double> msk(static_cast<size_t>(h) * w, 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Hit hit = cast_ray(g, poses[static_cast<size_t>(f)], f - 1, x, y);
                const size_t p = static_cast<size_t>(y) * w + x;
                if (std::isfinite(hit.t)) {
                    dep[p] = hit.t;
                    msk[p] = hit.object_id;
                    for (int c = 0; c < 3; ++c)
                        img[static_cast<size_t>(c) * h * w + p] = std::clamp(hit.rgb[c], 0.0, 1.0);
                }
            }
        s.triplet.frames[static_cast<size_t>(f)] = Tensor::from({3, h, w}, std::move(img));
        s.gt_depth[static_cast<size_t>(f)] = Tensor::from({h, w}, std::move(dep));
        if (!objects.empty())
            s.triplet.masks.maps[static_cast<size_t>(f)] = Tensor::from({h, w}, std::move(msk));
    }
    for (const ObjectSurface& obj : objects) {
        ObjectGT gt;
        gt.id = obj.id;
        gt.category = obj.category;
        gt.depth = obj.z;
        gt.velocity = obj.vel;
        gt.m12 = SE3Params::translation(-obj.vel[0], -obj.vel[1], -obj.vel[2]);
        gt.m23 = gt.m12;
        const double dvx = obj.vel[0] - step.tx();
        const double dvy = obj.vel[1] - step.ty();
        const double dvz = obj.vel[2] - step.tz();
        gt.zero_apparent_motion = std::sqrt(dvx * dvx + dvy * dvy + dvz * dvz) < 1e-9 &&
                                  std::abs(step.rx()) < 1e-12 && std::abs(step.ry()) < 1e-12 &&
                                  std::abs(step.rz()) < 1e-12;
        s.objects.push_back(gt);
        s.triplet.masks.categories[obj.id] = obj.category;
    }
    return s;
}

inline SE3Params random_step(Rng& rng, const SceneConfig& cfg) {
    SE3Params step;
    if (cfg.zero_motion) return step;
    for (int i = 0; i < 3; ++i)
        step.v[static_cast<size_t>(i)] = rng.uniform(-cfg.max_translation, cfg.max_translation);
    for (int i = 3; i < 6; ++i)
        step.v[static_cast<size_t>(i)] = rng.uniform(-cfg.max_rotation, cfg.max_rotation);
    return step;
}

inline std::vector<PlaneSurface> random_planes(Rng& rng, const SceneConfig& cfg, int ch, int cw) {
    const int n = rng.uniform_int(cfg.min_planes, cfg.max_planes);
    // vertical bands over the canvas, extended by the margin on both sides so
    // small viewpoint changes cannot see past a band edge into a hole
    std::vector<double> bounds = {0.0};
    for (int i = 1; i < n; ++i)
        bounds.push_back(cw * (static_cast<double>(i) / n + rng.uniform(-0.4, 0.4) / n));
    bounds.push_back(static_cast<double>(cw));
    std::sort(bounds.begin(), bounds.end());
    std::vector<PlaneSurface> planes;
    for (int i = 0; i < n; ++i) {
        PlaneSurface pl;
        pl.z = rng.uniform(cfg.depth_min, cfg.depth_max);
        pl.u0 = bounds[static_cast<size_t>(i)] - cfg.margin;
        pl.u1 = bounds[static_cast<size_t>(i) + 1] + cfg.margin;
        pl.texture = make_texture(rng, ch, cw, cfg.texture_scale, cfg.texture_contrast);
        planes.push_back(std::move(pl));
    }
    return planes;
}

}  // namespace detail

// Static piecewise-planar scene: 2-4 fronto-parallel textured depth bands,
// camera moved by one random small SE3 per frame step. Deterministic in
// (seed, config).
inline SceneSample generate_rigid(uint64_t seed, const SceneConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    detail::SceneGeometry g;
    g.k = cfg.intrinsics();
    g.h = cfg.height;
    g.w = cfg.width;
    g.margin = cfg.margin;
    g.ch = cfg.height + 2 * cfg.margin;
    g.cw = cfg.width + 2 * cfg.margin;
    g.planes = detail::random_planes(rng, cfg, g.ch, g.cw);
    const SE3Params step = detail::random_step(rng, cfg);
    return detail::render_scene(g, step, {}, seed, cfg);
}

// Rigid scene observed along one continuous camera trajectory: n_frames
// consecutive frames become n_frames-2 overlapping triplets (the windows a
// sequence consumer slides over). Per-step motion is the base step plus a
// small smooth perturbation.
inline std::vector<SceneSample> generate_sequence(uint64_t seed, const SceneConfig& cfg,
                                                  int n_frames) {
    cfg.validate();
    check(n_frames >= 3, "generate_sequence: need at least 3 frames");
    Rng rng(seed);
    detail::SceneGeometry g;
    g.k = cfg.intrinsics();
    g.h = cfg.height;
    g.w = cfg.width;
    g.margin = cfg.margin;
    g.ch = cfg.height + 2 * cfg.margin;
    g.cw = cfg.width + 2 * cfg.margin;
    g.planes = detail::random_planes(rng, cfg, g.ch, g.cw);
    const SE3Params base = detail::random_step(rng, cfg);

    // camera poses around the trajectory midpoint so rays stay near the canvas
    std::vector<Pose4x4> poses;
    Pose4x4 w = Pose4x4::identity();
    poses.push_back(w);
    for (int f = 1; f < n_frames; ++f) {
        SE3Params step = base;
        for (int i = 0; i < 3; ++i)
            step.v[static_cast<size_t>(i)] += rng.uniform(-0.2, 0.2) * cfg.max_translation;
        for (int i = 3; i < 6; ++i)
            step.v[static_cast<size_t>(i)] += rng.uniform(-0.2, 0.2) * cfg.max_rotation;
        w = compose(w, se3_to_matrix(step));
        poses.push_back(w);
    }
    const Pose4x4 center_inv = invert(poses[static_cast<size_t>(n_frames / 2)]);
    for (Pose4x4& p : poses) p = compose(center_inv, p);

    // render every frame once
    std::vector<Tensor> frames(static_cast<size_t>(n_frames)), depths(static_cast<size_t>(n_frames));
    for (int f = 0; f < n_frames; ++f) {
        std::vector<double> img(static_cast<size_t>(3) * g.h * g.w, 0.0);
        std::vector<double> dep(static_cast<size_t>(g.h) * g.w, cfg.depth_max);
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x) {
                const detail::Hit hit = detail::cast_ray(g, poses[static_cast<size_t>(f)], 0, x, y);
                const size_t p = static_cast<size_t>(y) * g.w + x;
                if (std::isfinite(hit.t)) {
                    dep[p] = hit.t;
                    for (int c = 0; c < 3; ++c)
                        img[static_cast<size_t>(c) * g.h * g.w + p] = std::clamp(hit.rgb[c], 0.0, 1.0);
                }
            }
        frames[static_cast<size_t>(f)] = Tensor::from({3, g.h, g.w}, std::move(img));
        depths[static_cast<size_t>(f)] = Tensor::from({g.h, g.w}, std::move(dep));
    }

    std::vector<SceneSample> windows;
    for (int t = 0; t + 2 < n_frames; ++t) {
        SceneSample s;
        s.seed = seed + static_cast<uint64_t>(t);
        s.triplet.k = g.k;
        for (int f = 0; f < 3; ++f) {
            s.triplet.frames[static_cast<size_t>(f)] = frames[static_cast<size_t>(t + f)];
            s.gt_depth[static_cast<size_t>(f)] = depths[static_cast<size_t>(t + f)];
        }
        s.gt_ego12 = matrix_to_se3(compose(invert(poses[static_cast<size_t>(t)]),
                                           poses[static_cast<size_t>(t) + 1]));
        s.gt_ego23 = matrix_to_se3(compose(invert(poses[static_cast<size_t>(t) + 1]),
                                           poses[static_cast<size_t>(t) + 2]));
        windows.push_back(std::move(s));
    }
    return windows;
}

// Dynamic scene: the rigid background plus 1-3 textured rectangular objects
// at distinct depths with per-object 3D velocities. With degenerate_preset
// every object moves exactly with the (rotation-free) camera, showing zero
// apparent motion. Objects overlapping in the canonical frame trigger a
// bounded retry with the next seed.
inline SceneSample generate_dynamic(uint64_t seed, const SceneConfig& cfg) {
    cfg.validate();
    constexpr int kMaxRetries = 20;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        const uint64_t s = seed + static_cast<uint64_t>(attempt);
        Rng rng(s);
        detail::SceneGeometry g;
        g.k = cfg.intrinsics();
        g.h = cfg.height;
        g.w = cfg.width;
        g.margin = cfg.margin;
        g.ch = cfg.height + 2 * cfg.margin;
        g.cw = cfg.width + 2 * cfg.margin;
        g.planes = detail::random_planes(rng, cfg, g.ch, g.cw);

        SE3Params step = detail::random_step(rng, cfg);
        if (cfg.degenerate_preset) {
            // translation-only camera so "moving with the camera" is exact
            step.v[3] = step.v[4] = step.v[5] = 0.0;
            const double min_t = 0.6 * cfg.max_translation;
            for (int i = 0; i < 2; ++i)
                if (std::abs(step.v[static_cast<size_t>(i)]) < min_t)
                    step.v[static_cast<size_t>(i)] = step.v[static_cast<size_t>(i)] < 0 ? -min_t : min_t;
        }

        const int n_obj = rng.uniform_int(cfg.min_objects, cfg.max_objects);
        std::vector<detail::ObjectSurface> objects;
        bool overlap = false;
        for (int i = 0; i < n_obj; ++i) {
            detail::ObjectSurface obj;
            obj.id = i + 1;
            obj.category = 1 + (cfg.categories > 1 ? rng.uniform_int(0, cfg.categories - 1) : 0);
            obj.z = rng.uniform(cfg.object_depth_min, cfg.object_depth_max);
            const double size = rng.uniform(cfg.object_size_min, cfg.object_size_max) * cfg.height;
            const double aspect = rng.uniform(0.8, 1.6);
            const double ow = std::min(size * aspect, 0.45 * cfg.width);
            // keep the rectangle inside the frame with a safety border
            const double bx = 0.08 * cfg.width + ow / 2;
            const double by = 0.08 * cfg.height + size / 2;
            const double cx = rng.uniform(bx, cfg.width - 1 - bx);
            const double cy = rng.uniform(by, cfg.height - 1 - by);
            obj.rx0 = cx - ow / 2;
            obj.rx1 = cx + ow / 2;
            obj.ry0 = cy - size / 2;
            obj.ry1 = cy + size / 2;
            if (cfg.degenerate_preset) {
                obj.vel = {step.tx(), step.ty(), step.tz()};
            } else {
                obj.vel = {rng.uniform(-cfg.max_object_speed, cfg.max_object_speed),
                           rng.uniform(-cfg.max_object_speed, cfg.max_object_speed),
                           rng.uniform(-0.3 * cfg.max_object_speed, 0.3 * cfg.max_object_speed)};
            }
            obj.tw = static_cast<int>(obj.rx1 - obj.rx0) + 3;
            obj.th = static_cast<int>(obj.ry1 - obj.ry0) + 3;
            obj.texture = detail::make_texture(rng, obj.th, obj.tw, cfg.texture_scale,
                                               cfg.texture_contrast);
            for (const auto& other : objects)
                if (obj.rx0 < other.rx1 && other.rx0 < obj.rx1 && obj.ry0 < other.ry1 &&
                    other.ry0 < obj.ry1)
                    overlap = true;
            objects.push_back(std::move(obj));
        }
        if (overlap) continue;
        g.objects = objects;
        return detail::render_scene(g, step, objects, s, cfg);
    }
    fail("generate_dynamic: could not place non-overlapping objects within retry budget");
}

}  // namespace parallax
