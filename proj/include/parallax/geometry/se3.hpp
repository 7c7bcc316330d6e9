#pragma once

#include <array>

#include "parallax/core/ops.hpp"

namespace parallax {

// Rigid transform as a 6-vector (t_x, t_y, t_z, r_x, r_y, r_z); rotations are
// Euler angles in radians composed as R = Rz * Ry * Rx.
struct SE3Params {
    std::array<double, 6> v{0, 0, 0, 0, 0, 0};

    static SE3Params zero() { return {}; }
    static SE3Params translation(double tx, double ty, double tz) {
        return SE3Params{{tx, ty, tz, 0, 0, 0}};
    }

    double tx() const { return v[0]; }
    double ty() const { return v[1]; }
    double tz() const { return v[2]; }
    double rx() const { return v[3]; }
    double ry() const { return v[4]; }
    double rz() const { return v[5]; }

    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    Tensor tensor() const { return Tensor::from({6}, {v[0], v[1], v[2], v[3], v[4], v[5]}); }
    static SE3Params from_tensor(const Tensor& t) {
        check(t.size() == 6, "SE3Params: expected 6 values, got " + shape_str(t.shape()));
        SE3Params p;
        for (int i = 0; i < 6; ++i) p.v[static_cast<size_t>(i)] = t.values()[static_cast<size_t>(i)];
        return p;
    }
};

// 4x4 homogeneous rigid transform, row-major.
struct Pose4x4 {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    static Pose4x4 identity() { return {}; }

    double at(int r, int c) const { return m[static_cast<size_t>(4 * r + c)]; }
    double& at(int r, int c) { return m[static_cast<size_t>(4 * r + c)]; }

    std::array<double, 3> apply(const std::array<double, 3>& p) const {
        std::array<double, 3> q;
        for (int r = 0; r < 3; ++r)
            q[static_cast<size_t>(r)] =
                at(r, 0) * p[0] + at(r, 1) * p[1] + at(r, 2) * p[2] + at(r, 3);
        return q;
    }

    // Max deviation of R^T R from identity plus bottom-row error.
    double rigidity_error() const {
        double err = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = 0.0;
                for (int k = 0; k < 3; ++k) dot += at(k, i) * at(k, j);
                err = std::max(err, std::abs(dot - (i == j ? 1.0 : 0.0)));
            }
        err = std::max({err, std::abs(at(3, 0)), std::abs(at(3, 1)), std::abs(at(3, 2)),
                        std::abs(at(3, 3) - 1.0)});
        // determinant of the rotation block must be +1
        const double det = at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
                           at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
                           at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
        return std::max(err, std::abs(det - 1.0));
    }
};

inline Pose4x4 compose(const Pose4x4& a, const Pose4x4& b) {
    Pose4x4 c;
    for (int r = 0; r < 4; ++r)
        for (int col = 0; col < 4; ++col) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += a.at(r, k) * b.at(k, col);
            c.at(r, col) = s;
        }
    return c;
}

inline Pose4x4 se3_to_matrix(const SE3Params& p) {
    check(p.finite(), "se3_to_matrix: non-finite parameters");
    const double ca = std::cos(p.rx()), sa = std::sin(p.rx());
    const double cb = std::cos(p.ry()), sb = std::sin(p.ry());
    const double cg = std::cos(p.rz()), sg = std::sin(p.rz());
    Pose4x4 t;
    // R = Rz(rz) * Ry(ry) * Rx(rx)
    t.at(0, 0) = cg * cb;
    t.at(0, 1) = cg * sb * sa - sg * ca;
    t.at(0, 2) = cg * sb * ca + sg * sa;
    t.at(1, 0) = sg * cb;
    t.at(1, 1) = sg * sb * sa + cg * ca;
    t.at(1, 2) = sg * sb * ca - cg * sa;
    t.at(2, 0) = -sb;
    t.at(2, 1) = cb * sa;
    t.at(2, 2) = cb * ca;
    t.at(0, 3) = p.tx();
    t.at(1, 3) = p.ty();
    t.at(2, 3) = p.tz();
    return t;
}

// Euler/translation extraction; valid for |ry| < pi/2.
inline SE3Params matrix_to_se3(const Pose4x4& t) {
    SE3Params p;
    p.v[0] = t.at(0, 3);
    p.v[1] = t.at(1, 3);
    p.v[2] = t.at(2, 3);
    p.v[3] = std::atan2(t.at(2, 1), t.at(2, 2));
    p.v[4] = std::asin(std::clamp(-t.at(2, 0), -1.0, 1.0));
    p.v[5] = std::atan2(t.at(1, 0), t.at(0, 0));
    return p;
}

inline Pose4x4 invert(const Pose4x4& t) {
    check(t.rigidity_error() < 1e-6, "invert: input is not a rigid transform");
    Pose4x4 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.at(i, j) = t.at(j, i);
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += t.at(j, i) * t.at(j, 3);
        r.at(i, 3) = -s;
    }
    return r;
}

inline SE3Params invert(const SE3Params& p) { return matrix_to_se3(invert(se3_to_matrix(p))); }

// Differentiable rotation/translation entries built from a 6-value tensor.
// With inverse=true, yields R^T and -R^T t (the opposite warp direction).
struct PoseTensors {
    std::array<Tensor, 9> r;  // row-major 3x3
    std::array<Tensor, 3> t;
};

inline PoseTensors se3_to_pose_tensors(const Tensor& se3, bool inverse = false) {
    check(se3.size() == 6, "se3_to_pose_tensors: expected 6 values, got " +
                               shape_str(se3.shape()));
    check(all_finite(se3.values()), "se3_to_pose_tensors: non-finite parameters");
    auto comp = [&](int i) { return reshape(slice(se3, {i}, {i + 1}), {}); };
    Tensor tx = comp(0), ty = comp(1), tz = comp(2);
    Tensor ca = cos(comp(3)), sa = sin(comp(3));
    Tensor cb = cos(comp(4)), sb = sin(comp(4));
    Tensor cg = cos(comp(5)), sg = sin(comp(5));

    PoseTensors out;
    out.r[0] = cg * cb;
    out.r[1] = cg * sb * sa - sg * ca;
    out.r[2] = cg * sb * ca + sg * sa;
    out.r[3] = sg * cb;
    out.r[4] = sg * sb * sa + cg * ca;
    out.r[5] = sg * sb * ca - cg * sa;
    out.r[6] = neg(sb);
    out.r[7] = cb * sa;
    out.r[8] = cb * ca;
    if (!inverse) {
        out.t = {tx, ty, tz};
        return out;
    }
    PoseTensors inv;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            inv.r[static_cast<size_t>(3 * i + j)] = out.r[static_cast<size_t>(3 * j + i)];
    std::array<Tensor, 3> tvec = {tx, ty, tz};
    for (int i = 0; i < 3; ++i)
        inv.t[static_cast<size_t>(i)] =
            neg(inv.r[static_cast<size_t>(3 * i)] * tvec[0] +
                inv.r[static_cast<size_t>(3 * i + 1)] * tvec[1] +
                inv.r[static_cast<size_t>(3 * i + 2)] * tvec[2]);
    return inv;
}

}  // namespace parallax
