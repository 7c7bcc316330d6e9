#pragma once

#include <array>
#include <optional>

#include "parallax/core/tensor.hpp"

namespace parallax {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const int r = static_cast<int>(std::max(a.size(), b.size()));
    Shape out(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        const int ia = i - (r - static_cast<int>(a.size()));
        const int ib = i - (r - static_cast<int>(b.size()));
        const int da = ia < 0 ? 1 : a[static_cast<size_t>(ia)];
        const int db = ib < 0 ? 1 : b[static_cast<size_t>(ib)];
        if (da == db || db == 1)
            out[static_cast<size_t>(i)] = da;
        else if (da == 1)
            out[static_cast<size_t>(i)] = db;
        else
            fail(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                 " are not broadcast-compatible");
    }
    return out;
}

// Row-major strides of `shape` broadcast up to `out` (trailing-aligned);
// broadcast dimensions get stride 0.
inline std::vector<int> bcast_strides(const Shape& shape, const Shape& out) {
    const int r = static_cast<int>(out.size());
    const int ra = static_cast<int>(shape.size());
    std::vector<int> st(static_cast<size_t>(r), 0);
    int stride = 1;
    for (int i = ra - 1; i >= 0; --i) {
        if (shape[static_cast<size_t>(i)] != 1) st[static_cast<size_t>(r - ra + i)] = stride;
        stride *= shape[static_cast<size_t>(i)];
    }
    return st;
}

// Visits every output element of a broadcast binary op with the linear
// offsets into out, a and b. Flat fast paths cover the common cases.
template <class F>
void for_each_bcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
    const int n = numel(out);
    if (n == 0) return;
    if (a == out && b == out) {
        for (int i = 0; i < n; ++i) f(i, i, i);
        return;
    }
    if (numel(a) == 1 && b == out) {
        for (int i = 0; i < n; ++i) f(i, 0, i);
        return;
    }
    if (numel(b) == 1 && a == out) {
        for (int i = 0; i < n; ++i) f(i, i, 0);
        return;
    }
    const int r = static_cast<int>(out.size());
    const auto sa = bcast_strides(a, out);
    const auto sb = bcast_strides(b, out);
    std::vector<int> ctr(static_cast<size_t>(r), 0);
    int ao = 0, bo = 0;
    for (int idx = 0;;) {
        f(idx, ao, bo);
        if (++idx == n) break;
        for (int d = r - 1; d >= 0; --d) {
            ao += sa[static_cast<size_t>(d)];
            bo += sb[static_cast<size_t>(d)];
            if (++ctr[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
            ao -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            bo -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            ctr[static_cast<size_t>(d)] = 0;
        }
    }
}

// Generic broadcast binary op. Bwd computes the local partials da, db for one
// element from (a, b, y); broadcast dimensions accumulate automatically.
template <class Fwd, class Bwd>
Tensor binary_ew(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    Shape out = broadcast_shape(a.shape(), b.shape(), name);
    std::vector<double> y(static_cast<size_t>(numel(out)));
    const std::vector<double>& av = a.values();
    const std::vector<double>& bv = b.values();
    for_each_bcast(out, a.shape(), b.shape(),
                   [&](int i, int ia, int ib) { y[static_cast<size_t>(i)] = fwd(av[static_cast<size_t>(ia)], bv[static_cast<size_t>(ib)]); });
    Node* an = a.node();
    Node* bn = b.node();
    const bool aw = a.requires_grad();
    const bool bw = b.requires_grad();
    Shape ash = a.shape(), bsh = b.shape(), osh = out;
    return finish_op(std::move(out), std::move(y), {a, b},
                     [an, bn, aw, bw, bwd, ash = std::move(ash), bsh = std::move(bsh),
                      osh = std::move(osh)](const std::vector<double>& g) {
                         std::vector<double>* ga = aw ? &grad_buf(*an) : nullptr;
                         std::vector<double>* gb = bw ? &grad_buf(*bn) : nullptr;
                         const std::vector<double>& av2 = an->values;
                         const std::vector<double>& bv2 = bn->values;
                         for_each_bcast(osh, ash, bsh, [&](int i, int ia, int ib) {
                             double da = 0.0, db = 0.0;
                             bwd(av2[static_cast<size_t>(ia)], bv2[static_cast<size_t>(ib)], da, db);
                             const double gi = g[static_cast<size_t>(i)];
                             if (ga) (*ga)[static_cast<size_t>(ia)] += gi * da;
                             if (gb) (*gb)[static_cast<size_t>(ib)] += gi * db;
                         });
                     });
}

// Generic elementwise unary op; dfdx(a, y) gives the local derivative.
template <class Fwd, class Dfdx>
Tensor unary_ew(const Tensor& a, Fwd fwd, Dfdx dfdx) {
    const std::vector<double>& av = a.values();
    std::vector<double> y(av.size());
    for (size_t i = 0; i < av.size(); ++i) y[i] = fwd(av[i]);
    Node* an = a.node();
    std::vector<double> yv = y;  // backward may need the outputs (exp, sigmoid)
    return finish_op(a.shape(), std::move(y), {a},
                     [an, dfdx, yv = std::move(yv)](const std::vector<double>& g) {
                         std::vector<double>& ga = grad_buf(*an);
                         const std::vector<double>& av2 = an->values;
                         for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(av2[i], yv[i]);
                     });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double& da, double& db) { da = 1.0; db = 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double& da, double& db) { da = 1.0; db = -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double& da, double& db) { da = y; db = x; });
}

// Denominator clamped away from zero by kGuardEps; values of ordinary
// magnitude divide exactly.
inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "div", a, b, [](double x, double y) { return x / guard_denom(y); },
        [](double x, double y, double& da, double& db) {
            const double d = guard_denom(y);
            da = 1.0 / d;
            db = (y > kGuardEps || y < -kGuardEps) ? -x / (d * d) : 0.0;
        });
}

// Ties route the gradient to the first argument.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "min", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double& da, double& db) {
            da = x <= y ? 1.0 : 0.0;
            db = 1.0 - da;
        });
}

inline Tensor maximum(const Tensor& a, const Tensor& b) {
    return detail::binary_ew(
        "max", a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y, double& da, double& db) {
            da = x >= y ? 1.0 : 0.0;
            db = 1.0 - da;
        });
}

inline Tensor neg(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor abs(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

// Argument clamped to at least kGuardEps so log(1) == 0 holds exactly while
// zero arguments stay finite.
inline Tensor log(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return std::log(x < kGuardEps ? kGuardEps : x); },
        [](double x, double) { return x > kGuardEps ? 1.0 / x : 0.0; });
}

inline Tensor sin(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

inline Tensor cos(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_ew(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor clamp(const Tensor& a, double lo, double hi) {
    check(lo <= hi, "clamp: lo must not exceed hi");
    return detail::unary_ew(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Tensor square(const Tensor& a) { return mul(a, a); }

// Operator sugar; scalars broadcast.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor operator+(double s, const Tensor& a) { return add(Tensor::scalar(s), a); }
inline Tensor operator-(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor operator-(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator*(double s, const Tensor& a) { return mul(Tensor::scalar(s), a); }
inline Tensor operator/(const Tensor& a, double s) { return div(a, Tensor::scalar(s)); }
inline Tensor operator/(double s, const Tensor& a) { return div(Tensor::scalar(s), a); }

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

// Validates axes and returns them sorted and deduplicated; empty means all.
inline std::vector<int> normalize_axes(const Shape& shape, const std::vector<int>& axes,
                                       const char* op) {
    std::vector<int> ax = axes;
    for (int& a : ax) {
        if (a < 0) a += static_cast<int>(shape.size());
        check(a >= 0 && a < static_cast<int>(shape.size()),
              std::string(op) + ": axis out of range for shape " + shape_str(shape));
    }
    std::sort(ax.begin(), ax.end());
    ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
    return ax;
}

struct ReducePlan {
    Shape out_shape;
    std::vector<int> out_stride_per_in_dim;  // 0 on reduced dims
    int reduced_count = 1;
};

inline ReducePlan make_reduce_plan(const Shape& in, const std::vector<int>& axes) {
    ReducePlan p;
    std::vector<bool> reduced(in.size(), axes.empty());
    for (int a : axes) reduced[static_cast<size_t>(a)] = true;
    for (size_t i = 0; i < in.size(); ++i) {
        if (reduced[i])
            p.reduced_count *= in[i];
        else
            p.out_shape.push_back(in[i]);
    }
    p.out_stride_per_in_dim.assign(in.size(), 0);
    int stride = 1;
    for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
        if (!reduced[static_cast<size_t>(i)]) {
            p.out_stride_per_in_dim[static_cast<size_t>(i)] = stride;
            stride *= in[static_cast<size_t>(i)];
        }
    }
    return p;
}

// Visits (in_offset, out_offset) for every input element.
template <class F>
void for_each_reduce(const Shape& in, const ReducePlan& p, F&& f) {
    const int n = numel(in);
    if (n == 0) return;
    const int r = static_cast<int>(in.size());
    if (r == 0) {
        f(0, 0);
        return;
    }
    std::vector<int> ctr(static_cast<size_t>(r), 0);
    int oo = 0;
    for (int idx = 0;;) {
        f(idx, oo);
        if (++idx == n) break;
        for (int d = r - 1; d >= 0; --d) {
            oo += p.out_stride_per_in_dim[static_cast<size_t>(d)];
            if (++ctr[static_cast<size_t>(d)] < in[static_cast<size_t>(d)]) break;
            oo -= p.out_stride_per_in_dim[static_cast<size_t>(d)] * in[static_cast<size_t>(d)];
            ctr[static_cast<size_t>(d)] = 0;
        }
    }
}

}  // namespace detail

inline Tensor sum(const Tensor& a, const std::vector<int>& axes = {}) {
    const auto ax = detail::normalize_axes(a.shape(), axes, "sum");
    const auto plan = detail::make_reduce_plan(a.shape(), ax);
    std::vector<double> y(static_cast<size_t>(numel(plan.out_shape)), 0.0);
    const auto& av = a.values();
    detail::for_each_reduce(a.shape(), plan,
                            [&](int i, int o) { y[static_cast<size_t>(o)] += av[static_cast<size_t>(i)]; });
    detail::Node* an = a.node();
    return detail::finish_op(plan.out_shape, std::move(y), {a},
                             [an, plan, in = a.shape()](const std::vector<double>& g) {
                                 std::vector<double>& ga = detail::grad_buf(*an);
                                 detail::for_each_reduce(in, plan, [&](int i, int o) {
                                     ga[static_cast<size_t>(i)] += g[static_cast<size_t>(o)];
                                 });
                             });
}

inline Tensor mean(const Tensor& a, const std::vector<int>& axes = {}) {
    const auto ax = detail::normalize_axes(a.shape(), axes, "mean");
    const auto plan = detail::make_reduce_plan(a.shape(), ax);
    const double inv = 1.0 / plan.reduced_count;
    std::vector<double> y(static_cast<size_t>(numel(plan.out_shape)), 0.0);
    const auto& av = a.values();
    detail::for_each_reduce(a.shape(), plan,
                            [&](int i, int o) { y[static_cast<size_t>(o)] += av[static_cast<size_t>(i)]; });
    for (double& v : y) v *= inv;
    detail::Node* an = a.node();
    return detail::finish_op(plan.out_shape, std::move(y), {a},
                             [an, plan, inv, in = a.shape()](const std::vector<double>& g) {
                                 std::vector<double>& ga = detail::grad_buf(*an);
                                 detail::for_each_reduce(in, plan, [&](int i, int o) {
                                     ga[static_cast<size_t>(i)] += g[static_cast<size_t>(o)] * inv;
                                 });
                             });
}

namespace detail {

// Min/max reduction; the first element attaining the extremum gets the
// gradient (deterministic tie handling, matching the elementwise rule).
template <bool kMin>
Tensor extremum_reduce(const char* name, const Tensor& a, const std::vector<int>& axes) {
    check(a.size() > 0, std::string(name) + ": empty tensor");
    const auto ax = normalize_axes(a.shape(), axes, name);
    const auto plan = make_reduce_plan(a.shape(), ax);
    const size_t out_n = static_cast<size_t>(numel(plan.out_shape));
    std::vector<double> y(out_n, kMin ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity());
    std::vector<int> arg(out_n, -1);
    const auto& av = a.values();
    for_each_reduce(a.shape(), plan, [&](int i, int o) {
        const double v = av[static_cast<size_t>(i)];
        const bool better = kMin ? v < y[static_cast<size_t>(o)] : v > y[static_cast<size_t>(o)];
        if (better) {
            y[static_cast<size_t>(o)] = v;
            arg[static_cast<size_t>(o)] = i;
        }
    });
    Node* an = a.node();
    return finish_op(plan.out_shape, std::move(y), {a},
                     [an, arg = std::move(arg)](const std::vector<double>& g) {
                         std::vector<double>& ga = grad_buf(*an);
                         for (size_t o = 0; o < g.size(); ++o)
                             ga[static_cast<size_t>(arg[o])] += g[o];
                     });
}

}  // namespace detail

inline Tensor reduce_min(const Tensor& a, const std::vector<int>& axes = {}) {
    return detail::extremum_reduce<true>("reduce_min", a, axes);
}

inline Tensor reduce_max(const Tensor& a, const std::vector<int>& axes = {}) {
    return detail::extremum_reduce<false>("reduce_max", a, axes);
}

// ---------------------------------------------------------------------------
// Shape operations
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
    check(numel(shape) == a.size(), "reshape: cannot view " + shape_str(a.shape()) + " as " +
                                        shape_str(shape));
    detail::Node* an = a.node();
    return detail::finish_op(std::move(shape), a.values(), {a},
                             [an](const std::vector<double>& g) {
                                 std::vector<double>& ga = detail::grad_buf(*an);
                                 for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             });
}

namespace detail {

inline std::vector<int> row_major_strides(const Shape& s) {
    std::vector<int> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
    return st;
}

// Visits (out_offset, in_offset) for a rectangular sub-block.
template <class F>
void for_each_slice(const Shape& out, const std::vector<int>& in_strides,
                    const std::vector<int>& starts, F&& f) {
    const int n = numel(out);
    if (n == 0) return;
    const int r = static_cast<int>(out.size());
    int base = 0;
    for (int d = 0; d < r; ++d) base += starts[static_cast<size_t>(d)] * in_strides[static_cast<size_t>(d)];
    if (r == 0) {
        f(0, base);
        return;
    }
    std::vector<int> ctr(static_cast<size_t>(r), 0);
    int io = base;
    for (int idx = 0;;) {
        f(idx, io);
        if (++idx == n) break;
        for (int d = r - 1; d >= 0; --d) {
            io += in_strides[static_cast<size_t>(d)];
            if (++ctr[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
            io -= in_strides[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            ctr[static_cast<size_t>(d)] = 0;
        }
    }
}

}  // namespace detail

// Rectangular crop [starts, stops) per axis; gradient scatters back into the
// source positions.
inline Tensor slice(const Tensor& a, const std::vector<int>& starts, const std::vector<int>& stops) {
    const Shape& in = a.shape();
    check(starts.size() == in.size() && stops.size() == in.size(),
          "slice: starts/stops rank mismatch for " + shape_str(in));
    Shape out(in.size());
    for (size_t d = 0; d < in.size(); ++d) {
        check(0 <= starts[d] && starts[d] <= stops[d] && stops[d] <= in[d],
              "slice: invalid range on axis " + std::to_string(d) + " for " + shape_str(in));
        out[d] = stops[d] - starts[d];
    }
    const auto strides = detail::row_major_strides(in);
    std::vector<double> y(static_cast<size_t>(numel(out)));
    const auto& av = a.values();
    detail::for_each_slice(out, strides, starts,
                           [&](int o, int i) { y[static_cast<size_t>(o)] = av[static_cast<size_t>(i)]; });
    detail::Node* an = a.node();
    return detail::finish_op(out, std::move(y), {a},
                             [an, out, strides, starts](const std::vector<double>& g) {
                                 std::vector<double>& ga = detail::grad_buf(*an);
                                 detail::for_each_slice(out, strides, starts, [&](int o, int i) {
                                     ga[static_cast<size_t>(i)] += g[static_cast<size_t>(o)];
                                 });
                             });
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const Shape& first = parts[0].shape();
    check(axis >= 0 && axis < static_cast<int>(first.size()), "concat: axis out of range");
    Shape out = first;
    int total = 0;
    for (const Tensor& t : parts) {
        check(t.shape().size() == first.size(), "concat: rank mismatch");
        for (size_t d = 0; d < first.size(); ++d)
            check(static_cast<int>(d) == axis || t.shape()[d] == first[d],
                  "concat: incompatible shapes " + shape_str(first) + " vs " + shape_str(t.shape()));
        total += t.shape()[static_cast<size_t>(axis)];
    }
    out[static_cast<size_t>(axis)] = total;

    // outer x axis x inner block layout
    int outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= first[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < first.size(); ++d) inner *= first[d];

    std::vector<double> y(static_cast<size_t>(numel(out)));
    const int out_axis_inner = total * inner;
    int axis_off = 0;
    for (const Tensor& t : parts) {
        const int ext = t.shape()[static_cast<size_t>(axis)];
        const auto& tv = t.values();
        for (int ou = 0; ou < outer; ++ou) {
            const double* src = tv.data() + static_cast<size_t>(ou) * ext * inner;
            double* dst = y.data() + static_cast<size_t>(ou) * out_axis_inner +
                          static_cast<size_t>(axis_off) * inner;
            std::copy(src, src + static_cast<size_t>(ext) * inner, dst);
        }
        axis_off += ext;
    }

    std::vector<detail::Node*> nodes;
    std::vector<bool> wants;
    std::vector<int> exts;
    for (const Tensor& t : parts) {
        nodes.push_back(t.node());
        wants.push_back(t.requires_grad());
        exts.push_back(t.shape()[static_cast<size_t>(axis)]);
    }
    return detail::finish_op(
        out, std::move(y), parts,
        [nodes, wants, exts, outer, inner, out_axis_inner](const std::vector<double>& g) {
            int axis_off = 0;
            for (size_t p = 0; p < nodes.size(); ++p) {
                const int ext = exts[p];
                if (wants[p]) {
                    std::vector<double>& ga = detail::grad_buf(*nodes[p]);
                    for (int ou = 0; ou < outer; ++ou) {
                        const double* src = g.data() + static_cast<size_t>(ou) * out_axis_inner +
                                            static_cast<size_t>(axis_off) * inner;
                        double* dst = ga.data() + static_cast<size_t>(ou) * ext * inner;
                        for (int i = 0; i < ext * inner; ++i) dst[i] += src[i];
                    }
                }
                axis_off += ext;
            }
        });
}

// ---------------------------------------------------------------------------
// Spatial operations (CHW / NCHW)
// ---------------------------------------------------------------------------

enum class Padding { same, valid };

namespace detail {

struct ConvDims {
    int N, C, H, W, O, kh, kw, outH, outW, pad_top, pad_left, stride;
};

// Per-(n,o,c,ky,kx) visit with the in-bounds output row/column ranges
// precomputed; `cell` receives (n,o,c,ky,kx,dy,dx,oy0,oy1,ox0,ox1).
template <class F>
void conv_iterate(const ConvDims& d, F&& cell) {
    for (int n = 0; n < d.N; ++n)
        for (int o = 0; o < d.O; ++o)
            for (int c = 0; c < d.C; ++c)
                for (int ky = 0; ky < d.kh; ++ky) {
                    const int dy = ky - d.pad_top;
                    int oy0 = 0, oy1 = d.outH - 1;
                    if (dy < 0) oy0 = (-dy + d.stride - 1) / d.stride;
                    if (d.H - 1 - dy >= 0)
                        oy1 = std::min(oy1, (d.H - 1 - dy) / d.stride);
                    else
                        oy1 = -1;
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const int dx = kx - d.pad_left;
                        int ox0 = 0, ox1 = d.outW - 1;
                        if (dx < 0) ox0 = (-dx + d.stride - 1) / d.stride;
                        if (d.W - 1 - dx >= 0)
                            ox1 = std::min(ox1, (d.W - 1 - dx) / d.stride);
                        else
                            ox1 = -1;
                        cell(n, o, c, ky, kx, dy, dx, oy0, oy1, ox0, ox1);
                    }
                }
}

}  // namespace detail

// Cross-correlation over NCHW (a CHW input is treated as N=1 and returned as
// CHW). Same padding follows the ceil(H/stride) output-size convention with
// the extra pad row/column at the bottom/right.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1,
                     Padding padding = Padding::same) {
    const bool chw = input.shape().size() == 3;
    check(chw || input.shape().size() == 4, "conv2d: input must be CHW or NCHW, got " +
                                                shape_str(input.shape()));
    check(kernel.shape().size() == 4, "conv2d: kernel must be (O,C,kh,kw), got " +
                                          shape_str(kernel.shape()));
    check(stride >= 1, "conv2d: stride must be >= 1");
    const Shape& is = input.shape();
    const int N = chw ? 1 : is[0];
    const int C = chw ? is[0] : is[1];
    const int H = chw ? is[1] : is[2];
    const int W = chw ? is[2] : is[3];
    const Shape& ks = kernel.shape();
    const int O = ks[0], KC = ks[1], kh = ks[2], kw = ks[3];
    check(KC == C, "conv2d: input channels " + std::to_string(C) + " do not match kernel channels " +
                       std::to_string(KC));

    int outH, outW, pad_top, pad_left;
    if (padding == Padding::same) {
        outH = (H + stride - 1) / stride;
        outW = (W + stride - 1) / stride;
        pad_top = std::max((outH - 1) * stride + kh - H, 0) / 2;
        pad_left = std::max((outW - 1) * stride + kw - W, 0) / 2;
    } else {
        check(H >= kh && W >= kw, "conv2d: kernel larger than input under valid padding");
        outH = (H - kh) / stride + 1;
        outW = (W - kw) / stride + 1;
        pad_top = pad_left = 0;
    }

    const detail::ConvDims dims{N, C, H, W, O, kh, kw, outH, outW, pad_top, pad_left, stride};
    const auto& iv = input.values();
    const auto& kv = kernel.values();
    std::vector<double> y(static_cast<size_t>(N) * O * outH * outW, 0.0);

    detail::conv_iterate(dims, [&](int n, int o, int c, int ky, int kx, int dy, int dx, int oy0,
                                   int oy1, int ox0, int ox1) {
        const double w = kv[static_cast<size_t>(((o * C + c) * kh + ky) * kw + kx)];
        if (w == 0.0) return;
        for (int oy = oy0; oy <= oy1; ++oy) {
            const double* in_row =
                iv.data() + (static_cast<size_t>((n * C + c) * H + oy * stride + dy)) * W + dx;
            double* out_row = y.data() + (static_cast<size_t>((n * O + o) * outH + oy)) * outW;
            for (int ox = ox0; ox <= ox1; ++ox) out_row[ox] += w * in_row[ox * stride];
        }
    });

    Shape out_shape = chw ? Shape{O, outH, outW} : Shape{N, O, outH, outW};
    detail::Node* in_node = input.node();
    detail::Node* k_node = kernel.node();
    const bool in_w = input.requires_grad();
    const bool k_w = kernel.requires_grad();
    return detail::finish_op(
        std::move(out_shape), std::move(y), {input, kernel},
        [in_node, k_node, in_w, k_w, dims](const std::vector<double>& g) {
            std::vector<double>* gi = in_w ? &detail::grad_buf(*in_node) : nullptr;
            std::vector<double>* gk = k_w ? &detail::grad_buf(*k_node) : nullptr;
            const std::vector<double>& iv2 = in_node->values;
            const std::vector<double>& kv2 = k_node->values;
            const int C = dims.C, H = dims.H, W = dims.W, O = dims.O, kh = dims.kh, kw = dims.kw,
                      outH = dims.outH, outW = dims.outW, stride = dims.stride;
            detail::conv_iterate(dims, [&](int n, int o, int c, int ky, int kx, int dy, int dx,
                                           int oy0, int oy1, int ox0, int ox1) {
                const size_t k_off = static_cast<size_t>(((o * C + c) * kh + ky) * kw + kx);
                const double w = kv2[k_off];
                double acc = 0.0;
                for (int oy = oy0; oy <= oy1; ++oy) {
                    const size_t in_base =
                        (static_cast<size_t>((n * C + c) * H + oy * stride + dy)) * W + dx;
                    const double* go_row =
                        g.data() + (static_cast<size_t>((n * O + o) * outH + oy)) * outW;
                    if (gi) {
                        double* gi_row = gi->data() + in_base;
                        for (int ox = ox0; ox <= ox1; ++ox) gi_row[ox * stride] += w * go_row[ox];
                    }
                    if (gk) {
                        const double* in_row = iv2.data() + in_base;
                        for (int ox = ox0; ox <= ox1; ++ox) acc += go_row[ox] * in_row[ox * stride];
                    }
                }
                if (gk) (*gk)[k_off] += acc;
            });
        });
}

// Nearest-neighbor 2x upsampling of the trailing two dimensions.
inline Tensor upsample_nearest2(const Tensor& a) {
    const Shape& s = a.shape();
    check(s.size() >= 2, "upsample_nearest2: needs spatial dims, got " + shape_str(s));
    const int H = s[s.size() - 2], W = s[s.size() - 1];
    int planes = 1;
    for (size_t d = 0; d + 2 < s.size(); ++d) planes *= s[d];
    Shape out = s;
    out[out.size() - 2] = 2 * H;
    out[out.size() - 1] = 2 * W;
    const auto& av = a.values();
    std::vector<double> y(static_cast<size_t>(numel(out)));
    for (int p = 0; p < planes; ++p)
        for (int yy = 0; yy < H; ++yy)
            for (int xx = 0; xx < W; ++xx) {
                const double v = av[(static_cast<size_t>(p) * H + yy) * W + xx];
                const size_t base = (static_cast<size_t>(p) * 2 * H + 2 * yy) * 2 * W + 2 * xx;
                y[base] = v;
                y[base + 1] = v;
                y[base + 2 * W] = v;
                y[base + 2 * W + 1] = v;
            }
    detail::Node* an = a.node();
    return detail::finish_op(std::move(out), std::move(y), {a},
                             [an, planes, H, W](const std::vector<double>& g) {
                                 std::vector<double>& ga = detail::grad_buf(*an);
                                 for (int p = 0; p < planes; ++p)
                                     for (int yy = 0; yy < H; ++yy)
                                         for (int xx = 0; xx < W; ++xx) {
                                             const size_t base =
                                                 (static_cast<size_t>(p) * 2 * H + 2 * yy) * 2 * W + 2 * xx;
                                             ga[(static_cast<size_t>(p) * H + yy) * W + xx] +=
                                                 g[base] + g[base + 1] + g[base + 2 * W] +
                                                 g[base + 2 * W + 1];
                                         }
                             });
}

// 2x2 average pooling with stride 2; spatial dims must be even.
inline Tensor avg_pool2(const Tensor& a) {
    const Shape& s = a.shape();
    check(s.size() >= 2, "avg_pool2: needs spatial dims, got " + shape_str(s));
    const int H = s[s.size() - 2], W = s[s.size() - 1];
    check(H % 2 == 0 && W % 2 == 0, "avg_pool2: spatial dims must be even, got " + shape_str(s));
    int planes = 1;
    for (size_t d = 0; d + 2 < s.size(); ++d) planes *= s[d];
    Shape out = s;
    out[out.size() - 2] = H / 2;
    out[out.size() - 1] = W / 2;
    const auto& av = a.values();
    std::vector<double> y(static_cast<size_t>(numel(out)));
    for (int p = 0; p < planes; ++p)
        for (int yy = 0; yy < H / 2; ++yy)
            for (int xx = 0; xx < W / 2; ++xx) {
                const size_t base = (static_cast<size_t>(p) * H + 2 * yy) * W + 2 * xx;
                y[(static_cast<size_t>(p) * (H / 2) + yy) * (W / 2) + xx] =
                    0.25 * (av[base] + av[base + 1] + av[base + W] + av[base + W + 1]);
            }
    detail::Node* an = a.node();
    return detail::finish_op(std::move(out), std::move(y), {a},
                             [an, planes, H, W](const std::vector<double>& g) {
                                 std::vector<double>& ga = detail::grad_buf(*an);
                                 for (int p = 0; p < planes; ++p)
                                     for (int yy = 0; yy < H / 2; ++yy)
                                         for (int xx = 0; xx < W / 2; ++xx) {
                                             const double q =
                                                 0.25 * g[(static_cast<size_t>(p) * (H / 2) + yy) * (W / 2) + xx];
                                             const size_t base =
                                                 (static_cast<size_t>(p) * H + 2 * yy) * W + 2 * xx;
                                             ga[base] += q;
                                             ga[base + 1] += q;
                                             ga[base + W] += q;
                                             ga[base + W + 1] += q;
                                         }
                             });
}

// ---------------------------------------------------------------------------
// Enum-dispatch entry points
// ---------------------------------------------------------------------------

enum class EwKind { add, sub, mul, div, abs, exp, log, min, max, clamp };
enum class RedKind { sum, mean, min, max };

inline Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
    switch (kind) {
        case EwKind::add: return add(a, b);
        case EwKind::sub: return sub(a, b);
        case EwKind::mul: return mul(a, b);
        case EwKind::div: return div(a, b);
        case EwKind::min: return minimum(a, b);
        case EwKind::max: return maximum(a, b);
        default: fail("elementwise: op is not binary");
    }
}

inline Tensor elementwise(EwKind kind, const Tensor& a) {
    switch (kind) {
        case EwKind::abs: return abs(a);
        case EwKind::exp: return exp(a);
        case EwKind::log: return log(a);
        default: fail("elementwise: op is not unary");
    }
}

inline Tensor elementwise(EwKind kind, const Tensor& a, double lo, double hi) {
    check(kind == EwKind::clamp, "elementwise: bounds only apply to clamp");
    return clamp(a, lo, hi);
}

inline Tensor reduce(RedKind kind, const Tensor& a, const std::vector<int>& axes = {}) {
    switch (kind) {
        case RedKind::sum: return sum(a, axes);
        case RedKind::mean: return mean(a, axes);
        case RedKind::min: return reduce_min(a, axes);
        case RedKind::max: return reduce_max(a, axes);
    }
    fail("reduce: unknown kind");
}

// Backward through the thread-current tape.
inline void backward(const Tensor& root) {
    check(Tape::current() != nullptr, "backward: no active tape");
    Tape::current()->backward(root);
}

}  // namespace parallax
