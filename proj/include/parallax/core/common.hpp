#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace parallax {

// Extents of a dense row-major tensor. Rank 0 (empty shape) is a scalar.
using Shape = std::vector<int>;

inline int numel(const Shape& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

// Epsilon used to keep divisions and logs away from their singularities.
inline constexpr double kGuardEps = 1e-8;

// Transformed points with camera-frame depth at or below this are treated as
// behind/too close to the projection plane and masked invalid.
inline constexpr double kMinProjectDepth = 1e-3;

// Denominators are clamped away from zero; values of normal magnitude pass
// through exactly (mean-normalization identities must hold to 1e-12).
inline double guard_denom(double b) {
    if (b > kGuardEps || b < -kGuardEps) return b;
    return b >= 0.0 ? kGuardEps : -kGuardEps;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace parallax
