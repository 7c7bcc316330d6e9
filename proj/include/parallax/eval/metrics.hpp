#pragma once

#include <iomanip>
#include <optional>

#include "parallax/geometry/se3.hpp"

namespace parallax {

// The seven standard depth error/accuracy statistics.
struct DepthMetrics {
    double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
    double d1 = 0, d2 = 0, d3 = 0;  // delta < 1.25, 1.25^2, 1.25^3
};

namespace detail {

inline double median_of(std::vector<double> v) {
    check(!v.empty(), "median: empty");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Metrics over pixels with valid_mask=1, finite gt, gt > 0 and gt <= cap.
// With median_scale the prediction is rescaled by median(gt)/median(pred)
// first (monocular predictions carry no global scale). Predictions are
// clamped to [1e-3, cap] before the statistics.
inline DepthMetrics depth_metrics(const Tensor& pred, const Tensor& gt, const Tensor& valid_mask,
                                  double cap = 80.0, bool median_scale = true) {
    check(pred.shape() == gt.shape(), "depth_metrics: pred " + shape_str(pred.shape()) +
                                          " and gt " + shape_str(gt.shape()) + " differ");
    const bool has_mask = valid_mask.defined();
    if (has_mask)
        check(valid_mask.shape() == gt.shape(), "depth_metrics: mask shape mismatch");
    std::vector<double> pv, gv;
    for (int i = 0; i < gt.size(); ++i) {
        const double g = gt.values()[static_cast<size_t>(i)];
        if (has_mask && valid_mask.values()[static_cast<size_t>(i)] < 0.5) continue;
        if (!std::isfinite(g) || g <= 0.0 || g > cap) continue;
        pv.push_back(pred.values()[static_cast<size_t>(i)]);
        gv.push_back(g);
    }
    check(!pv.empty(), "depth_metrics: no valid pixels");

    if (median_scale) {
        const double mp = detail::median_of(pv);
        const double scale = detail::median_of(gv) / guard_denom(mp);
        for (double& p : pv) p *= scale;
    }
    DepthMetrics m;
    double log_sq = 0;
    const double n = static_cast<double>(pv.size());
    for (size_t i = 0; i < pv.size(); ++i) {
        const double p = std::clamp(pv[i], 1e-3, cap);
        const double g = gv[i];
        const double diff = p - g;
        m.abs_rel += std::abs(diff) / g;
        m.sq_rel += diff * diff / g;
        m.rmse += diff * diff;
        const double dl = std::log(p) - std::log(g);
        log_sq += dl * dl;
        const double ratio = std::max(p / g, g / p);
        if (ratio < 1.25) m.d1 += 1;
        if (ratio < 1.25 * 1.25) m.d2 += 1;
        if (ratio < 1.25 * 1.25 * 1.25) m.d3 += 1;
    }
    m.abs_rel /= n;
    m.sq_rel /= n;
    m.rmse = std::sqrt(m.rmse / n);
    m.rmse_log = std::sqrt(log_sq / n);
    m.d1 /= n;
    m.d2 /= n;
    m.d3 /= n;
    return m;
}

inline std::string depth_metrics_csv_header() {
    return "abs_rel,sq_rel,rmse,rmse_log,d1,d2,d3";
}

inline std::string depth_metrics_csv_row(const DepthMetrics& m) {
    std::ostringstream os;
    os.precision(10);
    os << m.abs_rel << ',' << m.sq_rel << ',' << m.rmse << ',' << m.rmse_log << ',' << m.d1 << ','
       << m.d2 << ',' << m.d3;
    return os.str();
}

// ---------------------------------------------------------------------------
// Odometry
// ---------------------------------------------------------------------------

struct OdometrySummary {
    double mean = 0;
    double stddev = 0;
    int snippets = 0;
};

// Absolute trajectory error over 5-frame snippets given four frame-to-frame
// relative poses per snippet (predicted and ground truth). Each snippet's
// relative poses are integrated from the origin, a single least-squares scale
// factor aligns the predicted positions to the ground truth, and the RMSE of
// the residual positions is reported as mean +/- stddev over snippets.
inline OdometrySummary odometry_ate(const std::vector<std::vector<Pose4x4>>& pred_rel,
                                    const std::vector<std::vector<Pose4x4>>& gt_rel,
                                    std::vector<double>* per_snippet = nullptr) {
    check(pred_rel.size() == gt_rel.size() && !pred_rel.empty(),
          "odometry_ate: need matching non-empty snippet lists");
    std::vector<double> errors;
    for (size_t s = 0; s < pred_rel.size(); ++s) {
        check(pred_rel[s].size() == 4 && gt_rel[s].size() == 4,
              "odometry_ate: a 5-frame snippet needs 4 relative poses");
        std::array<std::array<double, 3>, 5> p{}, g{};
        Pose4x4 gp = Pose4x4::identity(), gg = Pose4x4::identity();
        for (int i = 0; i < 4; ++i) {
            gp = compose(gp, pred_rel[s][static_cast<size_t>(i)]);
            gg = compose(gg, gt_rel[s][static_cast<size_t>(i)]);
            for (int r = 0; r < 3; ++r) {
                p[static_cast<size_t>(i) + 1][static_cast<size_t>(r)] = gp.at(r, 3);
                g[static_cast<size_t>(i) + 1][static_cast<size_t>(r)] = gg.at(r, 3);
            }
        }
        double dot = 0, norm = 0;
        for (int i = 0; i < 5; ++i)
            for (int r = 0; r < 3; ++r) {
                dot += p[static_cast<size_t>(i)][static_cast<size_t>(r)] * g[static_cast<size_t>(i)][static_cast<size_t>(r)];
                norm += p[static_cast<size_t>(i)][static_cast<size_t>(r)] * p[static_cast<size_t>(i)][static_cast<size_t>(r)];
            }
        const double scale = norm > 1e-12 ? dot / norm : 0.0;
        double sq = 0;
        for (int i = 0; i < 5; ++i)
            for (int r = 0; r < 3; ++r) {
                const double d = scale * p[static_cast<size_t>(i)][static_cast<size_t>(r)] -
                                 g[static_cast<size_t>(i)][static_cast<size_t>(r)];
                sq += d * d;
            }
        errors.push_back(std::sqrt(sq / 5.0));
    }
    if (per_snippet) *per_snippet = errors;
    OdometrySummary out;
    out.snippets = static_cast<int>(errors.size());
    for (double e : errors) out.mean += e;
    out.mean /= static_cast<double>(errors.size());
    double var = 0;
    for (double e : errors) var += (e - out.mean) * (e - out.mean);
    out.stddev = std::sqrt(var / static_cast<double>(errors.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Comparison report
// ---------------------------------------------------------------------------

struct RunMetrics {
    std::string name;
    DepthMetrics depth;
    std::optional<OdometrySummary> odometry;
};

struct Report {
    std::string text;
    std::string csv;
};

// Aligned table over one or more runs, sorted by abs_rel ascending. Error
// columns are lower-is-better, delta columns higher-is-better.
inline Report compare_report(std::vector<RunMetrics> runs) {
    check(!runs.empty(), "compare_report: no runs");
    std::sort(runs.begin(), runs.end(),
              [](const RunMetrics& a, const RunMetrics& b) { return a.depth.abs_rel < b.depth.abs_rel; });
    const bool any_odo = std::any_of(runs.begin(), runs.end(),
                                     [](const RunMetrics& r) { return r.odometry.has_value(); });
    std::ostringstream text, csv;
    size_t name_w = 4;
    for (const RunMetrics& r : runs) name_w = std::max(name_w, r.name.size());
    text << std::left << std::setw(static_cast<int>(name_w + 2)) << "run";
    for (const char* col : {"abs_rel(v)", "sq_rel(v)", "rmse(v)", "rmse_log(v)", "d1(^)",
                            "d2(^)", "d3(^)"})
        text << std::right << std::setw(12) << col;
    if (any_odo) text << std::right << std::setw(12) << "ate(v)" << std::setw(12) << "ate_std";
    text << "\n";
    csv << "run," << depth_metrics_csv_header();
    if (any_odo) csv << ",ate_mean,ate_std";
    csv << "\n";
    text << std::fixed << std::setprecision(4);
    for (const RunMetrics& r : runs) {
        text << std::left << std::setw(static_cast<int>(name_w + 2)) << r.name << std::right;
        for (double v : {r.depth.abs_rel, r.depth.sq_rel, r.depth.rmse, r.depth.rmse_log,
                         r.depth.d1, r.depth.d2, r.depth.d3})
            text << std::setw(12) << v;
        if (any_odo) {
            if (r.odometry)
                text << std::setw(12) << r.odometry->mean << std::setw(12) << r.odometry->stddev;
            else
                text << std::setw(12) << "-" << std::setw(12) << "-";
        }
        text << "\n";
        csv << r.name << ',' << depth_metrics_csv_row(r.depth);
        if (any_odo) {
            if (r.odometry) {
                csv << ',' << r.odometry->mean << ',' << r.odometry->stddev;
            } else {
                csv << ",,";
            }
        }
        csv << "\n";
    }
    return Report{text.str(), csv.str()};
}

}  // namespace parallax
