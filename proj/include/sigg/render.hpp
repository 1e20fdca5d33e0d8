#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "sigg/errors.hpp"
#include "sigg/image.hpp"
#include "sigg/rng.hpp"

namespace sigg {

using Point = std::array<double, 2>;

// One cubic stroke. Control points live in unit canvas coordinates;
// thickness is in pixels (it acts as the stroke half-width).
struct BezierCurve {
    std::array<Point, 4> control{};
    double thickness = 0.5;
    double intensity = 0.0;
};

struct SplineParamVector {
    std::vector<BezierCurve> curves;
};

struct CanvasSpec {
    int height = 28;
    int width = 28;
    double background = 0.0;
    double ink = 1.0;
};

struct Signal {
    Image image;
    SplineParamVector params; // provenance
};

namespace render_detail {

constexpr int kCurveSamples = 64;   // polyline resolution for distances
constexpr double kEdgeWidth = 1.0;  // anti-alias falloff in pixels

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double smoothstep01(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * (3.0 - 2.0 * u);
}

inline double point_segment_dist(double px, double py, const Point& a, const Point& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double wx = px - a[0], wy = py - a[1];
    const double vv = vx * vx + vy * vy;
    double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

} // namespace render_detail

// Cubic Bernstein evaluation. t must lie in [0,1].
inline Point bezier_point(const std::array<Point, 4>& control, double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw ContractError("bezier_point: t=" + std::to_string(t) + " outside [0,1]");
    const double u = 1.0 - t;
    const double b0 = u * u * u;
    const double b1 = 3.0 * u * u * t;
    const double b2 = 3.0 * u * t * t;
    const double b3 = t * t * t;
    return {b0 * control[0][0] + b1 * control[1][0] + b2 * control[2][0] + b3 * control[3][0],
            b0 * control[0][1] + b1 * control[1][1] + b2 * control[2][1] + b3 * control[3][1]};
}

// Second derivative of the cubic at t (exact).
inline Point bezier_second_derivative(const std::array<Point, 4>& control, double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw ContractError("bezier_second_derivative: t=" + std::to_string(t) + " outside [0,1]");
    Point out{};
    for (int d = 0; d < 2; ++d) {
        const double a = control[2][d] - 2.0 * control[1][d] + control[0][d];
        const double b = control[3][d] - 2.0 * control[2][d] + control[1][d];
        out[d] = 6.0 * ((1.0 - t) * a + t * b);
    }
    return out;
}

// Map an unbounded parameter vector (as sampled from the sender Gaussian)
// into valid stroke fields. Layout per curve: 8 control coordinates,
// thickness, intensity. Strictly monotone per coordinate.
inline SplineParamVector squash_params(const std::vector<double>& raw) {
    using render_detail::logistic;
    if (raw.empty() || raw.size() % 10 != 0)
        throw ConfigError("squash_params: raw length " + std::to_string(raw.size()) +
                          " is not a positive multiple of 10");
    SplineParamVector out;
    const size_t n_curves = raw.size() / 10;
    out.curves.resize(n_curves);
    for (size_t c = 0; c < n_curves; ++c) {
        const double* r = &raw[c * 10];
        BezierCurve& curve = out.curves[c];
        for (int p = 0; p < 4; ++p) {
            curve.control[static_cast<size_t>(p)][0] = logistic(r[2 * p]);
            curve.control[static_cast<size_t>(p)][1] = logistic(r[2 * p + 1]);
        }
        curve.thickness = 0.5 + 2.0 * logistic(r[8]);
        curve.intensity = logistic(r[9]);
    }
    return out;
}

// Distance-field rasterizer. Each curve is approximated by a 64-sample
// polyline; per pixel coverage is max over curves of
// intensity * smoothstep((thickness - distance)/edge_width), and the pixel is
// blended from background toward the ink value by that coverage.
inline Signal rasterize(const SplineParamVector& params, const CanvasSpec& spec) {
    using namespace render_detail;
    const int H = spec.height, W = spec.width;
    Image img(H, W, spec.background);
    std::vector<double> coverage(static_cast<size_t>(H) * W, 0.0);
    std::vector<double> dist(static_cast<size_t>(H) * W);
    std::vector<Point> pts(kCurveSamples);

    for (const BezierCurve& curve : params.curves) {
        if (curve.intensity <= 0.0) continue;
        for (int i = 0; i < kCurveSamples; ++i) {
            const double t = static_cast<double>(i) / (kCurveSamples - 1);
            Point p = bezier_point(curve.control, t);
            pts[static_cast<size_t>(i)] = {p[0] * W, p[1] * H}; // pixel space
        }
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        const double reach = curve.thickness + kEdgeWidth + 0.5;
        for (int i = 0; i + 1 < kCurveSamples; ++i) {
            const Point& a = pts[static_cast<size_t>(i)];
            const Point& b = pts[static_cast<size_t>(i) + 1];
            const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a[0], b[0]) - reach)));
            const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max(a[0], b[0]) + reach)));
            const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a[1], b[1]) - reach)));
            const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max(a[1], b[1]) + reach)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double d = point_segment_dist(x + 0.5, y + 0.5, a, b);
                    double& cell = dist[static_cast<size_t>(y) * W + x];
                    if (d < cell) cell = d;
                }
        }
        for (size_t i = 0; i < coverage.size(); ++i) {
            if (!std::isfinite(dist[i])) continue;
            const double c = curve.intensity * smoothstep01((curve.thickness - dist[i]) / kEdgeWidth);
            if (c > coverage[i]) coverage[i] = c;
        }
    }

    for (size_t i = 0; i < coverage.size(); ++i)
        img.px[i] = std::clamp(spec.background + (spec.ink - spec.background) * coverage[i], 0.0, 1.0);
    return Signal{std::move(img), params};
}

// I.i.d. Gaussian channel noise, clipped back into [0,1].
inline Image add_noise(const Image& image, double sigma, Rng& rng) {
    if (sigma < 0.0) throw UsageError("add_noise: sigma must be >= 0, got " + std::to_string(sigma));
    Image out = image;
    if (sigma == 0.0) return out;
    for (auto& v : out.px) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
    return out;
}

// Mean squared second-derivative norm over 64 samples, averaged across
// curves, in canvas-normalized units. Zero iff every curve is affine.
inline double curvature_penalty(const SplineParamVector& params) {
    using render_detail::kCurveSamples;
    if (params.curves.empty()) return 0.0;
    double total = 0.0;
    for (const BezierCurve& curve : params.curves) {
        double acc = 0.0;
        for (int i = 0; i < kCurveSamples; ++i) {
            const double t = static_cast<double>(i) / (kCurveSamples - 1);
            const Point dd = bezier_second_derivative(curve.control, t);
            acc += dd[0] * dd[0] + dd[1] * dd[1];
        }
        total += acc / kCurveSamples;
    }
    return total / static_cast<double>(params.curves.size());
}

// Bounding-box area of all visible curve sample points as a fraction of
// canvas area.
inline double size_penalty(const SplineParamVector& params) {
    using render_detail::kCurveSamples;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    bool any = false;
    for (const BezierCurve& curve : params.curves) {
        if (curve.intensity <= 0.0) continue;
        for (int i = 0; i < kCurveSamples; ++i) {
            const double t = static_cast<double>(i) / (kCurveSamples - 1);
            const Point p = bezier_point(curve.control, t);
            xmin = std::min(xmin, p[0]);
            xmax = std::max(xmax, p[0]);
            ymin = std::min(ymin, p[1]);
            ymax = std::max(ymax, p[1]);
            any = true;
        }
    }
    if (!any) return 0.0;
    return std::clamp((xmax - xmin) * (ymax - ymin), 0.0, 1.0);
}

} // namespace sigg
