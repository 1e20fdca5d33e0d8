#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "sigg/render.hpp"
#include "sigg/rng.hpp"

using namespace sigg;
using Catch::Approx;

namespace {

std::set<int> inked_pixels(const Image& img, double background) {
    std::set<int> out;
    for (int i = 0; i < static_cast<int>(img.px.size()); ++i)
        if (std::abs(img.px[static_cast<size_t>(i)] - background) > 1e-12) out.insert(i);
    return out;
}

double iou(const std::set<int>& a, const std::set<int>& b) {
    if (a.empty() && b.empty()) return 1.0;
    int inter = 0;
    for (int v : a) inter += b.count(v);
    const int uni = static_cast<int>(a.size() + b.size()) - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

// Brute-force oracle: distances against 4096 sampled curve points instead of
// the production 64-segment polyline.
Image rasterize_dense_oracle(const SplineParamVector& params, const CanvasSpec& spec) {
    const int T = 4096;
    Image img(spec.height, spec.width, spec.background);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            double cov = 0.0;
            for (const auto& curve : params.curves) {
                if (curve.intensity <= 0.0) continue;
                double dmin = 1e300;
                for (int i = 0; i < T; ++i) {
                    const double t = static_cast<double>(i) / (T - 1);
                    const Point p = bezier_point(curve.control, t);
                    const double dx = (x + 0.5) - p[0] * spec.width;
                    const double dy = (y + 0.5) - p[1] * spec.height;
                    dmin = std::min(dmin, std::sqrt(dx * dx + dy * dy));
                }
                const double u = (curve.thickness - dmin) / 1.0;
                const double s = u <= 0 ? 0.0 : (u >= 1 ? 1.0 : u * u * (3 - 2 * u));
                cov = std::max(cov, curve.intensity * s);
            }
            img.at(y, x) = std::clamp(spec.background + (spec.ink - spec.background) * cov, 0.0, 1.0);
        }
    return img;
}

SplineParamVector random_params(Rng& rng, int n_curves) {
    std::vector<double> raw(static_cast<size_t>(10 * n_curves));
    for (auto& v : raw) v = rng.normal();
    return squash_params(raw);
}

} // namespace

TEST_CASE("squash_params: midpoints, saturation, monotonicity", "[render]") {
    SplineParamVector mid = squash_params(std::vector<double>(10, 0.0));
    REQUIRE(mid.curves.size() == 1);
    for (const auto& p : mid.curves[0].control) {
        CHECK(p[0] == Approx(0.5).margin(1e-12));
        CHECK(p[1] == Approx(0.5).margin(1e-12));
    }
    CHECK(mid.curves[0].thickness == Approx(1.5).margin(1e-12));
    CHECK(mid.curves[0].intensity == Approx(0.5).margin(1e-12));

    std::vector<double> hi(10, 1e9);
    SplineParamVector sat = squash_params(hi);
    CHECK(sat.curves[0].control[0][0] == Approx(1.0).margin(1e-9));
    CHECK(sat.curves[0].thickness == Approx(2.5).margin(1e-9));
    CHECK(sat.curves[0].intensity == Approx(1.0).margin(1e-9));

    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const int idx = rng.uniform_int(10);
        std::vector<double> a(10), b;
        for (auto& v : a) v = rng.normal() * 2;
        b = a;
        b[static_cast<size_t>(idx)] += 0.5;
        auto pa = squash_params(a);
        auto pb = squash_params(b);
        // flatten both back to the 10 squashed fields
        auto fields = [](const SplineParamVector& s) {
            std::vector<double> f;
            for (const auto& p : s.curves[0].control) {
                f.push_back(p[0]);
                f.push_back(p[1]);
            }
            f.push_back(s.curves[0].thickness);
            f.push_back(s.curves[0].intensity);
            return f;
        };
        CHECK(fields(pb)[static_cast<size_t>(idx)] > fields(pa)[static_cast<size_t>(idx)]);
    }

    REQUIRE_THROWS_AS(squash_params(std::vector<double>(7, 0.0)), ConfigError);
    REQUIRE_THROWS_AS(squash_params({}), ConfigError);
}

TEST_CASE("bezier_point: endpoints, degenerate curve, half point", "[render]") {
    std::array<Point, 4> c{{{0, 0}, {0, 1}, {1, 1}, {1, 0}}};
    CHECK(bezier_point(c, 0.0)[0] == Approx(0.0));
    CHECK(bezier_point(c, 0.0)[1] == Approx(0.0));
    CHECK(bezier_point(c, 1.0)[0] == Approx(1.0));
    CHECK(bezier_point(c, 1.0)[1] == Approx(0.0));

    const Point mid = bezier_point(c, 0.5);
    CHECK(mid[0] == Approx(0.5).margin(1e-12));
    CHECK(mid[1] == Approx(0.75).margin(1e-12));

    std::array<Point, 4> same{{{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}}};
    for (double t : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        CHECK(bezier_point(same, t)[0] == Approx(0.3).margin(1e-12));
        CHECK(bezier_point(same, t)[1] == Approx(0.7).margin(1e-12));
    }

    REQUIRE_THROWS_AS(bezier_point(c, -0.01), ContractError);
    REQUIRE_THROWS_AS(bezier_point(c, 1.01), ContractError);
}

TEST_CASE("rasterize: zero intensity gives uniform background", "[render]") {
    SplineParamVector params;
    params.curves.resize(2);
    params.curves[0].control = {{{0.1, 0.1}, {0.4, 0.9}, {0.6, 0.2}, {0.9, 0.9}}};
    params.curves[0].intensity = 0.0;
    params.curves[1] = params.curves[0];
    CanvasSpec spec{16, 16, 0.25, 1.0};
    Signal s = rasterize(params, spec);
    for (double v : s.image.px) CHECK(v == Approx(0.25).margin(1e-12));
}

TEST_CASE("rasterize: straight stroke matches dense oracle with IoU >= 0.99", "[render]") {
    SplineParamVector params;
    params.curves.resize(1);
    params.curves[0].control = {{{0.15, 0.2}, {0.4, 0.45}, {0.65, 0.7}, {0.9, 0.95}}};
    params.curves[0].thickness = 1.8;
    params.curves[0].intensity = 1.0;
    CanvasSpec spec{28, 28, 0.0, 1.0};

    Signal fast = rasterize(params, spec);
    Image dense = rasterize_dense_oracle(params, spec);
    CHECK(iou(inked_pixels(fast.image, 0.0), inked_pixels(dense, 0.0)) >= 0.99);
}

TEST_CASE("rasterize: output in [0,1] and deterministic", "[render]") {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        SplineParamVector params = random_params(rng, 2);
        CanvasSpec spec{28, 28, 0.45, 1.0};
        Signal a = rasterize(params, spec);
        Signal b = rasterize(params, spec);
        REQUIRE(a.image.px == b.image.px);
        for (double v : a.image.px) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("rasterize: thicker strokes never lose coverage", "[render]") {
    Rng rng(21);
    CanvasSpec spec{28, 28, 0.0, 1.0};
    for (int trial = 0; trial < 20; ++trial) {
        SplineParamVector params = random_params(rng, 2);
        SplineParamVector thicker = params;
        for (auto& c : thicker.curves) c.thickness = std::min(2.5, c.thickness + 0.4);
        Image thin = rasterize(params, spec).image;
        Image thick = rasterize(thicker, spec).image;
        for (int64_t i = 0; i < thin.size(); ++i)
            CHECK(thick.px[static_cast<size_t>(i)] >= thin.px[static_cast<size_t>(i)] - 1e-12);
    }
}

TEST_CASE("rasterize: one-pixel shift keeps IoU >= 0.95", "[render]") {
    SplineParamVector params;
    params.curves.resize(1);
    params.curves[0].control = {{{0.25, 0.3}, {0.4, 0.6}, {0.55, 0.35}, {0.7, 0.6}}};
    params.curves[0].thickness = 1.6;
    params.curves[0].intensity = 1.0;
    CanvasSpec spec{28, 28, 0.0, 1.0};

    SplineParamVector shifted = params;
    const double dx = 1.0 / spec.width;
    for (auto& p : shifted.curves[0].control) p[0] += dx;

    Image base = rasterize(params, spec).image;
    Image moved = rasterize(shifted, spec).image;

    // shift the base inked set right by one pixel and compare
    std::set<int> expect;
    for (int v : inked_pixels(base, 0.0)) {
        const int y = v / spec.width, x = v % spec.width;
        if (x + 1 < spec.width) expect.insert(y * spec.width + x + 1);
    }
    CHECK(iou(expect, inked_pixels(moved, 0.0)) >= 0.95);
}

TEST_CASE("add_noise: zero sigma is identity, clipping holds", "[render]") {
    Rng rng(3);
    Image img(8, 8, 0.3);
    Image same = add_noise(img, 0.0, rng);
    REQUIRE(same.px == img.px);

    Image white(8, 8, 1.0);
    Image noisy = add_noise(white, 0.2, rng);
    for (double v : noisy.px) CHECK(v <= 1.0);

    REQUIRE_THROWS_AS(add_noise(img, -0.1, rng), UsageError);
}

TEST_CASE("add_noise: sample std close to sigma on mid-grey canvas", "[render]") {
    Rng rng(12);
    const double sigma = 0.05;
    Image img(64, 64, 0.5);
    Image noisy = add_noise(img, sigma, rng);
    double mean = 0.0;
    for (double v : noisy.px) mean += v;
    mean /= static_cast<double>(noisy.px.size());
    double var = 0.0;
    for (double v : noisy.px) var += (v - mean) * (v - mean);
    var /= static_cast<double>(noisy.px.size() - 1);
    const double sd = std::sqrt(var);
    // std error of the sample std is roughly sigma/sqrt(2N)
    const double tol = 3.0 * sigma / std::sqrt(2.0 * static_cast<double>(noisy.px.size()));
    CHECK(std::abs(sd - sigma) <= tol);
}

TEST_CASE("curvature_penalty: straight and degenerate strokes score zero", "[render]") {
    SplineParamVector straight;
    straight.curves.resize(1);
    straight.curves[0].control = {{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.7, 0.8}}};
    straight.curves[0].intensity = 1.0;
    CHECK(curvature_penalty(straight) == Approx(0.0).margin(1e-9));

    SplineParamVector point;
    point.curves.resize(1);
    point.curves[0].control = {{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}};
    CHECK(curvature_penalty(point) == Approx(0.0).margin(1e-12));
}

TEST_CASE("curvature_penalty: matches numeric second differences", "[render]") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        SplineParamVector params = random_params(rng, 1);
        const auto& ctrl = params.curves[0].control;
        const double h = 1e-5;

        // per-sample: analytic second derivative vs central second differences
        double analytic_mean = 0.0;
        const int T = 64;
        for (int i = 0; i < T; ++i) {
            const double t = static_cast<double>(i) / (T - 1);
            const double tc = std::clamp(t, h, 1.0 - h); // keep the stencil inside [0,1]
            const Point pm = bezier_point(ctrl, tc - h);
            const Point p0 = bezier_point(ctrl, tc);
            const Point pp = bezier_point(ctrl, tc + h);
            const double ddx = (pp[0] - 2 * p0[0] + pm[0]) / (h * h);
            const double ddy = (pp[1] - 2 * p0[1] + pm[1]) / (h * h);
            const Point dd = bezier_second_derivative(ctrl, tc);
            CHECK(std::abs(dd[0] - ddx) <= 1e-4);
            CHECK(std::abs(dd[1] - ddy) <= 1e-4);

            const Point dde = bezier_second_derivative(ctrl, t);
            analytic_mean += dde[0] * dde[0] + dde[1] * dde[1];
        }
        analytic_mean /= T;
        CHECK(curvature_penalty(params) == Approx(analytic_mean).margin(1e-9));
    }
}

TEST_CASE("curvature_penalty: zero iff controls are affine-degenerate", "[render]") {
    Rng rng(37);
    for (int trial = 0; trial < 30; ++trial) {
        SplineParamVector params = random_params(rng, 1);
        auto& c = params.curves[0].control;
        const double curv = curvature_penalty(params);
        // evenly spaced collinear controls have zero second derivative
        const bool evenly_collinear = [&] {
            const double ax = c[3][0] - c[0][0], ay = c[3][1] - c[0][1];
            const double e1x = c[0][0] + ax / 3 - c[1][0], e1y = c[0][1] + ay / 3 - c[1][1];
            const double e2x = c[0][0] + 2 * ax / 3 - c[2][0], e2y = c[0][1] + 2 * ay / 3 - c[2][1];
            return std::abs(e1x) < 1e-12 && std::abs(e1y) < 1e-12 && std::abs(e2x) < 1e-12 &&
                   std::abs(e2y) < 1e-12;
        }();
        if (evenly_collinear)
            CHECK(curv <= 1e-9);
        else
            CHECK(curv > 1e-9);
    }
}

TEST_CASE("size_penalty: point, full canvas, quarter scaling", "[render]") {
    SplineParamVector point;
    point.curves.resize(1);
    point.curves[0].control = {{{0.4, 0.4}, {0.4, 0.4}, {0.4, 0.4}, {0.4, 0.4}}};
    point.curves[0].intensity = 1.0;
    CHECK(size_penalty(point) == Approx(0.0).margin(1e-12));

    SplineParamVector full;
    full.curves.resize(2);
    full.curves[0].control = {{{0, 0}, {1.0 / 3, 1.0 / 3}, {2.0 / 3, 2.0 / 3}, {1, 1}}};
    full.curves[0].intensity = 1.0;
    full.curves[1].control = {{{1, 0}, {2.0 / 3, 1.0 / 3}, {1.0 / 3, 2.0 / 3}, {0, 1}}};
    full.curves[1].intensity = 1.0;
    CHECK(size_penalty(full) == Approx(1.0).margin(1e-9));

    Rng rng(41);
    SplineParamVector params = random_params(rng, 2);
    for (auto& c : params.curves) c.intensity = 1.0;
    const double before = size_penalty(params);

    // centroid of all sample points
    double cx = 0, cy = 0;
    int n = 0;
    for (auto& c : params.curves)
        for (int i = 0; i < 64; ++i) {
            const Point p = bezier_point(c.control, i / 63.0);
            cx += p[0];
            cy += p[1];
            ++n;
        }
    cx /= n;
    cy /= n;
    SplineParamVector shrunk = params;
    for (auto& c : shrunk.curves)
        for (auto& p : c.control) {
            p[0] = cx + 0.5 * (p[0] - cx);
            p[1] = cy + 0.5 * (p[1] - cy);
        }
    CHECK(size_penalty(shrunk) == Approx(before / 4.0).margin(1e-9));

    SplineParamVector invisible = params;
    for (auto& c : invisible.curves) c.intensity = 0.0;
    CHECK(size_penalty(invisible) == 0.0);
}
