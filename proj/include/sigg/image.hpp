#pragma once

#include <vector>

#include "sigg/errors.hpp"

namespace sigg {

// H x W greyscale grid, values in [0,1]. The universal observation and
// signal medium of the game.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h, int w, double fill = 0.0) : height(h), width(w), px(static_cast<size_t>(h) * w, fill) {}

    double& at(int y, int x) { return px[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return px[static_cast<size_t>(y) * width + x]; }

    int64_t size() const { return static_cast<int64_t>(px.size()); }
};

} // namespace sigg
