#pragma once

#include <cmath>

#include "sigg/errors.hpp"
#include "sigg/tensor.hpp"

namespace sigg {

// Bias-corrected Adam. One state per Param; step strictly increases.
struct AdamState {
    Tensor m;
    Tensor v;
    int64_t step = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;

    explicit AdamState(const Param& p, double lr_ = 3e-4)
        : m(Tensor::zeros(p.value.shape)), v(Tensor::zeros(p.value.shape)), lr(lr_) {}
};

// Applies one update from p.grad and resets the gradient to zero.
inline void adam_step(Param& p, AdamState& st) {
    if (!st.m.same_shape(p.value) || !st.v.same_shape(p.value))
        throw ShapeError("adam_step: state shape " + st.m.shape_str() + " does not match param " +
                         p.value.shape_str());
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (int64_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        p.value[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
    p.zero_grad();
}

} // namespace sigg
