#pragma once

#include <cmath>
#include <vector>

#include "sigg/errors.hpp"
#include "sigg/rng.hpp"
#include "sigg/tensor.hpp"

namespace sigg {

// Row-wise numerically stable softmax. Rows sum to 1 within 1e-9 and the
// result is invariant to per-row constant shifts.
inline Tensor softmax(const Tensor& logits) {
    if (logits.ndim() != 2) throw ShapeError("softmax: expected [B,K], got " + logits.shape_str());
    const int B = logits.dim(0), K = logits.dim(1);
    Tensor out({B, K});
    for (int b = 0; b < B; ++b) {
        const double* lr = &logits.data[static_cast<size_t>(b) * K];
        double* pr = &out.data[static_cast<size_t>(b) * K];
        double m = lr[0];
        for (int k = 1; k < K; ++k) m = std::max(m, lr[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
            pr[k] = std::exp(lr[k] - m);
            sum += pr[k];
        }
        const double inv = 1.0 / sum;
        for (int k = 0; k < K; ++k) pr[k] *= inv;
    }
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    Tensor t({1, static_cast<int>(logits.size())}, logits);
    return softmax(t).data;
}

struct CategoricalDraw {
    int action;
    double logprob;
    double entropy;
};

inline double categorical_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

// Sample from a categorical distribution given on the probability simplex.
// Inputs off the simplex by more than 1e-6 are a caller bug.
inline CategoricalDraw categorical_sample(const std::vector<double>& probs, Rng& rng) {
    if (probs.empty()) throw ContractError("categorical_sample: empty distribution");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ContractError("categorical_sample: negative or NaN probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw ContractError("categorical_sample: probabilities sum to " + std::to_string(total));
    const double u = rng.uniform() * total;
    double cum = 0.0;
    int action = static_cast<int>(probs.size()) - 1;
    for (size_t k = 0; k < probs.size(); ++k) {
        cum += probs[k];
        if (u < cum) {
            action = static_cast<int>(k);
            break;
        }
    }
    return {action, std::log(probs[static_cast<size_t>(action)]), categorical_entropy(probs)};
}

struct GaussianStats {
    double logprob;
    double entropy;
};

// Diagonal-Gaussian log-density and entropy (plain-number version; the
// differentiable counterpart lives on the Graph).
inline GaussianStats gaussian_logprob_entropy(const std::vector<double>& mean,
                                              const std::vector<double>& logstd,
                                              const std::vector<double>& sample) {
    if (mean.size() != logstd.size() || mean.size() != sample.size())
        throw ShapeError("gaussian_logprob_entropy: length mismatch");
    static const double LOG_2PI = std::log(2.0 * M_PI);
    double lp = 0.0, ent = 0.0;
    for (size_t j = 0; j < mean.size(); ++j) {
        const double z = (sample[j] - mean[j]) * std::exp(-logstd[j]);
        lp += -0.5 * z * z - logstd[j] - 0.5 * LOG_2PI;
        ent += logstd[j] + 0.5 * (LOG_2PI + 1.0);
    }
    return {lp, ent};
}

} // namespace sigg
