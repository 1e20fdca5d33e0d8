#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sigg/autodiff.hpp"
#include "sigg/distributions.hpp"
#include "sigg/errors.hpp"
#include "sigg/image.hpp"
#include "sigg/render.hpp"
#include "sigg/rng.hpp"
#include "sigg/tensor.hpp"

namespace sigg {

// Discrete actions: one per referent class plus a final abstain action.
// Abstain is the receiver's non-reaction and earns reward 0 in all settings.
struct ActionSpace {
    int num_classes = 0;
    int abstain() const { return num_classes; }
    int count() const { return num_classes + 1; }
};

namespace net_detail {

inline Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng, double gain = 1.0) {
    Tensor t(std::move(shape));
    const double sd = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = rng.normal() * sd;
    return t;
}

inline int conv_out(int extent, int stride) { return (extent - 3) / stride + 1; }

} // namespace net_detail

// Behavioral policy: conv 16 (3x3, stride 2), conv 32 (3x3, stride 2),
// dense 128 + ReLU, then an action head over K+1 logits and a scalar value
// head. The same network consumes environment images and agent signals.
class ReceiverNet {
  public:
    ReceiverNet() = default;

    ReceiverNet(int num_classes, int in_channels, int height, int width, Rng& rng)
        : classes_(num_classes), channels_(in_channels), height_(height), width_(width) {
        using net_detail::conv_out;
        using net_detail::he_init;
        if (num_classes < 1) throw ConfigError("ReceiverNet: need at least one class");
        if (in_channels < 1 || in_channels > 2)
            throw ConfigError("ReceiverNet: in_channels must be 1 or 2");
        h1_ = conv_out(height, 2);
        w1_ = conv_out(width, 2);
        h2_ = conv_out(h1_, 2);
        w2_ = conv_out(w1_, 2);
        flat_ = 32 * h2_ * w2_;

        conv1_w = Param(he_init({16, in_channels, 3, 3}, in_channels * 9, rng), "receiver.conv1.w");
        conv1_b = Param(Tensor({16}), "receiver.conv1.b");
        conv2_w = Param(he_init({32, 16, 3, 3}, 16 * 9, rng), "receiver.conv2.w");
        conv2_b = Param(Tensor({32}), "receiver.conv2.b");
        dense_w = Param(he_init({flat_, 128}, flat_, rng), "receiver.dense.w");
        dense_b = Param(Tensor({128}), "receiver.dense.b");
        // small-gain heads keep the initial policy near uniform
        action_w = Param(he_init({128, num_classes + 1}, 128, rng, 0.01), "receiver.action.w");
        action_b = Param(Tensor({num_classes + 1}), "receiver.action.b");
        value_w = Param(he_init({128, 1}, 128, rng, 0.01), "receiver.value.w");
        value_b = Param(Tensor({1}), "receiver.value.b");
    }

    struct Heads {
        int logits;
        int value;
    };

    // x must be [B, in_channels, H, W].
    Heads forward(Graph& g, int x) const {
        const Tensor& xv = g.value(x);
        if (xv.ndim() != 4 || xv.dim(1) != channels_ || xv.dim(2) != height_ || xv.dim(3) != width_)
            throw ShapeError("receiver forward: observation " + xv.shape_str() + " does not match [B," +
                             std::to_string(channels_) + "," + std::to_string(height_) + "," +
                             std::to_string(width_) + "]");
        const int B = xv.dim(0);
        int h = g.relu(g.conv2d(x, const_cast<Param&>(conv1_w), const_cast<Param&>(conv1_b), 2));
        h = g.relu(g.conv2d(h, const_cast<Param&>(conv2_w), const_cast<Param&>(conv2_b), 2));
        h = g.reshape(h, {B, flat_});
        h = g.relu(g.dense(h, const_cast<Param&>(dense_w), const_cast<Param&>(dense_b)));
        Heads out;
        out.logits = g.dense(h, const_cast<Param&>(action_w), const_cast<Param&>(action_b));
        out.value = g.dense(h, const_cast<Param&>(value_w), const_cast<Param&>(value_b));
        return out;
    }

    Tensor observation_tensor(const Image& img, double flag) const {
        if (img.height != height_ || img.width != width_)
            throw ShapeError("observation " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                             " does not match canvas " + std::to_string(height_) + "x" +
                             std::to_string(width_));
        Tensor x({1, channels_, height_, width_});
        std::copy(img.px.begin(), img.px.end(), x.data.begin());
        if (channels_ == 2)
            std::fill(x.data.begin() + img.size(), x.data.end(), flag);
        return x;
    }

    std::vector<Param*> params() {
        return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w,
                &dense_b, &action_w, &action_b, &value_w, &value_b};
    }
    std::vector<const Param*> params() const {
        return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w,
                &dense_b, &action_w, &action_b, &value_w, &value_b};
    }

    int num_classes() const { return classes_; }
    int in_channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }

    Param conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b, action_w, action_b, value_w, value_b;

  private:
    int classes_ = 0, channels_ = 1, height_ = 0, width_ = 0;
    int h1_ = 0, w1_ = 0, h2_ = 0, w2_ = 0, flat_ = 0;
};

struct ReceiverDecision {
    std::vector<double> probs; // over K+1 actions
    double value = 0.0;
};

// Single-observation policy evaluation; probs form a valid simplex point.
inline ReceiverDecision receiver_forward(const ReceiverNet& net, const Image& image, double flag = 0.0) {
    Graph g;
    int x = g.constant(net.observation_tensor(image, flag));
    auto heads = net.forward(g, x);
    ReceiverDecision out;
    out.probs = softmax(g.value(heads.logits)).data;
    out.value = g.value(heads.value)[0];
    return out;
}

inline CategoricalDraw receiver_act(const std::vector<double>& probs, Rng& rng) {
    return categorical_sample(probs, rng);
}

// Sender policy: one-hot state -> two dense ReLU layers of 128 -> mean over
// the 10*N raw spline parameters, with a learnable state-independent log-std
// vector (clamped to [-4,1]) and a scalar value head.
class SenderNet {
  public:
    static constexpr double kLogStdMin = -4.0;
    static constexpr double kLogStdMax = 1.0;

    SenderNet() = default;

    SenderNet(int num_states, int n_curves, Rng& rng) : states_(num_states), curves_(n_curves) {
        using net_detail::he_init;
        if (num_states < 1) throw ConfigError("SenderNet: need at least one state");
        if (n_curves < 1) throw ConfigError("SenderNet: need at least one curve");
        const int P = param_dim();
        fc1_w = Param(he_init({num_states, 128}, num_states, rng), "sender.fc1.w");
        fc1_b = Param(Tensor({128}), "sender.fc1.b");
        fc2_w = Param(he_init({128, 128}, 128, rng), "sender.fc2.w");
        fc2_b = Param(Tensor({128}), "sender.fc2.b");
        mean_w = Param(he_init({128, P}, 128, rng, 0.01), "sender.mean.w");
        mean_b = Param(Tensor({P}), "sender.mean.b");
        logstd = Param(Tensor::full({P}, -0.5), "sender.logstd");
        value_w = Param(he_init({128, 1}, 128, rng, 0.01), "sender.value.w");
        value_b = Param(Tensor({1}), "sender.value.b");
    }

    int param_dim() const { return 10 * curves_; }
    int num_states() const { return states_; }
    int curves() const { return curves_; }

    struct Heads {
        int mean;
        int logstd;
        int value;
    };

    // states must be [B, num_states], one-hot rows.
    Heads forward(Graph& g, int states) const {
        const Tensor& sv = g.value(states);
        if (sv.ndim() != 2 || sv.dim(1) != states_)
            throw ShapeError("sender forward: states " + sv.shape_str() + " does not match [B," +
                             std::to_string(states_) + "]");
        int h = g.relu(g.dense(states, const_cast<Param&>(fc1_w), const_cast<Param&>(fc1_b)));
        h = g.relu(g.dense(h, const_cast<Param&>(fc2_w), const_cast<Param&>(fc2_b)));
        Heads out;
        out.mean = g.dense(h, const_cast<Param&>(mean_w), const_cast<Param&>(mean_b));
        out.logstd = g.leaf(const_cast<Param&>(logstd));
        out.value = g.dense(h, const_cast<Param&>(value_w), const_cast<Param&>(value_b));
        return out;
    }

    Tensor one_hot(int state) const {
        if (state < 0 || state >= states_)
            throw ContractError("sender state " + std::to_string(state) + " outside [0," +
                                std::to_string(states_) + ")");
        Tensor x({1, states_});
        x[state] = 1.0;
        return x;
    }

    // Keep the log-std invariant by projection after optimizer updates.
    void clamp_logstd() {
        for (auto& v : logstd.value.data) v = std::clamp(v, kLogStdMin, kLogStdMax);
    }

    std::vector<Param*> params() {
        return {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &mean_w, &mean_b, &logstd, &value_w, &value_b};
    }
    std::vector<const Param*> params() const {
        return {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &mean_w, &mean_b, &logstd, &value_w, &value_b};
    }

    Param fc1_w, fc1_b, fc2_w, fc2_b, mean_w, mean_b, logstd, value_w, value_b;

  private:
    int states_ = 0, curves_ = 0;
};

struct SenderDistribution {
    std::vector<double> mean;
    std::vector<double> logstd;
    double value = 0.0;
};

// Distribution over raw (pre-squash) spline parameters for a one-hot state.
inline SenderDistribution sender_forward(const SenderNet& net, const Tensor& state_onehot) {
    if (state_onehot.ndim() != 2 || state_onehot.dim(0) != 1 || state_onehot.dim(1) != net.num_states())
        throw ContractError("sender_forward: expected a single one-hot row of width " +
                            std::to_string(net.num_states()));
    int hot = -1;
    for (int k = 0; k < net.num_states(); ++k) {
        const double v = state_onehot[k];
        if (v == 0.0) continue;
        if (v != 1.0 || hot >= 0) throw ContractError("sender_forward: state vector is not one-hot");
        hot = k;
    }
    if (hot < 0) throw ContractError("sender_forward: state vector is all zero");

    Graph g;
    auto heads = net.forward(g, g.constant(state_onehot));
    SenderDistribution out;
    out.mean = g.value(heads.mean).data;
    out.logstd = g.value(heads.logstd).data;
    out.value = g.value(heads.value)[0];
    return out;
}

struct Emission {
    Signal signal;
    std::vector<double> raw; // pre-squash Gaussian sample
    double logprob = 0.0;    // measured on the raw sample
    double value = 0.0;
};

// Sample raw parameters, squash, rasterize, and pepper with channel noise.
// The log-probability is taken on the raw Gaussian sample; squashing belongs
// to the environment.
inline Emission sender_emit(const SenderNet& net, int state, Rng& rng, const CanvasSpec& canvas,
                            double noise_sigma) {
    const SenderDistribution dist = sender_forward(net, net.one_hot(state));
    Emission e;
    e.raw.resize(dist.mean.size());
    for (size_t j = 0; j < e.raw.size(); ++j)
        e.raw[j] = dist.mean[j] + std::exp(dist.logstd[j]) * rng.normal();
    e.logprob = gaussian_logprob_entropy(dist.mean, dist.logstd, e.raw).logprob;
    e.value = dist.value;
    Signal s = rasterize(squash_params(e.raw), canvas);
    s.image = add_noise(s.image, noise_sigma, rng);
    e.signal = std::move(s);
    return e;
}

// Noise-free rendering of the distribution mean (logstd -> -inf limit);
// used for sign-evolution grids.
inline Signal sender_mean_signal(const SenderNet& net, int state, const CanvasSpec& canvas) {
    const SenderDistribution dist = sender_forward(net, net.one_hot(state));
    return rasterize(squash_params(dist.mean), canvas);
}

} // namespace sigg
