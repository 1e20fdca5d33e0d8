#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sigg/errors.hpp"
#include "sigg/tensor.hpp"

namespace sigg {

// Reverse-mode tape over tensor-level primitives. A Graph is built per
// forward pass; backward() replays recorded ops in reverse and accumulates
// gradients into the referenced Params. Single-threaded per graph; distinct
// graphs for distinct agents may run concurrently because Params are only
// written between rollouts.
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- node creation -----------------------------------------------------

    int constant(Tensor v) { return push(std::move(v), nullptr, false); }

    // Leaf node aliasing a Param; backward accumulates into p.grad.
    int leaf(Param& p) { return push(Tensor{}, &p, true); }

    const Tensor& value(int id) const {
        const Node& n = nodes_[check(id)];
        return n.param ? n.param->value : n.owned;
    }

    // --- primitive ops -----------------------------------------------------

    // y = x W + b with x:[B,I], W:[I,O], b:[O].
    int dense(int x, int W, int b) {
        const Tensor& xv = value(x);
        const Tensor& wv = value(W);
        const Tensor& bv = value(b);
        if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(0))
            throw ShapeError("dense: x" + xv.shape_str() + " incompatible with W" + wv.shape_str());
        if (bv.size() != wv.dim(1))
            throw ShapeError("dense: b" + bv.shape_str() + " incompatible with W" + wv.shape_str());
        const int B = xv.dim(0), I = xv.dim(1), O = wv.dim(1);
        Tensor y({B, O});
        for (int r = 0; r < B; ++r) {
            const double* xr = &xv.data[static_cast<size_t>(r) * I];
            double* yr = &y.data[static_cast<size_t>(r) * O];
            for (int o = 0; o < O; ++o) yr[o] = bv[o];
            for (int i = 0; i < I; ++i) {
                const double xi = xr[i];
                if (xi == 0.0) continue;
                const double* wr = &wv.data[static_cast<size_t>(i) * O];
                for (int o = 0; o < O; ++o) yr[o] += xi * wr[o];
            }
        }
        int out = push(std::move(y), nullptr, needs(x) || needs(W) || needs(b));
        if (nodes_[out].needs_grad)
            record([this, x, W, b, out, B, I, O] {
                const Tensor& go = grad_ro(out);
                const Tensor& xv = value(x);
                const Tensor& wv = value(W);
                if (needs(x)) {
                    Tensor& gx = grad_rw(x);
                    for (int r = 0; r < B; ++r) {
                        const double* gr = &go.data[static_cast<size_t>(r) * O];
                        double* gxr = &gx.data[static_cast<size_t>(r) * I];
                        for (int i = 0; i < I; ++i) {
                            const double* wr = &wv.data[static_cast<size_t>(i) * O];
                            double acc = 0.0;
                            for (int o = 0; o < O; ++o) acc += gr[o] * wr[o];
                            gxr[i] += acc;
                        }
                    }
                }
                if (needs(W)) {
                    Tensor& gw = grad_rw(W);
                    for (int r = 0; r < B; ++r) {
                        const double* xr = &xv.data[static_cast<size_t>(r) * I];
                        const double* gr = &go.data[static_cast<size_t>(r) * O];
                        for (int i = 0; i < I; ++i) {
                            const double xi = xr[i];
                            if (xi == 0.0) continue;
                            double* gwr = &gw.data[static_cast<size_t>(i) * O];
                            for (int o = 0; o < O; ++o) gwr[o] += xi * gr[o];
                        }
                    }
                }
                if (needs(b)) {
                    Tensor& gb = grad_rw(b);
                    for (int r = 0; r < B; ++r)
                        for (int o = 0; o < O; ++o) gb[o] += go.data[static_cast<size_t>(r) * O + o];
                }
            });
        return out;
    }

    int dense(int x, Param& W, Param& b) { return dense(x, leaf(W), leaf(b)); }

    // Valid (no padding) cross-correlation, 3x3 kernels. x:[B,C,H,W],
    // k:[F,C,3,3], optional bias:[F]. Output spatial dims floor((H-3)/s)+1.
    int conv2d(int x, int k, int bias, int stride) {
        if (stride <= 0) throw ConfigError("conv2d: stride must be positive, got " + std::to_string(stride));
        const Tensor& xv = value(x);
        const Tensor& kv = value(k);
        if (xv.ndim() != 4 || kv.ndim() != 4 || kv.dim(2) != 3 || kv.dim(3) != 3)
            throw ShapeError("conv2d: expected x[B,C,H,W], k[F,C,3,3]; got x" + xv.shape_str() +
                             " k" + kv.shape_str());
        if (xv.dim(1) != kv.dim(1))
            throw ShapeError("conv2d: channel mismatch between x" + xv.shape_str() + " and k" + kv.shape_str());
        if (xv.dim(2) < 3 || xv.dim(3) < 3)
            throw ShapeError("conv2d: spatial dims must be >= 3, got x" + xv.shape_str());
        const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int F = kv.dim(0);
        const int Ho = (H - 3) / stride + 1, Wo = (W - 3) / stride + 1;
        Tensor y({B, F, Ho, Wo});
        const double* bp = bias >= 0 ? value(bias).data.data() : nullptr;
        for (int b = 0; b < B; ++b)
            for (int f = 0; f < F; ++f) {
                double* yp = &y.data[((static_cast<size_t>(b) * F + f) * Ho) * Wo];
                const double bv = bp ? bp[f] : 0.0;
                for (int i = 0; i < Ho * Wo; ++i) yp[i] = bv;
                for (int c = 0; c < C; ++c) {
                    const double* kp = &kv.data[((static_cast<size_t>(f) * C + c) * 3) * 3];
                    const double* xp = &xv.data[((static_cast<size_t>(b) * C + c) * H) * W];
                    for (int oy = 0; oy < Ho; ++oy)
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int iy = oy * stride, ix = ox * stride;
                            double acc = 0.0;
                            for (int dy = 0; dy < 3; ++dy) {
                                const double* xr = xp + static_cast<size_t>(iy + dy) * W + ix;
                                const double* kr = kp + dy * 3;
                                acc += kr[0] * xr[0] + kr[1] * xr[1] + kr[2] * xr[2];
                            }
                            yp[oy * Wo + ox] += acc;
                        }
                }
            }
        bool ng = needs(x) || needs(k) || (bias >= 0 && needs(bias));
        int out = push(std::move(y), nullptr, ng);
        if (ng)
            record([this, x, k, bias, out, stride, B, C, H, W, F, Ho, Wo] {
                const Tensor& go = grad_ro(out);
                const Tensor& xv = value(x);
                const Tensor& kv = value(k);
                Tensor* gx = needs(x) ? &grad_rw(x) : nullptr;
                Tensor* gk = needs(k) ? &grad_rw(k) : nullptr;
                Tensor* gb = (bias >= 0 && needs(bias)) ? &grad_rw(bias) : nullptr;
                for (int b = 0; b < B; ++b)
                    for (int f = 0; f < F; ++f) {
                        const double* gp = &go.data[((static_cast<size_t>(b) * F + f) * Ho) * Wo];
                        if (gb)
                            for (int i = 0; i < Ho * Wo; ++i) gb->data[f] += gp[i];
                        for (int c = 0; c < C; ++c) {
                            const size_t koff = ((static_cast<size_t>(f) * C + c) * 3) * 3;
                            const size_t xoff = ((static_cast<size_t>(b) * C + c) * H) * W;
                            for (int oy = 0; oy < Ho; ++oy)
                                for (int ox = 0; ox < Wo; ++ox) {
                                    const double g = gp[oy * Wo + ox];
                                    if (g == 0.0) continue;
                                    const int iy = oy * stride, ix = ox * stride;
                                    for (int dy = 0; dy < 3; ++dy)
                                        for (int dx = 0; dx < 3; ++dx) {
                                            const size_t xi = xoff + static_cast<size_t>(iy + dy) * W + (ix + dx);
                                            if (gk) gk->data[koff + dy * 3 + dx] += g * xv.data[xi];
                                            if (gx) gx->data[xi] += g * kv.data[koff + dy * 3 + dx];
                                        }
                                }
                        }
                    }
            });
        return out;
    }

    int conv2d(int x, Param& k, Param& bias, int stride) { return conv2d(x, leaf(k), leaf(bias), stride); }

    int relu(int x) {
        const Tensor& xv = value(x);
        Tensor y(xv.shape);
        for (int64_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
        int out = push(std::move(y), nullptr, needs(x));
        if (nodes_[out].needs_grad)
            record([this, x, out] {
                const Tensor& go = grad_ro(out);
                const Tensor& xv = value(x);
                Tensor& gx = grad_rw(x);
                for (int64_t i = 0; i < xv.size(); ++i)
                    if (xv[i] > 0.0) gx[i] += go[i];
            });
        return out;
    }

    // Shape change only; data is row-major so the buffer is reused verbatim.
    int reshape(int x, std::vector<int> shape) {
        const Tensor& xv = value(x);
        if (Tensor::count(shape) != xv.size())
            throw ShapeError("reshape: cannot view " + xv.shape_str() + " as " + Tensor::shape_str(shape));
        Tensor y(std::move(shape), xv.data);
        int out = push(std::move(y), nullptr, needs(x));
        if (nodes_[out].needs_grad)
            record([this, x, out] {
                const Tensor& go = grad_ro(out);
                Tensor& gx = grad_rw(x);
                for (int64_t i = 0; i < go.size(); ++i) gx[i] += go[i];
            });
        return out;
    }

    int add(int a, int b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor y(av.shape);
        for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
        int out = push(std::move(y), nullptr, needs(a) || needs(b));
        if (nodes_[out].needs_grad)
            record([this, a, b, out] {
                const Tensor& go = grad_ro(out);
                if (needs(a)) {
                    Tensor& ga = grad_rw(a);
                    for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                }
                if (needs(b)) {
                    Tensor& gb = grad_rw(b);
                    for (int64_t i = 0; i < go.size(); ++i) gb[i] += go[i];
                }
            });
        return out;
    }

    int scale(int x, double c) {
        const Tensor& xv = value(x);
        Tensor y(xv.shape);
        for (int64_t i = 0; i < xv.size(); ++i) y[i] = c * xv[i];
        int out = push(std::move(y), nullptr, needs(x));
        if (nodes_[out].needs_grad)
            record([this, x, out, c] {
                const Tensor& go = grad_ro(out);
                Tensor& gx = grad_rw(x);
                for (int64_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
            });
        return out;
    }

    int exp(int x) {
        const Tensor& xv = value(x);
        Tensor y(xv.shape);
        for (int64_t i = 0; i < xv.size(); ++i) y[i] = std::exp(xv[i]);
        int out = push(std::move(y), nullptr, needs(x));
        if (nodes_[out].needs_grad)
            record([this, x, out] {
                const Tensor& go = grad_ro(out);
                const Tensor& yv = value(out);
                Tensor& gx = grad_rw(x);
                for (int64_t i = 0; i < go.size(); ++i) gx[i] += go[i] * yv[i];
            });
        return out;
    }

    int mul(int a, int b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor y(av.shape);
        for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
        int out = push(std::move(y), nullptr, needs(a) || needs(b));
        if (nodes_[out].needs_grad)
            record([this, a, b, out] {
                const Tensor& go = grad_ro(out);
                const Tensor& av = value(a);
                const Tensor& bv = value(b);
                if (needs(a)) {
                    Tensor& ga = grad_rw(a);
                    for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
                }
                if (needs(b)) {
                    Tensor& gb = grad_rw(b);
                    for (int64_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
                }
            });
        return out;
    }

    // Elementwise minimum; gradient follows the smaller operand (ties -> a).
    int min_elem(int a, int b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (!av.same_shape(bv))
            throw ShapeError("min_elem: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor y(av.shape);
        for (int64_t i = 0; i < av.size(); ++i) y[i] = av[i] <= bv[i] ? av[i] : bv[i];
        int out = push(std::move(y), nullptr, needs(a) || needs(b));
        if (nodes_[out].needs_grad)
            record([this, a, b, out] {
                const Tensor& go = grad_ro(out);
                const Tensor& av = value(a);
                const Tensor& bv = value(b);
                Tensor* ga = needs(a) ? &grad_rw(a) : nullptr;
                Tensor* gb = needs(b) ? &grad_rw(b) : nullptr;
                for (int64_t i = 0; i < go.size(); ++i) {
                    if (av[i] <= bv[i]) {
                        if (ga) (*ga)[i] += go[i];
                    } else if (gb) {
                        (*gb)[i] += go[i];
                    }
                }
            });
        return out;
    }

    // Clamp with pass-through gradient inside [lo,hi].
    int clamp(int x, double lo, double hi) {
        const Tensor& xv = value(x);
        Tensor y(xv.shape);
        for (int64_t i = 0; i < xv.size(); ++i) y[i] = xv[i] < lo ? lo : (xv[i] > hi ? hi : xv[i]);
        int out = push(std::move(y), nullptr, needs(x));
        if (nodes_[out].needs_grad)
            record([this, x, out, lo, hi] {
                const Tensor& go = grad_ro(out);
                const Tensor& xv = value(x);
                Tensor& gx = grad_rw(x);
                for (int64_t i = 0; i < go.size(); ++i)
                    if (xv[i] >= lo && xv[i] <= hi) gx[i] += go[i];
            });
        return out;
    }

    int sub(int a, int b) { return add(a, scale(b, -1.0)); }

    int reduce_mean(int x) {
        const Tensor& xv = value(x);
        if (xv.size() == 0) throw UsageError("reduce_mean: empty tensor");
        double s = 0.0;
        for (double v : xv.data) s += v;
        const double inv = 1.0 / static_cast<double>(xv.size());
        int out = push(Tensor::scalar(s * inv), nullptr, needs(x));
        if (nodes_[out].needs_grad)
            record([this, x, out, inv] {
                const double g = grad_ro(out)[0] * inv;
                Tensor& gx = grad_rw(x);
                for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
            });
        return out;
    }

    // Per-row log-probability of the taken action and policy entropy for a
    // categorical distribution given by logits[B,K]. Returns (logp[B], ent[B]).
    std::pair<int, int> categorical_logp_entropy(int logits, std::vector<int> actions) {
        const Tensor& lv = value(logits);
        if (lv.ndim() != 2) throw ShapeError("categorical_logp_entropy: logits must be [B,K], got " + lv.shape_str());
        const int B = lv.dim(0), K = lv.dim(1);
        if (static_cast<int>(actions.size()) != B)
            throw ShapeError("categorical_logp_entropy: " + std::to_string(actions.size()) +
                             " actions for batch " + std::to_string(B));
        for (int a : actions)
            if (a < 0 || a >= K) throw UsageError("categorical_logp_entropy: action " + std::to_string(a) +
                                                  " outside [0," + std::to_string(K) + ")");
        Tensor logp({B});
        Tensor ent({B});
        Tensor probs({B, K}); // cached for backward
        for (int b = 0; b < B; ++b) {
            const double* lr = &lv.data[static_cast<size_t>(b) * K];
            double m = lr[0];
            for (int k = 1; k < K; ++k) m = std::max(m, lr[k]);
            double sum = 0.0;
            for (int k = 0; k < K; ++k) sum += std::exp(lr[k] - m);
            const double lse = m + std::log(sum);
            double h = 0.0;
            double* pr = &probs.data[static_cast<size_t>(b) * K];
            for (int k = 0; k < K; ++k) {
                const double lp = lr[k] - lse;
                pr[k] = std::exp(lp);
                h -= pr[k] * lp;
            }
            logp[b] = lr[actions[static_cast<size_t>(b)]] - lse;
            ent[b] = h;
        }
        const bool ng = needs(logits);
        int lp_id = push(std::move(logp), nullptr, ng);
        int ent_id = push(std::move(ent), nullptr, ng);
        if (ng)
            record([this, logits, lp_id, ent_id, B, K,
                    actions = std::move(actions), probs = std::move(probs)] {
                const Tensor& glp = grad_ro(lp_id);
                const Tensor& gent = grad_ro(ent_id);
                const Tensor& ev = value(ent_id);
                Tensor& gl = grad_rw(logits);
                for (int b = 0; b < B; ++b) {
                    const double gL = glp[b];
                    const double gH = gent[b];
                    const double H = ev[b];
                    const double* pr = &probs.data[static_cast<size_t>(b) * K];
                    double* gr = &gl.data[static_cast<size_t>(b) * K];
                    const int a = actions[static_cast<size_t>(b)];
                    for (int k = 0; k < K; ++k) {
                        double g = -gL * pr[k];
                        if (k == a) g += gL;
                        if (gH != 0.0 && pr[k] > 0.0) g -= gH * pr[k] * (std::log(pr[k]) + H);
                        gr[k] += g;
                    }
                }
            });
        return {lp_id, ent_id};
    }

    // Diagonal-Gaussian log-density of fixed samples and policy entropy.
    // mean:[B,P], logstd:[P] (state-independent), sample:[B,P].
    // Returns (logp[B], ent[B]); entropy is identical across the batch.
    std::pair<int, int> gaussian_logp_entropy(int mean, int logstd, Tensor sample) {
        const Tensor& mv = value(mean);
        const Tensor& sv = value(logstd);
        if (mv.ndim() != 2) throw ShapeError("gaussian_logp_entropy: mean must be [B,P], got " + mv.shape_str());
        const int B = mv.dim(0), P = mv.dim(1);
        if (sv.size() != P)
            throw ShapeError("gaussian_logp_entropy: logstd" + sv.shape_str() + " incompatible with mean" + mv.shape_str());
        if (!sample.same_shape(mv))
            throw ShapeError("gaussian_logp_entropy: sample" + sample.shape_str() + " vs mean" + mv.shape_str());
        static const double LOG_2PI = std::log(2.0 * M_PI);
        Tensor logp({B});
        double ent_row = 0.0;
        for (int j = 0; j < P; ++j) ent_row += sv[j] + 0.5 * (LOG_2PI + 1.0);
        Tensor ent = Tensor::full({B}, ent_row);
        for (int b = 0; b < B; ++b) {
            const double* mr = &mv.data[static_cast<size_t>(b) * P];
            const double* xr = &sample.data[static_cast<size_t>(b) * P];
            double acc = 0.0;
            for (int j = 0; j < P; ++j) {
                const double inv_sigma = std::exp(-sv[j]);
                const double z = (xr[j] - mr[j]) * inv_sigma;
                acc += -0.5 * z * z - sv[j] - 0.5 * LOG_2PI;
            }
            logp[b] = acc;
        }
        const bool ng = needs(mean) || needs(logstd);
        int lp_id = push(std::move(logp), nullptr, ng);
        int ent_id = push(std::move(ent), nullptr, ng);
        if (ng)
            record([this, mean, logstd, lp_id, ent_id, B, P, sample = std::move(sample)] {
                const Tensor& glp = grad_ro(lp_id);
                const Tensor& gent = grad_ro(ent_id);
                const Tensor& mv = value(mean);
                const Tensor& sv = value(logstd);
                Tensor* gm = needs(mean) ? &grad_rw(mean) : nullptr;
                Tensor* gs = needs(logstd) ? &grad_rw(logstd) : nullptr;
                for (int b = 0; b < B; ++b) {
                    const double gL = glp[b];
                    const double* mr = &mv.data[static_cast<size_t>(b) * P];
                    const double* xr = &sample.data[static_cast<size_t>(b) * P];
                    for (int j = 0; j < P; ++j) {
                        const double inv_var = std::exp(-2.0 * sv[j]);
                        const double d = xr[j] - mr[j];
                        if (gm && gL != 0.0) gm->data[static_cast<size_t>(b) * P + j] += gL * d * inv_var;
                        if (gs) gs->data[j] += gL * (d * d * inv_var - 1.0) + gent[b];
                    }
                }
            });
        return {lp_id, ent_id};
    }

    // --- backward ----------------------------------------------------------

    // Reverse-mode accumulation from a scalar loss node.
    void backward(int loss) {
        if (ops_.empty()) throw UsageError("backward called without any recorded forward ops");
        const Tensor& lv = value(loss);
        if (lv.size() != 1) throw UsageError("backward requires a scalar loss node, got " + lv.shape_str());
        grad_rw(loss)[0] = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    // Gradient of a non-leaf node (mostly for tests). Empty until backward runs.
    const Tensor& grad(int id) const {
        const Node& n = nodes_[check(id)];
        return n.param ? n.param->grad : n.grad;
    }

  private:
    struct Node {
        Tensor owned;
        Tensor grad;
        Param* param = nullptr;
        bool needs_grad = false;
    };

    int push(Tensor v, Param* p, bool needs_grad) {
        Node n;
        n.owned = std::move(v);
        n.param = p;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    bool needs(int id) const { return nodes_[check(id)].needs_grad; }

    size_t check(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw UsageError("invalid graph node id " + std::to_string(id));
        return static_cast<size_t>(id);
    }

    const Tensor& grad_ro(int id) {
        return grad_rw(id); // ensures allocation so untouched outputs read as zero
    }

    Tensor& grad_rw(int id) {
        Node& n = nodes_[check(id)];
        if (n.param) return n.param->grad;
        if (n.grad.size() == 0) n.grad = Tensor::zeros(n.owned.shape);
        return n.grad;
    }

    std::vector<Node> nodes_;
    std::vector<std::function<void()>> ops_;
};

} // namespace sigg
