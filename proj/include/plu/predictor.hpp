#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "plu/error.hpp"
#include "plu/rng.hpp"

namespace plu {

// Dense layer, row-major weights of shape (out, in).
struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;
    std::vector<double> b;

    double& weight(int o, int i) { return w[static_cast<std::size_t>(o) * in + i]; }
    double weight(int o, int i) const { return w[static_cast<std::size_t>(o) * in + i]; }

    friend bool operator==(const Layer&, const Layer&) = default;
};

// One buffer per parameter tensor of an Mlp.
struct Gradients {
    std::vector<Layer> layers;

    bool congruent_with(const std::vector<Layer>& other) const {
        if (layers.size() != other.size()) return false;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].w.size() != other[l].w.size() || layers[l].b.size() != other[l].b.size()) return false;
        }
        return true;
    }
    void add_scaled(const Gradients& g, double s) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (std::size_t i = 0; i < layers[l].w.size(); ++i) layers[l].w[i] += s * g.layers[l].w[i];
            for (std::size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += s * g.layers[l].b[i];
        }
    }
    void scale(double s) {
        for (auto& L : layers) {
            for (auto& v : L.w) v *= s;
            for (auto& v : L.b) v *= s;
        }
    }
    bool all_finite() const {
        for (const auto& L : layers) {
            for (double v : L.w) if (!std::isfinite(v)) return false;
            for (double v : L.b) if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

// Fully connected network with ReLU hidden activations and linear logits.
class Mlp {
public:
    Mlp() = default;

    // sizes = {input, hidden..., outputs}; all parameters start at zero.
    explicit Mlp(std::vector<int> sizes) {
        if (sizes.size() < 2) throw InvalidInput("Mlp needs at least input and output sizes");
        for (int s : sizes) if (s < 1) throw InvalidInput("Mlp layer sizes must be >= 1");
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            Layer L;
            L.in = sizes[l];
            L.out = sizes[l + 1];
            L.w.assign(static_cast<std::size_t>(L.in) * L.out, 0.0);
            L.b.assign(static_cast<std::size_t>(L.out), 0.0);
            layers_.push_back(std::move(L));
        }
    }

    int input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
    int output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& L : layers_) n += L.w.size() + L.b.size();
        return n;
    }

    Gradients zero_gradients() const {
        Gradients g{layers_};
        g.scale(0.0);
        return g;
    }

    bool all_finite() const { return Gradients{layers_}.all_finite(); }

    std::vector<double> forward(std::span<const double> x) const {
        std::vector<std::vector<double>> acts;
        return forward_cached(x, acts);
    }

    // acts[0] = input, acts[l] = post-activation output of layer l-1.
    std::vector<double> forward_cached(std::span<const double> x, std::vector<std::vector<double>>& acts) const {
        if (static_cast<int>(x.size()) != input_dim()) {
            throw ShapeError("forward: expected input of dimension " + std::to_string(input_dim()) + ", got " +
                             std::to_string(x.size()));
        }
        acts.assign(1, std::vector<double>(x.begin(), x.end()));
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& L = layers_[l];
            const auto& in = acts.back();
            std::vector<double> z(static_cast<std::size_t>(L.out));
            for (int o = 0; o < L.out; ++o) {
                double s = L.b[o];
                const double* row = &L.w[static_cast<std::size_t>(o) * L.in];
                for (int i = 0; i < L.in; ++i) s += row[i] * in[i];
                z[o] = s;
            }
            if (l + 1 < layers_.size()) {
                for (auto& v : z) v = v > 0.0 ? v : 0.0;
            }
            acts.push_back(std::move(z));
        }
        return acts.back();
    }

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    std::vector<Layer> layers_;
};

inline constexpr int kBackgroundLogit = 0;
inline constexpr int kForegroundLogit = 1;

// Binary FG/BG predictor over proposal features.
using Predictor = Mlp;

// Glorot-uniform weights, zero biases.
inline void glorot_init(Mlp& net, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {stream::init}));
    for (auto& L : net.layers()) {
        const double a = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        for (auto& v : L.w) v = rng.uniform(-a, a);
        for (auto& v : L.b) v = 0.0;
    }
}

inline Predictor init_predictor(int d, int h1, int h2, std::uint64_t seed) {
    if (d < 1 || h1 < 1 || h2 < 1) throw InvalidInput("init_predictor: sizes must be >= 1");
    Predictor net({d, h1, h2, 2});
    glorot_init(net, seed);
    return net;
}

// Softmax restricted to the active outputs; inactive entries get probability 0.
inline std::vector<double> softmax(std::span<const double> logits, std::span<const char> active = {}) {
    auto on = [&](std::size_t k) { return active.empty() || active[k]; };
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) if (on(k)) m = std::max(m, logits[k]);
    std::vector<double> p(logits.size(), 0.0);
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (!on(k)) continue;
        p[k] = std::exp(logits[k] - m);
        z += p[k];
    }
    for (auto& v : p) v /= z;
    return p;
}

// -log softmax(logits)[label], computed with log-sum-exp.
inline double cross_entropy(std::span<const double> logits, int label, std::span<const char> active = {}) {
    auto on = [&](std::size_t k) { return active.empty() || active[k]; };
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) if (on(k)) m = std::max(m, logits[k]);
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) if (on(k)) z += std::exp(logits[k] - m);
    return std::max(0.0, m + std::log(z) - logits[static_cast<std::size_t>(label)]);
}

inline double foreground_probability(const Predictor& net, std::span<const double> x) {
    const auto logits = net.forward(x);
    return softmax(logits)[kForegroundLogit];
}

struct Sample {
    std::span<const double> x;
    int label = 0;
    double weight = 1.0;
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients grads;
};

// Weighted mean cross-entropy, normalised by max(sum of weights, 1), and its
// exact gradient. Weight 0 masks a sample out entirely.
inline LossAndGradients backward(const Mlp& net, std::span<const Sample> batch, std::span<const char> active = {}) {
    if (batch.empty()) throw InvalidInput("backward: empty batch");
    if (!active.empty() && static_cast<int>(active.size()) != net.output_dim())
        throw ShapeError("backward: active mask size mismatch");

    double wsum = 0.0;
    for (const auto& s : batch) {
        if (!(s.weight >= 0.0) || !std::isfinite(s.weight)) throw InvalidInput("backward: weights must be >= 0");
        if (s.label < 0 || s.label >= net.output_dim()) throw InvalidInput("backward: label out of range");
        if (!active.empty() && !active[static_cast<std::size_t>(s.label)])
            throw InvalidInput("backward: label on an inactive output");
        wsum += s.weight;
    }
    const double norm = std::max(wsum, 1.0);

    LossAndGradients out{0.0, net.zero_gradients()};
    if (wsum == 0.0) return out;

    const auto& layers = net.layers();
    std::vector<std::vector<double>> acts;
    for (const auto& s : batch) {
        if (s.weight == 0.0) continue;
        const auto logits = net.forward_cached(s.x, acts);
        out.loss += s.weight * cross_entropy(logits, s.label, active);

        auto p = softmax(logits, active);
        std::vector<double> delta(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            delta[k] = (p[k] - (static_cast<int>(k) == s.label ? 1.0 : 0.0)) * s.weight / norm;
            if (!active.empty() && !active[k]) delta[k] = 0.0;
        }
        for (std::size_t l = layers.size(); l-- > 0;) {
            const Layer& L = layers[l];
            Layer& G = out.grads.layers[l];
            const auto& in = acts[l];
            for (int o = 0; o < L.out; ++o) {
                const double dz = delta[o];
                if (dz == 0.0) continue;
                G.b[o] += dz;
                double* grow = &G.w[static_cast<std::size_t>(o) * L.in];
                for (int i = 0; i < L.in; ++i) grow[i] += dz * in[i];
            }
            if (l == 0) break;
            std::vector<double> prev(static_cast<std::size_t>(L.in), 0.0);
            for (int o = 0; o < L.out; ++o) {
                const double dz = delta[o];
                if (dz == 0.0) continue;
                const double* row = &L.w[static_cast<std::size_t>(o) * L.in];
                for (int i = 0; i < L.in; ++i) prev[i] += row[i] * dz;
            }
            // ReLU derivative; acts[l] holds the post-activation of layer l-1.
            for (int i = 0; i < L.in; ++i) if (!(in[i] > 0.0)) prev[i] = 0.0;
            delta = std::move(prev);
        }
    }
    out.loss /= norm;
    return out;
}

struct OptimState {
    double lr = 0.01;
    double momentum = 0.9;
    Gradients velocity;

    friend bool operator==(const OptimState& a, const OptimState& b) {
        return a.lr == b.lr && a.momentum == b.momentum && a.velocity.layers == b.velocity.layers;
    }
};

// v <- momentum*v + g;  p <- p - lr*v
inline void sgd_step(Mlp& net, const Gradients& grads, OptimState& opt) {
    if (!grads.congruent_with(net.layers())) throw ShapeError("sgd_step: gradient shape mismatch");
    if (!grads.all_finite()) throw NumericalError("sgd_step: non-finite gradient");
    if (opt.velocity.layers.empty()) opt.velocity = net.zero_gradients();
    if (!opt.velocity.congruent_with(net.layers())) throw ShapeError("sgd_step: velocity shape mismatch");

    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto update = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                v[i] = opt.momentum * v[i] + g[i];
                p[i] -= opt.lr * v[i];
            }
        };
        update(layers[l].w, opt.velocity.layers[l].w, grads.layers[l].w);
        update(layers[l].b, opt.velocity.layers[l].b, grads.layers[l].b);
    }
    if (!net.all_finite()) throw NumericalError("sgd_step: parameters became non-finite");
}

} // namespace plu
