#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/rng.hpp"

namespace diffroar {

/// Dense row-major matrix, just enough for MLP math.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

/// ReLU MLP parameters: logits = W_L ReLU(... ReLU(W_1 x + b_1) ...) + b_L.
/// A single output (C = 1) means a binary logistic model with y in {-1,+1}.
struct MlpParams {
    struct Layer {
        Matrix weight;  // out x in
        std::vector<double> bias;
    };
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t output_dim() const { return layers.back().weight.rows; }
    std::size_t depth() const { return layers.size(); }
};

/// Cached intermediates of one forward pass. pre[l] = W_l a_{l-1} + b_l,
/// act[l] = ReLU(pre[l]) for hidden layers; act of the last layer is the
/// logit vector itself.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;

    const std::vector<double>& logits() const { return pre.back(); }
};

struct Gradients {
    std::vector<MlpParams::Layer> layers;  // same shapes as params
    std::vector<double> input;             // d loss / d x
};

enum class GradientTarget { LossAtPredictedLabel, LogitOfPredictedLabel };

inline double relu(double v) { return v > 0.0 ? v : 0.0; }
// Subgradient convention: derivative at exactly 0 is 0.
inline double relu_grad(double v) { return v > 0.0 ? 1.0 : 0.0; }

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// He-initialized parameters: weights N(0, 2/fan_in), biases zero.
inline MlpParams init_params(const std::vector<std::size_t>& arch, Rng rng) {
    if (arch.size() < 2) throw std::invalid_argument("init_params: need at least input and output sizes");
    for (std::size_t s : arch)
        if (s == 0) throw std::invalid_argument("init_params: zero-width layer");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
        MlpParams::Layer layer;
        layer.weight = Matrix(arch[l + 1], arch[l]);
        layer.bias.assign(arch[l + 1], 0.0);
        double stddev = std::sqrt(2.0 / static_cast<double>(arch[l]));
        for (auto& w : layer.weight.a) w = rng.normal(0.0, stddev);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

inline ForwardTrace forward(const MlpParams& p, const std::vector<double>& x) {
    if (x.size() != p.input_dim()) throw std::invalid_argument("forward: input dimension mismatch");
    ForwardTrace t;
    t.pre.resize(p.depth());
    t.act.resize(p.depth());
    const std::vector<double>* in = &x;
    for (std::size_t l = 0; l < p.depth(); ++l) {
        const auto& W = p.layers[l].weight;
        const auto& b = p.layers[l].bias;
        auto& z = t.pre[l];
        z.assign(W.rows, 0.0);
        for (std::size_t r = 0; r < W.rows; ++r) {
            double s = b[r];
            const double* wr = &W.a[r * W.cols];
            for (std::size_t c = 0; c < W.cols; ++c) s += wr[c] * (*in)[c];
            z[r] = s;
        }
        if (l + 1 < p.depth()) {
            auto& a = t.act[l];
            a.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = relu(z[i]);
            in = &a;
        } else {
            t.act[l] = z;  // output layer is linear
        }
    }
    return t;
}

inline std::vector<double> logits(const MlpParams& p, const std::vector<double>& x) {
    return forward(p, x).logits();
}

/// Predicted class: argmax logit for C >= 2; sign of the logit for C = 1
/// (class 1 iff logit >= 0).
inline int predict(const std::vector<double>& logit_vec) {
    if (logit_vec.size() == 1) return logit_vec[0] >= 0.0 ? 1 : 0;
    std::size_t best = 0;
    for (std::size_t i = 1; i < logit_vec.size(); ++i)
        if (logit_vec[i] > logit_vec[best]) best = i;
    return static_cast<int>(best);
}

/// Logistic loss log(1+exp(-y f)) for C = 1 (label in {0,1} mapped to
/// y in {-1,+1}); softmax cross-entropy for C >= 2.
inline double loss_from_logits(const std::vector<double>& logit_vec, int label) {
    if (logit_vec.size() == 1) {
        if (label != 0 && label != 1) throw std::invalid_argument("loss: binary label must be 0 or 1");
        double y = label == 1 ? 1.0 : -1.0;
        double m = -y * logit_vec[0];
        // log(1+exp(m)) computed stably
        return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    }
    if (label < 0 || static_cast<std::size_t>(label) >= logit_vec.size())
        throw std::invalid_argument("loss: label out of range");
    double mx = logit_vec[0];
    for (double v : logit_vec) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logit_vec) sum += std::exp(v - mx);
    return std::log(sum) - (logit_vec[static_cast<std::size_t>(label)] - mx);
}

inline double loss(const MlpParams& p, const std::vector<double>& x, int label) {
    return loss_from_logits(logits(p, x), label);
}

namespace detail {

// Gradient of the loss w.r.t. the logits.
inline std::vector<double> loss_logit_grad(const std::vector<double>& logit_vec, int label) {
    std::vector<double> g(logit_vec.size());
    if (logit_vec.size() == 1) {
        double y = label == 1 ? 1.0 : -1.0;
        g[0] = -y * sigmoid(-y * logit_vec[0]);
        return g;
    }
    double mx = logit_vec[0];
    for (double v : logit_vec) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logit_vec) sum += std::exp(v - mx);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::exp(logit_vec[i] - mx) / sum;
    g[static_cast<std::size_t>(label)] -= 1.0;
    return g;
}

// Reverse pass from a seed gradient on the logits. Fills param gradients
// when grads != nullptr and always returns the input gradient.
inline std::vector<double> backward(const MlpParams& p, const std::vector<double>& x,
                                    const ForwardTrace& t, std::vector<double> delta,
                                    Gradients* grads) {
    if (grads) {
        grads->layers.resize(p.depth());
        for (std::size_t l = 0; l < p.depth(); ++l) {
            grads->layers[l].weight = Matrix(p.layers[l].weight.rows, p.layers[l].weight.cols);
            grads->layers[l].bias.assign(p.layers[l].bias.size(), 0.0);
        }
    }
    for (std::size_t li = p.depth(); li-- > 0;) {
        const auto& W = p.layers[li].weight;
        const std::vector<double>& below = li == 0 ? x : t.act[li - 1];
        if (grads) {
            auto& gW = grads->layers[li].weight;
            auto& gb = grads->layers[li].bias;
            for (std::size_t r = 0; r < W.rows; ++r) {
                gb[r] = delta[r];
                double* gwr = &gW.a[r * W.cols];
                for (std::size_t c = 0; c < W.cols; ++c) gwr[c] = delta[r] * below[c];
            }
        }
        std::vector<double> next(W.cols, 0.0);
        for (std::size_t r = 0; r < W.rows; ++r) {
            const double* wr = &W.a[r * W.cols];
            double d = delta[r];
            if (d == 0.0) continue;
            for (std::size_t c = 0; c < W.cols; ++c) next[c] += d * wr[c];
        }
        if (li > 0)
            for (std::size_t c = 0; c < W.cols; ++c) next[c] *= relu_grad(t.pre[li - 1][c]);
        delta = std::move(next);
    }
    return delta;
}

}  // namespace detail

/// Exact reverse-mode gradients of the loss w.r.t. all parameters and
/// the input.
inline Gradients backprop(const MlpParams& p, const std::vector<double>& x, int label) {
    ForwardTrace t = forward(p, x);
    Gradients g;
    g.input = detail::backward(p, x, t, detail::loss_logit_grad(t.logits(), label), &g);
    return g;
}

/// Gradient w.r.t. x of either the loss at the predicted label or the
/// predicted label's logit.
inline std::vector<double> input_gradient(const MlpParams& p, const std::vector<double>& x,
                                          GradientTarget target) {
    ForwardTrace t = forward(p, x);
    int pred = predict(t.logits());
    std::vector<double> seed;
    if (target == GradientTarget::LossAtPredictedLabel) {
        seed = detail::loss_logit_grad(t.logits(), pred);
    } else {
        seed.assign(t.logits().size(), 0.0);
        seed[t.logits().size() == 1 ? 0 : static_cast<std::size_t>(pred)] = 1.0;
    }
    return detail::backward(p, x, t, std::move(seed), nullptr);
}

/// Guided backprop on the predicted label's logit: each ReLU passes a
/// gradient only if the unit was active and the upstream gradient is
/// positive.
inline std::vector<double> guided_backprop(const MlpParams& p, const std::vector<double>& x) {
    ForwardTrace t = forward(p, x);
    int pred = predict(t.logits());
    std::vector<double> delta(t.logits().size(), 0.0);
    delta[t.logits().size() == 1 ? 0 : static_cast<std::size_t>(pred)] = 1.0;
    for (std::size_t li = p.depth(); li-- > 0;) {
        const auto& W = p.layers[li].weight;
        std::vector<double> next(W.cols, 0.0);
        for (std::size_t r = 0; r < W.rows; ++r) {
            const double* wr = &W.a[r * W.cols];
            double d = delta[r];
            if (d == 0.0) continue;
            for (std::size_t c = 0; c < W.cols; ++c) next[c] += d * wr[c];
        }
        if (li > 0)
            for (std::size_t c = 0; c < W.cols; ++c) {
                if (!(t.pre[li - 1][c] > 0.0) || !(next[c] > 0.0)) next[c] = 0.0;
            }
        delta = std::move(next);
    }
    return delta;
}

// ---------------------------------------------------------------------------
// Checkpoint IO: magic "DRNN", u32 version, u32 layer count, then per
// layer u32 rows, u32 cols, rows*cols little-endian f64 weights, rows f64
// biases.

inline void save_params(const MlpParams& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    auto w32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto w64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    os.write("DRNN", 4);
    w32(1);
    w32(static_cast<std::uint32_t>(p.depth()));
    for (const auto& layer : p.layers) {
        w32(static_cast<std::uint32_t>(layer.weight.rows));
        w32(static_cast<std::uint32_t>(layer.weight.cols));
        for (double v : layer.weight.a) w64(v);
        for (double v : layer.bias) w64(v);
    }
    if (!os) throw std::runtime_error("write failure: " + path);
}

inline MlpParams load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "DRNN") throw std::runtime_error("checkpoint: wrong magic");
    auto r32 = [&]() {
        std::uint32_t v;
        is.read(reinterpret_cast<char*>(&v), 4);
        if (!is) throw std::runtime_error("checkpoint: truncated");
        return v;
    };
    auto r64 = [&]() {
        double v;
        is.read(reinterpret_cast<char*>(&v), 8);
        if (!is) throw std::runtime_error("checkpoint: truncated");
        return v;
    };
    if (r32() != 1) throw std::runtime_error("checkpoint: unknown version");
    MlpParams p;
    std::size_t depth = r32();
    for (std::size_t l = 0; l < depth; ++l) {
        MlpParams::Layer layer;
        std::size_t rows = r32(), cols = r32();
        layer.weight = Matrix(rows, cols);
        for (auto& v : layer.weight.a) v = r64();
        layer.bias.resize(rows);
        for (auto& v : layer.bias) v = r64();
        p.layers.push_back(std::move(layer));
    }
    return p;
}

}  // namespace diffroar
