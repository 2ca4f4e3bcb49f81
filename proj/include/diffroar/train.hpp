#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/data.hpp"
#include "diffroar/nn.hpp"
#include "diffroar/rng.hpp"

namespace diffroar {

/// SGD recipe: momentum, l2 weight decay, step-decayed learning rate,
/// early stop on full-train cross-entropy.
struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 256;
    double lr_decay_factor = 0.75;
    std::size_t lr_decay_every = 20;  // epochs
    std::size_t max_epochs = 500;
    double early_stop_loss = 1e-3;
    std::uint64_t seed = 0;
    std::string log_path;  // optional epoch CSV: epoch,train_loss,train_acc,test_acc,lr

    void validate() const {
        if (lr <= 0.0 || batch_size == 0 || lr_decay_factor <= 0.0 || lr_decay_every == 0)
            throw std::invalid_argument("TrainConfig: values must be positive");
        if (momentum < 0.0 || weight_decay < 0.0 || early_stop_loss < 0.0)
            throw std::invalid_argument("TrainConfig: values must be non-negative");
    }
};

/// PGD attack configuration: 8 steps of size eps/4, no random start.
struct AdvConfig {
    enum class Norm { L2, Linf };
    Norm norm = Norm::Linf;
    double epsilon = 0.1;
    std::size_t steps = 8;
    std::optional<double> step_size;  // defaults to epsilon/4

    double effective_step() const { return step_size.value_or(epsilon / 4.0); }

    void validate() const {
        if (epsilon < 0.0) throw std::invalid_argument("AdvConfig: epsilon must be >= 0");
        if (steps == 0) throw std::invalid_argument("AdvConfig: steps must be >= 1");
    }
};

/// Projected gradient ascent on the loss inside the epsilon ball around
/// x. Linf uses sign steps with coordinate clipping; L2 uses normalized
/// gradient steps with radial projection. If clamp is set (image data),
/// iterates are clipped to that range as well.
inline std::vector<double> pgd_attack(const MlpParams& params, const std::vector<double>& x,
                                      int label, const AdvConfig& adv,
                                      std::optional<std::pair<double, double>> clamp = {},
                                      std::optional<std::size_t> steps_override = {}) {
    adv.validate();
    if (adv.epsilon == 0.0) return x;
    const double step = adv.effective_step();
    const std::size_t steps = steps_override.value_or(adv.steps);
    std::vector<double> xa = x;
    for (std::size_t it = 0; it < steps; ++it) {
        Gradients g = backprop(params, xa, label);
        if (adv.norm == AdvConfig::Norm::Linf) {
            for (std::size_t i = 0; i < xa.size(); ++i) {
                double s = g.input[i] > 0.0 ? 1.0 : (g.input[i] < 0.0 ? -1.0 : 0.0);
                xa[i] += step * s;
            }
        } else {
            double n2 = 0.0;
            for (double v : g.input) n2 += v * v;
            double n = std::sqrt(n2);
            if (n > 0.0)
                for (std::size_t i = 0; i < xa.size(); ++i) xa[i] += step * g.input[i] / n;
        }
        // project onto the epsilon ball around the clean point
        if (adv.norm == AdvConfig::Norm::Linf) {
            for (std::size_t i = 0; i < xa.size(); ++i) {
                double lo = x[i] - adv.epsilon, hi = x[i] + adv.epsilon;
                if (xa[i] < lo) xa[i] = lo;
                if (xa[i] > hi) xa[i] = hi;
            }
        } else {
            double d2 = 0.0;
            for (std::size_t i = 0; i < xa.size(); ++i) {
                double d = xa[i] - x[i];
                d2 += d * d;
            }
            double d = std::sqrt(d2);
            if (d > adv.epsilon)
                for (std::size_t i = 0; i < xa.size(); ++i)
                    xa[i] = x[i] + (xa[i] - x[i]) * (adv.epsilon / d);
        }
        if (clamp)
            for (auto& v : xa) {
                if (v < clamp->first) v = clamp->first;
                if (v > clamp->second) v = clamp->second;
            }
    }
    return xa;
}

/// Accuracy on a dataset; with adv set, robust accuracy under PGD with
/// twice the training step count.
inline double evaluate(const MlpParams& params, const Dataset& ds,
                       std::optional<AdvConfig> adv = {}) {
    if (ds.examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : ds.examples) {
        std::vector<double> x = ex.features;
        if (adv && adv->epsilon > 0.0)
            x = pgd_attack(params, x, ex.label, *adv, ds.pixel_range, 2 * adv->steps);
        if (predict(logits(params, x)) == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace detail {

inline double full_loss(const MlpParams& p, const Dataset& ds,
                        const std::optional<AdvConfig>& adv) {
    double total = 0.0;
    for (const auto& ex : ds.examples) {
        std::vector<double> x = ex.features;
        if (adv && adv->epsilon > 0.0) x = pgd_attack(p, x, ex.label, *adv, ds.pixel_range);
        total += loss(p, x, ex.label);
    }
    return total / static_cast<double>(ds.size());
}

inline MlpParams train_impl(const std::vector<std::size_t>& arch, const Dataset& train_set,
                            const TrainConfig& cfg, const std::optional<AdvConfig>& adv,
                            const Dataset* test_set) {
    cfg.validate();
    train_set.validate();
    if (adv) adv->validate();

    Rng root(cfg.seed);
    MlpParams p = init_params(arch, root.derive("init"));
    Rng shuffle_rng = root.derive("shuffle");

    std::vector<MlpParams::Layer> velocity;
    for (const auto& layer : p.layers) {
        MlpParams::Layer v;
        v.weight = Matrix(layer.weight.rows, layer.weight.cols);
        v.bias.assign(layer.bias.size(), 0.0);
        velocity.push_back(std::move(v));
    }

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw std::runtime_error("cannot open " + cfg.log_path);
        log << "epoch,train_loss,train_acc,test_acc,lr\n";
    }

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double lr = cfg.lr;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        if (epoch > 0 && epoch % cfg.lr_decay_every == 0) lr *= cfg.lr_decay_factor;
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            double scale = 1.0 / static_cast<double>(end - start);
            std::vector<MlpParams::Layer> gsum;
            for (const auto& layer : p.layers) {
                MlpParams::Layer g;
                g.weight = Matrix(layer.weight.rows, layer.weight.cols);
                g.bias.assign(layer.bias.size(), 0.0);
                gsum.push_back(std::move(g));
            }
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = train_set.examples[order[i]];
                std::vector<double> x = ex.features;
                if (adv && adv->epsilon > 0.0)
                    x = pgd_attack(p, x, ex.label, *adv, train_set.pixel_range);
                Gradients g = backprop(p, x, ex.label);
                for (std::size_t l = 0; l < p.depth(); ++l) {
                    auto& gw = gsum[l].weight.a;
                    const auto& sw = g.layers[l].weight.a;
                    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += sw[k];
                    for (std::size_t k = 0; k < gsum[l].bias.size(); ++k)
                        gsum[l].bias[k] += g.layers[l].bias[k];
                }
            }
            for (std::size_t l = 0; l < p.depth(); ++l) {
                auto& W = p.layers[l].weight.a;
                auto& b = p.layers[l].bias;
                auto& vW = velocity[l].weight.a;
                auto& vb = velocity[l].bias;
                const auto& gW = gsum[l].weight.a;
                const auto& gb = gsum[l].bias;
                for (std::size_t k = 0; k < W.size(); ++k) {
                    double grad = gW[k] * scale + cfg.weight_decay * W[k];
                    vW[k] = cfg.momentum * vW[k] + grad;
                    W[k] -= lr * vW[k];
                    if (!std::isfinite(W[k]))
                        throw std::runtime_error("training diverged at epoch " +
                                                 std::to_string(epoch));
                }
                for (std::size_t k = 0; k < b.size(); ++k) {
                    double grad = gb[k] * scale;  // no decay on biases
                    vb[k] = cfg.momentum * vb[k] + grad;
                    b[k] -= lr * vb[k];
                }
            }
        }
        double train_loss = full_loss(p, train_set, adv);
        if (!std::isfinite(train_loss))
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
        if (log) {
            double train_acc = evaluate(p, train_set);
            double test_acc = test_set ? evaluate(p, *test_set) : 0.0;
            log << epoch << ',' << train_loss << ',' << train_acc << ',' << test_acc << ','
                << lr << '\n';
        }
        if (train_loss < cfg.early_stop_loss) break;
    }
    return p;
}

}  // namespace detail

/// Minibatch SGD with the standard recipe; deterministic given (cfg,
/// seed).
inline MlpParams train_standard(const std::vector<std::size_t>& arch, const Dataset& train_set,
                                const TrainConfig& cfg, const Dataset* test_set = nullptr) {
    return detail::train_impl(arch, train_set, cfg, std::nullopt, test_set);
}

/// PGD adversarial training: every minibatch example is replaced by its
/// PGD perturbation before the gradient step; early stop is on
/// adversarial train loss.
inline MlpParams train_adversarial(const std::vector<std::size_t>& arch, const Dataset& train_set,
                                   const TrainConfig& cfg, const AdvConfig& adv,
                                   const Dataset* test_set = nullptr) {
    return detail::train_impl(arch, train_set, cfg, adv, test_set);
}

}  // namespace diffroar
