#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/data.hpp"
#include "diffroar/nn.hpp"
#include "diffroar/rng.hpp"

namespace diffroar {

struct AttributionScores {
    std::vector<double> scores;
    std::string scheme_id;
    GradientTarget target = GradientTarget::LogitOfPredictedLabel;
};

/// perm[i] = coordinate with the i-th largest score. Ties broken by
/// ascending coordinate index.
struct AttributionOrder {
    std::vector<std::size_t> perm;

    AttributionOrder reversed() const {
        AttributionOrder r{perm};
        std::reverse(r.perm.begin(), r.perm.end());
        return r;
    }
};

inline AttributionOrder rank(const AttributionScores& s) {
    for (double v : s.scores)
        if (std::isnan(v)) throw std::invalid_argument("rank: NaN score");
    AttributionOrder o;
    o.perm.resize(s.scores.size());
    std::iota(o.perm.begin(), o.perm.end(), 0);
    std::stable_sort(o.perm.begin(), o.perm.end(), [&](std::size_t a, std::size_t b) {
        return s.scores[a] > s.scores[b];
    });
    return o;
}

/// Input-gradient scores: |g_i|, or sgn(x_i)*g_i for the signed variant.
inline AttributionScores grad_scores(const MlpParams& p, const std::vector<double>& x,
                                     GradientTarget target, bool signed_variant = false) {
    std::vector<double> g = input_gradient(p, x, target);
    AttributionScores s;
    s.scheme_id = signed_variant ? "signed_grad" : "grad";
    s.target = target;
    s.scores.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (signed_variant) {
            double sgn = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
            s.scores[i] = sgn * g[i];
        } else {
            s.scores[i] = std::abs(g[i]);
        }
    }
    return s;
}

/// Mean input gradient over Gaussian perturbations of x, then magnitude
/// scoring. Signed gradients are averaged before the absolute value.
inline AttributionScores smoothgrad(const MlpParams& p, const std::vector<double>& x,
                                    GradientTarget target, double sigma,
                                    std::size_t n_samples, Rng rng) {
    if (n_samples == 0) throw std::invalid_argument("smoothgrad: n_samples must be >= 1");
    std::vector<double> mean(x.size(), 0.0);
    std::vector<double> xp(x.size());
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t i = 0; i < x.size(); ++i) xp[i] = x[i] + sigma * rng.normal();
        std::vector<double> g = input_gradient(p, xp, target);
        for (std::size_t i = 0; i < x.size(); ++i) mean[i] += g[i];
    }
    AttributionScores out;
    out.scheme_id = "smoothgrad";
    out.target = target;
    out.scores.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out.scores[i] = std::abs(mean[i] / static_cast<double>(n_samples));
    return out;
}

/// Midpoint-rule integrated gradients from a baseline (default 0), then
/// magnitude scoring.
inline AttributionScores integrated_gradients(const MlpParams& p, const std::vector<double>& x,
                                              GradientTarget target, std::size_t n_steps,
                                              const std::vector<double>* baseline = nullptr) {
    if (n_steps == 0) throw std::invalid_argument("integrated_gradients: n_steps must be >= 1");
    std::vector<double> base(x.size(), 0.0);
    if (baseline) base = *baseline;
    std::vector<double> mean(x.size(), 0.0);
    std::vector<double> xi(x.size());
    for (std::size_t s = 0; s < n_steps; ++s) {
        double t = (static_cast<double>(s) + 0.5) / static_cast<double>(n_steps);
        for (std::size_t i = 0; i < x.size(); ++i) xi[i] = base[i] + t * (x[i] - base[i]);
        std::vector<double> g = input_gradient(p, xi, target);
        for (std::size_t i = 0; i < x.size(); ++i) mean[i] += g[i];
    }
    AttributionScores out;
    out.scheme_id = "integrated_gradients";
    out.target = target;
    out.scores.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out.scores[i] = std::abs((x[i] - base[i]) * mean[i] / static_cast<double>(n_steps));
    return out;
}

/// Signed integrated-gradients terms (for the completeness check:
/// they sum to f(x) - f(baseline) up to quadrature error).
inline std::vector<double> integrated_gradients_terms(const MlpParams& p,
                                                      const std::vector<double>& x,
                                                      GradientTarget target,
                                                      std::size_t n_steps) {
    std::vector<double> mean(x.size(), 0.0);
    std::vector<double> xi(x.size());
    for (std::size_t s = 0; s < n_steps; ++s) {
        double t = (static_cast<double>(s) + 0.5) / static_cast<double>(n_steps);
        for (std::size_t i = 0; i < x.size(); ++i) xi[i] = t * x[i];
        std::vector<double> g = input_gradient(p, xi, target);
        for (std::size_t i = 0; i < x.size(); ++i) mean[i] += g[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] = x[i] * mean[i] / static_cast<double>(n_steps);
    return mean;
}

namespace detail {

inline double scalar_target(const MlpParams& p, const std::vector<double>& x,
                            GradientTarget target, int pred) {
    ForwardTrace t = forward(p, x);
    if (target == GradientTarget::LossAtPredictedLabel) return loss_from_logits(t.logits(), pred);
    return t.logits()[t.logits().size() == 1 ? 0 : static_cast<std::size_t>(pred)];
}

}  // namespace detail

/// Occlusion scores: for each coordinate, the mean drop in the target
/// over all patch x patch windows that cover it.
inline AttributionScores occlusion(const MlpParams& p, const std::vector<double>& x,
                                   GradientTarget target, std::size_t patch,
                                   std::size_t image_h, std::size_t image_w) {
    if (image_h * image_w != x.size())
        throw std::invalid_argument("occlusion: image shape does not match input");
    if (patch == 0 || patch > image_h || patch > image_w)
        throw std::invalid_argument("occlusion: patch larger than image");

    int pred = predict(logits(p, x));
    double base = detail::scalar_target(p, x, target, pred);

    std::vector<double> sum(x.size(), 0.0);
    std::vector<std::size_t> count(x.size(), 0);
    std::vector<double> xo(x.size());
    for (std::size_t r0 = 0; r0 + patch <= image_h; ++r0)
        for (std::size_t c0 = 0; c0 + patch <= image_w; ++c0) {
            xo = x;
            for (std::size_t r = r0; r < r0 + patch; ++r)
                for (std::size_t c = c0; c < c0 + patch; ++c) xo[r * image_w + c] = 0.0;
            double drop = base - detail::scalar_target(p, xo, target, pred);
            for (std::size_t r = r0; r < r0 + patch; ++r)
                for (std::size_t c = c0; c < c0 + patch; ++c) {
                    sum[r * image_w + c] += drop;
                    ++count[r * image_w + c];
                }
        }
    AttributionScores out;
    out.scheme_id = "occlusion";
    out.target = target;
    out.scores.resize(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (count[i] > 0) out.scores[i] = sum[i] / static_cast<double>(count[i]);
    return out;
}

/// Guided-backprop magnitude scores.
inline AttributionScores guided_backprop_scores(const MlpParams& p, const std::vector<double>& x) {
    std::vector<double> g = guided_backprop(p, x);
    AttributionScores s;
    s.scheme_id = "guided_backprop";
    s.scores.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) s.scores[i] = std::abs(g[i]);
    return s;
}

/// Uniform random ordering (baseline scheme).
inline AttributionOrder random_attribution(std::size_t dim, Rng rng) {
    AttributionOrder o;
    o.perm.resize(dim);
    std::iota(o.perm.begin(), o.perm.end(), 0);
    rng.shuffle(o.perm);
    return o;
}

/// Top and bottom ceil(k*D) coordinates of an ordering.
inline std::pair<MaskSet, MaskSet> top_bottom_sets(const AttributionOrder& order,
                                                   double k_fraction) {
    if (!(k_fraction > 0.0) || k_fraction > 1.0)
        throw std::invalid_argument("top_bottom_sets: k must be in (0, 1]");
    const std::size_t dim = order.perm.size();
    const std::size_t count =
        static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(dim)));
    std::vector<std::size_t> top(order.perm.begin(),
                                 order.perm.begin() + static_cast<std::ptrdiff_t>(count));
    std::vector<std::size_t> bottom(order.perm.end() - static_cast<std::ptrdiff_t>(count),
                                    order.perm.end());
    return {MaskSet::from_indices(std::move(top), dim),
            MaskSet::from_indices(std::move(bottom), dim)};
}

/// Per-coordinate CSV dump of one attribution: coordinate, score, rank.
inline void write_attribution_csv(const AttributionScores& s, const std::string& path) {
    AttributionOrder o = rank(s);
    std::vector<std::size_t> rank_of(s.scores.size());
    for (std::size_t i = 0; i < o.perm.size(); ++i) rank_of[o.perm[i]] = i;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "coordinate,score,rank\n";
    for (std::size_t i = 0; i < s.scores.size(); ++i)
        os << i << ',' << s.scores[i] << ',' << rank_of[i] << '\n';
}

/// P5 PGM heatmap of |scores| rescaled to 0..255.
inline void write_attribution_pgm(const AttributionScores& s, std::size_t image_h,
                                  std::size_t image_w, const std::string& path) {
    if (image_h * image_w != s.scores.size())
        throw std::invalid_argument("write_attribution_pgm: shape mismatch");
    double mx = 0.0;
    for (double v : s.scores) mx = std::max(mx, std::abs(v));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "P5\n" << image_w << ' ' << image_h << "\n255\n";
    for (double v : s.scores) {
        unsigned char b =
            mx > 0.0 ? static_cast<unsigned char>(std::abs(v) / mx * 255.0 + 0.5) : 0;
        os.write(reinterpret_cast<const char*>(&b), 1);
    }
}

}  // namespace diffroar
