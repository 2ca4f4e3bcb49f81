#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/data.hpp"
#include "diffroar/nn.hpp"
#include "diffroar/rng.hpp"

namespace diffroar {

/// psi(a, b) = ReLU(a+b) - ReLU(-a+b), in closed piecewise form.
inline double psi(double a, double b) {
    if (a <= -std::abs(b)) return a - b;
    if (a >= std::abs(b)) return a + b;
    return b >= 0.0 ? 2.0 * a : 0.0;
}

/// One neuron of a mean-field two-layer network: outer weight w, inner
/// weight r, bias b, lying on the unit sphere of R^{dim(r)+2}.
struct NeuronAtom {
    double w = 0.0;
    std::vector<double> r;
    double b = 0.0;
    double mass = 0.0;

    double norm() const {
        double n2 = w * w + b * b;
        for (double v : r) n2 += v * v;
        return std::sqrt(n2);
    }
};

/// Finitely supported measure over neurons; masses sum to 1.
struct DiscreteMeasure {
    std::vector<NeuronAtom> atoms;

    std::size_t input_dim() const { return atoms.front().r.size(); }

    void validate() const {
        if (atoms.empty()) throw std::invalid_argument("DiscreteMeasure: no atoms");
        double total = 0.0;
        for (const auto& a : atoms) {
            if (a.mass <= 0.0) throw std::invalid_argument("DiscreteMeasure: non-positive mass");
            if (std::abs(a.norm() - 1.0) > 1e-12)
                throw std::invalid_argument("DiscreteMeasure: atom not on unit sphere");
            total += a.mass;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("DiscreteMeasure: masses do not sum to 1");
    }
};

/// Closed-form margin of the two-atom candidate:
/// (1 - eta*d/2) / (2 sqrt(d/2 + (1 - eta*d/2)^2)).
inline double closed_form_margin(const BlockSpec& spec) {
    double s = 1.0 - spec.noise * static_cast<double>(spec.num_blocks) / 2.0;
    double denom = static_cast<double>(spec.num_blocks) / 2.0 + s * s;
    return s / (2.0 * std::sqrt(denom));
}

/// The two-atom max-margin candidate for standard training: theta_1 with
/// w = 1/sqrt(2), r proportional to the concatenation z of d/2 copies of
/// the signal direction followed by zeros, and theta_2 its (w, r) sign
/// flip with the same bias. Requires eta < 1/(10 d).
inline DiscreteMeasure standard_candidate(const BlockSpec& spec) {
    spec.validate();
    const double d = static_cast<double>(spec.num_blocks);
    if (!(spec.noise < 1.0 / (10.0 * d)))
        throw std::invalid_argument("standard_candidate: requires eta < 1/(10 d)");
    const double s = 1.0 - spec.noise * d / 2.0;
    const double denom = std::sqrt(2.0 * (d / 2.0 + s * s));

    std::vector<double> z(spec.dim(), 0.0);
    for (std::size_t blk = 0; blk < spec.num_blocks / 2; ++blk)
        for (std::size_t k = 0; k < spec.block_dim; ++k)
            z[blk * spec.block_dim + k] = spec.signal_dir[k];

    NeuronAtom a1, a2;
    a1.w = 1.0 / std::sqrt(2.0);
    a1.b = s / denom;
    a1.r.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a1.r[i] = z[i] / denom;
    a1.mass = 0.5;
    a2 = a1;
    a2.w = -a1.w;
    for (auto& v : a2.r) v = -v;

    DiscreteMeasure nu{{a1, a2}};
    nu.validate();
    return nu;
}

/// The conjectured adversarial max-margin candidate (d_tilde = 1, eta =
/// 0, u* = 1): for each i in [d/2] the pair
/// (1/sqrt(2), 3/sqrt(20) e_i, -1/sqrt(20)) and its (w, r) sign flip,
/// each with mass 1/d.
inline DiscreteMeasure adversarial_candidate(std::size_t d) {
    if (d == 0 || d % 2 != 0) throw std::invalid_argument("adversarial_candidate: d must be even");
    DiscreteMeasure nu;
    for (std::size_t i = 0; i < d / 2; ++i) {
        NeuronAtom a;
        a.w = 1.0 / std::sqrt(2.0);
        a.b = -1.0 / std::sqrt(20.0);
        a.r.assign(d, 0.0);
        a.r[i] = 3.0 / std::sqrt(20.0);
        a.mass = 1.0 / static_cast<double>(d);
        NeuronAtom ap = a;
        ap.w = -a.w;
        ap.r[i] = -a.r[i];
        nu.atoms.push_back(a);
        nu.atoms.push_back(ap);
    }
    nu.validate();
    return nu;
}

/// f(nu, x) = sum over atoms of mass * w * ReLU(<r, x> + b).
inline double measure_output(const DiscreteMeasure& nu, const std::vector<double>& x) {
    double f = 0.0;
    for (const auto& a : nu.atoms) {
        if (a.r.size() != x.size())
            throw std::invalid_argument("measure_output: dimension mismatch");
        double u = a.b;
        for (std::size_t i = 0; i < x.size(); ++i) u += a.r[i] * x[i];
        f += a.mass * a.w * relu(u);
    }
    return f;
}

inline double measure_loss(const DiscreteMeasure& nu, const std::vector<double>& x, double y) {
    double m = -y * measure_output(nu, x);
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

/// Gradient of the logistic loss w.r.t. x:
/// -y sigma(-y f) * sum mass * w * 1[<r,x>+b > 0] * r.
inline std::vector<double> measure_input_gradient(const DiscreteMeasure& nu,
                                                  const std::vector<double>& x, double y) {
    double f = measure_output(nu, x);
    double scale = -y * sigmoid(-y * f);
    std::vector<double> g(x.size(), 0.0);
    for (const auto& a : nu.atoms) {
        double u = a.b;
        for (std::size_t i = 0; i < x.size(); ++i) u += a.r[i] * x[i];
        if (u > 0.0) {
            double c = a.mass * a.w;
            for (std::size_t i = 0; i < x.size(); ++i) g[i] += c * a.r[i];
        }
    }
    for (auto& v : g) v *= scale;
    return g;
}

/// A labeled point for margin / support-condition checks.
struct LabeledPoint {
    std::vector<double> x;
    double y;
};

/// The margin-attaining extreme points of the block distribution: for
/// each j in [d/2] and y in {-1,+1}, the point with (1 - eta) u* in
/// block j, -eta u* in the other first-half blocks and zeros elsewhere,
/// scaled by y. At eta = 0 these are the full (finite) support.
inline std::vector<LabeledPoint> worst_case_support(const BlockSpec& spec) {
    spec.validate();
    std::vector<LabeledPoint> pts;
    for (std::size_t j = 0; j < spec.num_blocks / 2; ++j)
        for (double y : {1.0, -1.0}) {
            std::vector<double> x(spec.dim(), 0.0);
            for (std::size_t blk = 0; blk < spec.num_blocks / 2; ++blk) {
                double c = blk == j ? (1.0 - spec.noise) : -spec.noise;
                for (std::size_t k = 0; k < spec.block_dim; ++k)
                    x[blk * spec.block_dim + k] = y * c * spec.signal_dir[k];
            }
            pts.push_back({std::move(x), y});
        }
    return pts;
}

/// The certificate distribution p* over data points: uniform over
/// (y u_tilde_j, y) where u_tilde_j carries u* in block j, -eta u* in
/// the other first-half blocks and zeros elsewhere.
inline std::vector<LabeledPoint> p_star_points(const BlockSpec& spec) {
    spec.validate();
    std::vector<LabeledPoint> pts;
    for (std::size_t j = 0; j < spec.num_blocks / 2; ++j)
        for (double y : {1.0, -1.0}) {
            std::vector<double> x(spec.dim(), 0.0);
            for (std::size_t blk = 0; blk < spec.num_blocks / 2; ++blk) {
                double c = blk == j ? 1.0 : -spec.noise;
                for (std::size_t k = 0; k < spec.block_dim; ++k)
                    x[blk * spec.block_dim + k] = y * c * spec.signal_dir[k];
            }
            pts.push_back({std::move(x), y});
        }
    return pts;
}

enum class MarginMode { ExactSupport, Sampled };

struct MarginResult {
    double margin = 0.0;
    std::vector<double> per_point;  // y * f at each checked point
};

/// min over checked points of y * f(nu, x). ExactSupport enumerates the
/// extreme points of the distribution (exact for the candidate
/// constructions); Sampled takes the min over n random draws, an upper
/// bound on the true margin.
inline MarginResult margin(const DiscreteMeasure& nu, const BlockSpec& spec, MarginMode mode,
                           std::size_t n_samples = 0, Rng rng = Rng(0)) {
    MarginResult res;
    res.margin = std::numeric_limits<double>::infinity();
    if (mode == MarginMode::ExactSupport) {
        for (const auto& pt : worst_case_support(spec)) {
            double m = pt.y * measure_output(nu, pt.x);
            res.per_point.push_back(m);
            res.margin = std::min(res.margin, m);
        }
    } else {
        if (n_samples == 0) throw std::invalid_argument("margin: sampled mode needs n >= 1");
        Dataset ds = sample_synthetic(spec, n_samples, rng);
        for (const auto& ex : ds.examples) {
            double m = signed_label(ex.label) * measure_output(nu, ex.features);
            res.per_point.push_back(m);
            res.margin = std::min(res.margin, m);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Support-condition verification (the optimality certificate): every
// candidate atom must maximize L(theta) = E_{p*}[y w ReLU(<r,x>+b)] over
// the unit sphere, and no other point may do better.

struct RestartRecord {
    double objective = 0.0;
    bool converged = false;
};

struct MarginReport {
    double candidate_margin = 0.0;       // objective value attained by the atoms
    double best_found_objective = 0.0;   // best over all ascent starts
    std::size_t n_restarts = 0;
    double tolerance = 0.0;
    bool pass = false;
    bool low_confidence = false;  // no random restarts were run
    std::vector<double> per_point_margins;
    std::vector<double> atom_objectives;
    std::vector<RestartRecord> restarts;
};

namespace detail {

// theta packed as (w, r..., b)
inline double sphere_objective(const std::vector<double>& theta,
                               const std::vector<LabeledPoint>& pts) {
    const std::size_t dim = theta.size() - 2;
    double total = 0.0;
    for (const auto& pt : pts) {
        double u = theta[dim + 1];
        for (std::size_t i = 0; i < dim; ++i) u += theta[1 + i] * pt.x[i];
        total += pt.y * theta[0] * relu(u);
    }
    return total / static_cast<double>(pts.size());
}

inline std::vector<double> sphere_gradient(const std::vector<double>& theta,
                                           const std::vector<LabeledPoint>& pts) {
    const std::size_t dim = theta.size() - 2;
    std::vector<double> g(theta.size(), 0.0);
    for (const auto& pt : pts) {
        double u = theta[dim + 1];
        for (std::size_t i = 0; i < dim; ++i) u += theta[1 + i] * pt.x[i];
        g[0] += pt.y * relu(u);
        if (u > 0.0) {
            for (std::size_t i = 0; i < dim; ++i) g[1 + i] += pt.y * theta[0] * pt.x[i];
            g[dim + 1] += pt.y * theta[0];
        }
    }
    for (auto& v : g) v /= static_cast<double>(pts.size());
    return g;
}

inline void normalize(std::vector<double>& v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    double n = std::sqrt(n2);
    if (n > 0.0)
        for (auto& x : v) x /= n;
}

// Projected gradient ascent with step halving. The objective is
// piecewise linear, so ascent can stall at kinks; convergence means the
// step shrank below threshold without further improvement.
inline RestartRecord ascend(std::vector<double> theta, const std::vector<LabeledPoint>& pts,
                            std::size_t max_iters = 500) {
    normalize(theta);
    double obj = sphere_objective(theta, pts);
    double step = 0.5;
    std::size_t it = 0;
    for (; it < max_iters && step > 1e-14; ++it) {
        auto g = sphere_gradient(theta, pts);
        std::vector<double> cand(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) cand[i] = theta[i] + step * g[i];
        normalize(cand);
        double cand_obj = sphere_objective(cand, pts);
        if (cand_obj > obj + 1e-16) {
            theta = std::move(cand);
            obj = cand_obj;
            step *= 1.25;
        } else {
            step *= 0.5;
        }
    }
    return {obj, step <= 1e-14};
}

}  // namespace detail

/// Verifies the optimality certificate: multi-start projected gradient
/// ascent over the unit sphere must not find any objective above the
/// candidate atoms', and every atom must attain the maximum. Numerical
/// evidence, not proof; a report without random restarts is flagged
/// low-confidence.
inline MarginReport verify_support_condition(const DiscreteMeasure& nu,
                                             const std::vector<LabeledPoint>& pts,
                                             std::size_t n_restarts, double tol, Rng rng) {
    nu.validate();
    const std::size_t dim = nu.input_dim();
    MarginReport report;
    report.n_restarts = n_restarts;
    report.tolerance = tol;
    report.low_confidence = n_restarts == 0;

    auto pack = [&](const NeuronAtom& a) {
        std::vector<double> theta(dim + 2);
        theta[0] = a.w;
        for (std::size_t i = 0; i < dim; ++i) theta[1 + i] = a.r[i];
        theta[dim + 1] = a.b;
        return theta;
    };

    // candidate atoms' own objective values
    double candidate_obj = -std::numeric_limits<double>::infinity();
    for (const auto& a : nu.atoms) {
        double obj = detail::sphere_objective(pack(a), pts);
        report.atom_objectives.push_back(obj);
        candidate_obj = std::max(candidate_obj, obj);
    }
    report.candidate_margin = candidate_obj;

    // structured starts: atoms, +/- axis directions, mean data direction
    std::vector<std::vector<double>> starts;
    for (const auto& a : nu.atoms) starts.push_back(pack(a));
    for (std::size_t i = 0; i < dim + 2; ++i) {
        std::vector<double> e(dim + 2, 0.0);
        e[i] = 1.0;
        starts.push_back(e);
        e[i] = -1.0;
        starts.push_back(e);
    }
    {
        std::vector<double> m(dim + 2, 0.0);
        m[0] = 1.0;
        for (const auto& pt : pts)
            for (std::size_t i = 0; i < dim; ++i) m[1 + i] += pt.y * pt.x[i];
        starts.push_back(m);
    }
    for (std::size_t s = 0; s < n_restarts; ++s) {
        Rng r = rng.derive(s);
        std::vector<double> theta(dim + 2);
        for (auto& v : theta) v = r.normal();
        starts.push_back(std::move(theta));
    }

    double best = candidate_obj;
    for (auto& start : starts) {
        RestartRecord rec = detail::ascend(std::move(start), pts);
        best = std::max(best, rec.objective);
        report.restarts.push_back(rec);
    }
    report.best_found_objective = best;

    for (const auto& pt : pts)
        report.per_point_margins.push_back(pt.y * measure_output(nu, pt.x));

    bool atoms_maximal = true;
    for (double obj : report.atom_objectives)
        if (obj < best - tol) atoms_maximal = false;
    report.pass = (best <= candidate_obj + tol) && atoms_maximal;
    return report;
}

// ---------------------------------------------------------------------------

struct BlockStructureResult {
    bool pass = false;
    std::vector<double> block_norms;
};

/// Structure check on one input gradient: block norms on
/// the first d/2 blocks must agree within relative tol and be positive;
/// norms on the last d/2 blocks must be below tol times the largest
/// block norm.
inline BlockStructureResult block_structure_check(const std::vector<double>& grad,
                                                  const BlockSpec& spec, double tol) {
    if (grad.size() != spec.dim())
        throw std::invalid_argument("block_structure_check: gradient length mismatch");
    BlockStructureResult res;
    for (std::size_t blk = 0; blk < spec.num_blocks; ++blk) {
        double n2 = 0.0;
        for (std::size_t k = 0; k < spec.block_dim; ++k) {
            double v = grad[blk * spec.block_dim + k];
            n2 += v * v;
        }
        res.block_norms.push_back(std::sqrt(n2));
    }
    const std::size_t half = spec.num_blocks / 2;
    double sig_min = *std::min_element(res.block_norms.begin(), res.block_norms.begin() + half);
    double sig_max = *std::max_element(res.block_norms.begin(), res.block_norms.begin() + half);
    double all_max = *std::max_element(res.block_norms.begin(), res.block_norms.end());
    if (all_max <= 0.0 || sig_max <= 0.0) {
        res.pass = false;
        return res;
    }
    bool equal_signal = (sig_max - sig_min) / sig_max < tol;
    bool zero_noise = true;
    for (std::size_t blk = half; blk < spec.num_blocks; ++blk)
        if (res.block_norms[blk] > tol * all_max) zero_noise = false;
    res.pass = equal_signal && zero_noise;
    return res;
}

// ---------------------------------------------------------------------------

struct RichRegimeDiagnostics {
    // per hidden unit: max |coordinate| of the l2-normalized first-layer
    // row, |second-layer weight|, and the first-layer bias
    std::vector<double> alignment;
    std::vector<double> outer_magnitude;
    std::vector<double> bias;
    double fraction_negative_bias = 0.0;
    double alignment_outer_correlation = 0.0;
};

/// Per-unit alignment/outer-weight scatter and bias histogram data for a
/// trained one-hidden-layer model.
inline RichRegimeDiagnostics rich_regime_diagnostics(const MlpParams& params) {
    if (params.depth() != 2)
        throw std::invalid_argument("rich_regime_diagnostics: one-hidden-layer model required");
    if (params.layers[1].weight.rows != 1)
        throw std::invalid_argument("rich_regime_diagnostics: single-logit model required");
    const auto& W1 = params.layers[0].weight;
    RichRegimeDiagnostics d;
    std::size_t neg = 0;
    for (std::size_t u = 0; u < W1.rows; ++u) {
        double n2 = 0.0, mx = 0.0;
        for (std::size_t c = 0; c < W1.cols; ++c) {
            double v = W1(u, c);
            n2 += v * v;
            mx = std::max(mx, std::abs(v));
        }
        double norm = std::sqrt(n2);
        d.alignment.push_back(norm > 0.0 ? mx / norm : 0.0);
        d.outer_magnitude.push_back(std::abs(params.layers[1].weight(0, u)));
        d.bias.push_back(params.layers[0].bias[u]);
        if (params.layers[0].bias[u] < 0.0) ++neg;
    }
    d.fraction_negative_bias = static_cast<double>(neg) / static_cast<double>(W1.rows);

    double ma = 0.0, mo = 0.0;
    for (std::size_t i = 0; i < d.alignment.size(); ++i) {
        ma += d.alignment[i];
        mo += d.outer_magnitude[i];
    }
    ma /= static_cast<double>(d.alignment.size());
    mo /= static_cast<double>(d.alignment.size());
    double cov = 0.0, va = 0.0, vo = 0.0;
    for (std::size_t i = 0; i < d.alignment.size(); ++i) {
        cov += (d.alignment[i] - ma) * (d.outer_magnitude[i] - mo);
        va += (d.alignment[i] - ma) * (d.alignment[i] - ma);
        vo += (d.outer_magnitude[i] - mo) * (d.outer_magnitude[i] - mo);
    }
    d.alignment_outer_correlation = (va > 0.0 && vo > 0.0) ? cov / std::sqrt(va * vo) : 0.0;
    return d;
}

}  // namespace diffroar
