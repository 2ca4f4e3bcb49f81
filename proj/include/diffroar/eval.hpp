#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/attrib.hpp"
#include "diffroar/data.hpp"
#include "diffroar/nn.hpp"
#include "diffroar/train.hpp"

namespace diffroar {

/// An attribution scheme applied to one example: maps (model, example,
/// per-example rng) to a coordinate ordering.
using Attributor =
    std::function<AttributionOrder(const MlpParams&, const Example&, Rng)>;

/// Top-k minus bottom-k predictive power across unmasking levels,
/// aggregated over retrain seeds.
struct DiffRoarCurve {
    std::string scheme_id;
    bool retrained = true;
    std::vector<double> levels;
    std::vector<double> pred_top;      // mean over seeds
    std::vector<double> pred_bottom;   // mean over seeds
    std::vector<double> aq;            // pred_top - pred_bottom
    std::vector<double> aq_stderr;
    std::size_t n_seeds = 1;
    // raw replicate accuracies: per level, per seed
    std::vector<std::vector<double>> top_runs;
    std::vector<std::vector<double>> bottom_runs;
};

struct LeakageCurve {
    std::vector<double> levels;
    std::vector<double> fraction_in_null;
};

/// Computes one frozen order per example with the model under test.
inline std::vector<AttributionOrder> attribute_dataset(const Dataset& ds,
                                                       const MlpParams& model,
                                                       const Attributor& scheme, Rng rng) {
    std::vector<AttributionOrder> orders;
    orders.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        orders.push_back(scheme(model, ds.examples[i], rng.derive(i)));
    return orders;
}

/// Replaces every example by its unmasked version using its own order's
/// top or bottom k set. Labels and bookkeeping are preserved.
enum class Side { Top, Bottom };

inline Dataset build_unmasked_dataset(const Dataset& ds,
                                      const std::vector<AttributionOrder>& orders, double k,
                                      Side side) {
    if (orders.size() != ds.size())
        throw std::invalid_argument("build_unmasked_dataset: one order per example required");
    Dataset out = ds;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (orders[i].perm.size() != ds.dim)
            throw std::invalid_argument("build_unmasked_dataset: order length mismatch");
        auto [top, bottom] = top_bottom_sets(orders[i], k);
        out.examples[i].features =
            unmask(ds.examples[i].features, side == Side::Top ? top : bottom);
    }
    return out;
}

/// Trains a fresh model on the unmasked train split and returns its
/// accuracy on the unmasked test split.
inline double predictive_power(const Dataset& unmasked_train, const Dataset& unmasked_test,
                               const std::vector<std::size_t>& arch, const TrainConfig& cfg) {
    MlpParams fresh = train_standard(arch, unmasked_train, cfg);
    return evaluate(fresh, unmasked_test);
}

namespace detail {

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stderr_of_mean(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) /
                     static_cast<double>(v.size()));
}

}  // namespace detail

/// The full mask-retrain-evaluate harness. Orders are computed once from
/// the model under test and frozen; every (level, side, seed) retrain is
/// an independent job with its own derived seed.
inline DiffRoarCurve diffroar_curve(const Dataset& train_set, const Dataset& test_set,
                                    const MlpParams& model_under_test, const Attributor& scheme,
                                    const std::string& scheme_id,
                                    const std::vector<std::size_t>& arch, TrainConfig retrain_cfg,
                                    const std::vector<double>& levels, std::size_t n_seeds,
                                    Rng rng) {
    for (double k : levels)
        if (!(k > 0.0) || k > 1.0)
            throw std::invalid_argument("diffroar_curve: levels must lie in (0, 1]");

    auto train_orders = attribute_dataset(train_set, model_under_test, scheme,
                                          rng.derive("attrib-train"));
    auto test_orders = attribute_dataset(test_set, model_under_test, scheme,
                                         rng.derive("attrib-test"));
    Rng seed_rng = rng.derive("retrain");

    DiffRoarCurve curve;
    curve.scheme_id = scheme_id;
    curve.levels = levels;
    curve.n_seeds = n_seeds;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        double k = levels[li];
        std::vector<double> tops, bottoms, aqs;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            // top and bottom share the retrain seed so AQ is a paired difference
            retrain_cfg.seed = seed_rng.derive(li).derive(s).next_u64();
            double top = predictive_power(
                build_unmasked_dataset(train_set, train_orders, k, Side::Top),
                build_unmasked_dataset(test_set, test_orders, k, Side::Top), arch, retrain_cfg);
            double bottom = predictive_power(
                build_unmasked_dataset(train_set, train_orders, k, Side::Bottom),
                build_unmasked_dataset(test_set, test_orders, k, Side::Bottom), arch,
                retrain_cfg);
            tops.push_back(top);
            bottoms.push_back(bottom);
            aqs.push_back(top - bottom);
        }
        curve.pred_top.push_back(detail::mean(tops));
        curve.pred_bottom.push_back(detail::mean(bottoms));
        curve.aq.push_back(detail::mean(aqs));
        curve.aq_stderr.push_back(detail::stderr_of_mean(aqs));
        curve.top_runs.push_back(std::move(tops));
        curve.bottom_runs.push_back(std::move(bottoms));
    }
    return curve;
}

/// Ablation: evaluates the model under test directly on unmasked test
/// data, with no retraining.
inline DiffRoarCurve diffroar_no_retrain(const Dataset& test_set,
                                         const MlpParams& model_under_test,
                                         const Attributor& scheme, const std::string& scheme_id,
                                         const std::vector<double>& levels, Rng rng) {
    auto orders = attribute_dataset(test_set, model_under_test, scheme, rng.derive("attrib-test"));
    DiffRoarCurve curve;
    curve.scheme_id = scheme_id;
    curve.retrained = false;
    curve.levels = levels;
    curve.n_seeds = 1;
    for (double k : levels) {
        double top = evaluate(model_under_test,
                              build_unmasked_dataset(test_set, orders, k, Side::Top));
        double bottom = evaluate(model_under_test,
                                 build_unmasked_dataset(test_set, orders, k, Side::Bottom));
        curve.pred_top.push_back(top);
        curve.pred_bottom.push_back(bottom);
        curve.aq.push_back(top - bottom);
        curve.aq_stderr.push_back(0.0);
        curve.top_runs.push_back({top});
        curve.bottom_runs.push_back({bottom});
    }
    return curve;
}

/// Mean fraction of top-k attributions that fall inside the null region.
inline LeakageCurve leakage_fraction(const Dataset& ds,
                                     const std::vector<AttributionOrder>& orders,
                                     const std::vector<double>& levels) {
    if (orders.size() != ds.size())
        throw std::invalid_argument("leakage_fraction: one order per example required");
    for (const auto& ex : ds.examples)
        if (!ex.null_region)
            throw std::invalid_argument("leakage_fraction: examples lack null_region");
    LeakageCurve curve;
    curve.levels = levels;
    for (double k : levels) {
        const std::size_t count =
            static_cast<std::size_t>(std::ceil(k * static_cast<double>(ds.dim)));
        double total = 0.0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            MaskSet null_set = MaskSet::from_indices(*ds.examples[i].null_region, ds.dim);
            std::size_t hits = 0;
            for (std::size_t j = 0; j < count; ++j)
                if (null_set.contains(orders[i].perm[j])) ++hits;
            total += static_cast<double>(hits) / static_cast<double>(count);
        }
        curve.fraction_in_null.push_back(total / static_cast<double>(ds.size()));
    }
    return curve;
}

/// Pearson correlation and RMS scale ratio (final/init) between pooled
/// input-gradient values of two parameter snapshots.
inline std::pair<double, double> init_correlation(const MlpParams& params_init,
                                                  const MlpParams& params_final,
                                                  const Dataset& ds, GradientTarget target) {
    std::vector<double> a, b;
    for (const auto& ex : ds.examples) {
        auto ga = input_gradient(params_init, ex.features, target);
        auto gb = input_gradient(params_final, ex.features, target);
        a.insert(a.end(), ga.begin(), ga.end());
        b.insert(b.end(), gb.begin(), gb.end());
    }
    double ma = detail::mean(a), mb = detail::mean(b);
    double cov = 0.0, va = 0.0, vb = 0.0, rms_a = 0.0, rms_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        rms_a += a[i] * a[i];
        rms_b += b[i] * b[i];
    }
    if (va == 0.0 || vb == 0.0 || rms_a == 0.0)
        throw std::invalid_argument("init_correlation: degenerate gradient pool");
    double r = cov / std::sqrt(va * vb);
    double ratio = std::sqrt(rms_b / rms_a);
    return {r, ratio};
}

/// Raw replicate rows: scheme, model_id, k, side, seed, accuracy, retrain flag.
inline void write_diffroar_results_csv(const DiffRoarCurve& c, const std::string& model_id,
                                       const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "scheme,model_id,k,side,seed,accuracy,retrain\n";
    for (std::size_t li = 0; li < c.levels.size(); ++li)
        for (std::size_t s = 0; s < c.top_runs[li].size(); ++s) {
            os << c.scheme_id << ',' << model_id << ',' << c.levels[li] << ",top," << s << ','
               << c.top_runs[li][s] << ',' << (c.retrained ? 1 : 0) << '\n';
            os << c.scheme_id << ',' << model_id << ',' << c.levels[li] << ",bottom," << s << ','
               << c.bottom_runs[li][s] << ',' << (c.retrained ? 1 : 0) << '\n';
        }
}

inline void write_diffroar_summary_csv(const DiffRoarCurve& c, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "scheme,k,pred_top_mean,pred_bottom_mean,aq_mean,aq_stderr\n";
    for (std::size_t li = 0; li < c.levels.size(); ++li)
        os << c.scheme_id << ',' << c.levels[li] << ',' << c.pred_top[li] << ','
           << c.pred_bottom[li] << ',' << c.aq[li] << ',' << c.aq_stderr[li] << '\n';
}

inline void write_leakage_csv(const LeakageCurve& c, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "k,fraction_in_null\n";
    for (std::size_t i = 0; i < c.levels.size(); ++i)
        os << c.levels[i] << ',' << c.fraction_in_null[i] << '\n';
}

}  // namespace diffroar
