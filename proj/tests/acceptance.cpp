// Acceptance suite: one pass/fail line per criterion, nonzero exit if
// any fails. Tolerances are pinned here. argv[1] is the path to the
// experiment-runner binary (used by the determinism criterion).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "diffroar/attrib.hpp"
#include "diffroar/data.hpp"
#include "diffroar/eval.hpp"
#include "diffroar/glyphs.hpp"
#include "diffroar/nn.hpp"
#include "diffroar/theory.hpp"
#include "diffroar/train.hpp"

namespace fs = std::filesystem;
using namespace diffroar;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, double seconds) {
    if (!pass) ++g_failures;
    std::printf("criterion %2d: %s  %s  (%.1fs)\n", criterion, pass ? "PASS" : "FAIL",
                what.c_str(), seconds);
    std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness vs central finite differences.

bool check_gradients() {
    const double h = 1e-4;
    const double tol = 1e-5;
    const std::vector<std::vector<std::size_t>> archs = {
        {6, 1}, {5, 12, 1}, {4, 10, 8, 1}, {7, 16, 3}, {5, 8, 6, 4}};
    Rng rng(101);
    int checked = 0;
    while (checked < 50) {
        const auto& arch = archs[static_cast<std::size_t>(checked) % archs.size()];
        MlpParams p = init_params(arch, rng.derive(checked));
        std::vector<double> x(arch.front());
        Rng xr = rng.derive(1000 + checked);
        for (auto& v : x) v = xr.normal();
        int label = static_cast<int>(xr.uniform_index(arch.back() == 1 ? 2 : arch.back()));

        // skip draws that land near a ReLU kink, where finite
        // differences are invalid
        ForwardTrace t = forward(p, x);
        bool near_kink = false;
        for (std::size_t l = 0; l + 1 < t.pre.size(); ++l)
            for (double v : t.pre[l])
                if (std::abs(v) < 5e-4) near_kink = true;
        if (near_kink) continue;
        ++checked;

        Gradients g = backprop(p, x, label);
        auto close = [&](double analytic, double numeric) {
            return std::abs(analytic - numeric) <= tol * (1.0 + std::abs(numeric));
        };
        // input gradient
        for (std::size_t i = 0; i < x.size(); ++i) {
            std::vector<double> xp = x;
            xp[i] = x[i] + h;
            double fp = loss(p, xp, label);
            xp[i] = x[i] - h;
            double fm = loss(p, xp, label);
            if (!close(g.input[i], (fp - fm) / (2.0 * h))) return false;
        }
        // parameter gradients
        for (std::size_t l = 0; l < p.depth(); ++l) {
            for (std::size_t i = 0; i < p.layers[l].weight.a.size(); ++i) {
                MlpParams q = p;
                q.layers[l].weight.a[i] += h;
                double fp = loss(q, x, label);
                q.layers[l].weight.a[i] -= 2.0 * h;
                double fm = loss(q, x, label);
                if (!close(g.layers[l].weight.a[i], (fp - fm) / (2.0 * h))) return false;
            }
            for (std::size_t i = 0; i < p.layers[l].bias.size(); ++i) {
                MlpParams q = p;
                q.layers[l].bias[i] += h;
                double fp = loss(q, x, label);
                q.layers[l].bias[i] -= 2.0 * h;
                double fm = loss(q, x, label);
                if (!close(g.layers[l].bias[i], (fp - fm) / (2.0 * h))) return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 2/3. Max-margin candidate: margin value, ascent certificate, gradient
// block structure.

bool check_margin_noiseless(std::string& detail) {
    BlockSpec spec;
    spec.num_blocks = 10;
    DiscreteMeasure nu = standard_candidate(spec);

    double expect = 1.0 / (2.0 * std::sqrt(6.0));
    MarginResult res = margin(nu, spec, MarginMode::ExactSupport);
    bool margin_ok = std::abs(res.margin - expect) <= 1e-9;

    MarginReport rep = verify_support_condition(nu, p_star_points(spec), 1000, 1e-6, Rng(202));
    bool ascent_ok = rep.pass && !rep.low_confidence;

    bool blocks_ok = true;
    auto pts = worst_case_support(spec);
    for (const auto& pt : pts) {
        auto g = measure_input_gradient(nu, pt.x, pt.y);
        if (!block_structure_check(g, spec, 1e-12).pass) blocks_ok = false;
        for (std::size_t i = 5; i < 10; ++i)
            if (g[i] != 0.0) blocks_ok = false;
    }
    std::ostringstream os;
    os << "margin=" << res.margin << " ascent_best=" << rep.best_found_objective;
    detail = os.str();
    return margin_ok && ascent_ok && blocks_ok && pts.size() == 10;
}

bool check_margin_noisy(std::string& detail) {
    BlockSpec spec;
    spec.num_blocks = 10;
    spec.noise = 0.005;
    DiscreteMeasure nu = standard_candidate(spec);

    MarginResult res = margin(nu, spec, MarginMode::ExactSupport);
    bool margin_ok = std::abs(res.margin - closed_form_margin(spec)) <= 1e-9;

    bool blocks_ok = true;
    Dataset ds = sample_synthetic(spec, 200, Rng(303));
    for (const auto& ex : ds.examples) {
        auto g = measure_input_gradient(nu, ex.features, signed_label(ex.label));
        if (!block_structure_check(g, spec, 1e-9).pass) blocks_ok = false;
    }
    std::ostringstream os;
    os << "margin=" << res.margin << " closed_form=" << closed_form_margin(spec);
    detail = os.str();
    return margin_ok && blocks_ok;
}

// ---------------------------------------------------------------------------
// 4. Adversarial candidate: gradient is exactly c * e_{j*} on support.

bool check_adversarial_gradient() {
    BlockSpec spec;
    spec.num_blocks = 10;
    DiscreteMeasure nu = adversarial_candidate(10);
    auto pts = worst_case_support(spec);
    if (pts.size() != 10) return false;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        std::size_t j = k / 2;
        auto g = measure_input_gradient(nu, pts[k].x, pts[k].y);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (i == j && g[i] == 0.0) return false;
            if (i != j && g[i] != 0.0) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 5 + 9. Feature leakage on the synthetic task, and the init-correlation
// diagnostic on the same standard model.

struct LeakageRun {
    bool trained = false;
    double std_test_acc = 0.0;
    double std_argmax_frac = 1.0;
    double noise_over_signal = 1.0;
    double adv_argmax_frac = 0.0;
    double init_r = 1.0;
    double scale_ratio = 0.0;
};

double argmax_matches_signal_fraction(const MlpParams& model, const Dataset& ds) {
    std::size_t hits = 0;
    for (const auto& ex : ds.examples) {
        auto g = input_gradient(model, ex.features, GradientTarget::LossAtPredictedLabel);
        std::size_t best = 0;
        for (std::size_t i = 1; i < g.size(); ++i)
            if (std::abs(g[i]) > std::abs(g[best])) best = i;
        if (static_cast<int>(best) == *ex.signal_block) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

LeakageRun run_synth_leakage() {
    BlockSpec spec;
    spec.num_blocks = 10;
    Dataset train_set = sample_synthetic(spec, 10000, Rng(501));
    Dataset test_set = sample_synthetic(spec, 2000, Rng(502));
    const std::vector<std::size_t> arch = {10, 1024, 1};

    TrainConfig cfg;
    cfg.seed = 777;
    cfg.max_epochs = 60;

    LeakageRun out;
    MlpParams std_model = train_standard(arch, train_set, cfg);
    out.std_test_acc = evaluate(std_model, test_set);
    out.std_argmax_frac = argmax_matches_signal_fraction(std_model, test_set);

    double noise_sum = 0.0, signal_sum = 0.0;
    for (const auto& ex : test_set.examples) {
        auto g = input_gradient(std_model, ex.features, GradientTarget::LossAtPredictedLabel);
        for (std::size_t i = 0; i < 5; ++i) signal_sum += std::abs(g[i]);
        for (std::size_t i = 5; i < 10; ++i) noise_sum += std::abs(g[i]);
    }
    out.noise_over_signal = noise_sum / signal_sum;

    AdvConfig adv;
    adv.norm = AdvConfig::Norm::Linf;
    adv.epsilon = 0.35;
    TrainConfig adv_cfg = cfg;
    adv_cfg.seed = 506;
    MlpParams adv_model = train_adversarial(arch, train_set, adv_cfg, adv);
    out.adv_argmax_frac = argmax_matches_signal_fraction(adv_model, test_set);

    // logit-target gradients: after training to near-zero loss the
    // loss-target gradients vanish, which would invert the scale ratio
    MlpParams init = init_params(arch, Rng(cfg.seed).derive("init"));
    auto [r, ratio] =
        init_correlation(init, std_model, test_set, GradientTarget::LogitOfPredictedLabel);
    out.init_r = r;
    out.scale_ratio = ratio;
    out.trained = true;
    return out;
}

// ---------------------------------------------------------------------------
// 6. Linear baseline: constant gradients, no mass on noise coordinates.

bool check_linear_baseline(std::string& detail) {
    BlockSpec spec;
    spec.num_blocks = 10;
    Dataset train_set = sample_synthetic(spec, 10000, Rng(601));
    Dataset test_set = sample_synthetic(spec, 500, Rng(602));

    TrainConfig cfg;
    cfg.seed = 603;
    cfg.max_epochs = 4000;
    cfg.lr_decay_every = 1000000;  // keep the step size constant
    cfg.early_stop_loss = 0.0;     // run until weight decay flushes noise weights
    MlpParams model = train_standard({10, 1}, train_set, cfg);

    // logit gradients of a linear model are the weight row: identical
    // for every example
    std::vector<std::vector<double>> grads;
    for (std::size_t i = 0; i < test_set.size(); ++i)
        grads.push_back(input_gradient(model, test_set.examples[i].features,
                                       GradientTarget::LogitOfPredictedLabel));
    double max_dev = 0.0;
    for (std::size_t i = 1; i < grads.size(); ++i)
        for (std::size_t c = 0; c < 10; ++c)
            max_dev = std::max(max_dev, std::abs(grads[i][c] - grads[0][c]));

    double scale = 0.0;
    for (std::size_t c = 0; c < 10; ++c) scale = std::max(scale, std::abs(grads[0][c]));
    double max_noise = 0.0;
    for (std::size_t c = 5; c < 10; ++c) max_noise = std::max(max_noise, std::abs(grads[0][c]));

    std::ostringstream os;
    os << "max_pairwise=" << max_dev << " noise/scale=" << max_noise / scale;
    detail = os.str();
    return max_dev < 1e-10 && max_noise <= 1e-3 * scale;
}

// ---------------------------------------------------------------------------
// 7. Mask-retrain sanity: random scheme has zero AQ, oracle scheme AQ
// equals 1 - majority rate at top/bottom size 1.

bool check_diffroar_sanity(std::string& detail) {
    BlockSpec spec;
    spec.num_blocks = 10;
    // data seeds chosen so the label majority is clear enough that the
    // constant predictor learned from fully-masked data is deterministic
    Dataset train_set = sample_synthetic(spec, 2000, Rng(738));
    Dataset test_set = sample_synthetic(spec, 1000, Rng(10738));
    const std::vector<std::size_t> arch = {10, 64, 1};

    TrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.seed = 703;
    MlpParams model = train_standard(arch, train_set, cfg);

    Attributor random_scheme = [](const MlpParams&, const Example& ex, Rng rng) {
        return random_attribution(ex.features.size(), rng);
    };
    Attributor oracle_scheme = [](const MlpParams&, const Example& ex, Rng) {
        AttributionOrder o;
        o.perm.resize(ex.features.size());
        std::iota(o.perm.begin(), o.perm.end(), 0);
        std::size_t sig = static_cast<std::size_t>(*ex.signal_block);
        o.perm.erase(o.perm.begin() + static_cast<std::ptrdiff_t>(sig));
        o.perm.insert(o.perm.begin(), sig);
        return o;
    };

    // replicates with fresh orders and retrain seeds
    const std::size_t n_reps = 5;
    const std::vector<double> levels = {0.1, 0.3, 0.5};
    std::vector<std::vector<double>> random_aq(levels.size());
    std::vector<double> oracle_aq;
    TrainConfig retrain_cfg;
    retrain_cfg.max_epochs = 120;
    for (std::uint64_t s = 0; s < n_reps; ++s) {
        auto rc = diffroar_curve(train_set, test_set, model, random_scheme, "random", arch,
                                 retrain_cfg, levels, 1, Rng(1000 + s));
        for (std::size_t li = 0; li < levels.size(); ++li) random_aq[li].push_back(rc.aq[li]);
        auto oc = diffroar_curve(train_set, test_set, model, oracle_scheme, "oracle", arch,
                                 retrain_cfg, {0.1}, 1, Rng(2000 + s));
        oracle_aq.push_back(oc.aq[0]);
    }

    auto mean_stderr = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        double se = std::sqrt(ss / static_cast<double>(v.size() - 1) /
                              static_cast<double>(v.size()));
        return std::pair<double, double>{m, se};
    };

    bool random_ok = true;
    double worst_random = 0.0;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        auto [m, se] = mean_stderr(random_aq[li]);
        worst_random = std::max(worst_random, std::abs(m));
        if (std::abs(m) > 2.0 * se) random_ok = false;
    }

    // majority rate: bottom-1 data is all-zero, so the retrained model
    // predicts the training majority class everywhere
    std::size_t train_ones = 0;
    for (const auto& ex : train_set.examples) train_ones += ex.label == 1 ? 1 : 0;
    int majority = 2 * train_ones >= train_set.size() ? 1 : 0;
    std::size_t test_majority = 0;
    for (const auto& ex : test_set.examples) test_majority += ex.label == majority ? 1 : 0;
    double expect_aq =
        1.0 - static_cast<double>(test_majority) / static_cast<double>(test_set.size());
    auto [om, ose] = mean_stderr(oracle_aq);
    bool oracle_ok = std::abs(om - expect_aq) <= 2.0 * ose + 1e-12;

    std::ostringstream os;
    os << "worst_random_aq=" << worst_random << " oracle_aq=" << om
       << " expect=" << expect_aq;
    detail = os.str();
    return random_ok && oracle_ok;
}

// ---------------------------------------------------------------------------
// 8. Block-image proxy: standard model leaks attribution mass into the
// null block; a robust model and a fixed-placement model do not.

double null_fraction_at_k(const MlpParams& model, const Dataset& ds, double k) {
    std::vector<AttributionOrder> orders;
    for (const auto& ex : ds.examples)
        orders.push_back(rank(grad_scores(model, ex.features,
                                          GradientTarget::LossAtPredictedLabel, false)));
    return leakage_fraction(ds, orders, {k}).fraction_in_null[0];
}

bool check_block_images(std::string& detail) {
    BlockImageConfig cfg;
    cfg.block_h = 14;
    cfg.block_w = 14;
    Dataset train_set = assemble_block_images(cfg, 4000, Rng(801));
    Dataset test_set = assemble_block_images(cfg, 1000, Rng(802));

    BlockImageConfig top_cfg = cfg;
    top_cfg.placement = BlockImageConfig::Placement::FixedTop;
    Dataset top_train = assemble_block_images(top_cfg, 4000, Rng(803));
    Dataset top_test = assemble_block_images(top_cfg, 1000, Rng(804));

    const std::vector<std::size_t> arch = {train_set.dim, 512, 1};
    TrainConfig tc;
    tc.max_epochs = 40;
    tc.seed = 805;

    MlpParams std_model = train_standard(arch, train_set, tc);
    MlpParams top_model = train_standard(arch, top_train, tc);

    AdvConfig adv;
    adv.norm = AdvConfig::Norm::L2;
    adv.epsilon = 3.0;
    TrainConfig adv_tc = tc;
    adv_tc.seed = 806;
    MlpParams robust_model = train_adversarial(arch, train_set, adv_tc, adv);

    double std_frac = null_fraction_at_k(std_model, test_set, 0.1);
    double robust_frac = null_fraction_at_k(robust_model, test_set, 0.1);
    double top_frac = null_fraction_at_k(top_model, top_test, 0.1);

    std::ostringstream os;
    os << "std=" << std_frac << " robust=" << robust_frac << " fixed_top=" << top_frac;
    detail = os.str();
    return std_frac >= 2.0 * robust_frac && std_frac >= 2.0 * top_frac;
}

// ---------------------------------------------------------------------------
// 10. CLI determinism: identical config + seed => byte-identical CSVs.

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool check_cli_determinism(const std::string& cli) {
    fs::path base = fs::current_path() / "acceptance_cli";
    fs::remove_all(base);
    fs::create_directories(base);
    {
        std::ofstream os(base / "gen.cfg");
        os << "[data]\nkind = synthetic\nblocks = 10\nnoise = 0\n"
              "train_count = 400\ntest_count = 200\n";
    }
    for (const std::string d : {"a", "b"}) {
        fs::path out = base / d;
        {
            std::ofstream os(base / ("train_" + d + ".cfg"));
            os << "[data]\ntrain_path = " << (out / "train.bin").string()
               << "\ntest_path = " << (out / "test.bin").string()
               << "\n[model]\nhidden = 32\n[train]\nmax_epochs = 25\n";
        }
        {
            std::ofstream os(base / ("dr_" + d + ".cfg"));
            os << "[data]\ntrain_path = " << (out / "train.bin").string()
               << "\ntest_path = " << (out / "test.bin").string()
               << "\n[model]\npath = " << (out / "model.bin").string()
               << "\nhidden = 16\n[attrib]\nscheme = grad\n"
               << "[eval]\nlevels = 0.1,0.3\nseeds = 2\n[retrain]\nmax_epochs = 20\n";
        }
        auto exec = [&](const std::string& sub, const std::string& cfg) {
            std::string cmd = cli + " " + sub + " --config " + (base / cfg).string() +
                              " --seed 42 --out " + out.string() + " >/dev/null 2>&1";
            int status = std::system(cmd.c_str());
            return WIFEXITED(status) && WEXITSTATUS(status) == 0;
        };
        if (!exec("gen-data", "gen.cfg")) return false;
        if (!exec("train", "train_" + d + ".cfg")) return false;
        if (!exec("diffroar", "dr_" + d + ".cfg")) return false;
    }
    for (const char* f :
         {"train_log.csv", "accuracy.csv", "results.csv", "summary.csv"}) {
        if (slurp(base / "a" / f) != slurp(base / "b" / f)) return false;
        if (slurp(base / "a" / f).empty()) return false;
    }
    fs::remove_all(base);
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    std::string detail;

    auto t0 = Clock::now();
    bool ok = check_gradients();
    report(1, ok, "finite-difference gradient check (50 nets, tol 1e-5)", seconds_since(t0));

    t0 = Clock::now();
    ok = check_margin_noiseless(detail);
    report(2, ok, "max-margin candidate at d=10, eta=0: " + detail, seconds_since(t0));

    t0 = Clock::now();
    ok = check_margin_noisy(detail);
    report(3, ok, "max-margin candidate at eta=0.005: " + detail, seconds_since(t0));

    t0 = Clock::now();
    ok = check_adversarial_gradient();
    report(4, ok, "adversarial candidate gradient on signal coordinate only", seconds_since(t0));

    t0 = Clock::now();
    LeakageRun lk = run_synth_leakage();
    {
        std::ostringstream os;
        os << "acc=" << lk.std_test_acc << " std_argmax=" << lk.std_argmax_frac
           << " noise/signal=" << lk.noise_over_signal << " adv_argmax=" << lk.adv_argmax_frac;
        bool pass = lk.trained && lk.std_test_acc == 1.0 && lk.std_argmax_frac <= 0.4 &&
                    lk.noise_over_signal <= 0.1 && lk.adv_argmax_frac >= 0.9;
        report(5, pass, "synthetic feature leakage: " + os.str(), seconds_since(t0));
    }

    t0 = Clock::now();
    ok = check_linear_baseline(detail);
    report(6, ok, "linear baseline: " + detail, seconds_since(t0));

    t0 = Clock::now();
    ok = check_diffroar_sanity(detail);
    report(7, ok, "mask-retrain sanity: " + detail, seconds_since(t0));

    t0 = Clock::now();
    ok = check_block_images(detail);
    report(8, ok, "block-image null-region leakage: " + detail, seconds_since(t0));

    t0 = Clock::now();
    {
        std::ostringstream os;
        os << "r=" << lk.init_r << " scale_ratio=" << lk.scale_ratio;
        bool pass = std::abs(lk.init_r) < 0.1 && lk.scale_ratio >= 10.0;
        report(9, pass, "init-correlation diagnostic: " + os.str(), seconds_since(t0));
    }

    t0 = Clock::now();
    if (argc < 2) {
        report(10, false, "CLI determinism: runner path argument missing", 0.0);
    } else {
        ok = check_cli_determinism(argv[1]);
        report(10, ok, "CLI determinism: byte-identical CSVs", seconds_since(t0));
    }

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
