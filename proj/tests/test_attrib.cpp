#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <map>

#include "diffroar/attrib.hpp"

using namespace diffroar;

namespace {

MlpParams linear_model(std::vector<double> w, double b = 0.0) {
    MlpParams p;
    p.layers.resize(1);
    p.layers[0].weight = Matrix(1, w.size());
    p.layers[0].weight.a = std::move(w);
    p.layers[0].bias = {b};
    return p;
}

}  // namespace

TEST_CASE("rank sorts descending with index tie-breaks") {
    CHECK(rank({{0.1, 0.9, 0.5}, "", {}}).perm == std::vector<std::size_t>{1, 2, 0});
    CHECK(rank({{1.0, 1.0, 1.0}, "", {}}).perm == std::vector<std::size_t>{0, 1, 2});
    CHECK(rank({{1.0, 1.0, 0.0}, "", {}}).perm == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(rank({{0.0, std::nan("")}, "", {}}), std::invalid_argument);
}

TEST_CASE("rank is invariant to positive rescaling") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores(10);
        for (auto& s : scores) s = rng.normal();
        auto base = rank({scores, "", {}}).perm;
        for (auto& s : scores) s *= 3.7;
        CHECK(rank({scores, "", {}}).perm == base);
    }
}

TEST_CASE("grad_scores signed and unsigned forms") {
    // model with gradient (-2, 1) everywhere
    MlpParams p = linear_model({-2.0, 1.0});
    std::vector<double> x = {1.0, -1.0};
    // ensure predicted-logit gradient is the weight row itself
    auto unsigned_scores = grad_scores(p, x, GradientTarget::LogitOfPredictedLabel, false);
    CHECK(unsigned_scores.scores == std::vector<double>{2.0, 1.0});
    auto signed_scores = grad_scores(p, x, GradientTarget::LogitOfPredictedLabel, true);
    CHECK(signed_scores.scores == std::vector<double>{-2.0, -1.0});

    std::vector<double> x0 = {0.0, -1.0};
    auto zero_signed = grad_scores(p, x0, GradientTarget::LogitOfPredictedLabel, true);
    CHECK(zero_signed.scores[0] == 0.0);
}

TEST_CASE("loss and logit targets give the same unsigned order for C=1") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        MlpParams p = init_params({6, 10, 1}, rng.derive(trial));
        std::vector<double> x(6);
        Rng r2 = rng.derive(100 + trial);
        for (auto& v : x) v = r2.normal();
        auto a = rank(grad_scores(p, x, GradientTarget::LossAtPredictedLabel, false));
        auto b = rank(grad_scores(p, x, GradientTarget::LogitOfPredictedLabel, false));
        CHECK(a.perm == b.perm);
    }
}

TEST_CASE("smoothgrad with sigma 0 equals plain gradient scores") {
    MlpParams p = init_params({4, 8, 1}, Rng(9));
    std::vector<double> x = {0.5, -0.2, 1.0, 0.3};
    auto plain = grad_scores(p, x, GradientTarget::LogitOfPredictedLabel);
    auto smooth = smoothgrad(p, x, GradientTarget::LogitOfPredictedLabel, 0.0, 10, Rng(1));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(smooth.scores[i] == Catch::Approx(plain.scores[i]).margin(1e-12));
}

TEST_CASE("smoothgrad on a linear model equals plain scores for any sigma") {
    MlpParams p = linear_model({1.0, -0.5, 2.0});
    std::vector<double> x = {0.1, 0.2, 0.3};
    auto plain = grad_scores(p, x, GradientTarget::LogitOfPredictedLabel);
    auto smooth = smoothgrad(p, x, GradientTarget::LogitOfPredictedLabel, 0.5, 50, Rng(2));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(smooth.scores[i] == Catch::Approx(plain.scores[i]).margin(1e-12));
}

TEST_CASE("smoothgrad concentrates around a large-sample reference") {
    MlpParams p = init_params({4, 12, 1}, Rng(10));
    std::vector<double> x = {0.3, -0.7, 0.2, 0.9};
    const double sigma = 0.3;
    // large-sample Monte-Carlo reference with per-coordinate stderr
    const std::size_t big = 50000;
    std::vector<double> sum(4, 0.0), sum2(4, 0.0);
    Rng ref_rng(11);
    std::vector<double> xp(4);
    for (std::size_t s = 0; s < big; ++s) {
        for (std::size_t i = 0; i < 4; ++i) xp[i] = x[i] + sigma * ref_rng.normal();
        auto g = input_gradient(p, xp, GradientTarget::LogitOfPredictedLabel);
        for (std::size_t i = 0; i < 4; ++i) {
            sum[i] += g[i];
            sum2[i] += g[i] * g[i];
        }
    }
    auto est = smoothgrad(p, x, GradientTarget::LogitOfPredictedLabel, sigma, 500, Rng(12));
    for (std::size_t i = 0; i < 4; ++i) {
        double mean = sum[i] / big;
        double var = sum2[i] / big - mean * mean;
        double se500 = std::sqrt(var / 500.0);
        CHECK(std::abs(est.scores[i] - std::abs(mean)) <= 3.0 * se500 + 1e-12);
    }
}

TEST_CASE("integrated gradients on a linear model is |w .* x|") {
    MlpParams p = linear_model({2.0, -1.0, 0.5});
    std::vector<double> x = {1.0, 3.0, -2.0};
    for (std::size_t steps : {1u, 5u, 64u}) {
        auto ig = integrated_gradients(p, x, GradientTarget::LogitOfPredictedLabel, steps);
        CHECK(ig.scores[0] == Catch::Approx(2.0).margin(1e-12));
        CHECK(ig.scores[1] == Catch::Approx(3.0).margin(1e-12));
        CHECK(ig.scores[2] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("integrated gradients at the baseline is zero") {
    MlpParams p = init_params({3, 6, 1}, Rng(13));
    std::vector<double> zero(3, 0.0);
    auto ig = integrated_gradients(p, zero, GradientTarget::LogitOfPredictedLabel, 16);
    for (double s : ig.scores) CHECK(s == 0.0);
}

TEST_CASE("integrated gradients completeness on a small net") {
    MlpParams p = init_params({5, 10, 1}, Rng(14));
    std::vector<double> x(5);
    Rng rng(15);
    for (auto& v : x) v = rng.normal();
    auto terms = integrated_gradients_terms(p, x, GradientTarget::LogitOfPredictedLabel, 256);
    double total = 0.0;
    for (double t : terms) total += t;
    double fx = logits(p, x)[0];
    double f0 = logits(p, std::vector<double>(5, 0.0))[0];
    CHECK(total == Catch::Approx(fx - f0).margin(1e-3));
}

TEST_CASE("occlusion basics") {
    // constant model: zero scores
    MlpParams constant = linear_model({0.0, 0.0, 0.0, 0.0}, 3.0);
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    auto s = occlusion(constant, x, GradientTarget::LogitOfPredictedLabel, 1, 2, 2);
    CHECK(s.scores == std::vector<double>{0.0, 0.0, 0.0, 0.0});

    // patch = whole image: every coordinate scores f(x) - f(0)
    MlpParams lin = linear_model({1.0, -2.0, 0.5, 1.0});
    auto whole = occlusion(lin, x, GradientTarget::LogitOfPredictedLabel, 2, 2, 2);
    double expect = logits(lin, x)[0] - logits(lin, {0, 0, 0, 0})[0];
    for (double v : whole.scores) CHECK(v == Catch::Approx(expect).margin(1e-12));

    // rho=1 on a linear model: score_i = w_i * x_i
    auto single = occlusion(lin, x, GradientTarget::LogitOfPredictedLabel, 1, 2, 2);
    CHECK(single.scores[0] == Catch::Approx(1.0 * 1.0).margin(1e-12));
    CHECK(single.scores[1] == Catch::Approx(-2.0 * 2.0).margin(1e-12));
    CHECK(single.scores[2] == Catch::Approx(0.5 * 3.0).margin(1e-12));
    CHECK(single.scores[3] == Catch::Approx(1.0 * 4.0).margin(1e-12));

    CHECK_THROWS_AS(occlusion(lin, x, GradientTarget::LogitOfPredictedLabel, 3, 2, 2),
                    std::invalid_argument);
}

TEST_CASE("random attribution is uniform over permutations") {
    CHECK(random_attribution(1, Rng(0)).perm == std::vector<std::size_t>{0});
    CHECK(random_attribution(7, Rng(3)).perm == random_attribution(7, Rng(3)).perm);

    std::map<std::vector<std::size_t>, int> counts;
    Rng rng(4);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[random_attribution(3, rng.derive(i)).perm];
    REQUIRE(counts.size() == 6);
    for (const auto& [perm, c] : counts)
        CHECK(static_cast<double>(c) / draws == Catch::Approx(1.0 / 6).margin(0.01));
}

TEST_CASE("top and bottom sets") {
    AttributionOrder order{{1, 2, 0}};
    auto [top, bottom] = top_bottom_sets(order, 0.34);  // ceil(0.34*3) = 2
    CHECK(top.coords == std::vector<std::size_t>{1, 2});
    CHECK(bottom.coords == std::vector<std::size_t>{0, 2});

    auto [t1, b1] = top_bottom_sets(order, 0.3);  // ceil(0.9) = 1
    CHECK(t1.coords == std::vector<std::size_t>{1});
    CHECK(b1.coords == std::vector<std::size_t>{0});

    auto [tall, ball] = top_bottom_sets(order, 1.0);
    CHECK(tall.coords == std::vector<std::size_t>{0, 1, 2});
    CHECK(ball.coords == tall.coords);

    CHECK_THROWS_AS(top_bottom_sets(order, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(top_bottom_sets(order, 1.5), std::invalid_argument);
}

TEST_CASE("top and bottom sets are disjoint when ceil(kD) <= D/2") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t dim = 2 + 2 * rng.uniform_index(10);
        auto order = random_attribution(dim, rng.derive(trial));
        double k = 0.5 * rng.uniform();
        std::size_t count = static_cast<std::size_t>(std::ceil(k * dim));
        if (count == 0 || count > dim / 2) continue;
        auto [top, bottom] = top_bottom_sets(order, k);
        for (std::size_t i : top.coords) CHECK_FALSE(bottom.contains(i));
    }
}

TEST_CASE("attribution CSV and PGM dumps") {
    AttributionScores s{{0.5, 0.1, 0.9, 0.3}, "grad", GradientTarget::LogitOfPredictedLabel};
    write_attribution_csv(s, "attrib_dump.csv");
    std::ifstream is("attrib_dump.csv");
    std::string header, line0;
    std::getline(is, header);
    std::getline(is, line0);
    CHECK(header == "coordinate,score,rank");
    CHECK(line0 == "0,0.5,1");

    write_attribution_pgm(s, 2, 2, "attrib_dump.pgm");
    std::ifstream pg("attrib_dump.pgm", std::ios::binary);
    std::string magic;
    pg >> magic;
    CHECK(magic == "P5");
    int w, h, maxval;
    pg >> w >> h >> maxval;
    CHECK(w == 2);
    CHECK(h == 2);
    CHECK(maxval == 255);
    pg.get();
    unsigned char px[4];
    pg.read(reinterpret_cast<char*>(px), 4);
    CHECK(px[2] == 255);  // the max score
    std::remove("attrib_dump.csv");
    std::remove("attrib_dump.pgm");
}
