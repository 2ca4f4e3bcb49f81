#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace diffroar {

// Deterministic splittable PRNG. Every consumer derives its own named
// stream from the experiment seed, so scheduling order cannot change
// results. Generation is splitmix64; derivation hashes the stream name
// (FNV-1a) into the parent seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    Rng derive(std::string_view name) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : name) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 1099511628211ULL;
        }
        return Rng(mix(state_ ^ h));
    }

    Rng derive(std::uint64_t index) const {
        return Rng(mix(state_ + 0x9e3779b97f4a7c15ULL * (index + 1)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // 128-bit multiply rejection-free bound is overkill here; modulo
        // bias at n << 2^64 is far below any tolerance in this project.
        return next_u64() % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        // Box-Muller, no spare caching so the call sequence alone
        // determines the output stream.
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform point in the closed unit ball of R^dim
    std::vector<double> unit_ball(std::size_t dim) {
        std::vector<double> v(dim);
        double norm2 = 0.0;
        for (auto& x : v) {
            x = normal();
            norm2 += x * x;
        }
        double norm = std::sqrt(norm2);
        if (norm == 0.0) return v;
        double radius = std::pow(uniform(), 1.0 / static_cast<double>(dim));
        for (auto& x : v) x *= radius / norm;
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
};

}  // namespace diffroar
