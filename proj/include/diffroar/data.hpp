#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/rng.hpp"

namespace diffroar {

/// One labeled instance. Generated data additionally records which block
/// carries the instance-specific signal and which coordinates belong to
/// the class-independent null region.
struct Example {
    std::vector<double> features;
    int label = 0;
    std::optional<int> signal_block;
    std::optional<std::vector<std::size_t>> null_region;
};

/// Parameters of the synthetic block distribution: d blocks of dimension
/// block_dim, one uniformly chosen block among the first d/2 carrying
/// y*u + noise, every block perturbed by eta times a unit-ball draw.
struct BlockSpec {
    std::size_t block_dim = 1;
    std::size_t num_blocks = 10;  // must be even
    double noise = 0.0;
    std::vector<double> signal_dir = {1.0};

    std::size_t dim() const { return block_dim * num_blocks; }

    void validate() const {
        if (block_dim == 0) throw std::invalid_argument("BlockSpec: block_dim must be positive");
        if (num_blocks == 0 || num_blocks % 2 != 0)
            throw std::invalid_argument("BlockSpec: num_blocks must be positive and even");
        if (noise < 0.0) throw std::invalid_argument("BlockSpec: noise must be >= 0");
        if (signal_dir.size() != block_dim)
            throw std::invalid_argument("BlockSpec: signal_dir length != block_dim");
        double n2 = 0.0;
        for (double v : signal_dir) n2 += v * v;
        if (std::abs(std::sqrt(n2) - 1.0) > 1e-12)
            throw std::invalid_argument("BlockSpec: signal_dir must be unit norm");
    }
};

struct Dataset {
    std::vector<Example> examples;
    std::size_t dim = 0;
    std::size_t classes = 2;
    // Declared value range of the features, used by PGD to clamp image
    // perturbations. Unset for unbounded data.
    std::optional<std::pair<double, double>> pixel_range;

    std::size_t size() const { return examples.size(); }

    void validate() const {
        if (examples.empty()) throw std::invalid_argument("Dataset: empty");
        for (const auto& ex : examples) {
            if (ex.features.size() != dim) throw std::invalid_argument("Dataset: dim mismatch");
            if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= classes)
                throw std::invalid_argument("Dataset: label out of range");
        }
    }
};

/// Set of coordinates kept by the unmasking operator.
struct MaskSet {
    std::vector<std::size_t> coords;  // sorted, unique

    static MaskSet from_indices(std::vector<std::size_t> idx, std::size_t dim) {
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        if (!idx.empty() && idx.back() >= dim)
            throw std::out_of_range("MaskSet: index out of range");
        return MaskSet{std::move(idx)};
    }

    bool contains(std::size_t i) const {
        return std::binary_search(coords.begin(), coords.end(), i);
    }
};

/// x^S: keep coordinates in S, zero everything else.
inline std::vector<double> unmask(const std::vector<double>& x, const MaskSet& s) {
    if (!s.coords.empty() && s.coords.back() >= x.size())
        throw std::out_of_range("unmask: mask index out of range");
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t i : s.coords) out[i] = x[i];
    return out;
}

/// Draws n samples from the synthetic block distribution. Labels y in
/// {-1,+1} are stored as classes {0,1} with +1 <-> 1.
inline Dataset sample_synthetic(const BlockSpec& spec, std::size_t n, Rng rng) {
    spec.validate();
    if (n == 0) throw std::invalid_argument("sample_synthetic: n must be >= 1");

    const std::size_t d = spec.num_blocks;
    const std::size_t bd = spec.block_dim;

    std::vector<std::size_t> null_region;
    for (std::size_t b = d / 2; b < d; ++b)
        for (std::size_t i = 0; i < bd; ++i) null_region.push_back(b * bd + i);

    Dataset ds;
    ds.dim = spec.dim();
    ds.classes = 2;
    ds.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int y = rng.bernoulli(0.5) ? 1 : -1;
        std::size_t j = rng.uniform_index(d / 2);
        std::vector<double> x(ds.dim, 0.0);
        for (std::size_t b = 0; b < d; ++b) {
            if (spec.noise > 0.0) {
                auto g = rng.unit_ball(bd);
                for (std::size_t k = 0; k < bd; ++k) x[b * bd + k] = spec.noise * g[k];
            }
            if (b == j)
                for (std::size_t k = 0; k < bd; ++k)
                    x[b * bd + k] += static_cast<double>(y) * spec.signal_dir[k];
        }
        Example ex;
        ex.features = std::move(x);
        ex.label = (y > 0) ? 1 : 0;
        ex.signal_block = static_cast<int>(j);
        ex.null_region = null_region;
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

inline double signed_label(int label) { return label == 1 ? 1.0 : -1.0; }

// ---------------------------------------------------------------------------
// Binary dataset container.
// Header: magic "DRDS", u32 version, u32 dim, u32 classes, u32 n,
// u8 has_signal_block, u8 has_null_region, u8 has_pixel_range, u8 pad.
// Then per example: dim little-endian f32 features; then n u32 labels;
// then (optional) n i32 signal blocks; then (optional) null-region size +
// indices (shared across examples); then (optional) 2 f64 pixel range.

namespace detail {
template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}
template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("dataset file: truncated");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}
}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write("DRDS", 4);
    detail::write_le<std::uint32_t>(os, 1);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.dim));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.classes));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.size()));
    bool has_sig = !ds.examples.empty() && ds.examples.front().signal_block.has_value();
    bool has_null = !ds.examples.empty() && ds.examples.front().null_region.has_value();
    bool has_range = ds.pixel_range.has_value();
    detail::write_le<std::uint8_t>(os, has_sig);
    detail::write_le<std::uint8_t>(os, has_null);
    detail::write_le<std::uint8_t>(os, has_range);
    detail::write_le<std::uint8_t>(os, 0);
    for (const auto& ex : ds.examples)
        for (double v : ex.features) detail::write_le<float>(os, static_cast<float>(v));
    for (const auto& ex : ds.examples)
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ex.label));
    if (has_sig)
        for (const auto& ex : ds.examples)
            detail::write_le<std::int32_t>(os, ex.signal_block.value_or(-1));
    if (has_null) {
        const auto& nr = *ds.examples.front().null_region;
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(nr.size()));
        for (std::size_t i : nr) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(i));
    }
    if (has_range) {
        detail::write_le<double>(os, ds.pixel_range->first);
        detail::write_le<double>(os, ds.pixel_range->second);
    }
    if (!os) throw std::runtime_error("write failure: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "DRDS")
        throw std::runtime_error("dataset file: wrong magic");
    auto version = detail::read_le<std::uint32_t>(is);
    if (version != 1) throw std::runtime_error("dataset file: unknown version");
    Dataset ds;
    ds.dim = detail::read_le<std::uint32_t>(is);
    ds.classes = detail::read_le<std::uint32_t>(is);
    std::size_t n = detail::read_le<std::uint32_t>(is);
    bool has_sig = detail::read_le<std::uint8_t>(is);
    bool has_null = detail::read_le<std::uint8_t>(is);
    bool has_range = detail::read_le<std::uint8_t>(is);
    detail::read_le<std::uint8_t>(is);
    ds.examples.resize(n);
    for (auto& ex : ds.examples) {
        ex.features.resize(ds.dim);
        for (auto& v : ex.features) v = detail::read_le<float>(is);
    }
    for (auto& ex : ds.examples) ex.label = static_cast<int>(detail::read_le<std::uint32_t>(is));
    if (has_sig)
        for (auto& ex : ds.examples) ex.signal_block = detail::read_le<std::int32_t>(is);
    if (has_null) {
        std::size_t m = detail::read_le<std::uint32_t>(is);
        std::vector<std::size_t> nr(m);
        for (auto& i : nr) i = detail::read_le<std::uint32_t>(is);
        for (auto& ex : ds.examples) ex.null_region = nr;
    }
    if (has_range) {
        double lo = detail::read_le<double>(is);
        double hi = detail::read_le<double>(is);
        ds.pixel_range = {lo, hi};
    }
    ds.validate();
    return ds;
}

}  // namespace diffroar
