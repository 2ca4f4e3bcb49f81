#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffroar/data.hpp"
#include "diffroar/idx.hpp"
#include "diffroar/rng.hpp"

namespace diffroar {

/// Configuration of a block-image dataset: a glyph signal block and a
/// class-independent null patch stacked vertically.
struct BlockImageConfig {
    enum class Placement { RandomTopOrBottom, FixedTop };
    enum class GlyphSource { ProceduralGlyphs, IdxFiles };

    std::size_t block_h = 28;
    std::size_t block_w = 28;
    Placement placement = Placement::RandomTopOrBottom;
    GlyphSource glyph_source = GlyphSource::ProceduralGlyphs;
    std::string idx_images_path;
    std::string idx_labels_path;
    std::vector<int> class_digits = {0, 1};

    std::size_t image_h() const { return 2 * block_h; }
    std::size_t dim() const { return image_h() * block_w; }

    void validate() const {
        if (block_h < 8 || block_w < 8)
            throw std::invalid_argument("BlockImageConfig: blocks must be at least 8x8");
        if (class_digits.empty())
            throw std::invalid_argument("BlockImageConfig: class_digits empty");
        for (std::size_t i = 0; i < class_digits.size(); ++i) {
            if (class_digits[i] < 0 || class_digits[i] > 9)
                throw std::invalid_argument("BlockImageConfig: digit out of range");
            for (std::size_t j = i + 1; j < class_digits.size(); ++j)
                if (class_digits[i] == class_digits[j])
                    throw std::invalid_argument("BlockImageConfig: duplicate class digit");
        }
    }
};

/// The class-independent null patch: a centered square outline (margin
/// floor(block_h/4)) plus both diagonals of that square. Deterministic
/// and identical for every class.
inline std::vector<double> make_null_patch(std::size_t block_h, std::size_t block_w) {
    if (block_h < 8 || block_w < 8)
        throw std::invalid_argument("make_null_patch: block must be at least 8x8");
    std::vector<double> img(block_h * block_w, 0.0);
    auto at = [&](std::size_t r, std::size_t c) -> double& { return img[r * block_w + c]; };

    const std::size_t m = block_h / 4;
    const std::size_t side = block_h - 2 * m;
    const std::size_t r0 = m, r1 = m + side - 1;
    const std::size_t c0 = (block_w - side) / 2;
    const std::size_t c1 = c0 + side - 1;

    for (std::size_t c = c0; c <= c1; ++c) at(r0, c) = at(r1, c) = 1.0;
    for (std::size_t r = r0; r <= r1; ++r) at(r, c0) = at(r, c1) = 1.0;
    for (std::size_t k = 0; k < side; ++k) {
        at(r0 + k, c0 + k) = 1.0;              // main diagonal
        at(r0 + k, c1 - k) = 1.0;              // anti-diagonal
    }
    return img;
}

namespace detail {

// 3x5 cell bitmap per digit, row-major. Shapes are tuned so every pair
// of digits differs in at least 3 cells, which keeps glyphs apart by
// well over 10% of pixels down to 8x8 blocks.
inline const std::array<std::array<std::uint8_t, 15>, 10>& glyph_font() {
    static const std::array<std::array<std::uint8_t, 15>, 10> t = {{
        {1, 1, 1, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1},  // 0
        {0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1},  // 1
        {1, 1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 1, 1},  // 2
        {1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0},  // 3
        {1, 0, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1, 0, 0, 1},  // 4
        {0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0},  // 5
        {1, 0, 0, 1, 0, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1},  // 6
        {1, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0},  // 7
        {0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0},  // 8
        {1, 1, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 1},  // 9
    }};
    return t;
}

}  // namespace detail

/// Deterministic rendering of a digit as a 3x5 cell bitmap scaled to the
/// block, values in {0,1}.
inline std::vector<double> make_glyph(int digit_id, std::size_t block_h, std::size_t block_w) {
    if (digit_id < 0 || digit_id > 9)
        throw std::invalid_argument("make_glyph: digit_id must be in 0..9");
    if (block_h < 8 || block_w < 8)
        throw std::invalid_argument("make_glyph: block must be at least 8x8");

    const auto& bits = detail::glyph_font()[static_cast<std::size_t>(digit_id)];
    std::vector<double> img(block_h * block_w, 0.0);
    auto row_edge = [&](std::size_t i) {
        return (i * block_h + 2) / 5;  // round(i * h / 5)
    };
    auto col_edge = [&](std::size_t j) { return (2 * j * block_w + 3) / 6; };
    for (std::size_t cell_r = 0; cell_r < 5; ++cell_r)
        for (std::size_t cell_c = 0; cell_c < 3; ++cell_c) {
            if (!bits[cell_r * 3 + cell_c]) continue;
            for (std::size_t r = row_edge(cell_r); r < row_edge(cell_r + 1); ++r)
                for (std::size_t c = col_edge(cell_c); c < col_edge(cell_c + 1); ++c)
                    img[r * block_w + c] = 1.0;
        }
    return img;
}

/// Assembles block images: the class digit's glyph in the signal block,
/// the null patch in the other, stacked vertically and flattened
/// row-major with the top block first.
inline Dataset assemble_block_images(const BlockImageConfig& cfg, std::size_t n, Rng rng) {
    cfg.validate();
    if (n == 0) throw std::invalid_argument("assemble_block_images: n must be >= 1");

    // Pre-render glyphs, or index MNIST images per digit.
    std::vector<std::vector<double>> procedural;
    std::optional<IdxData> idx;
    std::vector<std::vector<std::size_t>> idx_by_digit;
    if (cfg.glyph_source == BlockImageConfig::GlyphSource::ProceduralGlyphs) {
        for (int d : cfg.class_digits) procedural.push_back(make_glyph(d, cfg.block_h, cfg.block_w));
    } else {
        idx = load_idx(cfg.idx_images_path, cfg.idx_labels_path);
        if (idx->rows != cfg.block_h || idx->cols != cfg.block_w)
            throw std::runtime_error("assemble_block_images: IDX image size != block size");
        idx_by_digit.resize(cfg.class_digits.size());
        for (std::size_t i = 0; i < idx->count; ++i)
            for (std::size_t c = 0; c < cfg.class_digits.size(); ++c)
                if (idx->labels[i] == cfg.class_digits[c]) idx_by_digit[c].push_back(i);
        for (std::size_t c = 0; c < cfg.class_digits.size(); ++c)
            if (idx_by_digit[c].empty())
                throw std::runtime_error("assemble_block_images: IDX labels missing digit " +
                                         std::to_string(cfg.class_digits[c]));
    }

    const auto null_patch = make_null_patch(cfg.block_h, cfg.block_w);
    const std::size_t block_px = cfg.block_h * cfg.block_w;

    Dataset ds;
    ds.dim = cfg.dim();
    ds.classes = cfg.class_digits.size();
    ds.pixel_range = {0.0, 1.0};
    ds.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t cls = rng.uniform_index(cfg.class_digits.size());
        const std::vector<double>* glyph;
        if (cfg.glyph_source == BlockImageConfig::GlyphSource::ProceduralGlyphs) {
            glyph = &procedural[cls];
        } else {
            const auto& pool = idx_by_digit[cls];
            glyph = &idx->images[pool[rng.uniform_index(pool.size())]];
        }
        bool signal_top = cfg.placement == BlockImageConfig::Placement::FixedTop
                              ? true
                              : rng.bernoulli(0.5);
        Example ex;
        ex.features.resize(ds.dim);
        const auto& top_block = signal_top ? *glyph : null_patch;
        const auto& bot_block = signal_top ? null_patch : *glyph;
        std::copy(top_block.begin(), top_block.end(), ex.features.begin());
        std::copy(bot_block.begin(), bot_block.end(),
                  ex.features.begin() + static_cast<std::ptrdiff_t>(block_px));
        ex.label = static_cast<int>(cls);
        ex.signal_block = signal_top ? 0 : 1;
        std::vector<std::size_t> null_coords(block_px);
        const std::size_t null_off = signal_top ? block_px : 0;
        for (std::size_t p = 0; p < block_px; ++p) null_coords[p] = null_off + p;
        ex.null_region = std::move(null_coords);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace diffroar
