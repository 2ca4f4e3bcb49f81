#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffroar {

/// Flat image stack loaded from an IDX pair: n images of rows*cols pixels
/// scaled into [0,1].
struct IdxData {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::vector<double>> images;
    std::vector<int> labels;
};

namespace detail {
inline std::uint32_t read_be32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error(std::string("idx: truncated ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
}  // namespace detail

/// Parses the standard big-endian IDX pair (magic 2051 for images, 2049
/// for labels). Pixel bytes are scaled to [0,1].
inline IdxData load_idx(const std::string& path_images, const std::string& path_labels) {
    std::ifstream imgs(path_images, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + path_images);
    std::ifstream labs(path_labels, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + path_labels);

    if (detail::read_be32(imgs, "image header") != 2051)
        throw std::runtime_error("idx: wrong magic in image file (expected 2051)");
    IdxData out;
    out.count = detail::read_be32(imgs, "image header");
    out.rows = detail::read_be32(imgs, "image header");
    out.cols = detail::read_be32(imgs, "image header");

    if (detail::read_be32(labs, "label header") != 2049)
        throw std::runtime_error("idx: wrong magic in label file (expected 2049)");
    std::size_t label_count = detail::read_be32(labs, "label header");
    if (label_count != out.count)
        throw std::runtime_error("idx: count mismatch between image and label files");

    const std::size_t pixels = out.rows * out.cols;
    out.images.resize(out.count);
    std::vector<unsigned char> buf(pixels);
    for (auto& img : out.images) {
        imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
        if (!imgs) throw std::runtime_error("idx: truncated image payload");
        img.resize(pixels);
        for (std::size_t i = 0; i < pixels; ++i) img[i] = buf[i] / 255.0;
    }
    out.labels.resize(out.count);
    for (auto& l : out.labels) {
        unsigned char b;
        labs.read(reinterpret_cast<char*>(&b), 1);
        if (!labs) throw std::runtime_error("idx: truncated label payload");
        l = b;
    }
    return out;
}

/// Writer for the same format; pixel values are clamped to [0,1] and
/// quantized to bytes.
inline void write_idx(const IdxData& data, const std::string& path_images,
                      const std::string& path_labels) {
    auto write_be32 = [](std::ostream& os, std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
        os.write(reinterpret_cast<const char*>(b), 4);
    };
    std::ofstream imgs(path_images, std::ios::binary);
    if (!imgs) throw std::runtime_error("idx: cannot open " + path_images + " for writing");
    write_be32(imgs, 2051);
    write_be32(imgs, static_cast<std::uint32_t>(data.count));
    write_be32(imgs, static_cast<std::uint32_t>(data.rows));
    write_be32(imgs, static_cast<std::uint32_t>(data.cols));
    for (const auto& img : data.images)
        for (double v : img) {
            double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            unsigned char b = static_cast<unsigned char>(c * 255.0 + 0.5);
            imgs.write(reinterpret_cast<const char*>(&b), 1);
        }
    std::ofstream labs(path_labels, std::ios::binary);
    if (!labs) throw std::runtime_error("idx: cannot open " + path_labels + " for writing");
    write_be32(labs, 2049);
    write_be32(labs, static_cast<std::uint32_t>(data.count));
    for (int l : data.labels) {
        unsigned char b = static_cast<unsigned char>(l);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
}

}  // namespace diffroar
