// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bsnerf/common.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace bsnerf {

// H x W x C raster, row-major, channel-interleaved, float32 on disk.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c), data((size_t)h * w * c, 0.f) {}

    float& at(int y, int x, int c) { return data[((size_t)y * width + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[((size_t)y * width + x) * channels + c]; }
    size_t size() const { return data.size(); }
};

// ---- .imgf32: magic "IMGF32\0", u32 LE height, width, channels, f32 data ----

inline void save_imgf32(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_imgf32: cannot write " + path);
    out.write("IMGF32\0", 7);
    const std::uint32_t dims[3] = {(std::uint32_t)img.height, (std::uint32_t)img.width,
                                   (std::uint32_t)img.channels};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(img.data.data()), img.data.size() * 4);
    if (!out) throw std::runtime_error("save_imgf32: write failed for " + path);
}

inline Image load_imgf32(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_imgf32: cannot open " + path);
    char magic[7];
    in.read(magic, 7);
    if (!in || std::memcmp(magic, "IMGF32\0", 7) != 0)
        throw std::runtime_error("load_imgf32: bad magic in " + path);
    std::uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    Image img(dims[0], dims[1], dims[2]);
    in.read(reinterpret_cast<char*>(img.data.data()), img.data.size() * 4);
    if (!in) throw std::runtime_error("load_imgf32: truncated file " + path);
    return img;
}

// ---- 8-bit PNG export (viewing only; gamma 2.2 tone map, never trained on) ----

namespace detail {
inline void png_chunk(std::ofstream& out, const char type[4], const std::vector<Bytef>& payload) {
    const std::uint32_t len = (std::uint32_t)payload.size();
    const Bytef lenb[4] = {Bytef(len >> 24), Bytef(len >> 16), Bytef(len >> 8), Bytef(len)};
    out.write(reinterpret_cast<const char*>(lenb), 4);
    out.write(type, 4);
    if (!payload.empty()) out.write(reinterpret_cast<const char*>(payload.data()), len);
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty()) crc = crc32(crc, payload.data(), len);
    const Bytef crcb[4] = {Bytef(crc >> 24), Bytef(crc >> 16), Bytef(crc >> 8), Bytef(crc)};
    out.write(reinterpret_cast<const char*>(crcb), 4);
}
}  // namespace detail

// Tone maps with the given white point (default: image max) and writes an
// 8-bit grayscale or RGB PNG. Channel counts other than 1 use the first
// three channels (padded with zeros if needed).
inline void save_png(const std::string& path, const Image& img, double white = 0.0) {
    if (white <= 0.0) {
        white = 1e-12;
        for (float v : img.data) white = std::max(white, (double)v);
    }
    const int out_c = img.channels == 1 ? 1 : 3;
    std::vector<Bytef> raw((size_t)img.height * (1 + (size_t)img.width * out_c));
    size_t p = 0;
    for (int y = 0; y < img.height; ++y) {
        raw[p++] = 0;  // filter: none
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < out_c; ++c) {
                double v = c < img.channels ? img.at(y, x, c) / white : 0.0;
                v = std::clamp(v, 0.0, 1.0);
                raw[p++] = (Bytef)std::lround(255.0 * std::pow(v, 1.0 / 2.2));
            }
    }
    uLongf zlen = compressBound((uLong)raw.size());
    std::vector<Bytef> zdata(zlen);
    if (compress2(zdata.data(), &zlen, raw.data(), (uLong)raw.size(), 6) != Z_OK)
        throw std::runtime_error("save_png: deflate failed for " + path);
    zdata.resize(zlen);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_png: cannot write " + path);
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<Bytef> ihdr(13);
    const std::uint32_t w = img.width, h = img.height;
    ihdr[0] = w >> 24; ihdr[1] = w >> 16; ihdr[2] = w >> 8; ihdr[3] = w;
    ihdr[4] = h >> 24; ihdr[5] = h >> 16; ihdr[6] = h >> 8; ihdr[7] = h;
    ihdr[8] = 8;                          // bit depth
    ihdr[9] = out_c == 1 ? 0 : 2;         // grayscale / truecolor
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", zdata);
    detail::png_chunk(out, "IEND", {});
}

inline double rms_diff(const Image& a, const Image& b) {
    require(a.size() == b.size() && a.size() > 0, "rms_diff: size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = (double)a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / a.size());
}

inline double psnr(const Image& pred, const Image& ref, double peak) {
    require(pred.size() == ref.size() && pred.size() > 0, "psnr: size mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = (double)pred.data[i] - ref.data[i];
        mse += d * d;
    }
    mse /= pred.size();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace bsnerf
