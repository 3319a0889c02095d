#pragma once

// File formats: 8-bit RGB PNG frames (videos are directories of zero-padded
// numeric filenames, 000001.png onward), and a raw little-endian flow format
// with a 16-byte header: 8 magic bytes, uint32 height, uint32 width, then
// float32 [h][w][2] (dx, dy in pixels).

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <png.h>

#include "tinyvsr/tensor.hpp"

namespace tinyvsr {

// Frame values are reals in [0,1]; PNG I/O quantizes to 8 bits.
template <typename T>
void write_png(const std::string& path, const Tensor<T>& frame) {
    if (frame.ndim() != 4 || frame.dim(0) != 1 || frame.dim(1) != 3)
        throw std::invalid_argument("write_png: need a [1,3,H,W] frame");
    int H = frame.dim(2), W = frame.dim(3);
    std::vector<unsigned char> row(static_cast<size_t>(W) * 3);

    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("write_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, W, H, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                T v = std::clamp(frame.at(0, c, y, x), T(0), T(1));
                row[x * 3 + c] = static_cast<unsigned char>(std::lround(v * T(255)));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

template <typename T>
Tensor<T> read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw std::runtime_error("read_png: libpng failure for " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    int W = static_cast<int>(png_get_image_width(png, info));
    int H = static_cast<int>(png_get_image_height(png, info));
    // normalize any input to 8-bit RGB
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
    Tensor<T> frame({1, 3, H, W});
    for (int y = 0; y < H; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                frame.at(0, c, y, x) = static_cast<T>(row[x * 3 + c]) / T(255);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return frame;
}

// 1-based, zero-padded to six digits
inline std::string frame_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.png", index);
    return buf;
}

template <typename T>
void write_frames(const std::string& dir, const Tensor<T>& clip) {
    if (clip.ndim() != 4 || clip.dim(1) != 3)
        throw std::invalid_argument("write_frames: need a [k,3,H,W] clip");
    std::filesystem::create_directories(dir);
    Tensor<T> frame({1, 3, clip.dim(2), clip.dim(3)});
    int64_t per = frame.size();
    for (int f = 0; f < clip.dim(0); ++f) {
        std::copy(clip.data() + f * per, clip.data() + (f + 1) * per, frame.data());
        write_png(dir + "/" + frame_name(f + 1), frame);
    }
}

template <typename T>
Tensor<T> read_frames(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".png") names.push_back(e.path().string());
    if (names.empty()) throw std::runtime_error("read_frames: no PNG frames in " + dir);
    std::sort(names.begin(), names.end());
    auto first = read_png<T>(names[0]);
    Tensor<T> clip({static_cast<int>(names.size()), 3, first.dim(2), first.dim(3)});
    int64_t per = first.size();
    std::copy(first.data(), first.data() + per, clip.data());
    for (size_t i = 1; i < names.size(); ++i) {
        auto f = read_png<T>(names[i]);
        if (f.shape() != first.shape())
            throw std::runtime_error("read_frames: inconsistent frame size at " + names[i]);
        std::copy(f.data(), f.data() + per, clip.data() + static_cast<int64_t>(i) * per);
    }
    return clip;
}

// --- flow files ---------------------------------------------------------

namespace flowio {
constexpr char kMagic[8] = {'T', 'V', 'S', 'R', 'F', 'L', 'W', '1'};
}

// flow: [1,2,H,W] with channel 0 = dx, channel 1 = dy, in pixels
template <typename T>
void write_flow(const std::string& path, const Tensor<T>& flow) {
    if (flow.ndim() != 4 || flow.dim(0) != 1 || flow.dim(1) != 2)
        throw std::invalid_argument("write_flow: need a [1,2,H,W] field");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_flow: cannot open " + path);
    os.write(flowio::kMagic, 8);
    uint32_t h = static_cast<uint32_t>(flow.dim(2)), w = static_cast<uint32_t>(flow.dim(3));
    os.write(reinterpret_cast<const char*>(&h), 4);
    os.write(reinterpret_cast<const char*>(&w), 4);
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
            for (int c = 0; c < 2; ++c) {
                float v = static_cast<float>(flow.at(0, c, y, x));
                os.write(reinterpret_cast<const char*>(&v), 4);
            }
    if (!os) throw std::runtime_error("write_flow: write failed for " + path);
}

template <typename T>
Tensor<T> read_flow(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_flow: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, flowio::kMagic, 8) != 0)
        throw std::runtime_error("read_flow: bad magic in " + path);
    uint32_t h = 0, w = 0;
    is.read(reinterpret_cast<char*>(&h), 4);
    is.read(reinterpret_cast<char*>(&w), 4);
    if (!is || h == 0 || w == 0) throw std::runtime_error("read_flow: bad header in " + path);
    Tensor<T> flow({1, 2, static_cast<int>(h), static_cast<int>(w)});
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x)
            for (int c = 0; c < 2; ++c) {
                float v;
                is.read(reinterpret_cast<char*>(&v), 4);
                flow.at(0, c, y, x) = static_cast<T>(v);
            }
    if (!is) throw std::runtime_error("read_flow: truncated data in " + path);
    return flow;
}

}  // namespace tinyvsr
