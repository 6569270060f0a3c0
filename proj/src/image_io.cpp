#include "mad/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include <png.h>

namespace mad {

void write_pfm(const std::string& path, const TensorF& img) {
    require(img.n() == 1, "pfm: batch must be 1");
    require(img.c() == 1 || img.c() == 3, "pfm: channels must be 1 or 3");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pfm: cannot open " + path + " for writing");
    f << (img.c() == 1 ? "Pf" : "PF") << "\n" << img.w() << " " << img.h() << "\n" << "-1.0\n";
    // Bottom-to-top rows, channel-interleaved pixels, little-endian floats.
    std::vector<float> row(static_cast<std::size_t>(img.w()) * img.c());
    for (int y = img.h() - 1; y >= 0; --y) {
        for (int x = 0; x < img.w(); ++x)
            for (int c = 0; c < img.c(); ++c)
                row[static_cast<std::size_t>(x) * img.c() + c] = img.at(0, c, y, x);
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("pfm: write failed for " + path);
}

TensorF read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pfm: cannot open " + path);
    std::string magic;
    f >> magic;
    int channels;
    if (magic == "Pf")
        channels = 1;
    else if (magic == "PF")
        channels = 3;
    else
        throw std::invalid_argument("pfm: bad magic '" + magic + "' in " + path);
    int w = 0, h = 0;
    double scale = 0.0;
    f >> w >> h >> scale;
    if (!f || w <= 0 || h <= 0 || scale == 0.0)
        throw std::invalid_argument("pfm: malformed header in " + path);
    f.get(); // single whitespace after the scale line

    const bool little_endian = scale < 0.0;
    TensorF img(1, channels, h, w);
    std::vector<float> row(static_cast<std::size_t>(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!f) throw std::invalid_argument("pfm: truncated data in " + path);
        if (!little_endian) {
            for (auto& v : row) {
                std::uint32_t u;
                std::memcpy(&u, &v, 4);
                u = __builtin_bswap32(u);
                std::memcpy(&v, &u, 4);
            }
        }
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(0, c, y, x) = row[static_cast<std::size_t>(x) * channels + c];
    }
    return img;
}

namespace {

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

void png_write_gray16(const std::string& path, const std::vector<std::uint16_t>& data, int w, int h) {
    PngWriter ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("png: cannot open " + path + " for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("png: write failed for " + path);
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint16_t v = data[static_cast<std::size_t>(y) * w + x];
            row[static_cast<std::size_t>(x) * 2] = static_cast<unsigned char>(v >> 8);
            row[static_cast<std::size_t>(x) * 2 + 1] = static_cast<unsigned char>(v & 0xff);
        }
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

} // namespace

void write_disparity_png16(const std::string& path, const TensorF& disp, const TensorF* valid) {
    require(disp.n() == 1 && disp.c() == 1, "disparity png: expected (1,1,h,w), got " +
                                                disp.shape().str());
    const int h = disp.h(), w = disp.w();
    std::vector<std::uint16_t> data(static_cast<std::size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (valid && valid->at(0, 0, y, x) < 0.5f) continue; // stays 0 = invalid
            const double d = disp.at(0, 0, y, x);
            if (d < 0.0 || d >= 256.0)
                throw std::invalid_argument("disparity png: value " + std::to_string(d) +
                                            " at (" + std::to_string(y) + "," + std::to_string(x) +
                                            ") does not fit 16-bit encoding");
            const long v = std::lround(d * 256.0);
            data[static_cast<std::size_t>(y) * w + x] =
                static_cast<std::uint16_t>(std::clamp(v, 1L, 65535L));
        }
    png_write_gray16(path, data, w, h);
}

std::pair<TensorF, TensorF> read_disparity_png16(const std::string& path) {
    PngReader ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("png: cannot open " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, ctx.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw std::invalid_argument("png: bad signature in " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (setjmp(png_jmpbuf(ctx.png))) throw std::invalid_argument("png: read failed for " + path);
    png_init_io(ctx.png, ctx.fp);
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);
    const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    if (png_get_bit_depth(ctx.png, ctx.info) != 16 ||
        png_get_color_type(ctx.png, ctx.info) != PNG_COLOR_TYPE_GRAY)
        throw std::invalid_argument("png: " + path + " is not 16-bit grayscale");

    TensorF disp(1, 1, h, w);
    TensorF mask(1, 1, h, w);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            const std::uint16_t v = static_cast<std::uint16_t>(
                (row[static_cast<std::size_t>(x) * 2] << 8) | row[static_cast<std::size_t>(x) * 2 + 1]);
            disp.at(0, 0, y, x) = static_cast<float>(v) / 256.0f;
            mask.at(0, 0, y, x) = v == 0 ? 0.0f : 1.0f;
        }
    }
    return {disp, mask};
}

void write_rgb_png8(const std::string& path, const TensorF& rgb) {
    require(rgb.n() == 1 && rgb.c() == 3, "rgb png: expected (1,3,h,w), got " + rgb.shape().str());
    const int h = rgb.h(), w = rgb.w();
    PngWriter ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw std::runtime_error("png: cannot open " + path + " for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (setjmp(png_jmpbuf(ctx.png))) throw std::runtime_error("png: write failed for " + path);
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(
                    std::lround(std::clamp(rgb.at(0, c, y, x), 0.0f, 1.0f) * 255.0f));
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

TensorF colormap_disparity(const TensorF& disp, double max_disparity) {
    require(disp.c() == 1, "colormap: expected single channel");
    double dmax = max_disparity;
    if (dmax <= 0.0) {
        for (std::int64_t i = 0; i < disp.numel(); ++i)
            dmax = std::max(dmax, static_cast<double>(disp[i]));
        if (dmax <= 0.0) dmax = 1.0;
    }
    TensorF out(1, 3, disp.h(), disp.w());
    for (int y = 0; y < disp.h(); ++y)
        for (int x = 0; x < disp.w(); ++x) {
            const double t = std::clamp(static_cast<double>(disp.at(0, 0, y, x)) / dmax, 0.0, 1.0);
            // Blue -> cyan -> green -> yellow -> red ramp.
            const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
            const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
            const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
            out.at(0, 0, y, x) = static_cast<float>(r);
            out.at(0, 1, y, x) = static_cast<float>(g);
            out.at(0, 2, y, x) = static_cast<float>(b);
        }
    return out;
}

} // namespace mad
