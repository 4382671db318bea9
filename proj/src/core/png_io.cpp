#include "png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "error.hpp"

namespace salfuse {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp-ing back to the setjmp point; the message
// is captured here first. Keeping the buffer PODs makes the jump safe.
struct PngErrorCapture {
    char message[256] = {0};
};

void capture_error(png_structp png, png_const_charp msg) {
    auto* cap = static_cast<PngErrorCapture*>(png_get_error_ptr(png));
    if (cap && msg) {
        std::strncpy(cap->message, msg, sizeof(cap->message) - 1);
    }
    longjmp(png_jmpbuf(png), 1);
}

void ignore_warning(png_structp, png_const_charp) {}

}  // namespace

PngImage read_png(const std::string& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error::data("unreadable file: " + path);

    PngErrorCapture capture;
    PngImage out;
    std::vector<std::uint8_t> row;

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &capture, capture_error,
                                             ignore_warning);
    if (!png) throw Error::io("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error::io("png_create_info_struct failed");
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error::data("failed to decode " + path + ": " + capture.message);
    }

    png_init_io(png, file.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    // Normalize to 8/16-bit gray or rgb.
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // PNG is big-endian on the wire
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const int out_channels = png_get_channels(png, info);
    if (out_channels != 1 && out_channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error::data("unsupported channel count " + std::to_string(out_channels) + " in " +
                          path);
    }

    out.width = static_cast<int>(width);
    out.height = static_cast<int>(height);
    out.channels = out_channels;
    out.bit_depth = out_depth;
    out.pixels.assign(static_cast<std::size_t>(width) * height * out_channels, 0);
    row.resize(png_get_rowbytes(png, info));

    for (png_uint_32 y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        std::uint16_t* dst =
            out.pixels.data() + static_cast<std::size_t>(y) * width * out_channels;
        const std::size_t samples = static_cast<std::size_t>(width) * out_channels;
        if (out_depth == 16) {
            const auto* src = reinterpret_cast<const std::uint16_t*>(row.data());
            for (std::size_t i = 0; i < samples; ++i) dst[i] = src[i];
        } else {
            for (std::size_t i = 0; i < samples; ++i) dst[i] = row[i];
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

namespace {

void write_png_impl(const std::string& path, int width, int height, int channels,
                    int bit_depth, const void* pixels) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error::io("cannot write file: " + path);

    PngErrorCapture capture;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &capture, capture_error,
                                              ignore_warning);
    if (!png) throw Error::io("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error::io("png_create_info_struct failed");
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error::io("failed to encode " + path + ": " + capture.message);
    }

    png_init_io(png, file.get());
    const int color_type = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        if (bit_depth == 16) {
            const auto* base = static_cast<const std::uint16_t*>(pixels);
            png_write_row(png, reinterpret_cast<png_const_bytep>(
                                   base + static_cast<std::size_t>(y) * row_samples));
        } else {
            const auto* base = static_cast<const std::uint8_t*>(pixels);
            png_write_row(png, base + static_cast<std::size_t>(y) * row_samples);
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) {
        throw Error::usage("write_png_gray8: pixel buffer size mismatch");
    }
    write_png_impl(path, width, height, 1, 8, pixels.data());
}

void write_png_gray16(const std::string& path, int width, int height,
                      const std::vector<std::uint16_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) {
        throw Error::usage("write_png_gray16: pixel buffer size mismatch");
    }
    write_png_impl(path, width, height, 1, 16, pixels.data());
}

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != static_cast<std::size_t>(width) * height * 3) {
        throw Error::usage("write_png_rgb8: pixel buffer size mismatch");
    }
    write_png_impl(path, width, height, 3, 8, pixels.data());
}

}  // namespace salfuse
