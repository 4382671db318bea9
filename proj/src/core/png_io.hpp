#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace salfuse {

// Decoded PNG, pixels interleaved row-major; 8-bit samples are widened into
// the 16-bit buffer without rescaling (bit_depth records the source depth).
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;   // 1 (gray) or 3 (rgb)
    int bit_depth = 8;  // 8 or 16
    std::vector<std::uint16_t> pixels;
};

PngImage read_png(const std::string& path);

void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels);
void write_png_gray16(const std::string& path, int width, int height,
                      const std::vector<std::uint16_t>& pixels);
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);

}  // namespace salfuse
