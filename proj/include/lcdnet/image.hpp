#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lcdnet {

/// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;  // row-major, interleaved

    std::uint8_t& at(int y, int x, int c) {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

}  // namespace lcdnet
