#pragma once

#include <vector>

namespace clipin {

// RGB raster with pixel values in [0,1], stored row-major as [y][x][channel].
struct ToyImage {
    int channels = 3;
    int height = 16;
    int width = 16;
    std::vector<double> pixels;

    ToyImage() = default;
    ToyImage(int h, int w);

    double at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    void validate() const;  // shape consistency and pixel range
};

}  // namespace clipin
