#include "clipin/image.hpp"

#include <cmath>

#include "clipin/error.hpp"

namespace clipin {

ToyImage::ToyImage(int h, int w) : height(h), width(w) {
    if (h < 1 || w < 1) throw ConfigError("image dimensions must be positive");
    pixels.assign(static_cast<std::size_t>(h) * w * channels, 0.0);
}

void ToyImage::validate() const {
    if (channels != 3) throw ConfigError("image must have 3 channels");
    if (height < 1 || width < 1) throw ConfigError("image dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
        throw ConfigError("pixel buffer does not match image dimensions");
    for (double p : pixels) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            throw ConfigError("pixel values must lie in [0,1]");
    }
}

}  // namespace clipin
