#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rcir {

// Pixel grid in [0,1], planar channel layout: pixels[(c*H + y)*W + x].
// Grayscale images have channels == 1, color images channels == 3.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;

    double at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

Image make_image(int height, int width, int channels, double fill = 0.0);

// Throws std::invalid_argument on any violated invariant: channels in {1,3},
// H and W at least 8, every pixel finite and in [0,1].
void validate_image(const Image& image);

bool images_equal(const Image& a, const Image& b);
double max_abs_diff(const Image& a, const Image& b);

// Binary PPM (P6) for 3-channel, binary PGM (P5) for 1-channel, 8-bit.
// Internal pixel values map as value/255.0 on read and round(v*255) on write.
void write_image(const std::string& path, const Image& image);
Image read_image(const std::string& path);

}  // namespace rcir
