#include "rcir/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace rcir {

Image make_image(int height, int width, int channels, double fill) {
    Image img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.pixels.assign(static_cast<std::size_t>(height) * width * channels, fill);
    return img;
}

void validate_image(const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("image: channels must be 1 or 3");
    if (image.height < 8 || image.width < 8)
        throw std::invalid_argument("image: height and width must be >= 8");
    const std::size_t expected =
        static_cast<std::size_t>(image.height) * image.width * image.channels;
    if (image.pixels.size() != expected)
        throw std::invalid_argument("image: pixel buffer size mismatch");
    for (double v : image.pixels) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw std::invalid_argument("image: pixel out of [0,1]");
    }
}

bool images_equal(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.channels == b.channels &&
           a.pixels == b.pixels;
}

double max_abs_diff(const Image& a, const Image& b) {
    if (a.pixels.size() != b.pixels.size())
        throw std::invalid_argument("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
    return m;
}

void write_image(const std::string& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("write_image: channels must be 1 or 3");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_image: cannot open " + path);
    out << (image.channels == 3 ? "P6" : "P5") << "\n"
        << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * image.channels + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("write_image: write failed for " + path);
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) continue;
        tok.push_back(static_cast<char>(ch));
        while ((ch = in.get()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(ch));
        break;
    }
    return tok;
}

}  // namespace

Image read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_image: cannot open " + path);
    const std::string magic = next_token(in);
    int channels = 0;
    if (magic == "P6")
        channels = 3;
    else if (magic == "P5")
        channels = 1;
    else
        throw std::runtime_error("read_image: unsupported format '" + magic + "' in " + path);
    const int width = std::stoi(next_token(in));
    const int height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw std::runtime_error("read_image: only 8-bit images supported");
    if (width <= 0 || height <= 0) throw std::runtime_error("read_image: bad dimensions");

    Image img = make_image(height, width, channels);
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw std::runtime_error("read_image: truncated pixel data in " + path);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) =
                    raw[(static_cast<std::size_t>(y) * width + x) * channels + c] / 255.0;
    return img;
}

}  // namespace rcir
