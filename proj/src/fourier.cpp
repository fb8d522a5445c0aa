#include "rcir/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rcir/rng.hpp"

namespace rcir {

namespace fft_detail {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2(cvec& a, bool inverse) {
    const int n = static_cast<int>(a.size());
    // Bit-reversal permutation.
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / len * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void dft_direct(cvec& a, bool inverse) {
    const int n = static_cast<int>(a.size());
    cvec out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (int t = 0; t < n; ++t) {
            const double ang = sign * 2.0 * std::numbers::pi * k * t / n;
            acc += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    a = std::move(out);
}

}  // namespace

void fft_1d(cvec& a, bool inverse) {
    if (a.size() <= 1) return;
    if (is_pow2(static_cast<int>(a.size())))
        fft_radix2(a, inverse);
    else
        dft_direct(a, inverse);
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(a.size());
        for (auto& v : a) v *= inv_n;
    }
}

void fft_2d(cvec& grid, int h, int w, bool inverse) {
    cvec line;
    line.reserve(static_cast<std::size_t>(std::max(h, w)));
    for (int y = 0; y < h; ++y) {
        line.assign(grid.begin() + static_cast<std::size_t>(y) * w,
                    grid.begin() + static_cast<std::size_t>(y + 1) * w);
        fft_1d(line, inverse);
        std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::size_t>(y) * w);
    }
    for (int x = 0; x < w; ++x) {
        line.resize(static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y) line[y] = grid[static_cast<std::size_t>(y) * w + x];
        fft_1d(line, inverse);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = line[y];
    }
}

int shift_index(int k, int n) { return (k + n / 2) % n; }

int unshift_index(int k, int n) { return (k + n - n / 2) % n; }

}  // namespace fft_detail

Grid make_grid(int height, int width, int channels, double fill) {
    Grid g;
    g.height = height;
    g.width = width;
    g.channels = channels;
    g.values.assign(static_cast<std::size_t>(height) * width * channels, fill);
    return g;
}

namespace {

void require_same_shape(const Grid& a, const Grid& b, const char* what) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels)
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

int crop_window_side(const MixParams& params, int height, int width) {
    if (!(params.crop_ratio > 0.0 && params.crop_ratio <= 1.0))
        throw std::invalid_argument("mix: crop_ratio must be in (0,1]");
    const int side =
        static_cast<int>(std::lround(params.crop_ratio * std::min(height, width)));
    return std::max(1, std::min(side, std::min(height, width)));
}

Spectrum forward_fft(const Image& image) {
    validate_image(image);
    const int h = image.height, w = image.width;
    Spectrum spec;
    spec.amplitude = make_grid(h, w, image.channels);
    spec.phase = make_grid(h, w, image.channels);
    fft_detail::cvec grid(static_cast<std::size_t>(h) * w);
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                grid[static_cast<std::size_t>(y) * w + x] = {image.at(c, y, x), 0.0};
        fft_detail::fft_2d(grid, h, w, false);
        for (int y = 0; y < h; ++y) {
            const int sy = fft_detail::shift_index(y, h);
            for (int x = 0; x < w; ++x) {
                const int sx = fft_detail::shift_index(x, w);
                const std::complex<double> v = grid[static_cast<std::size_t>(y) * w + x];
                spec.amplitude.at(c, sy, sx) = std::abs(v);
                spec.phase.at(c, sy, sx) = std::arg(v);
            }
        }
    }
    return spec;
}

Grid mix_central_amplitude(const Grid& a_ref, const Grid& a_dist, const MixParams& params) {
    require_same_shape(a_ref, a_dist, "mix_central_amplitude");
    if (!(params.lambda >= 0.0 && params.lambda <= 1.0))
        throw std::invalid_argument("mix: lambda must be in [0,1]");
    const int side = crop_window_side(params, a_ref.height, a_ref.width);
    const int y0 = (a_ref.height - side) / 2;
    const int x0 = (a_ref.width - side) / 2;
    Grid out = a_ref;
    for (int c = 0; c < out.channels; ++c)
        for (int y = y0; y < y0 + side; ++y)
            for (int x = x0; x < x0 + side; ++x)
                out.at(c, y, x) =
                    params.lambda * a_dist.at(c, y, x) + (1.0 - params.lambda) * a_ref.at(c, y, x);
    return out;
}

Grid inverse_fft_unclamped(const Grid& amplitude, const Grid& phase) {
    require_same_shape(amplitude, phase, "inverse_fft");
    const int h = amplitude.height, w = amplitude.width;
    Grid out = make_grid(h, w, amplitude.channels);
    fft_detail::cvec grid(static_cast<std::size_t>(h) * w);
    for (int c = 0; c < amplitude.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            const int sy = fft_detail::shift_index(y, h);
            for (int x = 0; x < w; ++x) {
                const int sx = fft_detail::shift_index(x, w);
                grid[static_cast<std::size_t>(y) * w + x] =
                    std::polar(amplitude.at(c, sy, sx), phase.at(c, sy, sx));
            }
        }
        fft_detail::fft_2d(grid, h, w, true);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = grid[static_cast<std::size_t>(y) * w + x].real();
    }
    return out;
}

Image inverse_fft(const Grid& amplitude, const Grid& phase) {
    const Grid raw = inverse_fft_unclamped(amplitude, phase);
    Image img = make_image(raw.height, raw.width, raw.channels);
    for (std::size_t i = 0; i < raw.values.size(); ++i)
        img.pixels[i] = std::clamp(raw.values[i], 0.0, 1.0);
    return img;
}

Image make_counterfactual(const Image& x_ref, const Image& x_dist, const MixParams& params) {
    if (x_ref.height != x_dist.height || x_ref.width != x_dist.width ||
        x_ref.channels != x_dist.channels)
        throw std::invalid_argument("make_counterfactual: shape mismatch");
    const Spectrum ref = forward_fft(x_ref);
    const Spectrum dist = forward_fft(x_dist);
    const Grid mixed = mix_central_amplitude(ref.amplitude, dist.amplitude, params);
    return inverse_fft(mixed, ref.phase);
}

Image random_mask(const Image& image, int patch_size, double mask_fraction,
                  std::uint64_t seed) {
    validate_image(image);
    if (patch_size <= 0 || image.height % patch_size != 0 || image.width % patch_size != 0)
        throw std::invalid_argument("random_mask: patch_size must tile the image");
    if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0))
        throw std::invalid_argument("random_mask: mask_fraction must be in [0,1]");
    const int py = image.height / patch_size;
    const int px = image.width / patch_size;
    const int n_patches = py * px;
    const int n_mask = static_cast<int>(std::lround(mask_fraction * n_patches));

    std::vector<int> order(static_cast<std::size_t>(n_patches));
    for (int i = 0; i < n_patches; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);

    Image out = image;
    for (int k = 0; k < n_mask; ++k) {
        const int p = order[static_cast<std::size_t>(k)];
        const int oy = (p / px) * patch_size;
        const int ox = (p % px) * patch_size;
        for (int c = 0; c < out.channels; ++c)
            for (int y = oy; y < oy + patch_size; ++y)
                for (int x = ox; x < ox + patch_size; ++x) out.at(c, y, x) = 0.0;
    }
    return out;
}

Image patch_shuffle(const Image& image, int grid, std::uint64_t seed) {
    validate_image(image);
    if (grid <= 0 || image.height % grid != 0 || image.width % grid != 0)
        throw std::invalid_argument("patch_shuffle: grid must tile the image");
    const int ph = image.height / grid;  // patch height
    const int pw = image.width / grid;
    const int n_cells = grid * grid;

    std::vector<int> perm(static_cast<std::size_t>(n_cells));
    for (int i = 0; i < n_cells; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(perm);

    Image out = image;
    for (int dst = 0; dst < n_cells; ++dst) {
        const int src = perm[static_cast<std::size_t>(dst)];
        const int sy = (src / grid) * ph, sx = (src % grid) * pw;
        const int dy = (dst / grid) * ph, dx = (dst % grid) * pw;
        for (int c = 0; c < out.channels; ++c)
            for (int y = 0; y < ph; ++y)
                for (int x = 0; x < pw; ++x)
                    out.at(c, dy + y, dx + x) = image.at(c, sy + y, sx + x);
    }
    return out;
}

namespace {

// Symmetric (edge-repeating) reflection onto [0, n), valid for any offset.
int reflect_index(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

}  // namespace

Image gaussian_blur(const Image& image, double sigma, int kernel_radius) {
    validate_image(image);
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    if (kernel_radius <= 0)
        throw std::invalid_argument("gaussian_blur: kernel_radius must be positive");

    std::vector<double> kernel(static_cast<std::size_t>(2 * kernel_radius + 1));
    double sum = 0.0;
    for (int i = -kernel_radius; i <= kernel_radius; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        kernel[static_cast<std::size_t>(i + kernel_radius)] = v;
        sum += v;
    }
    for (auto& v : kernel) v /= sum;

    const int h = image.height, w = image.width;
    Image tmp = make_image(h, w, image.channels);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int k = -kernel_radius; k <= kernel_radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + kernel_radius)] *
                           image.at(c, y, reflect_index(x + k, w));
                tmp.at(c, y, x) = acc;
            }
    Image out = make_image(h, w, image.channels);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int k = -kernel_radius; k <= kernel_radius; ++k)
                    acc += kernel[static_cast<std::size_t>(k + kernel_radius)] *
                           tmp.at(c, reflect_index(y + k, h), x);
                out.at(c, y, x) = std::clamp(acc, 0.0, 1.0);
            }
    return out;
}

Image grayscale(const Image& image) {
    validate_image(image);
    if (image.channels != 3)
        throw std::invalid_argument("grayscale: requires a 3-channel image");
    Image out = image;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const double lum = 0.299 * image.at(0, y, x) + 0.587 * image.at(1, y, x) +
                               0.114 * image.at(2, y, x);
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = lum;
        }
    return out;
}

}  // namespace rcir
