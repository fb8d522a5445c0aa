#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "rcir/image.hpp"

namespace rcir {

// Real-valued per-channel H x W grid, same planar layout as Image but without
// the [0,1] range constraint. Holds amplitude spectra, phase spectra, and
// unclamped reconstructions.
struct Grid {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> values;

    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

Grid make_grid(int height, int width, int channels, double fill = 0.0);

// Frequency representation with the zero-frequency bin at the grid center
// (row height/2, column width/2), so the "central region" used by the
// amplitude mix is literal. Amplitude is the modulus, phase the argument
// in (-pi, pi].
struct Spectrum {
    Grid amplitude;
    Grid phase;
};

struct MixParams {
    double lambda = 1.0;      // mix ratio in [0,1]
    double crop_ratio = 0.25; // central window side as a fraction of min(H,W)
    std::uint64_t rng_seed = 0;
};

// Side length of the centered crop window: round(crop_ratio * min(H,W)),
// never below 1.
int crop_window_side(const MixParams& params, int height, int width);

// Unnormalized forward DFT per channel (DC bin equals the plain pixel sum),
// shifted to the centered layout.
Spectrum forward_fft(const Image& image);

// Replaces the centered crop window of a_ref with
// lambda * a_dist + (1 - lambda) * a_ref; everything outside the window is
// copied bit-exactly from a_ref.
Grid mix_central_amplitude(const Grid& a_ref, const Grid& a_dist, const MixParams& params);

// Inverse DFT of amplitude * exp(i*phase) (centered layout), real part only.
// The unclamped variant keeps raw values; inverse_fft clamps to [0,1] so the
// result is a valid Image.
Grid inverse_fft_unclamped(const Grid& amplitude, const Grid& phase);
Image inverse_fft(const Grid& amplitude, const Grid& phase);

// forward_fft -> mix_central_amplitude -> inverse_fft with the reference
// image's phase.
Image make_counterfactual(const Image& x_ref, const Image& x_dist, const MixParams& params);

// Baseline perturbations.
Image random_mask(const Image& image, int patch_size, double mask_fraction,
                  std::uint64_t seed);
Image patch_shuffle(const Image& image, int grid, std::uint64_t seed);
Image gaussian_blur(const Image& image, double sigma, int kernel_radius);
Image grayscale(const Image& image);

namespace fft_detail {

using cvec = std::vector<std::complex<double>>;

// In-place 1-D transform; radix-2 for power-of-two lengths, direct DFT
// otherwise. inverse=true applies the 1/n scaling.
void fft_1d(cvec& a, bool inverse);

// Row-column 2-D transform over a row-major h x w grid.
void fft_2d(cvec& grid, int h, int w, bool inverse);

// Index maps between natural DFT layout and the centered layout.
int shift_index(int k, int n);    // natural -> centered
int unshift_index(int k, int n);  // centered -> natural

}  // namespace fft_detail

}  // namespace rcir
