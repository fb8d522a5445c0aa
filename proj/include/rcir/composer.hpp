#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcir/dataset.hpp"
#include "rcir/image.hpp"
#include "rcir/matrix.hpp"

namespace rcir {

enum class PoolMode { kMean, kMaxQuery };

struct ComposerConfig {
    int patch_size = 8;
    int channels = 3;
    int vocab_size = 17;
    int query_count = 32;  // Q
    int embed_dim = 256;   // D
    int hidden_dim = 256;
    PoolMode pool = PoolMode::kMean;
    std::uint64_t init_seed = 0;

    int patch_dim() const { return patch_size * patch_size * channels; }
};

// Minimal attention composer standing in for a pretrained multimodal
// backbone: patch embeddings and token embeddings form the context, each of
// the Q learnable queries attends over it with single-head scaled dot-product
// attention, and a two-layer tanh block mixes query and context into one
// output row. Every parameter trains.
struct ComposerParams {
    ComposerConfig config;
    Mat patch_proj;   // patch_dim x D
    Mat token_embed;  // vocab x D
    Mat queries;      // Q x D
    Mat mix1_w;       // D x H
    Vec mix1_b;       // H
    Mat mix2_w;       // H x D
    Vec mix2_b;       // D
};

struct ComposerGrads {
    Mat patch_proj;
    Mat token_embed;
    Mat queries;
    Mat mix1_w;
    Vec mix1_b;
    Mat mix2_w;
    Vec mix2_b;
};

// All parameters seeded uniform in [-1/sqrt(D), 1/sqrt(D)].
ComposerParams init_params(const ComposerConfig& config);
ComposerGrads make_zero_grads(const ComposerConfig& config);

// Intermediates of one forward pass, recorded for the backward pass.
struct ComposeTrace {
    Mat patch_vecs;           // n_patches x patch_dim
    std::vector<int> tokens;
    Mat embeds;               // n_ctx x D (patches first, then tokens)
    Mat alphas;               // Q x n_ctx attention weights
    Mat combined;             // Q x D, query + context
    Mat hidden;               // Q x H, tanh activations
};

// Forward pass; trace may be null when no backward pass will follow.
Mat compose(const ComposerParams& params, const Image& image, const TokenSeq& tokens,
            ComposeTrace* trace = nullptr);
Mat encode_target(const ComposerParams& params, const Image& image,
                  ComposeTrace* trace = nullptr);

// Accumulates exact reverse-mode gradients of the traced forward pass into
// grads, given the loss gradient with respect to the output feature matrix.
void compose_backward(const ComposerParams& params, const ComposeTrace& trace,
                      const Mat& output_grad, ComposerGrads& grads);

// Mean over the Q rows (or per-dimension max over rows), L2-normalized.
// Rejects features with no direction (zero pooled vector).
Vec pool(const Mat& feature, PoolMode mode = PoolMode::kMean);
Mat pool_backward(const Mat& feature, PoolMode mode, const Vec& pooled_grad);

// Flat parameter views in a fixed documented order: patch_proj, token_embed,
// queries, mix1_w, mix1_b, mix2_w, mix2_b, each row-major.
std::size_t param_count(const ComposerConfig& config);
Vec param_vector(const ComposerParams& params);
void set_param_vector(ComposerParams& params, const Vec& flat);
Vec grad_vector(const ComposerGrads& grads);

// Checkpoint file: one UTF-8 JSON header line (shapes, config, seed) followed
// by the flat parameter array as little-endian 32-bit floats. Loading is what
// defines the model: two loads of the same file give bit-identical forwards.
void save_checkpoint(const ComposerParams& params, const std::string& path);
ComposerParams load_checkpoint(const std::string& path);

}  // namespace rcir
