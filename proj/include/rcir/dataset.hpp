#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcir/image.hpp"

namespace rcir {

// Latent semantics of one rendered scene. Cardinalities are configurable but
// bounded by the shape/color tables in the renderer.
struct AttributeSpace {
    int shapes = 4;     // <= 6 drawable shape kinds
    int colors = 6;     // <= 8 palette entries
    int sizes = 3;      // <= 4 radius levels
    int positions = 4;  // <= 9 grid cells

    int vocab_size() const { return shapes + colors + sizes + positions; }
};

void validate_space(const AttributeSpace& space);

struct AttributeVector {
    int shape_id = 0;
    int color_id = 0;
    int size_id = 0;
    int position_id = 0;

    bool operator==(const AttributeVector&) const = default;
};

int attribute_field(const AttributeVector& attrs, int field);
void set_attribute_field(AttributeVector& attrs, int field, int value);
int hamming_distance(const AttributeVector& a, const AttributeVector& b);

// Modification text: a token sequence where each token encodes one
// (field, new_value) edit. Token layout packs the four fields back to back:
// shape tokens first, then color, size, position.
using TokenSeq = std::vector<int>;

struct Edit {
    int field = 0;  // 0 shape, 1 color, 2 size, 3 position
    int value = 0;
};

int encode_edit(const Edit& edit, const AttributeSpace& space);
Edit decode_token(int token, const AttributeSpace& space);

// Throws if any token is out of vocabulary, a field repeats, or the edit
// count is outside 1..3 (empty sequences are allowed only for target
// encoding, not as modification text).
void validate_modification(const TokenSeq& tokens, const AttributeSpace& space);

AttributeVector apply_modification(const AttributeVector& attrs, const TokenSeq& tokens,
                                   const AttributeSpace& space);

// Deterministic scene rendering: one colored shape at its grid cell over a
// mid-gray background, optionally cluttered with seeded low-contrast
// rectangles whose summed area fraction stays <= clutter_level. The shape is
// drawn last and is never occluded.
Image render_image(const AttributeVector& attrs, double clutter_level, std::uint64_t seed,
                   int image_size, const AttributeSpace& space);

struct Triplet {
    Image reference;
    TokenSeq modification;
    Image target;
    AttributeVector ref_attrs;
    AttributeVector target_attrs;  // attributes of the stored (possibly swapped) target
    bool is_noisy = false;         // ground truth, hidden from training
};

struct DatasetConfig {
    int n_triplets = 0;
    double noise_ratio = 0.0;   // sigma: fraction of corrupted correspondences
    double clutter_level = 0.0; // modality-inherent clutter budget
    int image_size = 32;
    std::uint64_t seed = 0;
    AttributeSpace space;
};

struct TripletDataset {
    DatasetConfig config;
    std::vector<Triplet> triplets;
    // Evaluation gallery: entry i is triplet i's true (pre-corruption) target.
    std::vector<Image> gallery;
    std::vector<AttributeVector> gallery_attrs;
    std::vector<int> truth;  // truth[i] = gallery index of query i's true target
};

TripletDataset generate_dataset(const DatasetConfig& config);

// Per-query candidate subsets: the true target plus the subset_size-1 hardest
// distractors, nearest by attribute Hamming distance, ties broken by gallery
// index. Fully deterministic; the seed parameter is reserved by the interface
// and does not affect the result.
std::vector<std::vector<int>> subset_candidates(const TripletDataset& dataset,
                                                int subset_size, std::uint64_t seed);

// Same rule over a bare attribute list; used for evaluation subsets over a
// validation gallery.
std::vector<std::vector<int>> subsets_by_hamming(const std::vector<AttributeVector>& attrs,
                                                 const std::vector<int>& truth,
                                                 int subset_size);

// On-disk layout: dataset.json (config), manifest.jsonl (one record per
// triplet), gallery.jsonl, subsets.jsonl, images/*.ppm. Paths inside
// manifests are relative to the dataset directory.
void write_dataset(const TripletDataset& dataset, const std::string& dir, int subset_size);
TripletDataset read_dataset(const std::string& dir);

}  // namespace rcir
