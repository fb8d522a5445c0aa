#include "rcir/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "rcir/rng.hpp"

namespace rcir {

namespace {

constexpr double kBackgroundGray = 0.5;
constexpr int kMaxShapes = 6;
constexpr int kMaxSizes = 4;

// Saturated palette, all far from the mid-gray background and from the
// low-contrast clutter band.
constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {1.00, 0.05, 0.05},  // red
    {0.05, 0.80, 0.05},  // green
    {0.10, 0.10, 1.00},  // blue
    {1.00, 0.90, 0.05},  // yellow
    {0.95, 0.05, 0.95},  // magenta
    {0.05, 0.90, 0.95},  // cyan
    {1.00, 0.55, 0.05},  // orange
    {0.55, 0.05, 0.80},  // purple
}};

int grid_side_for(int positions) {
    int g = 1;
    while (g * g < positions) ++g;
    return g;
}

}  // namespace

void validate_space(const AttributeSpace& space) {
    if (space.shapes < 1 || space.shapes > kMaxShapes)
        throw std::invalid_argument("attribute space: shapes must be in 1..6");
    if (space.colors < 1 || space.colors > static_cast<int>(kPalette.size()))
        throw std::invalid_argument("attribute space: colors must be in 1..8");
    if (space.sizes < 1 || space.sizes > kMaxSizes)
        throw std::invalid_argument("attribute space: sizes must be in 1..4");
    if (space.positions < 1 || space.positions > 9)
        throw std::invalid_argument("attribute space: positions must be in 1..9");
}

int attribute_field(const AttributeVector& attrs, int field) {
    switch (field) {
        case 0: return attrs.shape_id;
        case 1: return attrs.color_id;
        case 2: return attrs.size_id;
        case 3: return attrs.position_id;
        default: throw std::invalid_argument("attribute_field: field must be 0..3");
    }
}

void set_attribute_field(AttributeVector& attrs, int field, int value) {
    switch (field) {
        case 0: attrs.shape_id = value; return;
        case 1: attrs.color_id = value; return;
        case 2: attrs.size_id = value; return;
        case 3: attrs.position_id = value; return;
        default: throw std::invalid_argument("set_attribute_field: field must be 0..3");
    }
}

int hamming_distance(const AttributeVector& a, const AttributeVector& b) {
    int d = 0;
    for (int f = 0; f < 4; ++f)
        if (attribute_field(a, f) != attribute_field(b, f)) ++d;
    return d;
}

namespace {

int field_cardinality(const AttributeSpace& space, int field) {
    switch (field) {
        case 0: return space.shapes;
        case 1: return space.colors;
        case 2: return space.sizes;
        case 3: return space.positions;
        default: throw std::invalid_argument("field must be 0..3");
    }
}

int field_offset(const AttributeSpace& space, int field) {
    int off = 0;
    for (int f = 0; f < field; ++f) off += field_cardinality(space, f);
    return off;
}

void validate_attrs(const AttributeVector& attrs, const AttributeSpace& space) {
    for (int f = 0; f < 4; ++f) {
        const int v = attribute_field(attrs, f);
        if (v < 0 || v >= field_cardinality(space, f))
            throw std::invalid_argument("attribute id out of range");
    }
}

}  // namespace

int encode_edit(const Edit& edit, const AttributeSpace& space) {
    if (edit.field < 0 || edit.field > 3)
        throw std::invalid_argument("encode_edit: field must be 0..3");
    if (edit.value < 0 || edit.value >= field_cardinality(space, edit.field))
        throw std::invalid_argument("encode_edit: value out of range");
    return field_offset(space, edit.field) + edit.value;
}

Edit decode_token(int token, const AttributeSpace& space) {
    if (token < 0 || token >= space.vocab_size())
        throw std::invalid_argument("decode_token: token out of vocabulary");
    for (int f = 0; f < 4; ++f) {
        const int off = field_offset(space, f);
        if (token < off + field_cardinality(space, f)) return Edit{f, token - off};
    }
    throw std::logic_error("decode_token: unreachable");
}

void validate_modification(const TokenSeq& tokens, const AttributeSpace& space) {
    if (tokens.empty() || tokens.size() > 3)
        throw std::invalid_argument("modification: must carry 1..3 edits");
    bool seen[4] = {false, false, false, false};
    for (int t : tokens) {
        const Edit e = decode_token(t, space);
        if (seen[e.field]) throw std::invalid_argument("modification: duplicate field");
        seen[e.field] = true;
    }
}

AttributeVector apply_modification(const AttributeVector& attrs, const TokenSeq& tokens,
                                   const AttributeSpace& space) {
    validate_attrs(attrs, space);
    AttributeVector out = attrs;
    for (int t : tokens) {
        const Edit e = decode_token(t, space);
        set_attribute_field(out, e.field, e.value);
    }
    return out;
}

namespace {

bool inside_shape(int shape_id, int dx, int dy, int r) {
    switch (shape_id) {
        case 0: return std::abs(dx) <= r && std::abs(dy) <= r;                      // square
        case 1: return dx * dx + dy * dy <= r * r;                                  // circle
        case 2: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2;         // triangle
        case 3: return std::abs(dx) + std::abs(dy) <= r;                            // diamond
        case 4: {                                                                   // ring
            const int d2 = dx * dx + dy * dy;
            return d2 <= r * r && 4 * d2 >= r * r;
        }
        case 5:                                                                     // cross
            return (std::abs(dx) <= (r + 1) / 3 || std::abs(dy) <= (r + 1) / 3) &&
                   std::abs(dx) <= r && std::abs(dy) <= r;
        default: throw std::invalid_argument("shape id out of range");
    }
}

int shape_radius(int size_id, int cell, int sizes) {
    const double frac = sizes == 1 ? 1.0 : static_cast<double>(size_id) / (sizes - 1);
    const int r = static_cast<int>(std::lround(0.5 * cell * (0.35 + 0.5 * frac)));
    return std::max(2, std::min(r, cell / 2 - 1));
}

}  // namespace

Image render_image(const AttributeVector& attrs, double clutter_level, std::uint64_t seed,
                   int image_size, const AttributeSpace& space) {
    validate_space(space);
    validate_attrs(attrs, space);
    if (image_size < 16) throw std::invalid_argument("render_image: image_size must be >= 16");
    if (!(clutter_level >= 0.0 && clutter_level <= 1.0))
        throw std::invalid_argument("render_image: clutter_level must be in [0,1]");

    Image img = make_image(image_size, image_size, 3, kBackgroundGray);

    if (clutter_level > 0.0) {
        Rng rng(mix_seed(seed, 0x636c7574ULL));  // clutter stream
        const double budget = clutter_level * image_size * image_size;
        double used = 0.0;
        const int max_side = std::max(2, image_size / 4);
        for (int tries = 0; tries < 64; ++tries) {
            const int rw = rng.range_int(2, max_side);
            const int rh = rng.range_int(2, max_side);
            if (used + static_cast<double>(rw) * rh > budget) break;
            used += static_cast<double>(rw) * rh;
            const int ox = rng.range_int(0, image_size - rw);
            const int oy = rng.range_int(0, image_size - rh);
            double col[3];
            for (double& c : col) c = kBackgroundGray + rng.uniform(-0.15, 0.15);
            for (int y = oy; y < oy + rh; ++y)
                for (int x = ox; x < ox + rw; ++x)
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
        }
    }

    const int gs = grid_side_for(space.positions);
    const int cell = image_size / gs;
    const int row = attrs.position_id / gs;
    const int col = attrs.position_id % gs;
    const int cy = row * cell + cell / 2;
    const int cx = col * cell + cell / 2;
    const int r = shape_radius(attrs.size_id, cell, space.sizes);
    const auto& rgb = kPalette[static_cast<std::size_t>(attrs.color_id)];

    for (int y = std::max(0, cy - r); y <= std::min(image_size - 1, cy + r); ++y)
        for (int x = std::max(0, cx - r); x <= std::min(image_size - 1, cx + r); ++x)
            if (inside_shape(attrs.shape_id, x - cx, y - cy, r))
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
    return img;
}

namespace {

AttributeVector random_attrs(Rng& rng, const AttributeSpace& space) {
    AttributeVector a;
    a.shape_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(space.shapes)));
    a.color_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(space.colors)));
    a.size_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(space.sizes)));
    a.position_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(space.positions)));
    return a;
}

// 1..3 edits over distinct fields; each edit moves the field to a genuinely
// new value. Fields with cardinality 1 cannot change and are skipped.
TokenSeq random_modification(Rng& rng, const AttributeVector& ref,
                             const AttributeSpace& space) {
    std::vector<int> editable;
    for (int f = 0; f < 4; ++f)
        if (field_cardinality(space, f) > 1) editable.push_back(f);
    if (editable.empty())
        throw std::invalid_argument("dataset: attribute space admits no modifications");
    const int max_edits = std::min<int>(3, static_cast<int>(editable.size()));
    const int n_edits = rng.range_int(1, max_edits);
    rng.shuffle(editable);

    TokenSeq tokens;
    for (int k = 0; k < n_edits; ++k) {
        const int f = editable[static_cast<std::size_t>(k)];
        const int card = field_cardinality(space, f);
        const int old = attribute_field(ref, f);
        int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(card - 1)));
        if (v >= old) ++v;  // skip the current value
        tokens.push_back(encode_edit(Edit{f, v}, space));
    }
    return tokens;
}

}  // namespace

TripletDataset generate_dataset(const DatasetConfig& config) {
    validate_space(config.space);
    if (config.n_triplets < 1)
        throw std::invalid_argument("generate_dataset: n_triplets must be positive");
    if (!(config.noise_ratio >= 0.0 && config.noise_ratio <= 1.0))
        throw std::invalid_argument("generate_dataset: noise_ratio must be in [0,1]");
    if (config.noise_ratio > 0.0 && config.n_triplets < 2)
        throw std::invalid_argument(
            "generate_dataset: noise requires at least 2 triplets (no valid swap partner)");

    const int n = config.n_triplets;
    TripletDataset ds;
    ds.config = config;
    ds.triplets.resize(static_cast<std::size_t>(n));
    ds.gallery.resize(static_cast<std::size_t>(n));
    ds.gallery_attrs.resize(static_cast<std::size_t>(n));
    ds.truth.resize(static_cast<std::size_t>(n));

    Rng attr_rng(mix_seed(config.seed, 1));
    Rng mod_rng(mix_seed(config.seed, 2));

    std::vector<AttributeVector> clean_target_attrs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Triplet& t = ds.triplets[static_cast<std::size_t>(i)];
        t.ref_attrs = random_attrs(attr_rng, config.space);
        t.modification = random_modification(mod_rng, t.ref_attrs, config.space);
        const AttributeVector tgt =
            apply_modification(t.ref_attrs, t.modification, config.space);
        clean_target_attrs[static_cast<std::size_t>(i)] = tgt;

        // Clutter models modality-inherent noise, which lives in the
        // reference image; targets render clean.
        t.reference = render_image(t.ref_attrs, config.clutter_level,
                                   mix_seed(config.seed, 3, static_cast<std::uint64_t>(i), 0),
                                   config.image_size, config.space);
        Image target = render_image(tgt, 0.0,
                                    mix_seed(config.seed, 3, static_cast<std::uint64_t>(i), 1),
                                    config.image_size, config.space);
        t.target = target;
        t.target_attrs = tgt;
        t.is_noisy = false;

        ds.gallery[static_cast<std::size_t>(i)] = std::move(target);
        ds.gallery_attrs[static_cast<std::size_t>(i)] = tgt;
        ds.truth[static_cast<std::size_t>(i)] = i;
    }

    // Corrupt exactly round(sigma * n) correspondences by swapping in another
    // triplet's true target; the swap partner must differ in attributes so a
    // corrupted triplet can never accidentally satisfy its modification.
    const int n_noisy = static_cast<int>(std::lround(config.noise_ratio * n));
    if (n_noisy > 0) {
        Rng noise_rng(mix_seed(config.seed, 4));
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        noise_rng.shuffle(order);
        std::vector<int> chosen(order.begin(), order.begin() + n_noisy);
        std::sort(chosen.begin(), chosen.end());

        for (int i : chosen) {
            std::vector<int> partners;
            for (int j = 0; j < n; ++j)
                if (j != i && !(clean_target_attrs[static_cast<std::size_t>(j)] ==
                                clean_target_attrs[static_cast<std::size_t>(i)]))
                    partners.push_back(j);
            if (partners.empty())
                throw std::runtime_error("generate_dataset: no valid swap partner exists");
            const int j =
                partners[static_cast<std::size_t>(noise_rng.below(partners.size()))];
            Triplet& t = ds.triplets[static_cast<std::size_t>(i)];
            t.target = ds.gallery[static_cast<std::size_t>(j)];
            t.target_attrs = clean_target_attrs[static_cast<std::size_t>(j)];
            t.is_noisy = true;
        }
    }
    return ds;
}

std::vector<std::vector<int>> subsets_by_hamming(const std::vector<AttributeVector>& attrs,
                                                 const std::vector<int>& truth,
                                                 int subset_size) {
    const int g = static_cast<int>(attrs.size());
    if (subset_size < 2 || subset_size > g)
        throw std::invalid_argument("subsets: subset_size must be in [2, gallery size]");
    std::vector<std::vector<int>> subsets(truth.size());
    for (std::size_t q = 0; q < truth.size(); ++q) {
        const int ti = truth[q];
        std::vector<int> others;
        others.reserve(static_cast<std::size_t>(g - 1));
        for (int j = 0; j < g; ++j)
            if (j != ti) others.push_back(j);
        std::stable_sort(others.begin(), others.end(), [&](int a, int b) {
            const int da = hamming_distance(attrs[static_cast<std::size_t>(a)],
                                            attrs[static_cast<std::size_t>(ti)]);
            const int db = hamming_distance(attrs[static_cast<std::size_t>(b)],
                                            attrs[static_cast<std::size_t>(ti)]);
            if (da != db) return da < db;
            return a < b;
        });
        std::vector<int> subset;
        subset.push_back(ti);
        for (int k = 0; k < subset_size - 1; ++k)
            subset.push_back(others[static_cast<std::size_t>(k)]);
        std::sort(subset.begin(), subset.end());
        subsets[q] = std::move(subset);
    }
    return subsets;
}

std::vector<std::vector<int>> subset_candidates(const TripletDataset& dataset,
                                                int subset_size, std::uint64_t /*seed*/) {
    return subsets_by_hamming(dataset.gallery_attrs, dataset.truth, subset_size);
}

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json attrs_to_json(const AttributeVector& a) {
    return json::array({a.shape_id, a.color_id, a.size_id, a.position_id});
}

AttributeVector attrs_from_json(const json& j) {
    AttributeVector a;
    a.shape_id = j.at(0).get<int>();
    a.color_id = j.at(1).get<int>();
    a.size_id = j.at(2).get<int>();
    a.position_id = j.at(3).get<int>();
    return a;
}

std::string index_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d.ppm", prefix, i);
    return buf;
}

}  // namespace

void write_dataset(const TripletDataset& dataset, const std::string& dir, int subset_size) {
    const fs::path root(dir);
    fs::create_directories(root / "images");

    json cfg;
    cfg["n_triplets"] = dataset.config.n_triplets;
    cfg["noise_ratio"] = dataset.config.noise_ratio;
    cfg["clutter_level"] = dataset.config.clutter_level;
    cfg["image_size"] = dataset.config.image_size;
    cfg["seed"] = dataset.config.seed;
    cfg["space"] = {{"shapes", dataset.config.space.shapes},
                    {"colors", dataset.config.space.colors},
                    {"sizes", dataset.config.space.sizes},
                    {"positions", dataset.config.space.positions}};
    {
        std::ofstream out(root / "dataset.json");
        if (!out) throw std::runtime_error("write_dataset: cannot open dataset.json");
        out << cfg.dump(2) << "\n";
    }

    std::ofstream manifest(root / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("write_dataset: cannot open manifest.jsonl");
    for (int i = 0; i < dataset.config.n_triplets; ++i) {
        const Triplet& t = dataset.triplets[static_cast<std::size_t>(i)];
        const std::string ref_path = "images/" + index_name("ref", i);
        const std::string tgt_path = "images/" + index_name("tgt", i);
        write_image((root / ref_path).string(), t.reference);
        write_image((root / tgt_path).string(), t.target);
        json rec;
        rec["id"] = i;
        rec["is_noisy"] = t.is_noisy;
        rec["modification"] = t.modification;
        rec["ref_attrs"] = attrs_to_json(t.ref_attrs);
        rec["ref_path"] = ref_path;
        rec["target_attrs"] = attrs_to_json(t.target_attrs);
        rec["target_path"] = tgt_path;
        manifest << rec.dump() << "\n";
    }

    std::ofstream gal(root / "gallery.jsonl");
    if (!gal) throw std::runtime_error("write_dataset: cannot open gallery.jsonl");
    for (std::size_t i = 0; i < dataset.gallery.size(); ++i) {
        const std::string path = "images/" + index_name("gal", static_cast<int>(i));
        write_image((root / path).string(), dataset.gallery[i]);
        json rec;
        rec["attrs"] = attrs_to_json(dataset.gallery_attrs[i]);
        rec["id"] = static_cast<int>(i);
        rec["path"] = path;
        gal << rec.dump() << "\n";
    }

    const auto subsets = subset_candidates(
        dataset, std::min(subset_size, static_cast<int>(dataset.gallery.size())), 0);
    std::ofstream sub(root / "subsets.jsonl");
    if (!sub) throw std::runtime_error("write_dataset: cannot open subsets.jsonl");
    for (std::size_t q = 0; q < subsets.size(); ++q) {
        json rec;
        rec["candidates"] = subsets[q];
        rec["query"] = static_cast<int>(q);
        rec["truth"] = dataset.truth[q];
        sub << rec.dump() << "\n";
    }
}

TripletDataset read_dataset(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream cfg_in(root / "dataset.json");
    if (!cfg_in)
        throw std::runtime_error("read_dataset: missing dataset.json under " + dir);
    json cfg = json::parse(cfg_in);

    TripletDataset ds;
    ds.config.n_triplets = cfg.at("n_triplets").get<int>();
    ds.config.noise_ratio = cfg.at("noise_ratio").get<double>();
    ds.config.clutter_level = cfg.at("clutter_level").get<double>();
    ds.config.image_size = cfg.at("image_size").get<int>();
    ds.config.seed = cfg.at("seed").get<std::uint64_t>();
    ds.config.space.shapes = cfg.at("space").at("shapes").get<int>();
    ds.config.space.colors = cfg.at("space").at("colors").get<int>();
    ds.config.space.sizes = cfg.at("space").at("sizes").get<int>();
    ds.config.space.positions = cfg.at("space").at("positions").get<int>();

    std::ifstream manifest(root / "manifest.jsonl");
    if (!manifest)
        throw std::runtime_error("read_dataset: missing manifest.jsonl under " + dir);
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        Triplet t;
        t.is_noisy = rec.at("is_noisy").get<bool>();
        t.modification = rec.at("modification").get<TokenSeq>();
        t.ref_attrs = attrs_from_json(rec.at("ref_attrs"));
        t.target_attrs = attrs_from_json(rec.at("target_attrs"));
        t.reference = read_image((root / rec.at("ref_path").get<std::string>()).string());
        t.target = read_image((root / rec.at("target_path").get<std::string>()).string());
        ds.triplets.push_back(std::move(t));
    }

    std::ifstream gal(root / "gallery.jsonl");
    if (!gal) throw std::runtime_error("read_dataset: missing gallery.jsonl under " + dir);
    while (std::getline(gal, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        ds.gallery.push_back(read_image((root / rec.at("path").get<std::string>()).string()));
        ds.gallery_attrs.push_back(attrs_from_json(rec.at("attrs")));
    }
    ds.truth.resize(ds.triplets.size());
    std::iota(ds.truth.begin(), ds.truth.end(), 0);

    if (ds.triplets.size() != static_cast<std::size_t>(ds.config.n_triplets))
        throw std::runtime_error("read_dataset: manifest count disagrees with dataset.json");
    return ds;
}

}  // namespace rcir
