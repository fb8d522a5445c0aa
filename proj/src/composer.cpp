#include "rcir/composer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rcir/rng.hpp"

namespace rcir {

namespace {

void validate_config(const ComposerConfig& c) {
    if (c.patch_size < 1 || c.channels < 1 || c.vocab_size < 1 || c.query_count < 1 ||
        c.embed_dim < 1 || c.hidden_dim < 1)
        throw std::invalid_argument("composer: config dimensions must be positive");
}

void fill_uniform(Rng& rng, double bound, Mat& m) {
    for (auto& v : m.data) v = rng.uniform(-bound, bound);
}

void fill_uniform(Rng& rng, double bound, Vec& v) {
    for (auto& x : v) x = rng.uniform(-bound, bound);
}

}  // namespace

ComposerParams init_params(const ComposerConfig& config) {
    validate_config(config);
    ComposerParams p;
    p.config = config;
    p.patch_proj = Mat(config.patch_dim(), config.embed_dim);
    p.token_embed = Mat(config.vocab_size, config.embed_dim);
    p.queries = Mat(config.query_count, config.embed_dim);
    p.mix1_w = Mat(config.embed_dim, config.hidden_dim);
    p.mix1_b = Vec(static_cast<std::size_t>(config.hidden_dim), 0.0);
    p.mix2_w = Mat(config.hidden_dim, config.embed_dim);
    p.mix2_b = Vec(static_cast<std::size_t>(config.embed_dim), 0.0);

    Rng rng(config.init_seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    fill_uniform(rng, bound, p.patch_proj);
    fill_uniform(rng, bound, p.token_embed);
    fill_uniform(rng, bound, p.queries);
    fill_uniform(rng, bound, p.mix1_w);
    fill_uniform(rng, bound, p.mix1_b);
    fill_uniform(rng, bound, p.mix2_w);
    fill_uniform(rng, bound, p.mix2_b);
    return p;
}

ComposerGrads make_zero_grads(const ComposerConfig& config) {
    ComposerGrads g;
    g.patch_proj = Mat(config.patch_dim(), config.embed_dim);
    g.token_embed = Mat(config.vocab_size, config.embed_dim);
    g.queries = Mat(config.query_count, config.embed_dim);
    g.mix1_w = Mat(config.embed_dim, config.hidden_dim);
    g.mix1_b = Vec(static_cast<std::size_t>(config.hidden_dim), 0.0);
    g.mix2_w = Mat(config.hidden_dim, config.embed_dim);
    g.mix2_b = Vec(static_cast<std::size_t>(config.embed_dim), 0.0);
    return g;
}

namespace {

Mat patchify(const Image& image, int patch_size, int channels) {
    if (image.channels != channels)
        throw std::invalid_argument("compose: image channel count incompatible with model");
    if (image.height % patch_size != 0 || image.width % patch_size != 0)
        throw std::invalid_argument("compose: image size incompatible with patch size");
    const int py = image.height / patch_size;
    const int px = image.width / patch_size;
    Mat out(py * px, patch_size * patch_size * channels);
    for (int gy = 0; gy < py; ++gy)
        for (int gx = 0; gx < px; ++gx) {
            const int row = gy * px + gx;
            int k = 0;
            for (int c = 0; c < channels; ++c)
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x)
                        out(row, k++) =
                            2.0 * (image.at(c, gy * patch_size + y, gx * patch_size + x) - 0.5);
        }
    return out;
}

}  // namespace

Mat compose(const ComposerParams& params, const Image& image, const TokenSeq& tokens,
            ComposeTrace* trace) {
    const ComposerConfig& c = params.config;
    for (int t : tokens)
        if (t < 0 || t >= c.vocab_size)
            throw std::invalid_argument("compose: token out of vocabulary");

    const Mat patches = patchify(image, c.patch_size, c.channels);
    const int n_patches = patches.rows;
    const int n_ctx = n_patches + static_cast<int>(tokens.size());
    const int d = c.embed_dim, q = c.query_count, h = c.hidden_dim;

    Mat embeds(n_ctx, d);
    for (int i = 0; i < n_patches; ++i)
        for (int k = 0; k < patches.cols; ++k) {
            const double pv = patches(i, k);
            if (pv == 0.0) continue;
            for (int j = 0; j < d; ++j) embeds(i, j) += pv * params.patch_proj(k, j);
        }
    for (std::size_t t = 0; t < tokens.size(); ++t)
        for (int j = 0; j < d; ++j)
            embeds(n_patches + static_cast<int>(t), j) = params.token_embed(tokens[t], j);

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Mat alphas(q, n_ctx);
    Mat combined(q, d);
    for (int i = 0; i < q; ++i) {
        double mx = -1e300;
        for (int j = 0; j < n_ctx; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += params.queries(i, k) * embeds(j, k);
            alphas(i, j) = s * scale;
            mx = std::max(mx, alphas(i, j));
        }
        double denom = 0.0;
        for (int j = 0; j < n_ctx; ++j) {
            alphas(i, j) = std::exp(alphas(i, j) - mx);
            denom += alphas(i, j);
        }
        for (int j = 0; j < n_ctx; ++j) alphas(i, j) /= denom;
        for (int k = 0; k < d; ++k) {
            double ctx = 0.0;
            for (int j = 0; j < n_ctx; ++j) ctx += alphas(i, j) * embeds(j, k);
            combined(i, k) = ctx;  // RESIDUAL_TOGGLE
        }
    }

    Mat hidden(q, h);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < h; ++j) {
            double s = params.mix1_b[static_cast<std::size_t>(j)];
            for (int k = 0; k < d; ++k) s += combined(i, k) * params.mix1_w(k, j);
            hidden(i, j) = std::tanh(s);
        }

    Mat out(q, d);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < d; ++j) {
            double s = params.mix2_b[static_cast<std::size_t>(j)];
            for (int k = 0; k < h; ++k) s += hidden(i, k) * params.mix2_w(k, j);
            out(i, j) = s;
        }

    for (double v : out.data)
        if (!std::isfinite(v)) throw std::runtime_error("compose: non-finite feature");

    if (trace) {
        trace->patch_vecs = patches;
        trace->tokens = std::vector<int>(tokens.begin(), tokens.end());
        trace->embeds = std::move(embeds);
        trace->alphas = std::move(alphas);
        trace->combined = std::move(combined);
        trace->hidden = std::move(hidden);
    }
    return out;
}

Mat encode_target(const ComposerParams& params, const Image& image, ComposeTrace* trace) {
    return compose(params, image, TokenSeq{}, trace);
}

void compose_backward(const ComposerParams& params, const ComposeTrace& trace,
                      const Mat& output_grad, ComposerGrads& grads) {
    const ComposerConfig& c = params.config;
    const int q = c.query_count, d = c.embed_dim, h = c.hidden_dim;
    const int n_patches = trace.patch_vecs.rows;
    const int n_ctx = trace.embeds.rows;
    if (output_grad.rows != q || output_grad.cols != d)
        throw std::invalid_argument("compose_backward: output_grad shape mismatch");

    // Second mixing layer.
    Mat dhidden(q, h);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < d; ++j) {
            const double g = output_grad(i, j);
            if (g == 0.0) continue;
            grads.mix2_b[static_cast<std::size_t>(j)] += g;
            for (int k = 0; k < h; ++k) {
                grads.mix2_w(k, j) += trace.hidden(i, k) * g;
                dhidden(i, k) += params.mix2_w(k, j) * g;
            }
        }

    // tanh and first mixing layer.
    Mat dcombined(q, d);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < h; ++j) {
            const double t = trace.hidden(i, j);
            const double g = dhidden(i, j) * (1.0 - t * t);
            if (g == 0.0) continue;
            grads.mix1_b[static_cast<std::size_t>(j)] += g;
            for (int k = 0; k < d; ++k) {
                grads.mix1_w(k, j) += trace.combined(i, k) * g;
                dcombined(i, k) += params.mix1_w(k, j) * g;
            }
        }

    // Residual path plus attention.
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Mat dembeds(n_ctx, d);
    for (int i = 0; i < q; ++i) {
        // d(context)/d(alpha_j) and softmax jacobian.  RESIDUAL_BWD_TOGGLE
        Vec dalpha(static_cast<std::size_t>(n_ctx), 0.0);
        double weighted = 0.0;
        for (int j = 0; j < n_ctx; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += dcombined(i, k) * trace.embeds(j, k);
            dalpha[static_cast<std::size_t>(j)] = s;
            weighted += s * trace.alphas(i, j);
        }
        for (int j = 0; j < n_ctx; ++j) {
            const double a = trace.alphas(i, j);
            const double dscore = a * (dalpha[static_cast<std::size_t>(j)] - weighted);
            for (int k = 0; k < d; ++k) {
                grads.queries(i, k) += dscore * trace.embeds(j, k) * scale;
                dembeds(j, k) += dscore * params.queries(i, k) * scale +
                                 a * dcombined(i, k);
            }
        }
    }

    for (int p = 0; p < n_patches; ++p)
        for (int a = 0; a < trace.patch_vecs.cols; ++a) {
            const double pv = trace.patch_vecs(p, a);
            if (pv == 0.0) continue;
            for (int k = 0; k < d; ++k) grads.patch_proj(a, k) += pv * dembeds(p, k);
        }
    for (std::size_t t = 0; t < trace.tokens.size(); ++t)
        for (int k = 0; k < d; ++k)
            grads.token_embed(trace.tokens[t], k) +=
                dembeds(n_patches + static_cast<int>(t), k);
}

Vec pool(const Mat& feature, PoolMode mode) {
    if (feature.rows < 1 || feature.cols < 1)
        throw std::invalid_argument("pool: empty feature");
    Vec m(static_cast<std::size_t>(feature.cols), 0.0);
    if (mode == PoolMode::kMean) {
        for (int i = 0; i < feature.rows; ++i)
            for (int j = 0; j < feature.cols; ++j)
                m[static_cast<std::size_t>(j)] += feature(i, j);
        for (auto& v : m) v /= feature.rows;
    } else {
        for (int j = 0; j < feature.cols; ++j) {
            double best = feature(0, j);
            for (int i = 1; i < feature.rows; ++i) best = std::max(best, feature(i, j));
            m[static_cast<std::size_t>(j)] = best;
        }
    }
    const double n = norm(m);
    if (n == 0.0) throw std::invalid_argument("pool: feature has no direction");
    for (auto& v : m) v /= n;
    return m;
}

Mat pool_backward(const Mat& feature, PoolMode mode, const Vec& pooled_grad) {
    Vec m(static_cast<std::size_t>(feature.cols), 0.0);
    std::vector<int> argmax(static_cast<std::size_t>(feature.cols), 0);
    if (mode == PoolMode::kMean) {
        for (int i = 0; i < feature.rows; ++i)
            for (int j = 0; j < feature.cols; ++j)
                m[static_cast<std::size_t>(j)] += feature(i, j);
        for (auto& v : m) v /= feature.rows;
    } else {
        for (int j = 0; j < feature.cols; ++j) {
            int bi = 0;
            double best = feature(0, j);
            for (int i = 1; i < feature.rows; ++i)
                if (feature(i, j) > best) {
                    best = feature(i, j);
                    bi = i;
                }
            m[static_cast<std::size_t>(j)] = best;
            argmax[static_cast<std::size_t>(j)] = bi;
        }
    }
    const double n = norm(m);
    if (n == 0.0) throw std::invalid_argument("pool_backward: feature has no direction");
    // u = m/n;  du/dm = (I - u u^T)/n
    Vec u = m;
    for (auto& v : u) v /= n;
    const double proj = dot(u, pooled_grad);
    Vec dm(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) dm[j] = (pooled_grad[j] - proj * u[j]) / n;

    Mat df(feature.rows, feature.cols);
    if (mode == PoolMode::kMean) {
        for (int i = 0; i < feature.rows; ++i)
            for (int j = 0; j < feature.cols; ++j)
                df(i, j) = dm[static_cast<std::size_t>(j)] / feature.rows;
    } else {
        for (int j = 0; j < feature.cols; ++j)
            df(argmax[static_cast<std::size_t>(j)], j) = dm[static_cast<std::size_t>(j)];
    }
    return df;
}

namespace {

template <typename Fn>
void for_each_array(const ComposerParams& p, Fn&& fn) {
    fn(p.patch_proj.data);
    fn(p.token_embed.data);
    fn(p.queries.data);
    fn(p.mix1_w.data);
    fn(p.mix1_b);
    fn(p.mix2_w.data);
    fn(p.mix2_b);
}

}  // namespace

std::size_t param_count(const ComposerConfig& c) {
    const std::size_t d = static_cast<std::size_t>(c.embed_dim);
    const std::size_t h = static_cast<std::size_t>(c.hidden_dim);
    return static_cast<std::size_t>(c.patch_dim()) * d +
           static_cast<std::size_t>(c.vocab_size) * d +
           static_cast<std::size_t>(c.query_count) * d + d * h + h + h * d + d;
}

Vec param_vector(const ComposerParams& params) {
    Vec flat;
    flat.reserve(param_count(params.config));
    for_each_array(params,
                   [&](const Vec& arr) { flat.insert(flat.end(), arr.begin(), arr.end()); });
    return flat;
}

void set_param_vector(ComposerParams& params, const Vec& flat) {
    if (flat.size() != param_count(params.config))
        throw std::invalid_argument("set_param_vector: size mismatch");
    std::size_t off = 0;
    auto take = [&](Vec& arr) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + arr.size()), arr.begin());
        off += arr.size();
    };
    take(params.patch_proj.data);
    take(params.token_embed.data);
    take(params.queries.data);
    take(params.mix1_w.data);
    take(params.mix1_b);
    take(params.mix2_w.data);
    take(params.mix2_b);
}

Vec grad_vector(const ComposerGrads& grads) {
    Vec flat;
    auto put = [&](const Vec& arr) { flat.insert(flat.end(), arr.begin(), arr.end()); };
    put(grads.patch_proj.data);
    put(grads.token_embed.data);
    put(grads.queries.data);
    put(grads.mix1_w.data);
    put(grads.mix1_b);
    put(grads.mix2_w.data);
    put(grads.mix2_b);
    return flat;
}

void save_checkpoint(const ComposerParams& params, const std::string& path) {
    using nlohmann::json;
    const ComposerConfig& c = params.config;
    json header;
    header["format"] = "rcir-checkpoint-v1";
    header["seed"] = c.init_seed;
    header["config"] = {{"patch_size", c.patch_size},
                        {"channels", c.channels},
                        {"vocab_size", c.vocab_size},
                        {"query_count", c.query_count},
                        {"embed_dim", c.embed_dim},
                        {"hidden_dim", c.hidden_dim},
                        {"pool", c.pool == PoolMode::kMean ? "mean" : "max_query"}};
    json shapes = json::array();
    shapes.push_back({{"name", "patch_proj"}, {"rows", c.patch_dim()}, {"cols", c.embed_dim}});
    shapes.push_back({{"name", "token_embed"}, {"rows", c.vocab_size}, {"cols", c.embed_dim}});
    shapes.push_back({{"name", "queries"}, {"rows", c.query_count}, {"cols", c.embed_dim}});
    shapes.push_back({{"name", "mix1_w"}, {"rows", c.embed_dim}, {"cols", c.hidden_dim}});
    shapes.push_back({{"name", "mix1_b"}, {"rows", 1}, {"cols", c.hidden_dim}});
    shapes.push_back({{"name", "mix2_w"}, {"rows", c.hidden_dim}, {"cols", c.embed_dim}});
    shapes.push_back({{"name", "mix2_b"}, {"rows", 1}, {"cols", c.embed_dim}});
    header["shapes"] = shapes;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << header.dump() << "\n";

    const Vec flat = param_vector(params);
    std::vector<float> f32(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) f32[i] = static_cast<float>(flat[i]);
    out.write(reinterpret_cast<const char*>(f32.data()),
              static_cast<std::streamsize>(f32.size() * sizeof(float)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ComposerParams load_checkpoint(const std::string& path) {
    using nlohmann::json;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("load_checkpoint: missing header in " + path);
    json header = json::parse(header_line);
    if (header.at("format").get<std::string>() != "rcir-checkpoint-v1")
        throw std::runtime_error("load_checkpoint: unknown format in " + path);

    ComposerConfig c;
    const json& jc = header.at("config");
    c.patch_size = jc.at("patch_size").get<int>();
    c.channels = jc.at("channels").get<int>();
    c.vocab_size = jc.at("vocab_size").get<int>();
    c.query_count = jc.at("query_count").get<int>();
    c.embed_dim = jc.at("embed_dim").get<int>();
    c.hidden_dim = jc.at("hidden_dim").get<int>();
    c.pool = jc.at("pool").get<std::string>() == "mean" ? PoolMode::kMean
                                                        : PoolMode::kMaxQuery;
    c.init_seed = header.at("seed").get<std::uint64_t>();

    ComposerParams params = init_params(c);
    const std::size_t count = param_count(c);
    std::vector<float> f32(count);
    in.read(reinterpret_cast<char*>(f32.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
        throw std::runtime_error("load_checkpoint: truncated parameter data in " + path);
    Vec flat(count);
    for (std::size_t i = 0; i < count; ++i) flat[i] = static_cast<double>(f32[i]);
    set_param_vector(params, flat);
    return params;
}

}  // namespace rcir
