// Acceptance suite: runs every acceptance criterion end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcir/eval.hpp"
#include "rcir/experiment.hpp"
#include "rcir/gradcheck.hpp"
#include "rcir/rng.hpp"

using namespace rcir;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

Image random_image(int h, int w, int c, std::uint64_t seed) {
    Rng rng(seed);
    Image img = make_image(h, w, c);
    for (auto& v : img.pixels) v = rng.uniform();
    return img;
}

Mat random_mat(int r, int c, Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient suite through the full composer.
void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reports = run_gradient_suite(GradCheckSettings{});
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0.0;
    bool pass = true;
    for (const auto& r : reports) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.pass) pass = false;
    }
    pass = pass && elapsed < 60.0;
    report(1, pass,
           fmt("gradient suite, %zu cases (B in {2,3,4}, Q=3, D=4), max rel err %.2e, "
               "%.1f s (< 60 s)",
               reports.size(), worst, elapsed));
}

// ---------------------------------------------------------------------------
// Criterion 2: CKA properties.
void criterion_cka() {
    Rng rng(2024);
    bool pass = true;
    std::string why;

    for (int trial = 0; trial < 5 && pass; ++trial) {
        const Mat f = random_mat(3, 4, rng);
        std::vector<Mat> base{f};

        if (cka_loss(base, base).value >= 1e-6) {
            pass = false;
            why = "cka(F,F) not < 1e-6";
        }

        // Orthogonal transform via Gram-Schmidt columns.
        std::vector<Vec> cols;
        while (static_cast<int>(cols.size()) < 4) {
            Vec v(4);
            for (auto& x : v) x = rng.uniform(-1.0, 1.0);
            for (const Vec& u : cols) {
                const double proj = dot(u, v);
                for (std::size_t i = 0; i < 4; ++i) v[i] -= proj * u[i];
            }
            const double n = norm(v);
            if (n < 1e-6) continue;
            for (auto& x : v) x /= n;
            cols.push_back(v);
        }
        Mat q(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                q(i, j) = cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        std::vector<Mat> rotated{matmul(f, q)};
        if (cka_loss(base, rotated).value >= 1e-6) {
            pass = false;
            why = "orthogonal invariance violated";
        }
        for (double c : {0.1, 1.0, 10.0}) {
            Mat scaled = f;
            for (auto& v : scaled.data) v *= c;
            std::vector<Mat> sc{scaled};
            if (cka_loss(base, sc).value >= 1e-6) {
                pass = false;
                why = "scaling invariance violated";
            }
        }

        const Mat g = random_mat(3, 4, rng);
        std::vector<Mat> other{g};
        const double v = cka_loss(base, other).value;
        if (v < 0.0 || v > 1.0 + 1e-6) {
            pass = false;
            why = "value outside [0, 1+1e-6]";
        }

        const Mat centered = center_gram(gram(f));
        for (int i = 0; i < 3; ++i) {
            double rs = 0, cs = 0;
            for (int j = 0; j < 3; ++j) {
                rs += centered(i, j);
                cs += centered(j, i);
            }
            if (std::abs(rs) >= 1e-8 || std::abs(cs) >= 1e-8) {
                pass = false;
                why = "centered Gram row/col sums exceed 1e-8";
            }
        }
    }
    report(2, pass,
           pass ? "CKA identity, orthogonal/scaling invariance, range, centering "
                  "(5 seeded trials)"
                : "CKA properties: " + why);
}

// ---------------------------------------------------------------------------
// Criterion 3: loyalty hand cases against an independently coded scalar
// oracle. The oracle re-derives L_sod for a 2x2 similarity matrix with plain
// scalar arithmetic and no shared code.
double scalar_sod_oracle(double s00, double s01, double s10, double s11) {
    const double p_neg0 = s01, p_neg1 = s10;
    const double r00 = 1.0 - p_neg0, r11 = 1.0 - p_neg1;
    // Diagonal loyalty entries only; the negative reward is zero there.
    double l00 = (s00 + r00) / 2.0;
    double l11 = (s11 + r11) / 2.0;
    l00 = std::min(std::max(l00, 1e-8), 1.0);
    l11 = std::min(std::max(l11, 1e-8), 1.0);
    return -(std::log(l00) + std::log(l11)) / 2.0;
}

void criterion_loyalty_oracle() {
    bool pass = true;
    std::string why;

    struct Case {
        double s00, s01, s10, s11;
        double frozen;
        const char* name;
    };
    const Case cases[] = {
        {1.0, 0.0, 0.0, 1.0, 0.0, "identity"},
        {0.9, 0.1, 0.2, 0.8, 0.16425, "hand 2x2"},
        {0.5, 0.5, 0.5, 0.5, std::numbers::ln2, "uniform"},
    };
    for (const Case& c : cases) {
        Mat s(2, 2);
        s(0, 0) = c.s00;
        s(0, 1) = c.s01;
        s(1, 0) = c.s10;
        s(1, 1) = c.s11;
        const double got = soft_discriminative_loss(s, diagonal_labels(2)).value;
        const double oracle = scalar_sod_oracle(c.s00, c.s01, c.s10, c.s11);
        if (std::abs(got - oracle) >= 1e-6) {
            pass = false;
            why = fmt("%s: implementation %.8f vs oracle %.8f", c.name, got, oracle);
        }
        if (std::abs(got - c.frozen) >= 1e-4) {  // frozen constants carry 5 digits
            pass = false;
            why = fmt("%s: value %.8f vs frozen %.5f", c.name, got, c.frozen);
        }
    }
    {
        Mat s(2, 2);
        s(0, 0) = 0.9;
        s(0, 1) = 0.1;
        s(1, 0) = 0.2;
        s(1, 1) = 0.8;
        const double exact = -(std::log(0.9) + std::log(0.8)) / 2.0;
        if (std::abs(soft_discriminative_loss(s, diagonal_labels(2)).value - exact) >=
            1e-6)
            pass = false;
    }
    report(3, pass,
           pass ? "loyalty hand cases (identity, [[.9,.1],[.2,.8]] -> 0.16425, "
                  "uniform -> ln 2) match the scalar oracle within 1e-6"
                : "loyalty oracle: " + why);
}

// ---------------------------------------------------------------------------
// Criterion 4: FFT fidelity.
void criterion_fft() {
    bool pass = true;
    std::string why;
    for (int trial = 0; trial < 3 && pass; ++trial) {
        const Image a = random_image(16, 16, 3, 900 + trial);
        const Image b = random_image(16, 16, 3, 950 + trial);

        const Spectrum sa = forward_fft(a);
        if (max_abs_diff(inverse_fft(sa.amplitude, sa.phase), a) >= 1e-4) {
            pass = false;
            why = "round trip exceeded 1e-4";
        }
        if (max_abs_diff(make_counterfactual(a, b, {0.0, 0.25, 0}), a) >= 1e-4) {
            pass = false;
            why = "lambda=0 counterfactual differs from the original";
        }

        const MixParams p{0.6, 0.25, 0};
        const Spectrum sb = forward_fft(b);
        const Grid mixed = mix_central_amplitude(sa.amplitude, sb.amplitude, p);
        const int side = crop_window_side(p, 16, 16);
        const int y0 = (16 - side) / 2, x0 = (16 - side) / 2;
        for (int c = 0; c < 3 && pass; ++c)
            for (int y = 0; y < 16 && pass; ++y)
                for (int x = 0; x < 16; ++x) {
                    const bool inside =
                        y >= y0 && y < y0 + side && x >= x0 && x < x0 + side;
                    if (!inside && mixed.at(c, y, x) != sa.amplitude.at(c, y, x)) {
                        pass = false;
                        why = "amplitude changed outside the crop window";
                        break;
                    }
                }

        // Phase preservation at strong bins of the unclamped reconstruction.
        const Grid raw = inverse_fft_unclamped(mixed, sa.phase);
        fft_detail::cvec grid(16 * 16);
        for (int c = 0; c < 3 && pass; ++c) {
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x)
                    grid[static_cast<std::size_t>(y) * 16 + x] = {raw.at(c, y, x), 0.0};
            fft_detail::fft_2d(grid, 16, 16, false);
            for (int y = 0; y < 16 && pass; ++y)
                for (int x = 0; x < 16; ++x) {
                    const std::complex<double> v =
                        grid[static_cast<std::size_t>(y) * 16 + x];
                    if (std::abs(v) <= 1e-6) continue;
                    const int sy = fft_detail::shift_index(y, 16);
                    const int sx = fft_detail::shift_index(x, 16);
                    const double diff = std::remainder(
                        std::arg(v) - sa.phase.at(c, sy, sx), 2.0 * std::numbers::pi);
                    if (std::abs(diff) >= 1e-3) {
                        pass = false;
                        why = "phase not preserved at a strong bin";
                        break;
                    }
                }
        }
    }
    report(4, pass,
           pass ? "FFT round trip <= 1e-4, lambda=0 identity, crop locality bit-exact, "
                  "phase <= 1e-3 at strong bins"
                : "FFT fidelity: " + why);
}

// ---------------------------------------------------------------------------
// Criteria 5-7 share one desk-scale experiment grid. Training is fully
// deterministic given the seeds, so the measured orderings are reproducible.
struct GridResults {
    std::map<std::string, std::map<double, std::vector<double>>> recall1;
    fs::path out;
    double elapsed_s = 0.0;
};

ExperimentSpec desk_spec(const fs::path& out) {
    ExperimentSpec spec;
    spec.dataset.n_triplets = 500;
    spec.dataset.clutter_level = 0.15;
    spec.dataset.image_size = 16;
    spec.dataset.seed = 1;
    spec.seeds = {1, 2, 3};
    spec.subset_size = 6;
    spec.output_dir = out.string();
    spec.train.batch_size = 32;
    spec.train.epochs = 100;
    spec.train.learning_rate = 0.01;
    spec.train.tau = 0.07;
    spec.train.weights = {0.2, 0.6};
    spec.train.optimizer = OptimizerKind::kAdam;
    spec.train.composer.patch_size = 16;
    spec.train.composer.query_count = 8;
    spec.train.composer.embed_dim = 32;
    spec.train.composer.hidden_dim = 32;
    return spec;
}

GridResults run_experiment_grid() {
    GridResults grid;
    grid.out = fs::temp_directory_path() / "rcir_acceptance_grid";
    fs::remove_all(grid.out);
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentSpec spec = desk_spec(grid.out);
    spec.noise_sweep = {0.0, 0.2, 0.5, 0.8};
    cmd_generate(spec);
    cmd_train(spec);  // full

    ExperimentSpec no_rewards = spec;
    no_rewards.noise_sweep = {0.0, 0.5, 0.8};
    no_rewards.toggles.enable_positive_reward = false;
    no_rewards.toggles.enable_negative_reward = false;
    cmd_train(no_rewards);

    ExperimentSpec no_invariance = spec;
    no_invariance.noise_sweep = {0.0, 0.5, 0.8};
    no_invariance.toggles.enable_invariance = false;
    cmd_train(no_invariance);

    ExperimentSpec shuffle = spec;
    shuffle.noise_sweep = {0.2};
    shuffle.train.intervention = InterventionOp::kPatchShuffle;
    cmd_train(shuffle);

    cmd_report(grid.out.string());
    grid.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (const auto& entry : fs::recursive_directory_iterator(grid.out / "runs"))
        if (entry.is_regular_file() && entry.path().filename() == "run.json") {
            std::ifstream in(entry.path());
            nlohmann::json rec = nlohmann::json::parse(in);
            grid.recall1[rec.at("variant").get<std::string>()]
                        [rec.at("sigma").get<double>()]
                            .push_back(rec.at("recall1").get<double>());
        }
    return grid;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void criterion_intervention_ordering(const GridResults& grid) {
    const double fft = mean_of(grid.recall1.at("full").at(0.2));
    const double shuffle = mean_of(grid.recall1.at("intervene_patch_shuffle").at(0.2));
    const bool in_budget = grid.elapsed_s < 30.0 * 60.0;
    const bool pass = fft >= shuffle && in_budget;
    report(5, pass,
           fmt("sigma=0.2, n=500, 3 seeds: fft_mix mean R@1 %.4f >= patch_shuffle %.4f; "
               "grid runtime %.0f s (< 1800 s)",
               fft, shuffle, grid.elapsed_s));
}

void criterion_robustness_ordering(const GridResults& grid) {
    const double full_05 = mean_of(grid.recall1.at("full").at(0.5));
    const double nr_05 = mean_of(grid.recall1.at("no_rewards").at(0.5));
    const double ni_05 = mean_of(grid.recall1.at("no_invariance").at(0.5));
    bool pass = full_05 >= nr_05 && full_05 >= ni_05;

    std::string mono;
    for (const char* variant : {"full", "no_rewards", "no_invariance"}) {
        const double m0 = mean_of(grid.recall1.at(variant).at(0.0));
        const double m5 = mean_of(grid.recall1.at(variant).at(0.5));
        const double m8 = mean_of(grid.recall1.at(variant).at(0.8));
        if (!(m0 >= m5 && m5 >= m8)) {
            pass = false;
            mono += fmt(" %s not monotone (%.3f, %.3f, %.3f);", variant, m0, m5, m8);
        }
    }
    report(6, pass,
           fmt("sigma=0.5 means: full %.4f >= no_rewards %.4f, >= no_invariance %.4f; "
               "monotone over sigma in {0, 0.5, 0.8} for all three variants%s",
               full_05, nr_05, ni_05, mono.c_str()));
}

void criterion_loyalty_ranks(const GridResults& grid) {
    // As stated by the acceptance list: after training at sigma=0.5, the mean
    // rank of true targets under the loyalty ordering must not exceed the
    // mean rank under the raw-similarity ordering, averaged over 3 seeds.
    // Queries are clean training triplets in seeded batches of 32; candidates
    // are their true targets.
    double loyalty_mean = 0.0, sim_mean = 0.0;
    const int B = 32;
    for (int seed = 1; seed <= 3; ++seed) {
        const fs::path ds_dir =
            grid.out / "datasets" / "sigma_0.5" / ("seed_" + std::to_string(seed));
        const fs::path ck = grid.out / "runs" / "full" / "sigma_0.5" /
                            ("seed_" + std::to_string(seed)) / "checkpoint.bin";
        const TripletDataset ds = read_dataset(ds_dir.string());
        const ComposerParams params = load_checkpoint(ck.string());

        std::vector<int> order;
        for (std::size_t i = 0; i < ds.triplets.size(); ++i)
            if (!ds.triplets[i].is_noisy) order.push_back(static_cast<int>(i));
        Rng rng(777);
        rng.shuffle(order);

        const Mat y = diagonal_labels(B);
        double loy = 0, sim = 0;
        int count = 0;
        for (std::size_t base = 0; base + B <= order.size(); base += B) {
            std::vector<Vec> u, v;
            for (int i = 0; i < B; ++i) {
                const int idx = order[base + static_cast<std::size_t>(i)];
                const Triplet& t = ds.triplets[static_cast<std::size_t>(idx)];
                u.push_back(pool(compose(params, t.reference, t.modification),
                                 params.config.pool));
                v.push_back(
                    pool(encode_target(params, ds.gallery[static_cast<std::size_t>(idx)]),
                         params.config.pool));
            }
            const SimilarityMatrix s = similarity_matrix(u, v, 0.07);
            const LoyaltyResult loyalty = loyalty_matrix(s.probs, y);
            const auto ranks_sim = row_rank_of_truth(s.probs, y);
            const auto ranks_loy = row_rank_of_truth(loyalty.loyalty, y);
            for (int i = 0; i < B; ++i) {
                sim += ranks_sim[static_cast<std::size_t>(i)];
                loy += ranks_loy[static_cast<std::size_t>(i)];
                ++count;
            }
            if (base == 0)
                export_loyalty_ranks(
                    s.probs, loyalty.loyalty, y,
                    (grid.out / ("loyalty_ranks_seed" + std::to_string(seed) + ".csv"))
                        .string());
        }
        loyalty_mean += loy / count / 3.0;
        sim_mean += sim / count / 3.0;
    }
    const bool pass = loyalty_mean <= sim_mean;
    report(7, pass,
           fmt("sigma=0.5, 3-seed mean rank of true targets: loyalty %.3f vs similarity "
               "%.3f (criterion: loyalty <= similarity)%s",
               loyalty_mean, sim_mean,
               pass ? ""
                    : " - fails as analyzed in the notes: with diagonal pseudo-labels "
                      "the loyalty ordering cannot rank a positive above its "
                      "similarity rank, so the inequality is unattainable"));
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical reruns of one ExperimentSpec.
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing " + p.string());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void criterion_determinism() {
    const fs::path out_a = fs::temp_directory_path() / "rcir_acceptance_det_a";
    const fs::path out_b = fs::temp_directory_path() / "rcir_acceptance_det_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    auto make_spec = [](const fs::path& out) {
        ExperimentSpec spec;
        spec.dataset.n_triplets = 64;
        spec.dataset.clutter_level = 0.2;
        spec.dataset.image_size = 16;
        spec.dataset.seed = 9;
        spec.noise_sweep = {0.0, 0.5};
        spec.seeds = {4};
        spec.subset_size = 4;
        spec.output_dir = out.string();
        spec.train.batch_size = 16;
        spec.train.epochs = 5;
        spec.train.learning_rate = 0.01;
        spec.train.optimizer = OptimizerKind::kAdam;
        spec.train.composer.patch_size = 16;
        spec.train.composer.query_count = 4;
        spec.train.composer.embed_dim = 16;
        spec.train.composer.hidden_dim = 16;
        return spec;
    };
    cmd_generate(make_spec(out_a));
    cmd_train(make_spec(out_a));
    cmd_generate(make_spec(out_b));
    cmd_train(make_spec(out_b));

    bool pass = true;
    std::string why;
    const std::vector<std::string> rel_files = {
        "datasets/sigma_0/seed_4/manifest.jsonl",
        "datasets/sigma_0/seed_4/gallery.jsonl",
        "datasets/sigma_0/seed_4/subsets.jsonl",
        "datasets/sigma_0.5/seed_4/manifest.jsonl",
        "runs/full/sigma_0/seed_4/metrics.csv",
        "runs/full/sigma_0/seed_4/run.json",
        "runs/full/sigma_0/seed_4/checkpoint.bin",
        "runs/full/sigma_0.5/seed_4/metrics.csv",
        "runs/full/sigma_0.5/seed_4/run.json",
        "runs/full/sigma_0.5/seed_4/checkpoint.bin",
        "expected.jsonl",
    };
    for (const std::string& rel : rel_files)
        if (slurp(out_a / rel) != slurp(out_b / rel)) {
            pass = false;
            why = rel + " differs between reruns";
            break;
        }

    if (pass) {
        cmd_report(out_a.string());
        const std::string first = slurp(out_a / "report.csv");
        cmd_report(out_a.string());
        if (slurp(out_a / "report.csv") != first) {
            pass = false;
            why = "report.csv not idempotent on an unchanged directory";
        }
    }
    report(8, pass,
           pass ? "byte-identical manifests, metrics, run.json, and checkpoints across "
                  "reruns; report idempotent"
                : "determinism: " + why);
    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_gradients();
    criterion_cka();
    criterion_loyalty_oracle();
    criterion_fft();

    const GridResults grid = run_experiment_grid();
    criterion_intervention_ordering(grid);
    criterion_robustness_ordering(grid);
    criterion_loyalty_ranks(grid);

    criterion_determinism();

    std::printf("%d of 8 criteria passed\n", 8 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
