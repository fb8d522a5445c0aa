#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rcir/eval.hpp"
#include "rcir/rng.hpp"

using namespace rcir;

namespace {

std::vector<Vec> random_units(int count, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) {
        Vec v(static_cast<std::size_t>(dim));
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        const double n = norm(v);
        for (auto& x : v) x /= n;
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

TEST_CASE("rank_by_similarity: agrees with a brute-force sort oracle") {
    const auto queries = random_units(6, 8, 1);
    const auto gallery = random_units(10, 8, 2);
    const RankingTable table = rank_by_similarity(queries, gallery);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        // Oracle: stable sort of indices by descending similarity.
        std::vector<int> idx(gallery.size());
        for (std::size_t j = 0; j < gallery.size(); ++j) idx[j] = static_cast<int>(j);
        std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
            return dot(queries[q], gallery[static_cast<std::size_t>(a)]) >
                   dot(queries[q], gallery[static_cast<std::size_t>(b)]);
        });
        CHECK(table[q] == idx);
    }
}

TEST_CASE("rank_by_similarity: exact match ranks first; singleton gallery") {
    const auto gallery = random_units(5, 4, 3);
    const std::vector<Vec> queries{gallery[3]};
    const RankingTable table = rank_by_similarity(queries, gallery);
    CHECK(table[0][0] == 3);

    const RankingTable single =
        rank_by_similarity(queries, std::vector<Vec>{gallery[0]});
    CHECK(single[0] == std::vector<int>{0});

    CHECK_THROWS_AS(rank_by_similarity(queries, {}), std::invalid_argument);
}

TEST_CASE("recall_at_k: hand counts and range checks") {
    // Rankings with truth at positions 0, 3, 1 (ranks 1, 4, 2).
    RankingTable table{{0, 1, 2, 3}, {1, 2, 3, 0}, {2, 0, 1, 3}};
    const std::vector<int> truths{0, 0, 0};
    CHECK(recall_at_k(table, truths, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(recall_at_k(table, truths, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(recall_at_k(table, truths, 4) == doctest::Approx(1.0));
    CHECK_THROWS_AS(recall_at_k(table, truths, 0), std::invalid_argument);
    CHECK_THROWS_AS(recall_at_k(table, truths, 5), std::invalid_argument);
}

TEST_CASE("recall_at_k: non-decreasing in k and permutation-invariant") {
    const auto queries = random_units(8, 6, 4);
    const auto gallery = random_units(12, 6, 5);
    const RankingTable table = rank_by_similarity(queries, gallery);
    std::vector<int> truths;
    Rng rng(6);
    for (int q = 0; q < 8; ++q)
        truths.push_back(static_cast<int>(rng.below(12)));

    double prev = 0.0;
    for (int k = 1; k <= 12; ++k) {
        const double r = recall_at_k(table, truths, k);
        CHECK(r >= prev);
        prev = r;
    }

    // Shuffle the gallery, remap truths, recompute: identical recall values.
    std::vector<int> perm(12);
    for (int i = 0; i < 12; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng prng(7);
    prng.shuffle(perm);
    std::vector<Vec> shuffled(12);
    std::vector<int> inverse(12);
    for (int i = 0; i < 12; ++i) {
        shuffled[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
            gallery[static_cast<std::size_t>(i)];
        inverse[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)];
    }
    std::vector<int> remapped;
    for (int t : truths) remapped.push_back(inverse[static_cast<std::size_t>(t)]);
    const RankingTable table2 = rank_by_similarity(queries, shuffled);
    for (int k = 1; k <= 12; ++k)
        CHECK(recall_at_k(table2, remapped, k) ==
              doctest::Approx(recall_at_k(table, truths, k)));
}

TEST_CASE("subset_recall_at_k: subset of size k is trivially 1; full gallery matches") {
    const auto queries = random_units(5, 6, 8);
    const auto gallery = random_units(9, 6, 9);
    const RankingTable table = rank_by_similarity(queries, gallery);
    std::vector<int> truths{0, 3, 5, 7, 8};

    std::vector<std::vector<int>> tiny(5);
    for (std::size_t q = 0; q < 5; ++q) {
        tiny[q] = {truths[q], (truths[q] + 1) % 9};
    }
    CHECK(subset_recall_at_k(table, tiny, truths, 2) == doctest::Approx(1.0));

    std::vector<std::vector<int>> full(5);
    for (auto& s : full)
        for (int j = 0; j < 9; ++j) s.push_back(j);
    for (int k = 1; k <= 9; ++k)
        CHECK(subset_recall_at_k(table, full, truths, k) ==
              doctest::Approx(recall_at_k(table, truths, k)));
}

TEST_CASE("subset_recall_at_k: hand-placed similarities") {
    // One query; full ranking is [2, 0, 3, 1]; subset {0, 1, 3} restricted
    // order is [0, 3, 1]; truth 3 is hit at k=2 but not k=1.
    RankingTable table{{2, 0, 3, 1}};
    const std::vector<std::vector<int>> subsets{{0, 1, 3}};
    const std::vector<int> truths{3};
    CHECK(subset_recall_at_k(table, subsets, truths, 1) == doctest::Approx(0.0));
    CHECK(subset_recall_at_k(table, subsets, truths, 2) == doctest::Approx(1.0));
    CHECK_THROWS_AS(subset_recall_at_k(table, {{0, 1}}, truths, 1),
                    std::invalid_argument);  // truth missing
}

TEST_CASE("subset_recall_at_k: enlarging a subset cannot improve R@1") {
    const auto queries = random_units(6, 5, 10);
    const auto gallery = random_units(10, 5, 11);
    const RankingTable table = rank_by_similarity(queries, gallery);
    std::vector<int> truths{1, 2, 3, 4, 5, 6};

    std::vector<std::vector<int>> small(6), big(6);
    for (std::size_t q = 0; q < 6; ++q) {
        small[q] = {truths[q], (truths[q] + 1) % 10, (truths[q] + 2) % 10};
        big[q] = small[q];
        big[q].push_back((truths[q] + 3) % 10);
        big[q].push_back((truths[q] + 4) % 10);
    }
    CHECK(subset_recall_at_k(table, big, truths, 1) <=
          subset_recall_at_k(table, small, truths, 1));
}

TEST_CASE("row_rank_of_truth: identity scores give rank zero everywhere") {
    const Mat y = diagonal_labels(3);
    Mat s(3, 3);
    for (int i = 0; i < 3; ++i) s(i, i) = 1.0;
    const std::vector<int> ranks = row_rank_of_truth(s, y);
    for (int r : ranks) CHECK(r == 0);
}

TEST_CASE("export_loyalty_ranks: hand example writes ranks (0, 0)") {
    Mat s(2, 2);
    s(0, 0) = 0.9; s(0, 1) = 0.1;
    s(1, 0) = 0.2; s(1, 1) = 0.8;
    const Mat y = diagonal_labels(2);
    const LoyaltyResult loyalty = loyalty_matrix(s, y);
    const std::string path =
        (std::filesystem::temp_directory_path() / "rcir_test_loyalty.csv").string();
    export_loyalty_ranks(s, loyalty.loyalty, y, path);

    std::ifstream in(path);
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    CHECK(header == "query,similarity_rank,loyalty_rank");
    CHECK(row0 == "0,0,0");
    CHECK(row1 == "1,0,0");
}

TEST_CASE("export_similarity_heat: PGM mapping and CSV round trip") {
    ComposerConfig cc;
    cc.patch_size = 16;
    cc.channels = 3;
    cc.vocab_size = 17;
    cc.query_count = 3;
    cc.embed_dim = 8;
    cc.hidden_dim = 8;
    cc.init_seed = 77;
    const ComposerParams params = init_params(cc);

    Rng rng(12);
    std::vector<std::pair<Image, TokenSeq>> queries;
    std::vector<Image> targets;
    for (int i = 0; i < 3; ++i) {
        Image a = make_image(16, 16, 3);
        Image b = make_image(16, 16, 3);
        for (auto& v : a.pixels) v = rng.uniform();
        for (auto& v : b.pixels) v = rng.uniform();
        queries.push_back({a, TokenSeq{1}});
        targets.push_back(b);
    }
    const std::string stem =
        (std::filesystem::temp_directory_path() / "rcir_test_heat").string();
    export_similarity_heat(params, queries, targets, stem);

    // Recompute the cosines through the public API and check both artifacts.
    std::vector<Vec> qv, tv;
    for (const auto& [img, tokens] : queries)
        qv.push_back(pool(compose(params, img, tokens), cc.pool));
    for (const Image& img : targets) tv.push_back(pool(encode_target(params, img), cc.pool));

    std::ifstream csv(stem + ".csv");
    const Image pgm = read_image(stem + ".pgm");
    REQUIRE(pgm.height == 3);
    REQUIRE(pgm.width == 3);
    for (int i = 0; i < 3; ++i) {
        std::string line;
        REQUIRE(std::getline(csv, line));
        std::stringstream ss(line);
        for (int j = 0; j < 3; ++j) {
            std::string cell;
            REQUIRE(std::getline(ss, cell, ','));
            const double expected = dot(qv[static_cast<std::size_t>(i)],
                                        tv[static_cast<std::size_t>(j)]);
            CHECK(std::stod(cell) == doctest::Approx(expected).epsilon(1e-6));
            const double pixel =
                std::lround(255.0 * (expected + 1.0) / 2.0) / 255.0;
            CHECK(pgm.at(0, i, j) == doctest::Approx(pixel).epsilon(1e-9));
        }
    }
}

TEST_CASE("export_similarity_heat: identical matched pairs saturate the diagonal") {
    ComposerConfig cc;
    cc.patch_size = 16;
    cc.channels = 3;
    cc.vocab_size = 17;
    cc.query_count = 2;
    cc.embed_dim = 6;
    cc.hidden_dim = 6;
    cc.init_seed = 78;
    const ComposerParams params = init_params(cc);

    Rng rng(13);
    std::vector<std::pair<Image, TokenSeq>> queries;
    std::vector<Image> targets;
    for (int i = 0; i < 2; ++i) {
        Image a = make_image(16, 16, 3);
        for (auto& v : a.pixels) v = rng.uniform();
        queries.push_back({a, TokenSeq{}});  // empty text: query encode == target encode
        targets.push_back(a);
    }
    const std::string stem =
        (std::filesystem::temp_directory_path() / "rcir_test_heat_diag").string();
    export_similarity_heat(params, queries, targets, stem);
    const Image pgm = read_image(stem + ".pgm");
    CHECK(pgm.at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(pgm.at(0, 1, 1) == doctest::Approx(1.0));
}
