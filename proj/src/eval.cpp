#include "rcir/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace rcir {

RankingTable rank_by_similarity(const std::vector<Vec>& query_vecs,
                                const std::vector<Vec>& gallery_vecs) {
    if (gallery_vecs.empty()) throw std::invalid_argument("rank: empty gallery");
    RankingTable table(query_vecs.size());
    const int g = static_cast<int>(gallery_vecs.size());
    for (std::size_t q = 0; q < query_vecs.size(); ++q) {
        std::vector<double> sims(static_cast<std::size_t>(g));
        for (int j = 0; j < g; ++j)
            sims[static_cast<std::size_t>(j)] =
                dot(query_vecs[q], gallery_vecs[static_cast<std::size_t>(j)]);
        std::vector<int> order(static_cast<std::size_t>(g));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sims[static_cast<std::size_t>(a)] != sims[static_cast<std::size_t>(b)])
                return sims[static_cast<std::size_t>(a)] > sims[static_cast<std::size_t>(b)];
            return a < b;
        });
        table[q] = std::move(order);
    }
    return table;
}

RankingTable rank_all(const ComposerParams& params,
                      const std::vector<std::pair<Image, TokenSeq>>& queries,
                      const std::vector<Image>& gallery) {
    if (gallery.empty()) throw std::invalid_argument("rank_all: empty gallery");
    std::vector<Vec> qv(queries.size()), gv(gallery.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        qv[i] = pool(compose(params, queries[i].first, queries[i].second),
                     params.config.pool);
    for (std::size_t j = 0; j < gallery.size(); ++j)
        gv[j] = pool(encode_target(params, gallery[j]), params.config.pool);
    return rank_by_similarity(qv, gv);
}

double recall_at_k(const RankingTable& rankings, const std::vector<int>& truths, int k) {
    if (rankings.size() != truths.size())
        throw std::invalid_argument("recall: rankings/truths length mismatch");
    if (rankings.empty()) throw std::invalid_argument("recall: no queries");
    if (k < 1 || k > static_cast<int>(rankings.front().size()))
        throw std::invalid_argument("recall: k out of range");
    int hits = 0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        const auto& row = rankings[q];
        for (int r = 0; r < k; ++r)
            if (row[static_cast<std::size_t>(r)] == truths[q]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double subset_recall_at_k(const RankingTable& rankings,
                          const std::vector<std::vector<int>>& subsets,
                          const std::vector<int>& truths, int k) {
    if (rankings.size() != subsets.size() || rankings.size() != truths.size())
        throw std::invalid_argument("subset_recall: length mismatch");
    if (rankings.empty()) throw std::invalid_argument("subset_recall: no queries");
    int hits = 0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        const auto& subset = subsets[q];
        if (k < 1 || k > static_cast<int>(subset.size()))
            throw std::invalid_argument("subset_recall: k out of range");
        if (std::find(subset.begin(), subset.end(), truths[q]) == subset.end())
            throw std::invalid_argument("subset_recall: truth missing from subset");
        // Position of each subset member in the full ranking.
        std::vector<int> pos(rankings[q].size(), 0);
        for (std::size_t r = 0; r < rankings[q].size(); ++r)
            pos[static_cast<std::size_t>(rankings[q][r])] = static_cast<int>(r);
        std::vector<int> restricted = subset;
        std::sort(restricted.begin(), restricted.end(), [&](int a, int b) {
            return pos[static_cast<std::size_t>(a)] < pos[static_cast<std::size_t>(b)];
        });
        for (int r = 0; r < k; ++r)
            if (restricted[static_cast<std::size_t>(r)] == truths[q]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

void export_similarity_heat(const ComposerParams& params,
                            const std::vector<std::pair<Image, TokenSeq>>& queries,
                            const std::vector<Image>& targets, const std::string& stem) {
    if (queries.size() != targets.size() || queries.empty())
        throw std::invalid_argument("export_similarity_heat: need equal non-empty lists");
    const int b = static_cast<int>(queries.size());
    std::vector<Vec> qv(queries.size()), tv(targets.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        qv[i] = pool(compose(params, queries[i].first, queries[i].second),
                     params.config.pool);
    for (std::size_t j = 0; j < targets.size(); ++j)
        tv[j] = pool(encode_target(params, targets[j]), params.config.pool);

    Mat cosines(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            cosines(i, j) =
                dot(qv[static_cast<std::size_t>(i)], tv[static_cast<std::size_t>(j)]);

    std::ofstream csv(stem + ".csv");
    if (!csv) throw std::runtime_error("export_similarity_heat: cannot open " + stem + ".csv");
    char buf[64];
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            std::snprintf(buf, sizeof(buf), "%.10g", cosines(i, j));
            csv << buf << (j + 1 < b ? "," : "");
        }
        csv << "\n";
    }

    Image heat = make_image(b, b, 1);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            const long v = std::lround(255.0 * (cosines(i, j) + 1.0) / 2.0);
            heat.at(0, i, j) = static_cast<double>(std::clamp(v, 0L, 255L)) / 255.0;
        }
    write_image(stem + ".pgm", heat);
}

std::vector<int> row_rank_of_truth(const Mat& scores, const Mat& y) {
    if (!scores.same_shape(y))
        throw std::invalid_argument("row_rank_of_truth: shape mismatch");
    std::vector<int> ranks(static_cast<std::size_t>(scores.rows));
    for (int i = 0; i < scores.rows; ++i) {
        int pos = 0;
        for (int j = 0; j < scores.cols; ++j)
            if (y(i, j) == 1.0) pos = j;
        int rank = 0;
        for (int j = 0; j < scores.cols; ++j) {
            if (j == pos) continue;
            if (scores(i, j) > scores(i, pos) ||
                (scores(i, j) == scores(i, pos) && j < pos))
                ++rank;
        }
        ranks[static_cast<std::size_t>(i)] = rank;
    }
    return ranks;
}

void export_loyalty_ranks(const Mat& probs, const Mat& loyalty, const Mat& y,
                          const std::string& path) {
    validate_labels(y);
    const std::vector<int> sim_ranks = row_rank_of_truth(probs, y);
    const std::vector<int> loyalty_ranks = row_rank_of_truth(loyalty, y);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_loyalty_ranks: cannot open " + path);
    out << "query,similarity_rank,loyalty_rank\n";
    for (std::size_t i = 0; i < sim_ranks.size(); ++i)
        out << i << "," << sim_ranks[i] << "," << loyalty_ranks[i] << "\n";
}

}  // namespace rcir
