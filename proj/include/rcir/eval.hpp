#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rcir/composer.hpp"
#include "rcir/dataset.hpp"
#include "rcir/losses.hpp"

namespace rcir {

// Per query, the gallery indices in descending pooled-cosine order, ties
// broken by ascending gallery index.
using RankingTable = std::vector<std::vector<int>>;

RankingTable rank_by_similarity(const std::vector<Vec>& query_vecs,
                                const std::vector<Vec>& gallery_vecs);

RankingTable rank_all(const ComposerParams& params,
                      const std::vector<std::pair<Image, TokenSeq>>& queries,
                      const std::vector<Image>& gallery);

// Fraction of queries whose true gallery index appears in the top k.
double recall_at_k(const RankingTable& rankings, const std::vector<int>& truths, int k);

// Recall over the subset-restricted order; relative order is inherited from
// the full ranking. Every subset must contain its query's truth.
double subset_recall_at_k(const RankingTable& rankings,
                          const std::vector<std::vector<int>>& subsets,
                          const std::vector<int>& truths, int k);

// Writes the raw B x B cosine matrix as <stem>.csv and as an 8-bit grayscale
// PGM heat image <stem>.pgm mapping [-1,1] linearly onto [0,255].
void export_similarity_heat(const ComposerParams& params,
                            const std::vector<std::pair<Image, TokenSeq>>& queries,
                            const std::vector<Image>& targets, const std::string& stem);

// One CSV row per query: the rank position (0-based) of the true target under
// the similarity ordering and under the loyalty ordering.
void export_loyalty_ranks(const Mat& probs, const Mat& loyalty, const Mat& y,
                          const std::string& path);

// Rank position of the labeled column within its row under descending order,
// ties broken by ascending column index.
std::vector<int> row_rank_of_truth(const Mat& scores, const Mat& y);

}  // namespace rcir
