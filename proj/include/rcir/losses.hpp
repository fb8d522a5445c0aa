#pragma once

#include <vector>

#include "rcir/matrix.hpp"

namespace rcir {

// Clamp floor shared by the loyalty matrix and the log arguments.
constexpr double kLossEps = 1e-8;

enum class ConsistencyMetric { kCka, kMse, kL1, kL2 };

// K = F F^T. Symmetric positive semidefinite by construction.
Mat gram(const Mat& feature);

// H K H with H = I - (1/Q) e e^T; every row and column of the result sums
// to zero.
Mat center_gram(const Mat& k);

struct ConsistencyResult {
    double value = 0.0;
    std::vector<Mat> grad_f;
    std::vector<Mat> grad_fhat;
    int degenerate = 0;  // samples whose centered Gram had no structure to align
};

// Mean over the batch of 1 - <Kbar, Lbar>_F / (|Kbar| |Lbar| + eps), with
// exact gradients for both feature batches. Invariant to orthogonal
// transforms and isotropic scaling of the features.
ConsistencyResult cka_loss(const std::vector<Mat>& f, const std::vector<Mat>& fhat);

// metric = kCka delegates to cka_loss; the others are elementwise baselines:
// mean squared difference, mean absolute difference, and mean per-sample
// Frobenius-norm difference.
ConsistencyResult consistency_loss(const std::vector<Mat>& f, const std::vector<Mat>& fhat,
                                   ConsistencyMetric metric);

// Row-stochastic similarity between pooled unit vectors: raw cosine logits
// and their rowwise softmax at temperature tau.
struct SimilarityMatrix {
    int batch = 0;
    double tau = 0.0;
    Mat raw;    // cosine similarities
    Mat probs;  // softmax(raw / tau) per row
};

SimilarityMatrix similarity_matrix(const std::vector<Vec>& composed,
                                   const std::vector<Vec>& targets, double tau);

Mat softmax_rows(const Mat& logits);
// Given d(loss)/d(probs), returns d(loss)/d(logits) through the row softmax.
Mat softmax_rows_backward(const Mat& probs, const Mat& dprobs);

// Pseudo-label matrix helpers; y must be 0/1 with exactly one 1 per row.
Mat diagonal_labels(int batch);
void validate_labels(const Mat& y);

struct ProbsLoss {
    double value = 0.0;
    Mat grad_probs;
};

// -(1/B) sum_i sum_{j in J_i} log(1 - p_ij) over the softmax matching
// probabilities. J_i excludes the positive column when mask_diagonal is set
// (the default reading); positive_summand switches to the literal printed
// form whose summand is the positive probability, kept for comparison.
ProbsLoss robust_loss_from_probs(const Mat& probs, const Mat& y, bool mask_diagonal,
                                 bool positive_summand = false);

struct RobustLossResult {
    double value = 0.0;
    std::vector<Vec> grad_composed;
    std::vector<Vec> grad_targets;
    Mat probs;
};

// Vector-level form of the robust contrastive loss: builds the softmax from
// cosines at temperature tau and chains gradients back to both vector sets.
RobustLossResult robust_contrastive_loss(const std::vector<Vec>& composed,
                                         const std::vector<Vec>& targets, double tau,
                                         bool mask_diagonal,
                                         bool positive_summand = false);

struct Likelihoods {
    Vec p_pos;  // max positive matching likelihood per query
    Vec p_neg;  // max negative matching likelihood per query
    std::vector<int> argmax_pos;
    std::vector<int> argmax_neg;
};

Likelihoods matching_likelihoods(const Mat& probs, const Mat& y);

struct LoyaltyOptions {
    bool negative_reward = true;   // N: (1 - p_i+) spread over negatives
    bool positive_reward = true;   // R: (1 - p_i-) on the positive
    bool stop_gradient_rewards = false;
};

struct LoyaltyResult {
    Mat loyalty;    // clamp((S + N + R)/2, eps, 1)
    Mat negatives;  // N, zero diagonal
    Mat positives;  // R, zero off-diagonal
    Likelihoods likelihoods;
};

LoyaltyResult loyalty_matrix(const Mat& probs, const Mat& y,
                             const LoyaltyOptions& options = {});

struct SoftLossResult {
    double value = 0.0;
    Mat grad_probs;
    LoyaltyResult loyalty;
};

// -(1/B) sum_ij y_ij log(l_ij). Gradients flow through S directly and
// through the rewards via the max subgradient (argmax entry, ties to the
// smallest index) unless stop_gradient_rewards is set.
SoftLossResult soft_discriminative_loss(const Mat& probs, const Mat& y,
                                        const LoyaltyOptions& options = {});

// Chains d(loss)/d(logits) of logits_ij = (u_i . v_j)/tau back to the
// vectors, accumulating into du and dv.
void cosine_logits_backward(const std::vector<Vec>& u, const std::vector<Vec>& v,
                            double tau, const Mat& dlogits, std::vector<Vec>& du,
                            std::vector<Vec>& dv);

struct LossWeights {
    double mu = 0.2;     // soft discriminative weight
    double alpha = 0.6;  // causal consistency weight
};

}  // namespace rcir
