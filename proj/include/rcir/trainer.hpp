#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcir/composer.hpp"
#include "rcir/dataset.hpp"
#include "rcir/fourier.hpp"
#include "rcir/losses.hpp"
#include "rcir/optimizer.hpp"

namespace rcir {

enum class InterventionOp { kFftMix, kRandomMask, kPatchShuffle, kGaussianBlur,
                            kGrayscale, kNone };

const char* intervention_name(InterventionOp op);
InterventionOp intervention_from_name(const std::string& name);

const char* consistency_metric_name(ConsistencyMetric metric);
ConsistencyMetric consistency_metric_from_name(const std::string& name);

struct TrainConfig {
    int batch_size = 32;
    int epochs = 10;
    double learning_rate = 0.05;
    double tau = 0.07;
    LossWeights weights;
    // mix.lambda is the per-step upper bound: each image draws its own mix
    // ratio uniformly from [0, mix.lambda].
    MixParams mix{1.0, 0.25, 0};
    InterventionOp intervention = InterventionOp::kFftMix;
    int mask_patch_size = 4;
    double mask_fraction = 0.5;
    int shuffle_grid = 4;
    double blur_sigma = 1.5;
    int blur_radius = 4;
    OptimizerKind optimizer = OptimizerKind::kSgd;
    double weight_decay = 0.0;  // decoupled, adaptive-moment optimizer only
    // The image-patch projection stands in for the pretrained frozen visual
    // encoder; by default it keeps its seeded initialization and only the
    // composition layers train. Gradients for it are still computed and
    // checked; this flag only controls the update.
    bool train_patch_projection = false;
    double validation_fraction = 0.2;
    ComposerConfig composer;
    std::uint64_t seed = 0;
};

struct AblationToggles {
    bool enable_invariance = true;       // counterfactual branch + consistency loss
    bool enable_robust = true;
    bool enable_soft = true;
    bool enable_positive_reward = true;
    bool enable_negative_reward = true;
    bool mask_diagonal = true;
    ConsistencyMetric consistency_metric = ConsistencyMetric::kCka;
    bool reward_stop_gradient = false;
    bool robust_positive_summand = false;  // literal printed-form comparison flag
};

// One sample of a training batch; pointers into caller-owned storage.
struct BatchSample {
    const Image* reference = nullptr;
    const Image* counterfactual = nullptr;  // null when invariance is disabled
    const Image* target = nullptr;
    const TokenSeq* tokens = nullptr;
};

struct BatchEval {
    double robust = 0.0;
    double soft = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    double mean_p_pos = 0.0;
    double mean_p_neg = 0.0;
    int degenerate_consistency = 0;
};

// Total objective over one batch: robust + mu*soft + alpha*consistency, each
// term zeroed when its toggle disables it. When grads is non-null,
// accumulates exact parameter gradients of the enabled terms.
BatchEval batch_loss_and_grads(const ComposerParams& params,
                               const std::vector<BatchSample>& batch, double tau,
                               const LossWeights& weights, const AblationToggles& toggles,
                               ComposerGrads* grads);

struct MetricsRow {
    int epoch = 0;
    int step = 0;  // global step index; -1 on epoch summary rows
    double robust = 0.0;
    double soft = 0.0;
    double consistency = 0.0;
    double total = 0.0;
    double mean_p_pos = 0.0;
    double mean_p_neg = 0.0;
    double val_recall1 = -1.0;  // only set on summary rows
};

struct TrainResult {
    ComposerParams params;
    std::vector<MetricsRow> metrics;
    std::vector<int> train_indices;
    std::vector<int> val_indices;
    double final_recall1 = 0.0;
    double final_recall5 = 0.0;
    double final_subset_recall1 = 0.0;
};

// Runs the full training pipeline: seeded validation holdout (clean triplets
// only), per-epoch seeded shuffling with the last partial batch dropped,
// per-sample distractor and mix-ratio draws, counterfactual generation per
// the configured intervention, loss assembly honoring the toggles, and one
// optimizer step per batch. Fully deterministic given the config seed.
TrainResult train(const TripletDataset& dataset, const TrainConfig& config,
                  const AblationToggles& toggles);

void write_metrics_csv(const std::vector<MetricsRow>& metrics, const std::string& path);

// Builds the counterfactual for one reference image under the given op.
// lambda is the concrete mix ratio for kFftMix; op_seed drives the seeded
// perturbations. Distractor is only consulted by kFftMix.
Image apply_intervention(InterventionOp op, const Image& reference,
                         const Image& distractor, double lambda,
                         const TrainConfig& config, std::uint64_t op_seed);

}  // namespace rcir
