#include "rcir/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rcir/eval.hpp"
#include "rcir/rng.hpp"

namespace rcir {

namespace {

// Stream tags so unrelated random draws never share state and swapping the
// intervention op cannot shift the batch, distractor, or mix-ratio streams.
constexpr std::uint64_t kTagInit = 11;
constexpr std::uint64_t kTagSplit = 12;
constexpr std::uint64_t kTagShuffle = 13;
constexpr std::uint64_t kTagDistractor = 14;
constexpr std::uint64_t kTagLambda = 15;
constexpr std::uint64_t kTagIntervene = 16;

}  // namespace

const char* intervention_name(InterventionOp op) {
    switch (op) {
        case InterventionOp::kFftMix: return "fft_mix";
        case InterventionOp::kRandomMask: return "random_mask";
        case InterventionOp::kPatchShuffle: return "patch_shuffle";
        case InterventionOp::kGaussianBlur: return "gaussian_blur";
        case InterventionOp::kGrayscale: return "grayscale";
        case InterventionOp::kNone: return "none";
    }
    throw std::logic_error("intervention_name: unreachable");
}

InterventionOp intervention_from_name(const std::string& name) {
    if (name == "fft_mix") return InterventionOp::kFftMix;
    if (name == "random_mask") return InterventionOp::kRandomMask;
    if (name == "patch_shuffle") return InterventionOp::kPatchShuffle;
    if (name == "gaussian_blur") return InterventionOp::kGaussianBlur;
    if (name == "grayscale") return InterventionOp::kGrayscale;
    if (name == "none") return InterventionOp::kNone;
    throw std::invalid_argument("unknown intervention op: " + name);
}

const char* consistency_metric_name(ConsistencyMetric metric) {
    switch (metric) {
        case ConsistencyMetric::kCka: return "cka";
        case ConsistencyMetric::kMse: return "mse";
        case ConsistencyMetric::kL1: return "l1";
        case ConsistencyMetric::kL2: return "l2";
    }
    throw std::logic_error("consistency_metric_name: unreachable");
}

ConsistencyMetric consistency_metric_from_name(const std::string& name) {
    if (name == "cka") return ConsistencyMetric::kCka;
    if (name == "mse") return ConsistencyMetric::kMse;
    if (name == "l1") return ConsistencyMetric::kL1;
    if (name == "l2") return ConsistencyMetric::kL2;
    throw std::invalid_argument("unknown consistency metric: " + name);
}

Image apply_intervention(InterventionOp op, const Image& reference,
                         const Image& distractor, double lambda,
                         const TrainConfig& config, std::uint64_t op_seed) {
    switch (op) {
        case InterventionOp::kFftMix: {
            MixParams p = config.mix;
            p.lambda = lambda;
            return make_counterfactual(reference, distractor, p);
        }
        case InterventionOp::kRandomMask:
            return random_mask(reference, config.mask_patch_size, config.mask_fraction,
                               op_seed);
        case InterventionOp::kPatchShuffle:
            return patch_shuffle(reference, config.shuffle_grid, op_seed);
        case InterventionOp::kGaussianBlur:
            return gaussian_blur(reference, config.blur_sigma, config.blur_radius);
        case InterventionOp::kGrayscale:
            return grayscale(reference);
        case InterventionOp::kNone:
            return reference;
    }
    throw std::logic_error("apply_intervention: unreachable");
}

BatchEval batch_loss_and_grads(const ComposerParams& params,
                               const std::vector<BatchSample>& batch, double tau,
                               const LossWeights& weights, const AblationToggles& toggles,
                               ComposerGrads* grads) {
    const int b = static_cast<int>(batch.size());
    if (b < 2) throw std::invalid_argument("batch_loss: batch size must be >= 2");

    BatchEval eval;
    const bool want_pairwise =
        toggles.enable_robust || (toggles.enable_soft && weights.mu != 0.0);
    const bool want_consistency = toggles.enable_invariance;

    std::vector<Mat> f_composed(batch.size()), f_intervened, f_target(batch.size());
    std::vector<ComposeTrace> tr_composed(batch.size()), tr_intervened,
        tr_target(batch.size());
    if (want_consistency) {
        f_intervened.resize(batch.size());
        tr_intervened.resize(batch.size());
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        f_composed[i] = compose(params, *batch[i].reference, *batch[i].tokens,
                                grads ? &tr_composed[i] : nullptr);
        if (want_consistency) {
            if (!batch[i].counterfactual)
                throw std::invalid_argument("batch_loss: missing counterfactual image");
            f_intervened[i] = compose(params, *batch[i].counterfactual, *batch[i].tokens,
                                      grads ? &tr_intervened[i] : nullptr);
        }
        f_target[i] =
            encode_target(params, *batch[i].target, grads ? &tr_target[i] : nullptr);
    }

    std::vector<Vec> du, dv;
    std::vector<Vec> pooled_c, pooled_t;
    Mat dprobs;
    SimilarityMatrix sim;
    if (want_pairwise) {
        pooled_c.resize(batch.size());
        pooled_t.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            pooled_c[i] = pool(f_composed[i], params.config.pool);
            pooled_t[i] = pool(f_target[i], params.config.pool);
        }
        sim = similarity_matrix(pooled_c, pooled_t, tau);
        const Mat y = diagonal_labels(b);
        dprobs = Mat(b, b);

        const Likelihoods lk = matching_likelihoods(sim.probs, y);
        for (int i = 0; i < b; ++i) {
            eval.mean_p_pos += lk.p_pos[static_cast<std::size_t>(i)] / b;
            eval.mean_p_neg += lk.p_neg[static_cast<std::size_t>(i)] / b;
        }

        if (toggles.enable_robust) {
            const ProbsLoss rl = robust_loss_from_probs(
                sim.probs, y, toggles.mask_diagonal, toggles.robust_positive_summand);
            eval.robust = rl.value;
            axpy(1.0, rl.grad_probs, dprobs);
        }
        if (toggles.enable_soft && weights.mu != 0.0) {
            LoyaltyOptions opts;
            opts.negative_reward = toggles.enable_negative_reward;
            opts.positive_reward = toggles.enable_positive_reward;
            opts.stop_gradient_rewards = toggles.reward_stop_gradient;
            const SoftLossResult sl = soft_discriminative_loss(sim.probs, y, opts);
            eval.soft = sl.value;
            axpy(weights.mu, sl.grad_probs, dprobs);
        }
    }

    ConsistencyResult cons;
    if (want_consistency) {
        cons = consistency_loss(f_composed, f_intervened, toggles.consistency_metric);
        eval.consistency = cons.value;
        eval.degenerate_consistency = cons.degenerate;
    }

    eval.total = eval.robust + weights.mu * eval.soft + weights.alpha * eval.consistency;
    if (!std::isfinite(eval.total)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss (robust=" << eval.robust
            << ", soft=" << eval.soft << ", consistency=" << eval.consistency << ")";
        throw std::runtime_error(msg.str());
    }
    if (!grads) return eval;

    if (want_pairwise) {
        du.assign(batch.size(), Vec(pooled_c[0].size(), 0.0));
        dv.assign(batch.size(), Vec(pooled_t[0].size(), 0.0));
        const Mat dlogits = softmax_rows_backward(sim.probs, dprobs);
        cosine_logits_backward(pooled_c, pooled_t, tau, dlogits, du, dv);
    }

    for (std::size_t i = 0; i < batch.size(); ++i) {
        Mat df(f_composed[i].rows, f_composed[i].cols);
        if (want_pairwise)
            df = pool_backward(f_composed[i], params.config.pool, du[i]);
        if (want_consistency) axpy(weights.alpha, cons.grad_f[i], df);
        bool any = false;
        for (double v : df.data)
            if (v != 0.0) { any = true; break; }
        if (any) compose_backward(params, tr_composed[i], df, *grads);

        if (want_consistency) {
            Mat dfh = cons.grad_fhat[i];
            for (auto& v : dfh.data) v *= weights.alpha;
            bool anyh = false;
            for (double v : dfh.data)
                if (v != 0.0) { anyh = true; break; }
            if (anyh) compose_backward(params, tr_intervened[i], dfh, *grads);
        }
        if (want_pairwise) {
            const Mat dft = pool_backward(f_target[i], params.config.pool, dv[i]);
            compose_backward(params, tr_target[i], dft, *grads);
        }
    }
    return eval;
}

namespace {

struct ValSplit {
    std::vector<int> train_indices;
    std::vector<int> val_indices;
};

// Clean-only validation holdout; the split stream depends only on the seed so
// every ablation variant at the same seed sees the same split.
ValSplit split_validation(const TripletDataset& dataset, double fraction,
                          std::uint64_t seed) {
    const int n = static_cast<int>(dataset.triplets.size());
    std::vector<int> clean;
    for (int i = 0; i < n; ++i)
        if (!dataset.triplets[static_cast<std::size_t>(i)].is_noisy) clean.push_back(i);
    const int want = static_cast<int>(std::lround(fraction * n));
    const int take = std::min<int>(want, static_cast<int>(clean.size()));
    Rng rng(mix_seed(seed, kTagSplit));
    rng.shuffle(clean);
    ValSplit split;
    split.val_indices.assign(clean.begin(), clean.begin() + take);
    std::sort(split.val_indices.begin(), split.val_indices.end());
    std::vector<bool> in_val(static_cast<std::size_t>(n), false);
    for (int i : split.val_indices) in_val[static_cast<std::size_t>(i)] = true;
    for (int i = 0; i < n; ++i)
        if (!in_val[static_cast<std::size_t>(i)]) split.train_indices.push_back(i);
    return split;
}

struct ValEval {
    double recall1 = -1.0;
    double recall5 = -1.0;
    double subset_recall1 = -1.0;
};

ValEval evaluate_validation(const ComposerParams& params, const TripletDataset& dataset,
                            const std::vector<int>& val_indices) {
    ValEval ev;
    if (val_indices.size() < 2) return ev;
    std::vector<std::pair<Image, TokenSeq>> queries;
    std::vector<Image> gallery;
    std::vector<AttributeVector> attrs;
    std::vector<int> truth;
    for (std::size_t q = 0; q < val_indices.size(); ++q) {
        const int i = val_indices[q];
        const Triplet& t = dataset.triplets[static_cast<std::size_t>(i)];
        queries.emplace_back(t.reference, t.modification);
        // Clean targets with equal attributes render identically; keep one
        // gallery copy per attribute combination so ranking ties cannot mask
        // a correct retrieval.
        int truth_idx = -1;
        for (std::size_t g = 0; g < attrs.size(); ++g)
            if (attrs[g] == dataset.gallery_attrs[static_cast<std::size_t>(i)]) {
                truth_idx = static_cast<int>(g);
                break;
            }
        if (truth_idx < 0) {
            gallery.push_back(dataset.gallery[static_cast<std::size_t>(i)]);
            attrs.push_back(dataset.gallery_attrs[static_cast<std::size_t>(i)]);
            truth_idx = static_cast<int>(gallery.size()) - 1;
        }
        truth.push_back(truth_idx);
    }
    const RankingTable rankings = rank_all(params, queries, gallery);
    ev.recall1 = recall_at_k(rankings, truth, 1);
    ev.recall5 = recall_at_k(rankings, truth, std::min<int>(5, static_cast<int>(gallery.size())));
    const int subset_size = std::min<int>(6, static_cast<int>(gallery.size()));
    const auto subsets = subsets_by_hamming(attrs, truth, subset_size);
    ev.subset_recall1 = subset_recall_at_k(rankings, subsets, truth, 1);
    return ev;
}

}  // namespace

TrainResult train(const TripletDataset& dataset, const TrainConfig& config,
                  const AblationToggles& toggles) {
    if (config.batch_size < 2)
        throw std::invalid_argument("train: batch_size must be >= 2");
    if (config.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    const int n = static_cast<int>(dataset.triplets.size());
    if (n < config.batch_size)
        throw std::invalid_argument("train: dataset smaller than one batch");

    const ValSplit split =
        split_validation(dataset, config.validation_fraction, config.seed);
    if (static_cast<int>(split.train_indices.size()) < config.batch_size)
        throw std::invalid_argument("train: training split smaller than one batch");

    ComposerConfig cc = config.composer;
    cc.channels = dataset.triplets.front().reference.channels;
    cc.vocab_size = dataset.config.space.vocab_size();
    cc.init_seed = mix_seed(config.seed, kTagInit);

    TrainResult result;
    result.params = init_params(cc);
    result.train_indices = split.train_indices;
    result.val_indices = split.val_indices;

    Vec flat = param_vector(result.params);
    AdamState adam;
    const int steps_per_epoch =
        static_cast<int>(split.train_indices.size()) / config.batch_size;

    int global_step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int> order = split.train_indices;
        Rng shuffle_rng(mix_seed(config.seed, kTagShuffle, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double sum_robust = 0, sum_soft = 0, sum_cons = 0, sum_total = 0;
        double sum_ppos = 0, sum_pneg = 0;
        for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
            const int base = step * config.batch_size;
            std::vector<const Triplet*> tris(static_cast<std::size_t>(config.batch_size));
            for (int i = 0; i < config.batch_size; ++i)
                tris[static_cast<std::size_t>(i)] =
                    &dataset.triplets[static_cast<std::size_t>(
                        order[static_cast<std::size_t>(base + i)])];

            // Distractors and mix ratios come from streams independent of the
            // intervention op, so swapping the op changes only the
            // counterfactual inputs.
            Rng dist_rng(mix_seed(config.seed, kTagDistractor,
                                  static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(step)));
            Rng lam_rng(mix_seed(config.seed, kTagLambda,
                                 static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(step)));

            std::vector<Image> counterfactuals;
            std::vector<BatchSample> batch(static_cast<std::size_t>(config.batch_size));
            if (toggles.enable_invariance) {
                counterfactuals.resize(static_cast<std::size_t>(config.batch_size));
                for (int i = 0; i < config.batch_size; ++i) {
                    const int offset =
                        1 + static_cast<int>(dist_rng.below(
                                static_cast<std::uint64_t>(config.batch_size - 1)));
                    const int partner = (i + offset) % config.batch_size;
                    const double lambda = lam_rng.uniform(0.0, config.mix.lambda);
                    const std::uint64_t op_seed = mix_seed(
                        config.seed, kTagIntervene, static_cast<std::uint64_t>(global_step),
                        static_cast<std::uint64_t>(i));
                    counterfactuals[static_cast<std::size_t>(i)] = apply_intervention(
                        config.intervention, tris[static_cast<std::size_t>(i)]->reference,
                        tris[static_cast<std::size_t>(partner)]->reference, lambda, config,
                        op_seed);
                }
            }
            for (int i = 0; i < config.batch_size; ++i) {
                BatchSample& s = batch[static_cast<std::size_t>(i)];
                s.reference = &tris[static_cast<std::size_t>(i)]->reference;
                s.target = &tris[static_cast<std::size_t>(i)]->target;
                s.tokens = &tris[static_cast<std::size_t>(i)]->modification;
                s.counterfactual = toggles.enable_invariance
                                       ? &counterfactuals[static_cast<std::size_t>(i)]
                                       : nullptr;
            }

            ComposerGrads grads = make_zero_grads(cc);
            const BatchEval eval = batch_loss_and_grads(result.params, batch, config.tau,
                                                        config.weights, toggles, &grads);

            Vec g = grad_vector(grads);
            if (!config.train_patch_projection) {
                const std::size_t np = grads.patch_proj.data.size();
                for (std::size_t k = 0; k < np; ++k) g[k] = 0.0;
            }
            if (config.optimizer == OptimizerKind::kSgd)
                sgd_step(flat, g, config.learning_rate);
            else
                adam_step(flat, g, config.learning_rate, adam, config.weight_decay);
            set_param_vector(result.params, flat);

            MetricsRow row;
            row.epoch = epoch;
            row.step = global_step;
            row.robust = eval.robust;
            row.soft = eval.soft;
            row.consistency = eval.consistency;
            row.total = eval.total;
            row.mean_p_pos = eval.mean_p_pos;
            row.mean_p_neg = eval.mean_p_neg;
            result.metrics.push_back(row);

            sum_robust += eval.robust;
            sum_soft += eval.soft;
            sum_cons += eval.consistency;
            sum_total += eval.total;
            sum_ppos += eval.mean_p_pos;
            sum_pneg += eval.mean_p_neg;
        }

        const ValEval ev = evaluate_validation(result.params, dataset, split.val_indices);
        MetricsRow summary;
        summary.epoch = epoch;
        summary.step = -1;
        if (steps_per_epoch > 0) {
            summary.robust = sum_robust / steps_per_epoch;
            summary.soft = sum_soft / steps_per_epoch;
            summary.consistency = sum_cons / steps_per_epoch;
            summary.total = sum_total / steps_per_epoch;
            summary.mean_p_pos = sum_ppos / steps_per_epoch;
            summary.mean_p_neg = sum_pneg / steps_per_epoch;
        }
        summary.val_recall1 = ev.recall1;
        result.metrics.push_back(summary);
    }

    const ValEval final_ev = evaluate_validation(result.params, dataset, split.val_indices);
    result.final_recall1 = final_ev.recall1;
    result.final_recall5 = final_ev.recall5;
    result.final_subset_recall1 = final_ev.subset_recall1;
    return result;
}

void write_metrics_csv(const std::vector<MetricsRow>& metrics, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    out << "epoch,step,robust_loss,soft_loss,consistency_loss,total_loss,"
           "mean_p_pos,mean_p_neg,val_recall1\n";
    char buf[256];
    for (const MetricsRow& r : metrics) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,", r.epoch,
                      r.step, r.robust, r.soft, r.consistency, r.total, r.mean_p_pos,
                      r.mean_p_neg);
        out << buf;
        if (r.step == -1 && r.val_recall1 >= 0.0) {
            std::snprintf(buf, sizeof(buf), "%.10g", r.val_recall1);
            out << buf;
        }
        out << "\n";
    }
}

}  // namespace rcir
