#include <doctest.h>

#include <cmath>
#include <vector>

#include "rcir/rng.hpp"
#include "rcir/trainer.hpp"

using namespace rcir;

namespace {

DatasetConfig small_dataset_config(int n, double sigma, std::uint64_t seed) {
    DatasetConfig cfg;
    cfg.n_triplets = n;
    cfg.noise_ratio = sigma;
    cfg.clutter_level = 0.2;
    cfg.image_size = 16;
    cfg.seed = seed;
    return cfg;
}

TrainConfig small_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.learning_rate = 0.01;
    cfg.optimizer = OptimizerKind::kAdam;
    cfg.composer.patch_size = 16;
    cfg.composer.query_count = 4;
    cfg.composer.embed_dim = 16;
    cfg.composer.hidden_dim = 16;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("sgd_step: lr=0 is the identity; arithmetic example; rejects non-finite") {
    Vec p{1.0, -2.0};
    sgd_step(p, {2.0, 3.0}, 0.0);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);

    Vec q{1.0};
    sgd_step(q, {2.0}, 0.1);
    CHECK(q[0] == doctest::Approx(0.8));

    Vec bad{1.0};
    CHECK_THROWS_AS(sgd_step(bad, {std::nan("")}, 0.1), std::invalid_argument);
}

TEST_CASE("adam converges on a quadratic bowl within 500 steps") {
    const Vec target{3.0, -1.5, 0.25, 7.0};
    Vec p(4, 0.0);
    AdamState state;
    for (int step = 0; step < 500; ++step) {
        Vec g(4);
        for (int i = 0; i < 4; ++i) g[static_cast<std::size_t>(i)] =
            2.0 * (p[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]);
        adam_step(p, g, 0.05, state);
    }
    for (int i = 0; i < 4; ++i)
        CHECK(std::abs(p[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]) <
              1e-3);
}

TEST_CASE("train: zero epochs returns the initialization bitwise") {
    const TripletDataset ds = generate_dataset(small_dataset_config(20, 0.0, 1));
    TrainConfig cfg = small_train_config(5);
    cfg.epochs = 0;
    const TrainResult res = train(ds, cfg, AblationToggles{});

    ComposerConfig cc = cfg.composer;
    cc.channels = 3;
    cc.vocab_size = ds.config.space.vocab_size();
    cc.init_seed = res.params.config.init_seed;
    const ComposerParams init = init_params(cc);
    CHECK(param_vector(res.params) == param_vector(init));
}

TEST_CASE("train: identical seeds give bit-identical metrics") {
    const TripletDataset ds = generate_dataset(small_dataset_config(24, 0.2, 2));
    const TrainConfig cfg = small_train_config(7);
    const TrainResult a = train(ds, cfg, AblationToggles{});
    const TrainResult b = train(ds, cfg, AblationToggles{});
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        CHECK(a.metrics[i].total == b.metrics[i].total);
        CHECK(a.metrics[i].robust == b.metrics[i].robust);
        CHECK(a.metrics[i].val_recall1 == b.metrics[i].val_recall1);
    }
    CHECK(param_vector(a.params) == param_vector(b.params));
}

TEST_CASE("train: loss decreases on a clean dataset") {
    // 200 triplets, sigma=0, clutter=0, B=16, 10 epochs.
    DatasetConfig dc = small_dataset_config(200, 0.0, 3);
    dc.clutter_level = 0.0;
    const TripletDataset ds = generate_dataset(dc);
    TrainConfig cfg = small_train_config(11);
    cfg.batch_size = 16;
    cfg.epochs = 10;
    const TrainResult res = train(ds, cfg, AblationToggles{});

    double first_total = -1.0, last_total = -1.0;
    for (const MetricsRow& r : res.metrics) {
        if (r.step == -1) continue;
        if (first_total < 0) first_total = r.total;
        last_total = r.total;
    }
    CHECK(last_total < first_total);
}

TEST_CASE("train: toggles all off leave parameters unchanged") {
    const TripletDataset ds = generate_dataset(small_dataset_config(20, 0.0, 4));
    TrainConfig cfg = small_train_config(13);
    cfg.weights.mu = 0.0;
    AblationToggles toggles;
    toggles.enable_robust = false;
    toggles.enable_invariance = false;
    const TrainResult res = train(ds, cfg, toggles);

    ComposerConfig cc = cfg.composer;
    cc.channels = 3;
    cc.vocab_size = ds.config.space.vocab_size();
    cc.init_seed = res.params.config.init_seed;
    CHECK(param_vector(res.params) == param_vector(init_params(cc)));
    for (const MetricsRow& r : res.metrics) CHECK(r.total == 0.0);
}

TEST_CASE("train: rejects a dataset smaller than one batch") {
    const TripletDataset ds = generate_dataset(small_dataset_config(6, 0.0, 5));
    TrainConfig cfg = small_train_config(1);
    cfg.batch_size = 16;
    CHECK_THROWS_AS(train(ds, cfg, AblationToggles{}), std::invalid_argument);
}

TEST_CASE("train: step-0 pairwise losses are identical across intervention ops") {
    const TripletDataset ds = generate_dataset(small_dataset_config(24, 0.0, 6));
    TrainConfig cfg = small_train_config(17);
    cfg.epochs = 1;

    std::vector<double> robust0, soft0;
    for (InterventionOp op : {InterventionOp::kFftMix, InterventionOp::kRandomMask,
                              InterventionOp::kPatchShuffle, InterventionOp::kGaussianBlur,
                              InterventionOp::kGrayscale, InterventionOp::kNone}) {
        TrainConfig c = cfg;
        c.intervention = op;
        const TrainResult res = train(ds, c, AblationToggles{});
        robust0.push_back(res.metrics.front().robust);
        soft0.push_back(res.metrics.front().soft);
    }
    for (std::size_t i = 1; i < robust0.size(); ++i) {
        CHECK(robust0[i] == robust0[0]);
        CHECK(soft0[i] == soft0[0]);
    }
}

TEST_CASE("batch_loss_and_grads: total equals robust when mu=alpha=0") {
    const TripletDataset ds = generate_dataset(small_dataset_config(8, 0.0, 7));
    ComposerConfig cc;
    cc.patch_size = 16;
    cc.channels = 3;
    cc.vocab_size = ds.config.space.vocab_size();
    cc.query_count = 3;
    cc.embed_dim = 8;
    cc.hidden_dim = 8;
    cc.init_seed = 21;
    const ComposerParams params = init_params(cc);

    std::vector<BatchSample> batch;
    for (int i = 0; i < 4; ++i) {
        const Triplet& t = ds.triplets[static_cast<std::size_t>(i)];
        batch.push_back({&t.reference, &t.reference, &t.target, &t.modification});
    }
    AblationToggles toggles;
    toggles.enable_invariance = false;
    const BatchEval eval =
        batch_loss_and_grads(params, batch, 0.07, {0.0, 0.0}, toggles, nullptr);
    CHECK(eval.total == eval.robust);
    CHECK(eval.soft == 0.0);
    CHECK(eval.consistency == 0.0);
}

TEST_CASE("batch_loss_and_grads: weighted total matches scalar arithmetic and "
          "gradients are linear in the weights") {
    const TripletDataset ds = generate_dataset(small_dataset_config(8, 0.0, 8));
    ComposerConfig cc;
    cc.patch_size = 16;
    cc.channels = 3;
    cc.vocab_size = ds.config.space.vocab_size();
    cc.query_count = 3;
    cc.embed_dim = 8;
    cc.hidden_dim = 8;
    cc.init_seed = 22;
    const ComposerParams params = init_params(cc);

    std::vector<Image> counterfactuals;
    std::vector<BatchSample> batch;
    counterfactuals.reserve(4);
    for (int i = 0; i < 4; ++i) {
        const Triplet& t = ds.triplets[static_cast<std::size_t>(i)];
        counterfactuals.push_back(make_counterfactual(
            t.reference, ds.triplets[static_cast<std::size_t>((i + 1) % 4)].reference,
            {0.5, 0.25, 0}));
    }
    for (int i = 0; i < 4; ++i) {
        const Triplet& t = ds.triplets[static_cast<std::size_t>(i)];
        batch.push_back({&t.reference, &counterfactuals[static_cast<std::size_t>(i)],
                         &t.target, &t.modification});
    }

    const AblationToggles toggles;
    const LossWeights w{0.2, 0.6};
    const BatchEval all = batch_loss_and_grads(params, batch, 0.07, w, toggles, nullptr);
    CHECK(all.total ==
          doctest::Approx(all.robust + 0.2 * all.soft + 0.6 * all.consistency)
              .epsilon(1e-12));

    // Component gradients recombine linearly into the total gradient.
    ComposerGrads g_total = make_zero_grads(cc);
    batch_loss_and_grads(params, batch, 0.07, w, toggles, &g_total);

    AblationToggles only_robust = toggles;
    only_robust.enable_invariance = false;
    only_robust.enable_soft = false;
    ComposerGrads g_robust = make_zero_grads(cc);
    batch_loss_and_grads(params, batch, 0.07, {0.0, 0.0}, only_robust, &g_robust);

    AblationToggles only_soft = toggles;
    only_soft.enable_invariance = false;
    only_soft.enable_robust = false;
    ComposerGrads g_soft = make_zero_grads(cc);
    batch_loss_and_grads(params, batch, 0.07, {1.0, 0.0}, only_soft, &g_soft);

    AblationToggles only_cons = toggles;
    only_cons.enable_robust = false;
    only_cons.enable_soft = false;
    ComposerGrads g_cons = make_zero_grads(cc);
    batch_loss_and_grads(params, batch, 0.07, {0.0, 1.0}, only_cons, &g_cons);

    const Vec vt = grad_vector(g_total);
    const Vec vr = grad_vector(g_robust);
    const Vec vs = grad_vector(g_soft);
    const Vec vc = grad_vector(g_cons);
    for (std::size_t i = 0; i < vt.size(); ++i)
        CHECK(vt[i] ==
              doctest::Approx(vr[i] + 0.2 * vs[i] + 0.6 * vc[i]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("apply_intervention: none copies the reference; fft_mix obeys lambda=0") {
    const TripletDataset ds = generate_dataset(small_dataset_config(4, 0.0, 9));
    const TrainConfig cfg = small_train_config(1);
    const Image& ref = ds.triplets[0].reference;
    const Image& dist = ds.triplets[1].reference;

    CHECK(images_equal(
        apply_intervention(InterventionOp::kNone, ref, dist, 0.7, cfg, 1), ref));
    const Image cf =
        apply_intervention(InterventionOp::kFftMix, ref, dist, 0.0, cfg, 1);
    CHECK(max_abs_diff(cf, ref) < 1e-4);
}
