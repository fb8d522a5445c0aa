// Command-line front end: dataset generation, training over a noise sweep,
// report aggregation, the gradient-check suite, and a one-shot intervention
// demo on a PPM image.

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcir/experiment.hpp"

namespace {

struct CliOptions {
    rcir::ExperimentSpec spec;
    std::string intervention = "fft_mix";
    std::string optimizer = "sgd";
    std::string consistency_metric = "cka";
    std::string pool = "mean";
    bool no_invariance = false;
    bool no_robust = false;
    bool no_soft = false;
    bool no_pos_reward = false;
    bool no_neg_reward = false;
    bool no_mask = false;
};

void add_spec_options(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--output-dir", o.spec.output_dir, "Experiment output directory")
        ->envname("RCIR_OUTPUT_DIR");
    cmd->add_option("--n-triplets", o.spec.dataset.n_triplets, "Triplets per dataset");
    cmd->add_option("--clutter", o.spec.dataset.clutter_level,
                    "Background clutter level in [0,1]");
    cmd->add_option("--image-size", o.spec.dataset.image_size, "Rendered image side");
    cmd->add_option("--dataset-seed", o.spec.dataset.seed, "Base seed for datasets");
    cmd->add_option("--noise-sweep", o.spec.noise_sweep,
                    "Noise ratios to sweep (e.g. 0 0.2 0.5 0.8)");
    cmd->add_option("--seeds", o.spec.seeds, "Run seeds");
    cmd->add_option("--subset-size", o.spec.subset_size, "Candidate subset size");

    cmd->add_option("--batch-size", o.spec.train.batch_size, "Training batch size");
    cmd->add_option("--epochs", o.spec.train.epochs, "Training epochs");
    cmd->add_option("--lr", o.spec.train.learning_rate, "Learning rate");
    cmd->add_option("--tau", o.spec.train.tau, "Softmax temperature");
    cmd->add_option("--mu", o.spec.train.weights.mu, "Soft discriminative loss weight");
    cmd->add_option("--alpha", o.spec.train.weights.alpha, "Consistency loss weight");
    cmd->add_option("--lambda-max", o.spec.train.mix.lambda,
                    "Upper bound for the per-image mix ratio");
    cmd->add_option("--crop-ratio", o.spec.train.mix.crop_ratio,
                    "Central amplitude crop ratio");
    cmd->add_option("--intervention", o.intervention,
                    "fft_mix|random_mask|patch_shuffle|gaussian_blur|grayscale|none");
    cmd->add_option("--mask-patch", o.spec.train.mask_patch_size, "Random-mask patch size");
    cmd->add_option("--mask-fraction", o.spec.train.mask_fraction,
                    "Random-mask masked fraction");
    cmd->add_option("--shuffle-grid", o.spec.train.shuffle_grid, "Patch-shuffle grid");
    cmd->add_option("--blur-sigma", o.spec.train.blur_sigma, "Gaussian blur sigma");
    cmd->add_option("--blur-radius", o.spec.train.blur_radius, "Gaussian blur radius");
    cmd->add_option("--optimizer", o.optimizer, "sgd|adam");
    cmd->add_option("--weight-decay", o.spec.train.weight_decay,
                    "Decoupled weight decay (adam only)");
    cmd->add_flag("--train-patch-proj", o.spec.train.train_patch_projection,
                  "Also train the image-patch projection (frozen by default)");
    cmd->add_option("--val-fraction", o.spec.train.validation_fraction,
                    "Clean validation holdout fraction");
    cmd->add_option("--queries", o.spec.train.composer.query_count, "Composer query count");
    cmd->add_option("--embed-dim", o.spec.train.composer.embed_dim, "Embedding dimension");
    cmd->add_option("--hidden-dim", o.spec.train.composer.hidden_dim, "Hidden width");
    cmd->add_option("--patch-size", o.spec.train.composer.patch_size, "Composer patch size");
    cmd->add_option("--pool", o.pool, "mean|max_query");

    cmd->add_option("--variant", o.spec.variant, "Explicit variant name for reports");
    cmd->add_flag("--no-invariance", o.no_invariance, "Disable the invariance branch");
    cmd->add_flag("--no-robust", o.no_robust, "Disable the robust contrastive loss");
    cmd->add_flag("--no-soft", o.no_soft, "Disable the soft discriminative loss");
    cmd->add_flag("--no-pos-reward", o.no_pos_reward, "Drop the positive weight reward");
    cmd->add_flag("--no-neg-reward", o.no_neg_reward, "Drop the negative weight reward");
    cmd->add_flag("--no-mask", o.no_mask, "Keep the positive column in the robust loss");
    cmd->add_option("--consistency-metric", o.consistency_metric, "cka|mse|l1|l2");
    cmd->add_flag("--reward-stop-grad", o.spec.toggles.reward_stop_gradient,
                  "Stop gradients through the reward terms");
    cmd->add_flag("--robust-positive-summand", o.spec.toggles.robust_positive_summand,
                  "Debug: literal printed form of the robust loss");
}

void finalize_spec(CliOptions& o) {
    o.spec.train.intervention = rcir::intervention_from_name(o.intervention);
    if (o.optimizer == "sgd")
        o.spec.train.optimizer = rcir::OptimizerKind::kSgd;
    else if (o.optimizer == "adam")
        o.spec.train.optimizer = rcir::OptimizerKind::kAdam;
    else
        throw std::invalid_argument("unknown optimizer: " + o.optimizer);
    if (o.pool == "mean")
        o.spec.train.composer.pool = rcir::PoolMode::kMean;
    else if (o.pool == "max_query")
        o.spec.train.composer.pool = rcir::PoolMode::kMaxQuery;
    else
        throw std::invalid_argument("unknown pool mode: " + o.pool);
    o.spec.toggles.consistency_metric =
        rcir::consistency_metric_from_name(o.consistency_metric);
    o.spec.toggles.enable_invariance = !o.no_invariance;
    o.spec.toggles.enable_robust = !o.no_robust;
    o.spec.toggles.enable_soft = !o.no_soft;
    o.spec.toggles.enable_positive_reward = !o.no_pos_reward;
    o.spec.toggles.enable_negative_reward = !o.no_neg_reward;
    o.spec.toggles.mask_diagonal = !o.no_mask;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust composed-image-retrieval training on synthetic triplets"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config file; command-line flags take precedence");

    CliOptions gen_opts, train_opts;
    CLI::App* generate = app.add_subcommand("generate", "Generate datasets for the sweep");
    add_spec_options(generate, gen_opts);
    CLI::App* train = app.add_subcommand("train", "Train one variant over the sweep");
    add_spec_options(train, train_opts);

    std::string report_dir = "out";
    CLI::App* report = app.add_subcommand("report", "Aggregate runs into report.csv");
    report->add_option("--output-dir", report_dir, "Experiment output directory")
        ->envname("RCIR_OUTPUT_DIR");

    std::uint64_t gradcheck_seed = 7;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
    gradcheck->add_option("--seed", gradcheck_seed, "Suite seed");

    rcir::DemoIntervention demo;
    std::string demo_op = "fft_mix";
    CLI::App* intervene =
        app.add_subcommand("demo-intervene", "Apply an intervention to a PPM image");
    intervene->add_option("--input", demo.input_path, "Input PPM/PGM")->required();
    intervene->add_option("--output", demo.output_path, "Output image path")->required();
    intervene->add_option("--distractor", demo.distractor_path,
                          "Distractor image (fft_mix only)");
    intervene->add_option("--op", demo_op,
                          "fft_mix|random_mask|patch_shuffle|gaussian_blur|grayscale|none");
    intervene->add_option("--lambda", demo.lambda, "Mix ratio");
    intervene->add_option("--crop-ratio", demo.crop_ratio, "Central crop ratio");
    intervene->add_option("--mask-patch", demo.mask_patch_size, "Random-mask patch size");
    intervene->add_option("--mask-fraction", demo.mask_fraction, "Masked fraction");
    intervene->add_option("--shuffle-grid", demo.shuffle_grid, "Patch-shuffle grid");
    intervene->add_option("--blur-sigma", demo.blur_sigma, "Blur sigma");
    intervene->add_option("--blur-radius", demo.blur_radius, "Blur radius");
    intervene->add_option("--seed", demo.seed, "Seed for seeded interventions");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            finalize_spec(gen_opts);
            rcir::cmd_generate(gen_opts.spec);
        } else if (train->parsed()) {
            finalize_spec(train_opts);
            rcir::cmd_train(train_opts.spec);
        } else if (report->parsed()) {
            rcir::cmd_report(report_dir);
        } else if (gradcheck->parsed()) {
            rcir::GradCheckSettings settings;
            settings.seed = gradcheck_seed;
            if (!rcir::cmd_gradcheck(settings)) {
                std::cerr << "error: gradient suite failed\n";
                return 2;
            }
        } else if (intervene->parsed()) {
            demo.op = rcir::intervention_from_name(demo_op);
            rcir::cmd_demo_intervene(demo);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
