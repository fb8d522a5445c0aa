#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcir/dataset.hpp"
#include "rcir/gradcheck.hpp"
#include "rcir/trainer.hpp"

namespace rcir {

// One experiment: a dataset recipe, a training recipe, one ablation cell, and
// the (noise ratio x seed) grid to run it over. Per cell, the dataset seed is
// derived from dataset.seed and the cell seed, so clean triplets are shared
// across noise ratios and comparisons stay paired.
struct ExperimentSpec {
    DatasetConfig dataset{500, 0.0, 0.3, 32, 1, AttributeSpace{}};
    TrainConfig train;
    AblationToggles toggles;
    std::vector<double> noise_sweep{0.0, 0.2, 0.5, 0.8};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string output_dir = "out";
    int subset_size = 6;
    std::string variant;  // empty: derived from toggles + intervention
};

std::string variant_name(const AblationToggles& toggles, InterventionOp intervention);
std::string resolved_variant(const ExperimentSpec& spec);
std::string sigma_dir_name(double sigma);

// Writes datasets/<sigma>/<seed>/ for every grid cell.
void cmd_generate(const ExperimentSpec& spec);

// Trains one run per grid cell from the on-disk datasets and writes
// runs/<variant>/<sigma>/<seed>/{metrics.csv, checkpoint.bin, run.json,
// runtime.txt}. Everything except runtime.txt is byte-deterministic.
void cmd_train(const ExperimentSpec& spec);

// Aggregates all run.json files under output_dir into report.csv: mean and
// sample standard deviation (n-1; 0 for a single run) over seeds per
// (sigma, variant) cell. Cells announced in expected.jsonl but absent on disk
// appear as explicit MISSING rows.
void cmd_report(const std::string& output_dir);

// Prints one pass/fail line per gradient-suite case; returns overall pass.
bool cmd_gradcheck(const GradCheckSettings& settings = {});

struct DemoIntervention {
    std::string input_path;
    std::string output_path;
    std::string distractor_path;  // required for fft_mix
    InterventionOp op = InterventionOp::kFftMix;
    double lambda = 0.5;
    double crop_ratio = 0.25;
    int mask_patch_size = 4;
    double mask_fraction = 0.5;
    int shuffle_grid = 4;
    double blur_sigma = 1.5;
    int blur_radius = 4;
    std::uint64_t seed = 0;
};

void cmd_demo_intervene(const DemoIntervention& args);

}  // namespace rcir
