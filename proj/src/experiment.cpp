#include "rcir/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "rcir/rng.hpp"

namespace rcir {

namespace fs = std::filesystem;
using nlohmann::json;

std::string variant_name(const AblationToggles& toggles, InterventionOp intervention) {
    std::vector<std::string> parts;
    if (!toggles.enable_invariance)
        parts.push_back("no_invariance");
    else if (intervention != InterventionOp::kFftMix)
        parts.push_back(std::string("intervene_") + intervention_name(intervention));
    if (!toggles.enable_robust) parts.push_back("no_robust");
    if (!toggles.mask_diagonal) parts.push_back("no_mask");
    if (!toggles.enable_soft) parts.push_back("no_soft");
    if (!toggles.enable_positive_reward && !toggles.enable_negative_reward)
        parts.push_back("no_rewards");
    else if (!toggles.enable_positive_reward)
        parts.push_back("no_pos_reward");
    else if (!toggles.enable_negative_reward)
        parts.push_back("no_neg_reward");
    if (toggles.consistency_metric != ConsistencyMetric::kCka)
        parts.push_back(std::string("consistency_") +
                        consistency_metric_name(toggles.consistency_metric));
    if (parts.empty()) return "full";
    std::string name = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) name += "+" + parts[i];
    return name;
}

std::string resolved_variant(const ExperimentSpec& spec) {
    if (!spec.variant.empty()) return spec.variant;
    return variant_name(spec.toggles, spec.train.intervention);
}

std::string sigma_dir_name(double sigma) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sigma_%g", sigma);
    return buf;
}

namespace {

std::string seed_dir_name(std::uint64_t seed) {
    return "seed_" + std::to_string(seed);
}

DatasetConfig cell_dataset_config(const ExperimentSpec& spec, double sigma,
                                  std::uint64_t seed) {
    DatasetConfig cfg = spec.dataset;
    cfg.noise_ratio = sigma;
    cfg.seed = mix_seed(spec.dataset.seed, seed);
    return cfg;
}

void append_expected_cells(const ExperimentSpec& spec) {
    fs::create_directories(spec.output_dir);
    const fs::path path = fs::path(spec.output_dir) / "expected.jsonl";
    std::set<std::string> lines;
    if (fs::exists(path)) {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) lines.insert(line);
    }
    const std::string variant = resolved_variant(spec);
    for (double sigma : spec.noise_sweep)
        for (std::uint64_t seed : spec.seeds) {
            json rec;
            rec["seed"] = seed;
            rec["sigma"] = sigma;
            rec["variant"] = variant;
            lines.insert(rec.dump());
        }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const std::string& line : lines) out << line << "\n";
}

}  // namespace

void cmd_generate(const ExperimentSpec& spec) {
    if (spec.noise_sweep.empty() || spec.seeds.empty())
        throw std::invalid_argument("experiment: noise sweep and seeds must be non-empty");
    for (double sigma : spec.noise_sweep)
        for (std::uint64_t seed : spec.seeds) {
            const DatasetConfig cfg = cell_dataset_config(spec, sigma, seed);
            const TripletDataset ds = generate_dataset(cfg);
            const fs::path dir = fs::path(spec.output_dir) / "datasets" /
                                 sigma_dir_name(sigma) / seed_dir_name(seed);
            write_dataset(ds, dir.string(), spec.subset_size);
            std::cout << "generated " << dir.string() << " (" << cfg.n_triplets
                      << " triplets, sigma=" << sigma << ")\n";
        }
}

void cmd_train(const ExperimentSpec& spec) {
    if (spec.noise_sweep.empty() || spec.seeds.empty())
        throw std::invalid_argument("experiment: noise sweep and seeds must be non-empty");
    const std::string variant = resolved_variant(spec);
    append_expected_cells(spec);

    for (double sigma : spec.noise_sweep)
        for (std::uint64_t seed : spec.seeds) {
            const fs::path data_dir = fs::path(spec.output_dir) / "datasets" /
                                      sigma_dir_name(sigma) / seed_dir_name(seed);
            if (!fs::exists(data_dir / "dataset.json"))
                throw std::runtime_error("missing dataset at " + data_dir.string() +
                                         " (run the generate command first)");
            const TripletDataset ds = read_dataset(data_dir.string());

            TrainConfig cfg = spec.train;
            cfg.seed = seed;

            const auto t0 = std::chrono::steady_clock::now();
            const TrainResult res = train(ds, cfg, spec.toggles);
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            const fs::path run_dir = fs::path(spec.output_dir) / "runs" / variant /
                                     sigma_dir_name(sigma) / seed_dir_name(seed);
            fs::create_directories(run_dir);
            write_metrics_csv(res.metrics, (run_dir / "metrics.csv").string());
            save_checkpoint(res.params, (run_dir / "checkpoint.bin").string());

            json rec;
            rec["epochs"] = cfg.epochs;
            rec["n_triplets"] = ds.config.n_triplets;
            rec["recall1"] = res.final_recall1;
            rec["recall5"] = res.final_recall5;
            rec["seed"] = seed;
            rec["sigma"] = sigma;
            rec["subset_recall1"] = res.final_subset_recall1;
            rec["variant"] = variant;
            {
                std::ofstream out(run_dir / "run.json");
                if (!out) throw std::runtime_error("cannot write run.json");
                out << rec.dump(2) << "\n";
            }
            {
                // Wall-clock measurement lives outside the deterministic
                // artifact set.
                std::ofstream out(run_dir / "runtime.txt");
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.3f", elapsed);
                out << buf << "\n";
            }
            std::cout << "trained " << variant << " sigma=" << sigma << " seed=" << seed
                      << " recall1=" << res.final_recall1 << " (" << elapsed << " s)\n";
        }
}

namespace {

struct RunRecord {
    double sigma = 0.0;
    std::string variant;
    std::uint64_t seed = 0;
    double recall1 = 0.0, recall5 = 0.0, subset_recall1 = 0.0;
    double runtime = 0.0;
    bool has_runtime = false;
};

struct CellKey {
    double sigma;
    std::string variant;
    bool operator<(const CellKey& o) const {
        if (sigma != o.sigma) return sigma < o.sigma;
        return variant < o.variant;
    }
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator); 0 for a single value.
double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void cmd_report(const std::string& output_dir) {
    const fs::path runs_dir = fs::path(output_dir) / "runs";
    std::vector<RunRecord> records;
    if (fs::exists(runs_dir)) {
        std::vector<fs::path> run_files;
        for (const auto& entry : fs::recursive_directory_iterator(runs_dir))
            if (entry.is_regular_file() && entry.path().filename() == "run.json")
                run_files.push_back(entry.path());
        std::sort(run_files.begin(), run_files.end());
        for (const fs::path& p : run_files) {
            std::ifstream in(p);
            json rec = json::parse(in);
            RunRecord r;
            r.sigma = rec.at("sigma").get<double>();
            r.variant = rec.at("variant").get<std::string>();
            r.seed = rec.at("seed").get<std::uint64_t>();
            r.recall1 = rec.at("recall1").get<double>();
            r.recall5 = rec.at("recall5").get<double>();
            r.subset_recall1 = rec.at("subset_recall1").get<double>();
            const fs::path rt = p.parent_path() / "runtime.txt";
            if (fs::exists(rt)) {
                std::ifstream rt_in(rt);
                rt_in >> r.runtime;
                r.has_runtime = true;
            }
            records.push_back(std::move(r));
        }
    }

    // Expected cells: union of every train invocation's announced grid.
    std::map<CellKey, std::set<std::uint64_t>> expected;
    const fs::path expected_path = fs::path(output_dir) / "expected.jsonl";
    if (fs::exists(expected_path)) {
        std::ifstream in(expected_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            expected[{rec.at("sigma").get<double>(), rec.at("variant").get<std::string>()}]
                .insert(rec.at("seed").get<std::uint64_t>());
        }
    }

    std::map<CellKey, std::vector<RunRecord>> cells;
    for (const RunRecord& r : records) cells[{r.sigma, r.variant}].push_back(r);
    std::set<CellKey> all_keys;
    for (const auto& [k, v] : cells) all_keys.insert(k);
    for (const auto& [k, v] : expected) all_keys.insert(k);

    const fs::path report_path = fs::path(output_dir) / "report.csv";
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path.string());
    out << "# std convention: sample standard deviation (n-1 denominator); 0 for a "
           "single run. runtime is mean wall-clock seconds from runtime.txt.\n";
    out << "sigma,variant,seeds_found,seeds_missing,recall1_mean,recall1_std,"
           "recall5_mean,recall5_std,subset_recall1_mean,subset_recall1_std,"
           "runtime_mean\n";

    char buf[512];
    for (const CellKey& key : all_keys) {
        const auto it = cells.find(key);
        int missing = 0;
        const auto exp_it = expected.find(key);
        if (exp_it != expected.end()) {
            std::set<std::uint64_t> found;
            if (it != cells.end())
                for (const RunRecord& r : it->second) found.insert(r.seed);
            for (std::uint64_t s : exp_it->second)
                if (!found.count(s)) ++missing;
        }
        if (it == cells.end() || it->second.empty()) {
            std::snprintf(buf, sizeof(buf), "%g,%s,0,%d,MISSING,MISSING,MISSING,MISSING,"
                                            "MISSING,MISSING,MISSING",
                          key.sigma, key.variant.c_str(), missing);
            out << buf << "\n";
            continue;
        }
        std::vector<double> r1, r5, rs1, rt;
        for (const RunRecord& r : it->second) {
            r1.push_back(r.recall1);
            r5.push_back(r.recall5);
            rs1.push_back(r.subset_recall1);
            if (r.has_runtime) rt.push_back(r.runtime);
        }
        std::snprintf(buf, sizeof(buf),
                      "%g,%s,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f", key.sigma,
                      key.variant.c_str(), static_cast<int>(it->second.size()), missing,
                      mean_of(r1), sample_std(r1), mean_of(r5), sample_std(r5),
                      mean_of(rs1), sample_std(rs1), mean_of(rt));
        out << buf << "\n";
    }
    std::cout << "wrote " << report_path.string() << "\n";
}

bool cmd_gradcheck(const GradCheckSettings& settings) {
    const auto reports = run_gradient_suite(settings);
    for (const GradCheckReport& r : reports) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "[%s] %-24s params=%d max_rel_err=%.3e",
                      r.pass ? "PASS" : "FAIL", r.label.c_str(), r.checked, r.max_rel_err);
        std::cout << buf << "\n";
    }
    return gradient_suite_passed(reports);
}

void cmd_demo_intervene(const DemoIntervention& args) {
    const Image input = read_image(args.input_path);
    TrainConfig cfg;
    cfg.mix.lambda = args.lambda;
    cfg.mix.crop_ratio = args.crop_ratio;
    cfg.mask_patch_size = args.mask_patch_size;
    cfg.mask_fraction = args.mask_fraction;
    cfg.shuffle_grid = args.shuffle_grid;
    cfg.blur_sigma = args.blur_sigma;
    cfg.blur_radius = args.blur_radius;

    Image distractor;
    if (args.op == InterventionOp::kFftMix) {
        if (args.distractor_path.empty())
            throw std::invalid_argument("fft_mix needs a distractor image (--distractor)");
        distractor = read_image(args.distractor_path);
    }
    const Image out =
        apply_intervention(args.op, input, distractor, args.lambda, cfg, args.seed);
    write_image(args.output_path, out);
    std::cout << "wrote " << args.output_path << "\n";
}

}  // namespace rcir
