#pragma once

// Experiment orchestration: declarative configs, reproducible run
// directories, the data pipeline, condition runs with per-epoch evaluation,
// lambda sweeps, comparisons, and SVG/CSV figure emission.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cplab/eval.hpp"
#include "cplab/ewc.hpp"
#include "cplab/grammar.hpp"
#include "cplab/model.hpp"
#include "cplab/schedule.hpp"

namespace cplab {

inline constexpr const char* kCplabVersion = "0.1.0";

struct ExperimentConfig {
    std::string experiment;
    std::string output_root = "runs";

    // data
    std::string source = "synthetic";  // synthetic | files
    std::string l1_file, l2_file, l2b_file;
    std::uint64_t tokens_per_language = 2'000'000;  // S
    std::uint64_t sentences_per_language = 0;       // 0: sized automatically
    int block_length = 64;
    int vocab_size = 2000;
    int min_frequency = 2;
    bool pre_split = true;
    std::size_t unify_block_lines = 10000;
    double overlap_fraction = 0.0;
    int noun_stems = 40;
    int verb_stems = 30;
    std::size_t n_pairs = 2000;

    // model / training
    std::string model_preset = "desk-small-causal";
    std::map<std::string, std::string> model_overrides;
    std::string train_preset = "desk";
    std::map<std::string, std::string> train_overrides;
    int epochs_per_language = 6;  // E

    // runs
    std::vector<Condition> conditions;
    std::vector<std::uint64_t> seeds;
    std::uint64_t eval_blocks = 256;
    std::size_t eval_pairs = 1000;

    // ewc
    double ewc_lambda = 10.0;
    double ewc_mu = 0.0;
    int ewc_k = 10;
    int ewc_fisher_blocks = 64;
    std::string ewc_mode = "per-position";
    std::string ewc_normalization = "raw-sum";
    std::vector<double> lambda_grid = {0, 0.1, 1, 10, 100, 1000};
    std::uint64_t sweep_seed = 1;

    bool allow_large_scale = false;

    void validate() const;
    ModelConfig resolve_model(int tokenizer_vocab, std::int32_t mask_id, std::uint64_t seed) const;
    TrainConfig resolve_train(std::uint64_t seed) const;
    EWCConfig resolve_ewc(double lambda, std::uint64_t seed) const;
};

ExperimentConfig parse_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config_text(const std::string& text);

// ---------------------------------------------------------------------------
// Data pipeline
// ---------------------------------------------------------------------------

// On-disk layout under <output_root>/<experiment>/data-seed<k>/:
// train/val/test text per language, minimal-pair TSVs, tokenizers, manifest.
struct SeedData {
    std::string dir;
    TokenizerModel tok_bilingual;
    TokenizerModel tok_mono;
    // bilingual-tokenizer datasets
    BlockDataset l1_train, l2_train;
    BlockDataset l1_val_eval, l2_val_eval;
    // mono-tokenizer datasets (second-language family)
    BlockDataset mono_a, mono_b, mono_val_eval;
    std::vector<MinimalPair> pairs_l1, pairs_l2;
};

// Generates (or reloads, verifying hashes) the per-seed data directory.
SeedData ensure_seed_data(const ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunOutcome {
    std::string run_dir;
    bool skipped = false;  // already complete
};

std::string run_dir_for(const ExperimentConfig& cfg, Condition c, std::uint64_t seed);

// Executes one (condition, seed) run: manifest, training with per-epoch
// evaluation, metrics JSONL, summary CSV. Resumes from checkpoints.
RunOutcome run_condition(const ExperimentConfig& cfg, const SeedData& data, Condition c,
                         std::uint64_t seed);

// Runs every (condition, seed) pair, up to `parallelism` at a time.
void run_experiment(const ExperimentConfig& cfg, int parallelism = 1);

// ---------------------------------------------------------------------------
// Sweep, comparison, figures
// ---------------------------------------------------------------------------

struct SweepRow {
    double lambda = 0.0;
    double final_l1_ce = 0.0;
    double final_l2_ce = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double crossover_lambda = 0.0;
};

// One sequential-ewc phase-2 run per lambda, all from the same phase-1
// checkpoint and Fisher snapshot. Requires the sequential run for the seed.
SweepResult sweep_lambda(const ExperimentConfig& cfg, std::uint64_t seed);
SweepResult load_sweep(const ExperimentConfig& cfg, std::uint64_t seed);

struct ConditionSeries {
    std::string condition;
    // epoch -> (mean, min, max) across seeds
    std::vector<int> epochs;
    std::vector<double> mean, lo, hi;
};

struct Comparison {
    std::string metric;
    std::string language;
    std::vector<ConditionSeries> series;
    // condition -> final-epoch mean
    std::map<std::string, double> final_mean;
};

Comparison compare_conditions(const std::string& experiment_root, const std::string& metric,
                              const std::string& language, const std::string& split = "validation");
std::string comparison_table(const Comparison& c);
std::string comparison_json(const Comparison& c);

// figure specs: "learning-curve:<metric>:<language>" | "lambda-tradeoff"
void emit_plot(const std::string& experiment_root, const std::string& figure_spec,
               const std::string& out_prefix);

// Verifies that every file in a run directory is reachable from its manifest.
std::vector<std::string> lint_run_dir(const std::string& run_dir);

}  // namespace cplab
