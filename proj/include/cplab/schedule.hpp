#pragma once

// The five bilingual exposure conditions realized as resolved batch streams,
// plus the training loop: AdamW, linear warmup/decay restarted per phase,
// gradient accumulation and clipping, per-epoch checkpoints with resume, and
// a JSONL-friendly metrics stream.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cplab/ewc.hpp"
#include "cplab/model.hpp"
#include "cplab/tokenizer.hpp"

namespace cplab {

enum class Condition {
    Monolingual,
    Interleaved,
    Sequential,
    SequentialInterleaved,
    SequentialEwc,
};

std::string condition_name(Condition c);
Condition condition_from_name(const std::string& name);
std::vector<Condition> all_conditions();

struct TrainConfig {
    double learning_rate = 1e-3;
    double warmup_ratio = 0.07;
    int grad_accum_steps = 16;
    int device_batch_size = 4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double weight_decay = 0.0;
    double max_grad_norm = 1.0;
    int epochs_per_language = 6;  // E
    std::uint64_t seed = 0;

    void validate() const;
};

// Named presets; paper-c1..c3 follow the published configuration table.
TrainConfig train_preset(const std::string& name);

// One device batch drawn from a single dataset's consecutive blocks.
struct DeviceBatch {
    int dataset = 0;
    std::size_t first_block = 0;
    int count = 0;
};

struct PhasePlan {
    std::string name;
    bool fresh_optimizer = true;
    bool ewc_active = false;
    std::vector<DeviceBatch> epoch_stream;  // replayed epochs times
    int epochs = 1;

    std::int64_t updates_per_epoch(int grad_accum) const;
    std::int64_t total_updates(int grad_accum) const;
};

struct TrainPlan {
    Condition condition = Condition::Sequential;
    std::vector<const BlockDataset*> datasets;
    std::vector<PhasePlan> phases;

    // Total block visits per dataset over the whole plan.
    std::vector<std::int64_t> block_visits() const;
};

// datasets: {A, B} for monolingual (same language), {L1, L2} otherwise.
TrainPlan build_plan(Condition condition, const std::vector<const BlockDataset*>& datasets,
                     const TrainConfig& cfg);

// Linear warmup to the peak, then linear decay to zero. 1-based update index.
double lr_at(std::int64_t update, std::int64_t total_updates, double peak, double warmup_ratio);

struct MetricPoint {
    std::string phase;
    int epoch = 0;
    std::int64_t step = 0;  // optimizer updates within the run
    std::string split;
    std::string language;
    std::string metric;
    double value = 0.0;
};

struct TrainHooks {
    std::function<void(const MetricPoint&)> metric;
    // called after each epoch's checkpoint is written
    std::function<void(const LanguageModel<float>&, const std::string& phase, int epoch)> evaluate;
};

struct RunOptions {
    std::string checkpoint_dir;  // empty: keep everything in memory
    bool resume = true;
    EWCConfig ewc;                                // used when a phase has ewc_active
    const FisherSnapshot<float>* fisher = nullptr;  // precomputed snapshot, optional
    std::uint64_t tokenizer_fingerprint = 0;        // 0 skips the check
};

// Raised when training aborts on a non-finite loss; a diagnostic checkpoint
// is written first when a checkpoint directory is configured.
struct TrainingAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunResult {
    std::int64_t optimizer_updates = 0;
    double final_train_ce = 0.0;
    // Fisher snapshot estimated at the phase-1/phase-2 boundary when the plan
    // has an EWC phase and none was supplied.
    std::optional<FisherSnapshot<float>> fisher;
};

RunResult run_training(LanguageModel<float>& m, const TrainPlan& plan, const TrainConfig& cfg,
                       const RunOptions& opts, const TrainHooks& hooks);

}  // namespace cplab
