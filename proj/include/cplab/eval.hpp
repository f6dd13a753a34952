#pragma once

// Proficiency probes: perplexity per character, zero-shot minimal-pair
// accuracy, and a fine-tuned classifier harness over the pooled final
// representation.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cplab/grammar.hpp"
#include "cplab/model.hpp"
#include "cplab/schedule.hpp"
#include "cplab/tokenizer.hpp"

namespace cplab {

struct EvalResult {
    std::string metric;
    double value = 0.0;
    std::string split;
    std::string language;
    int epoch = 0;
    std::int64_t n_items = 0;
    std::uint64_t tokenizer_fingerprint = 0;
    std::uint64_t char_count = 0;
};

// exp( total NLL over all block positions / Unicode scalar count of the raw
// text ). Causal models score every position (block-initial tokens against
// the empty-context marginal); masked models use a fixed-seed masked NLL
// extrapolated to all positions before dividing by characters.
double ppl_per_char(const LanguageModel<float>& m, const BlockDataset& ds,
                    std::uint64_t mask_seed = 0x9e3779b9u);

// Mean NLL per scored token over the dataset (the cross-entropy the metrics
// stream reports).
double dataset_cross_entropy(const LanguageModel<float>& m, const BlockDataset& ds,
                             std::uint64_t mask_seed = 0x9e3779b9u);

struct PairAccuracy {
    double accuracy = 0.0;
    std::int64_t n_scored = 0;
    std::int64_t n_skipped = 0;
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> per_phenomenon;  // correct, total

    double phenomenon_accuracy(const std::string& tag) const {
        auto it = per_phenomenon.find(tag);
        if (it == per_phenomenon.end() || it->second.second == 0) return 0.0;
        return static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    }
};

// Scores with an arbitrary sentence scorer; a pair counts correct iff
// score(good) > score(bad), exact ties count incorrect.
PairAccuracy minimal_pair_accuracy_scored(const std::vector<MinimalPair>& pairs,
                                          const std::function<double(const std::string&)>& scorer);

// Standard scorer: total sequence log-probability of the encoded sentence.
// Overlong sentences are skipped and tallied.
PairAccuracy minimal_pair_accuracy(const LanguageModel<float>& m, const TokenizerModel& tok,
                                   const std::vector<MinimalPair>& pairs);

struct ClassifierHead {
    std::vector<int> hidden_sizes = {64};
    int n_classes = 2;
    std::uint64_t seed = 0;
};

struct LabeledExample {
    std::string text;
    int label = 0;
};

// text TAB label, one example per line; labels must be dense 0..C-1.
std::vector<LabeledExample> load_labeled_tsv(const std::string& path);

enum class TaskMetric { Accuracy, F1, Matthews };
TaskMetric task_metric_from_name(const std::string& name);
double classification_metric(TaskMetric metric, const std::vector<int>& gold,
                             const std::vector<int>& pred);

struct FinetuneResult {
    double metric_value = 0.0;
    TaskMetric metric = TaskMetric::Accuracy;
    std::int64_t n_heldout = 0;
    double heldout_accuracy = 0.0;
};

// Fine-tunes a copy of the backbone jointly with a fresh classifier head on
// the train split and reports the metric on the heldout split. The original
// model is never mutated.
FinetuneResult finetune_classifier(const LanguageModel<float>& m, const TokenizerModel& tok,
                                   const std::vector<LabeledExample>& train,
                                   const std::vector<LabeledExample>& heldout,
                                   const ClassifierHead& head, const TrainConfig& cfg,
                                   TaskMetric metric = TaskMetric::Accuracy);

}  // namespace cplab
