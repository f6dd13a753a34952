#pragma once

// Elastic Weight Consolidation: diagonal Fisher estimation at the end of
// first-language training, and the quadratic penalty anchoring parameters
// there during second-language training.

#include <cstdint>
#include <string>
#include <vector>

#include "cplab/model.hpp"
#include "cplab/tokenizer.hpp"

namespace cplab {

enum class FisherNormalization { RawSum, PerToken };

// PerPosition accumulates squared per-position score gradients, the form the
// derivation states. Batched reproduces the common reference behavior of
// squaring the gradient of a batch-mean loss (cross-position terms included,
// scaled by the position count). Exhaustive replaces sampling with the exact
// expectation over the vocabulary and exists for verification.
enum class FisherMode { PerPosition, Batched, Exhaustive };

struct EWCConfig {
    double lambda = 0.0;  // EWC strength
    double mu = 0.0;      // prior-induced weight penalty
    int k_samples = 10;
    int fisher_blocks = 256;  // random subset of training blocks used
    FisherNormalization normalization = FisherNormalization::RawSum;
    FisherMode mode = FisherMode::PerPosition;
    std::uint64_t seed = 0;

    void validate() const;
};

template <typename S>
struct FisherSnapshot {
    std::vector<S> theta_star;
    std::vector<S> fisher_diag;
    // provenance
    std::uint64_t dataset_hash = 0;
    std::uint64_t seed = 0;
    int k_samples = 0;
    std::int64_t position_count = 0;
    FisherNormalization normalization = FisherNormalization::RawSum;
    FisherMode mode = FisherMode::PerPosition;

    std::int64_t dim() const { return static_cast<std::int64_t>(theta_star.size()); }
};

std::uint64_t block_dataset_hash(const BlockDataset& ds);

// Monte-Carlo (or exhaustive) diagonal Fisher at the model's current
// parameters. Deterministic given cfg.seed; accumulation runs in ascending
// block order.
template <typename S>
FisherSnapshot<S> estimate_fisher_diagonal(const LanguageModel<S>& m, const BlockDataset& dataset,
                                           const EWCConfig& cfg);

// total = ce + lambda * sum_i F_ii (theta_i - theta*_i)^2 + mu * sum_i theta_i^2.
// Gradient flows through theta only. With lambda == mu == 0 the ce node is
// returned unchanged, so the reduction to plain training is exact.
template <typename S>
Value<S> ewc_loss(Value<S> ce, ParameterStore<S>& params, const FisherSnapshot<S>& snap,
                  const EWCConfig& cfg);

// Penalty value alone (no graph), for reporting.
template <typename S>
double ewc_penalty_value(const ParameterStore<S>& params, const FisherSnapshot<S>& snap,
                         const EWCConfig& cfg);

template <typename S>
void save_fisher(const FisherSnapshot<S>& snap, const std::string& path_prefix);
template <typename S>
FisherSnapshot<S> load_fisher(const std::string& path_prefix);

extern template struct FisherSnapshot<float>;
extern template struct FisherSnapshot<double>;
extern template FisherSnapshot<float> estimate_fisher_diagonal(const LanguageModel<float>&,
                                                               const BlockDataset&,
                                                               const EWCConfig&);
extern template FisherSnapshot<double> estimate_fisher_diagonal(const LanguageModel<double>&,
                                                                const BlockDataset&,
                                                                const EWCConfig&);
extern template Value<float> ewc_loss(Value<float>, ParameterStore<float>&,
                                      const FisherSnapshot<float>&, const EWCConfig&);
extern template Value<double> ewc_loss(Value<double>, ParameterStore<double>&,
                                       const FisherSnapshot<double>&, const EWCConfig&);
extern template double ewc_penalty_value(const ParameterStore<float>&,
                                         const FisherSnapshot<float>&, const EWCConfig&);
extern template double ewc_penalty_value(const ParameterStore<double>&,
                                         const FisherSnapshot<double>&, const EWCConfig&);
extern template void save_fisher(const FisherSnapshot<float>&, const std::string&);
extern template void save_fisher(const FisherSnapshot<double>&, const std::string&);
extern template FisherSnapshot<float> load_fisher(const std::string&);
extern template FisherSnapshot<double> load_fisher(const std::string&);

}  // namespace cplab
