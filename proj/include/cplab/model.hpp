#pragma once

// Small transformer language model (pre-norm, learned absolute positions,
// tied input/output embeddings) supporting the next-token and masked-token
// objectives. Templated on scalar: float for training, double for gradient
// verification.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cplab/params.hpp"
#include "cplab/rng.hpp"
#include "cplab/tensor.hpp"

namespace cplab {

enum class Objective { Causal, Masked };

struct ModelConfig {
    int n_layer = 4;
    int n_head = 4;
    int n_embd = 128;
    int n_positions = 128;
    int vocab_size = 2000;
    Objective objective = Objective::Causal;
    double mlm_probability = 0.0;  // masked objective only
    // masked corruption: fraction replaced by MASK, fraction by a random
    // token; the rest stays unchanged
    double mlm_mask_frac = 0.8;
    double mlm_random_frac = 0.1;
    std::int32_t mask_token_id = -1;
    double dropout = 0.1;
    double layer_norm_eps = 1e-5;
    GeluKind activation = GeluKind::Tanh;  // Tanh = "gelu_new", Erf = "gelu"
    std::uint64_t seed = 0;

    void validate() const;
};

// Named presets: paper-causal, paper-masked, desk-causal, desk-masked.
ModelConfig model_preset(const std::string& name);

// Closed-form parameter count for a config (tied output head).
std::int64_t parameter_count_formula(const ModelConfig& cfg);

std::string objective_name(Objective o);
std::string to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

template <typename S>
class LanguageModel {
public:
    ModelConfig cfg;
    ParameterStore<S> params;
    std::int64_t train_step = 0;
    std::uint64_t tokenizer_fingerprint = 0;

    static LanguageModel init_model(const ModelConfig& cfg);

    std::int64_t parameter_count() const { return params.total_dim(); }

    // Deep copy: fresh parameter leaves with identical values.
    LanguageModel clone() const;

    // Logits over the vocabulary for a flat batch of B*T token ids.
    // `training` enables dropout, which then requires an rng.
    Value<S> block_logits(std::span<const std::int32_t> flat_ids, Eigen::Index seq_len,
                          bool training = false, Rng* drop_rng = nullptr) const;

    // Final layer-norm output, (B*T) x n_embd.
    Value<S> final_hidden(std::span<const std::int32_t> flat_ids, Eigen::Index seq_len,
                          bool training = false, Rng* drop_rng = nullptr) const;

    // Marginal next-token logits for an empty context (position 0 only).
    Value<S> empty_context_logits() const;

    struct LossOut {
        Value<S> loss;              // scalar graph root (mean NLL over predictions)
        Value<S> nll_rows;          // per-prediction NLL column
        std::vector<std::int64_t> rows;  // logits rows the predictions came from
        std::vector<std::int32_t> targets;
        double mean_nll = 0.0;
        std::int64_t n_predictions = 0;
    };

    // Mean cross-entropy (nats/token) over a flat batch of B*T ids.
    // Causal: every position predicts its successor inside the block.
    // Masked: positions are sampled i.i.d. with mlm_probability, corrupted by
    // the 80/10/10 rule, and only those positions contribute to the loss.
    LossOut forward_loss(std::span<const std::int32_t> flat_ids, Eigen::Index seq_len,
                         bool training, Rng* drop_rng, Rng* mask_rng) const;

    // Total log-probability of a token sequence, in nats.
    // Causal: log p(x_0 | empty) + sum_t log p(x_t | x_<t).
    // Masked: pseudo-log-likelihood, one forward per position.
    double sequence_logprob(std::span<const std::int32_t> ids) const;

private:
    Value<S> transformer_stack(Value<S> h, Eigen::Index seq_len, bool causal, bool training,
                               Rng* drop_rng) const;
    Value<S> logits_from_rows(Value<S> h) const;
};

extern template class LanguageModel<float>;
extern template class LanguageModel<double>;

// Checkpoint plumbing: parameters through the manifest+payload format with
// the model config carried in the manifest.
template <typename S>
void save_model(const LanguageModel<S>& m, const std::string& path_prefix);
template <typename S>
LanguageModel<S> load_model(const std::string& path_prefix);

extern template void save_model<float>(const LanguageModel<float>&, const std::string&);
extern template void save_model<double>(const LanguageModel<double>&, const std::string&);
extern template LanguageModel<float> load_model<float>(const std::string&);
extern template LanguageModel<double> load_model<double>(const std::string&);

}  // namespace cplab
