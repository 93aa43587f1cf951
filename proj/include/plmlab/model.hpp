#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plmlab/attention.hpp"
#include "plmlab/ffn.hpp"
#include "plmlab/model_config.hpp"
#include "plmlab/op_counter.hpp"

namespace plmlab {

using TokenId = std::int32_t;

struct LayerWeights {
    Matrix attn_norm; // [1 x d]
    Matrix ffn_norm;  // [1 x d]
    MlaWeights mla;
    GqaWeights gqa;
    FfnWeights ffn;
};

struct KvCaches {
    std::vector<MlaKvCache> mla;
    std::vector<GqaKvCache> gqa;

    std::size_t tokens() const {
        if (!mla.empty()) return mla.front().size();
        if (!gqa.empty()) return gqa.front().size();
        return 0;
    }
};

// Per-layer FFN activation controls used by the sparsity experiments, plus
// a weight-streaming hook for the offload benchmark: when `layer_provider`
// returns non-null for a layer, those weights are used instead of the
// resident ones (the pointer must stay valid for the layer's compute).
struct ForwardOptions {
    const std::vector<float>* ffn_mask_thresholds = nullptr; // one per layer
    std::function<void(std::size_t layer, std::span<const float>)> observe_activations;
    std::function<const LayerWeights*(std::size_t layer)> layer_provider;
    OpCounter* counter = nullptr;
    int threads = 1;
};

struct GenerateResult {
    std::vector<TokenId> tokens; // prompt followed by generated ids
    double prefill_seconds = 0.0;
    double decode_seconds = 0.0;
    std::uint64_t prefill_macs = 0;
    std::uint64_t decode_macs = 0;
    OpCounter counter;
};

// Decoder-only transformer with pre-norm RMS layers, tied input/output
// embeddings, and instrumented forward paths. Instances are immutable
// after construction in normal use; tests may rewrite weights through
// `layer(i)` before sharing.
class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed, double init_std = 0.008);

    const ModelConfig& config() const { return cfg_; }

    Matrix& embedding() { return embedding_; }
    const Matrix& embedding() const { return embedding_; }
    Matrix& output_head() { return cfg_.tie_embeddings ? embedding_ : output_head_; }
    const Matrix& output_head() const { return cfg_.tie_embeddings ? embedding_ : output_head_; }
    Matrix& final_norm() { return final_norm_; }
    LayerWeights& layer(std::size_t i) { return layers_[i]; }
    const LayerWeights& layer(std::size_t i) const { return layers_[i]; }

    KvCaches make_caches() const;

    // Full causal pass over `tokens`; returns logits [N x vocab] and fills
    // the caches. Hidden states after the final norm land in
    // `last_hidden` when provided.
    Matrix prefill(std::span<const TokenId> tokens, KvCaches& caches,
                   const ForwardOptions& opts = {}) const;

    // One token against the caches; returns this position's logits.
    std::vector<float> decode_step(TokenId token, std::int64_t position, KvCaches& caches,
                                   const ForwardOptions& opts = {}) const;

    // Greedy continuation with per-phase wall time and MAC tallies.
    GenerateResult generate(std::span<const TokenId> prompt, std::size_t n_new,
                            const ForwardOptions& opts = {}) const;

    // exp(mean next-token negative log-likelihood), natural log.
    double perplexity(std::span<const TokenId> tokens, const ForwardOptions& opts = {}) const;

    // Visits every owned tensor in a fixed order (the output head is
    // visited only when untied).
    void for_each_tensor(const std::function<void(const std::string&, Matrix&)>& fn);
    std::uint64_t allocated_params();

    // Tensor names and element counts implied by a config, in visit order,
    // without allocating anything.
    static std::vector<std::pair<std::string, std::uint64_t>> tensor_sizes(const ModelConfig& cfg);

private:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}

    Matrix forward_hidden(const Matrix& token_rows, std::span<const std::int64_t> positions,
                          KvCaches& caches, const ForwardOptions& opts, bool single_step) const;

    ModelConfig cfg_;
    Matrix embedding_;   // [vocab x d]
    Matrix output_head_; // untied only
    Matrix final_norm_;  // [1 x d]
    std::vector<LayerWeights> layers_;
};

// Stable log-sum-exp based next-token perplexity over explicit logit rows;
// row t scores tokens[t+1]. Exposed for oracle tests.
double perplexity_from_logits(const Matrix& logits, std::span<const TokenId> tokens);

// RMS normalization with epsilon 1e-6; gains in `gain` (1 x d).
void rms_norm_row(std::span<float> x, std::span<const float> gain);

} // namespace plmlab
