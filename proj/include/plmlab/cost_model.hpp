#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plmlab/model_config.hpp"

namespace plmlab {

struct HardwareProfile {
    double io_bytes_per_sec = 0.0;
    double flops_per_sec = 0.0;
    std::string name;

    void validate() const;
};

enum class Phase { prefill, decode };

std::string to_string(Phase p);

// Analytic cost of one phase at sequence position/length N. MAC terms are
// fixed so they equal the instrumented counter of the executable runtime:
// prefill attention uses the dense-masked N^2 kernel count, decode
// re-expands all cached latents each step, RoPE costs 2 MACs per rotated
// element, norms and the embedding/logit lookups count 0.
struct CostReport {
    Phase phase = Phase::prefill;
    std::uint64_t macs = 0;
    std::uint64_t flops = 0;       // always 2 x macs
    std::uint64_t cache_bytes = 0; // prefill: cache after N tokens; decode: cache read at N-1
    double io_seconds = 0.0;
    double compute_seconds = 0.0;
    enum class Dominant { io, compute } dominant = Dominant::compute;

    // MAC breakdown (whole model, all layers).
    std::uint64_t attn_linear_macs = 0;
    std::uint64_t attn_quadratic_macs = 0; // scores + weighted values
    std::uint64_t ffn_macs = 0;
};

CostReport prefill_cost_mla(const ModelConfig& cfg, std::uint64_t n, int bit_width = 16,
                            const HardwareProfile* profile = nullptr);
CostReport generate_cost_mla(const ModelConfig& cfg, std::uint64_t n, int bit_width = 16,
                             const HardwareProfile* profile = nullptr);
CostReport prefill_cost_gqa(const ModelConfig& cfg, std::uint64_t n, int bit_width = 16,
                            const HardwareProfile* profile = nullptr);
CostReport generate_cost_gqa(const ModelConfig& cfg, std::uint64_t n, int bit_width = 16,
                             const HardwareProfile* profile = nullptr);

// Dispatch on cfg.attention_kind.
CostReport phase_cost(const ModelConfig& cfg, Phase phase, std::uint64_t n, int bit_width = 16,
                      const HardwareProfile* profile = nullptr);

// Decode-step and cache gaps between an MLA and a GQA config sharing
// d_model and n_heads. mac_delta is MLA minus GQA (MLA decodes do more
// work); cache_delta is GQA minus MLA (GQA caches more). The per-layer
// leading-in-N coefficients are reported alongside.
struct DecodeCostDifference {
    std::int64_t mac_delta = 0;
    std::int64_t cache_delta_bytes = 0;
    std::int64_t mac_coeff_per_layer = 0;         // d(macs)/dN per layer
    double cache_coeff_per_layer_bytes = 0.0;     // d(cache)/dN per layer
};

DecodeCostDifference decode_cost_difference(const ModelConfig& cfg_mla, const ModelConfig& cfg_gqa,
                                            std::uint64_t n, int bit_width = 16);

// Architecture-search ranking at a fixed token budget.
struct RankedCandidate {
    std::string name;
    std::size_t index = 0; // original candidate order; deterministic tie-break
    std::uint64_t params_non_embedding = 0;
    std::uint64_t params_total = 0;
    std::uint64_t macs = 0;
    std::uint64_t flops = 0;
    double macs_per_param = 0.0; // macs / total params
    std::uint64_t cache_bytes = 0;
    std::size_t rank = 0;
};

enum class RankKey { macs, flops, params, cache_bytes, macs_per_param };

std::vector<RankedCandidate> rank_architectures(const std::vector<ModelConfig>& candidates,
                                                std::uint64_t n, RankKey key = RankKey::macs,
                                                int bit_width = 16,
                                                const std::vector<std::string>* names = nullptr);

} // namespace plmlab
