#pragma once

#include <cstdint>
#include <vector>

namespace plmlab {

// Multiply-accumulate tally for one forward pass. Every MAC-bearing kernel
// (projections, attention scores/AV, FFN matmuls, RoPE rotations at 2 MACs
// per element) is counted at the call site from its shapes. Norms and the
// embedding lookup count 0. The tied output head is tracked separately in
// `logit_head_macs` and excluded from `macs()` so the tally is directly
// comparable with the analytic cost formulas, which cover the transformer
// stack only.
struct OpCounter {
    struct LayerOps {
        std::uint64_t attn_proj = 0;   // all attention weight projections
        std::uint64_t attn_rope = 0;   // rotary rotations
        std::uint64_t attn_scores = 0; // q.k dot products + attention-weighted values
        std::uint64_t ffn = 0;
        std::uint64_t norms = 0; // counted as 0 MACs by convention

        std::uint64_t total() const { return attn_proj + attn_rope + attn_scores + ffn + norms; }
    };

    std::vector<LayerOps> layers;
    std::uint64_t logit_head_macs = 0;

    void ensure_layers(std::size_t n) {
        if (layers.size() < n) layers.resize(n);
    }

    std::uint64_t macs() const {
        std::uint64_t t = 0;
        for (const auto& l : layers) t += l.total();
        return t;
    }
    std::uint64_t flops() const { return 2 * macs(); }

    std::uint64_t attn_proj_macs() const {
        std::uint64_t t = 0;
        for (const auto& l : layers) t += l.attn_proj;
        return t;
    }
    std::uint64_t attn_rope_macs() const {
        std::uint64_t t = 0;
        for (const auto& l : layers) t += l.attn_rope;
        return t;
    }
    std::uint64_t attn_score_macs() const {
        std::uint64_t t = 0;
        for (const auto& l : layers) t += l.attn_scores;
        return t;
    }
    std::uint64_t ffn_macs() const {
        std::uint64_t t = 0;
        for (const auto& l : layers) t += l.ffn;
        return t;
    }
};

} // namespace plmlab
