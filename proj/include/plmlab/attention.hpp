#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "plmlab/matrix.hpp"
#include "plmlab/op_counter.hpp"
#include "plmlab/rope.hpp"

namespace plmlab {

// Latent-attention layer geometry. Per-head dimension is split into a
// content part (d_nope) and a shared rotary part (d_rope); keys/values are
// reconstructed on the fly from a kv_rank-dimensional cached latent.
// Queries are full-rank unless q_rank is set, in which case they pass
// through their own down/up projection pair.
struct MlaLayerConfig {
    std::size_t d_model = 0;
    std::size_t n_heads = 0;
    std::size_t d_nope = 0;
    std::size_t d_rope = 0; // even; may be 0 (no rotary stream)
    std::size_t kv_rank = 0;
    std::optional<std::size_t> q_rank;

    std::size_t head_dim() const { return d_nope + d_rope; }
    void validate() const;
};

// Grouped-query geometry. n_kv_heads=1 is MQA, n_kv_heads=n_heads is MHA.
struct GqaLayerConfig {
    std::size_t d_model = 0;
    std::size_t n_heads = 0;
    std::size_t n_kv_heads = 0;
    std::size_t d_head = 0;

    void validate() const;
};

struct MlaWeights {
    Matrix w_q;    // [n_h*d_nope x d]      (uncompressed queries)
    Matrix w_dq;   // [q_rank x d]          (compressed queries)
    Matrix w_uq;   // [n_h*d_nope x q_rank]
    Matrix w_qr;   // [n_h*d_rope x d] or [n_h*d_rope x q_rank]
    Matrix w_dkv;  // [kv_rank x d]
    Matrix w_uk;   // [n_h*d_nope x kv_rank]
    Matrix w_uv;   // [n_h*d_nope x kv_rank]
    Matrix w_kr;   // [d_rope x d]
    Matrix w_o;    // [d x n_h*d_nope]
};

struct GqaWeights {
    Matrix w_q; // [n_h*d_head x d]
    Matrix w_k; // [n_kv*d_head x d]
    Matrix w_v; // [n_kv*d_head x d]
    Matrix w_o; // [d x n_h*d_head]
};

// Per-layer MLA cache: one kv_rank latent and one post-rotation rope key
// per token. (kv_rank + d_rope) values per token, nothing per head.
struct MlaKvCache {
    std::size_t kv_rank = 0;
    std::size_t d_rope = 0;
    std::vector<float> c_kv;   // [N x kv_rank]
    std::vector<float> k_rope; // [N x d_rope]
    std::vector<std::int64_t> positions;

    std::size_t size() const { return positions.size(); }
    void append(std::span<const float> c, std::span<const float> kr, std::int64_t position);
    std::span<const float> c_kv_row(std::size_t t) const { return {c_kv.data() + t * kv_rank, kv_rank}; }
    std::span<const float> k_rope_row(std::size_t t) const { return {k_rope.data() + t * d_rope, d_rope}; }
};

// Per-layer GQA cache: full keys and values for each kv head.
struct GqaKvCache {
    std::size_t n_kv_heads = 0;
    std::size_t d_head = 0;
    std::vector<float> k; // [N x n_kv*d_head], post-rotation
    std::vector<float> v; // [N x n_kv*d_head]
    std::vector<std::int64_t> positions;

    std::size_t size() const { return positions.size(); }
    void append(std::span<const float> k_row, std::span<const float> v_row, std::int64_t position);
};

// Exact byte footprints of the caches at `tokens` cached tokens across
// n_layers layers. bit_width is the storage width per value.
std::uint64_t mla_cache_bytes(std::uint64_t tokens, std::size_t kv_rank, std::size_t d_rope,
                              int bit_width, std::size_t n_layers);
std::uint64_t gqa_cache_bytes(std::uint64_t tokens, std::size_t n_kv_heads, std::size_t d_head,
                              int bit_width, std::size_t n_layers);
std::uint64_t cache_bytes(const MlaKvCache& cache, int bit_width, std::size_t n_layers);
std::uint64_t cache_bytes(const GqaKvCache& cache, int bit_width, std::size_t n_layers);

struct AttentionOut {
    Matrix out;
    MlaKvCache mla_cache;
    GqaKvCache gqa_cache;
};

// Causal latent-attention pass over h (N x d). Returns outputs and the
// cache holding exactly {c_kv, k_rope} per token. `counter`, when given,
// tallies executed MACs into layer `layer_index`.
Matrix mla_prefill(const MlaLayerConfig& cfg, const MlaWeights& w, const Matrix& h,
                   std::span<const std::int64_t> positions, MlaKvCache& cache,
                   OpCounter* counter = nullptr, std::size_t layer_index = 0,
                   double theta_base = kDefaultRopeThetaBase, int threads = 1);

// One incremental step: appends the token's latent/rope pair, reconstructs
// per-head keys and values for the whole prefix from the cache, and returns
// the attention output row. `position` must exceed the last cached one.
std::vector<float> mla_decode_step(const MlaLayerConfig& cfg, const MlaWeights& w,
                                   std::span<const float> h, MlaKvCache& cache,
                                   std::int64_t position, OpCounter* counter = nullptr,
                                   std::size_t layer_index = 0,
                                   double theta_base = kDefaultRopeThetaBase, int threads = 1);

Matrix gqa_prefill(const GqaLayerConfig& cfg, const GqaWeights& w, const Matrix& h,
                   std::span<const std::int64_t> positions, GqaKvCache& cache,
                   OpCounter* counter = nullptr, std::size_t layer_index = 0,
                   double theta_base = kDefaultRopeThetaBase, int threads = 1);

std::vector<float> gqa_decode_step(const GqaLayerConfig& cfg, const GqaWeights& w,
                                   std::span<const float> h, GqaKvCache& cache,
                                   std::int64_t position, OpCounter* counter = nullptr,
                                   std::size_t layer_index = 0,
                                   double theta_base = kDefaultRopeThetaBase, int threads = 1);

// Textbook causal multi-head attention, used as an equivalence target in
// tests. `scale_override` replaces the default 1/sqrt(d_head) softmax scale
// so constructions with padded head dimensions can be compared exactly.
Matrix mha_reference(std::size_t d_model, std::size_t n_heads, std::size_t d_head,
                     const GqaWeights& w, const Matrix& h,
                     std::span<const std::int64_t> positions,
                     std::optional<float> scale_override = std::nullopt,
                     double theta_base = kDefaultRopeThetaBase);

} // namespace plmlab
