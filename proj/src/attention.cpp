#include "plmlab/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace plmlab {

namespace {

void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " + std::to_string(m.rows()) +
                                    "x" + std::to_string(m.cols()));
    }
}

std::uint64_t bits_to_bytes(std::uint64_t values, int bit_width) {
    const std::uint64_t bits = values * static_cast<std::uint64_t>(bit_width);
    return (bits + 7) / 8;
}

Matrix rows_as_matrix(const std::vector<float>& data, std::size_t n, std::size_t cols) {
    Matrix m(n, cols);
    std::copy(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n * cols), m.data());
    return m;
}

} // namespace

void MlaLayerConfig::validate() const {
    check(d_model > 0 && n_heads > 0 && d_nope > 0 && kv_rank > 0,
          "MlaLayerConfig: dimensions must be positive");
    check(d_rope % 2 == 0, "MlaLayerConfig: d_rope must be even");
    if (q_rank) check(*q_rank > 0, "MlaLayerConfig: q_rank must be positive when set");
}

void GqaLayerConfig::validate() const {
    check(d_model > 0 && n_heads > 0 && n_kv_heads > 0 && d_head > 0,
          "GqaLayerConfig: dimensions must be positive");
    check(n_heads % n_kv_heads == 0, "GqaLayerConfig: n_heads must be divisible by n_kv_heads");
}

void MlaKvCache::append(std::span<const float> c, std::span<const float> kr, std::int64_t position) {
    check(c.size() == kv_rank && kr.size() == d_rope, "MlaKvCache::append: row size mismatch");
    if (!positions.empty() && position <= positions.back())
        throw std::invalid_argument("MlaKvCache::append: position " + std::to_string(position) +
                                    " not after last cached position " + std::to_string(positions.back()));
    c_kv.insert(c_kv.end(), c.begin(), c.end());
    k_rope.insert(k_rope.end(), kr.begin(), kr.end());
    positions.push_back(position);
}

void GqaKvCache::append(std::span<const float> k_row, std::span<const float> v_row, std::int64_t position) {
    check(k_row.size() == n_kv_heads * d_head && v_row.size() == n_kv_heads * d_head,
          "GqaKvCache::append: row size mismatch");
    if (!positions.empty() && position <= positions.back())
        throw std::invalid_argument("GqaKvCache::append: position " + std::to_string(position) +
                                    " not after last cached position " + std::to_string(positions.back()));
    k.insert(k.end(), k_row.begin(), k_row.end());
    v.insert(v.end(), v_row.begin(), v_row.end());
    positions.push_back(position);
}

std::uint64_t mla_cache_bytes(std::uint64_t tokens, std::size_t kv_rank, std::size_t d_rope,
                              int bit_width, std::size_t n_layers) {
    const std::uint64_t per_token = static_cast<std::uint64_t>(kv_rank) + d_rope;
    return bits_to_bytes(per_token * tokens * n_layers, bit_width);
}

std::uint64_t gqa_cache_bytes(std::uint64_t tokens, std::size_t n_kv_heads, std::size_t d_head,
                              int bit_width, std::size_t n_layers) {
    const std::uint64_t per_token = 2ull * n_kv_heads * d_head;
    return bits_to_bytes(per_token * tokens * n_layers, bit_width);
}

std::uint64_t cache_bytes(const MlaKvCache& cache, int bit_width, std::size_t n_layers) {
    return mla_cache_bytes(cache.size(), cache.kv_rank, cache.d_rope, bit_width, n_layers);
}

std::uint64_t cache_bytes(const GqaKvCache& cache, int bit_width, std::size_t n_layers) {
    return gqa_cache_bytes(cache.size(), cache.n_kv_heads, cache.d_head, bit_width, n_layers);
}

namespace {

struct MlaShapes {
    std::size_t d, n_h, d_nope, d_rope, d_c, d_h;
    bool q_compressed;
    std::size_t q_in; // input dim of the query up/rope projections
};

MlaShapes mla_shapes(const MlaLayerConfig& cfg, const MlaWeights& w) {
    cfg.validate();
    MlaShapes s{cfg.d_model, cfg.n_heads, cfg.d_nope, cfg.d_rope, cfg.kv_rank, cfg.head_dim(),
                cfg.q_rank.has_value(), cfg.q_rank.value_or(cfg.d_model)};
    if (s.q_compressed) {
        check_shape(w.w_dq, *cfg.q_rank, s.d, "w_dq");
        check_shape(w.w_uq, s.n_h * s.d_nope, *cfg.q_rank, "w_uq");
    } else {
        check_shape(w.w_q, s.n_h * s.d_nope, s.d, "w_q");
    }
    if (s.d_rope > 0) {
        check_shape(w.w_qr, s.n_h * s.d_rope, s.q_in, "w_qr");
        check_shape(w.w_kr, s.d_rope, s.d, "w_kr");
    }
    check_shape(w.w_dkv, s.d_c, s.d, "w_dkv");
    check_shape(w.w_uk, s.n_h * s.d_nope, s.d_c, "w_uk");
    check_shape(w.w_uv, s.n_h * s.d_nope, s.d_c, "w_uv");
    check_shape(w.w_o, s.d, s.n_h * s.d_nope, "w_o");
    return s;
}

// Query content/rope streams for the given hidden states, with MACs tallied.
struct QueryStreams {
    Matrix q_nope; // [N x n_h*d_nope]
    Matrix q_rope; // [N x n_h*d_rope], rotated
};

QueryStreams mla_queries(const MlaShapes& s, const MlaWeights& w, const Matrix& h,
                         std::span<const std::int64_t> positions, double theta_base, int threads,
                         OpCounter::LayerOps* ops) {
    const std::size_t n = h.rows();
    QueryStreams qs;
    Matrix q_src = h;
    if (s.q_compressed) {
        q_src = matmul(h, w.w_dq.transposed(), threads);
        if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * w.w_dq.rows() * w.w_dq.cols();
        qs.q_nope = matmul(q_src, w.w_uq.transposed(), threads);
        if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * w.w_uq.rows() * w.w_uq.cols();
    } else {
        qs.q_nope = matmul(h, w.w_q.transposed(), threads);
        if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * w.w_q.rows() * w.w_q.cols();
    }
    if (s.d_rope > 0) {
        qs.q_rope = matmul(q_src, w.w_qr.transposed(), threads);
        if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * w.w_qr.rows() * w.w_qr.cols();
        // Rotate each head's slice independently; 2 MACs per element.
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < s.n_h; ++i) {
                apply_rope_inplace(qs.q_rope.row(r).subspan(i * s.d_rope, s.d_rope), positions[r], theta_base);
            }
        }
        if (ops) ops->attn_rope += static_cast<std::uint64_t>(n) * s.n_h * 2 * s.d_rope;
    } else {
        qs.q_rope = Matrix(n, 0);
    }
    return qs;
}

} // namespace

Matrix mla_prefill(const MlaLayerConfig& cfg, const MlaWeights& w, const Matrix& h,
                   std::span<const std::int64_t> positions, MlaKvCache& cache, OpCounter* counter,
                   std::size_t layer_index, double theta_base, int threads) {
    const MlaShapes s = mla_shapes(cfg, w);
    check(h.cols() == s.d, "mla_prefill: hidden size mismatch");
    check(positions.size() == h.rows(), "mla_prefill: one position per row required");
    const std::size_t n = h.rows();

    OpCounter::LayerOps* ops = nullptr;
    if (counter) {
        counter->ensure_layers(layer_index + 1);
        ops = &counter->layers[layer_index];
    }

    QueryStreams qs = mla_queries(s, w, h, positions, theta_base, threads, ops);

    Matrix c_kv = matmul(h, w.w_dkv.transposed(), threads); // [N x d_c]
    if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * s.d_c * s.d;

    Matrix k_rope(n, 0);
    if (s.d_rope > 0) {
        k_rope = matmul(h, w.w_kr.transposed(), threads); // [N x d_rope], shared across heads
        if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * s.d_rope * s.d;
        k_rope = apply_rope(k_rope, positions, theta_base);
        if (ops) ops->attn_rope += static_cast<std::uint64_t>(n) * 2 * s.d_rope;
    }

    Matrix k_nope = matmul(c_kv, w.w_uk.transposed(), threads); // [N x n_h*d_nope]
    Matrix v = matmul(c_kv, w.w_uv.transposed(), threads);      // [N x n_h*d_nope]
    if (ops) ops->attn_proj += 2ull * n * s.n_h * s.d_nope * s.d_c;

    cache.kv_rank = s.d_c;
    cache.d_rope = s.d_rope;
    for (std::size_t t = 0; t < n; ++t) cache.append(c_kv.row(t), k_rope.row(t), positions[t]);

    const float scale = 1.0f / std::sqrt(static_cast<float>(s.d_h));
    Matrix heads_out(n, s.n_h * s.d_nope);
    for (std::size_t i = 0; i < s.n_h; ++i) {
        Matrix q_i(n, s.d_h);
        Matrix k_i(n, s.d_h);
        copy_into_cols(q_i, qs.q_nope.slice_cols(i * s.d_nope, s.d_nope), 0);
        copy_into_cols(k_i, k_nope.slice_cols(i * s.d_nope, s.d_nope), 0);
        if (s.d_rope > 0) {
            copy_into_cols(q_i, qs.q_rope.slice_cols(i * s.d_rope, s.d_rope), s.d_nope);
            copy_into_cols(k_i, k_rope, s.d_nope);
        }
        Matrix scores = matmul(q_i, k_i.transposed(), threads); // dense NxN, masked below
        Matrix probs = softmax_rows(scores, scale, /*causal_mask=*/true);
        Matrix v_i = v.slice_cols(i * s.d_nope, s.d_nope);
        Matrix o_i = matmul(probs, v_i, threads);
        if (ops) ops->attn_scores += static_cast<std::uint64_t>(n) * n * (s.d_h + s.d_nope);
        copy_into_cols(heads_out, o_i, i * s.d_nope);
    }

    Matrix out = matmul(heads_out, w.w_o.transposed(), threads);
    if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * s.d * s.n_h * s.d_nope;
    return out;
}

std::vector<float> mla_decode_step(const MlaLayerConfig& cfg, const MlaWeights& w,
                                   std::span<const float> h, MlaKvCache& cache,
                                   std::int64_t position, OpCounter* counter,
                                   std::size_t layer_index, double theta_base, int threads) {
    const MlaShapes s = mla_shapes(cfg, w);
    check(h.size() == s.d, "mla_decode_step: hidden size mismatch");
    if (!cache.positions.empty() && position <= cache.positions.back())
        throw std::invalid_argument("mla_decode_step: position must advance past the cache");
    cache.kv_rank = s.d_c;
    cache.d_rope = s.d_rope;

    OpCounter::LayerOps* ops = nullptr;
    if (counter) {
        counter->ensure_layers(layer_index + 1);
        ops = &counter->layers[layer_index];
    }

    Matrix h_row(1, s.d, std::vector<float>(h.begin(), h.end()));
    const std::int64_t pos_arr[1] = {position};
    QueryStreams qs = mla_queries(s, w, h_row, pos_arr, theta_base, threads, ops);

    Matrix c_kv_new = matmul(h_row, w.w_dkv.transposed(), threads);
    if (ops) ops->attn_proj += static_cast<std::uint64_t>(s.d_c) * s.d;

    Matrix k_rope_new(1, 0);
    if (s.d_rope > 0) {
        k_rope_new = matmul(h_row, w.w_kr.transposed(), threads);
        if (ops) ops->attn_proj += static_cast<std::uint64_t>(s.d_rope) * s.d;
        apply_rope_inplace(k_rope_new.row(0), position, theta_base);
        if (ops) ops->attn_rope += 2ull * s.d_rope;
    }

    cache.append(c_kv_new.row(0), k_rope_new.row(0), position);
    const std::size_t n = cache.size();

    // Reconstruct every key/value from the cached latents; this recompute
    // per step is the price MLA pays for the small cache.
    Matrix latents = rows_as_matrix(cache.c_kv, n, s.d_c);
    Matrix k_nope = matmul(latents, w.w_uk.transposed(), threads);
    Matrix v = matmul(latents, w.w_uv.transposed(), threads);
    if (ops) ops->attn_proj += 2ull * n * s.n_h * s.d_nope * s.d_c;
    Matrix k_rope_all = rows_as_matrix(cache.k_rope, n, s.d_rope);

    const float scale = 1.0f / std::sqrt(static_cast<float>(s.d_h));
    Matrix heads_out(1, s.n_h * s.d_nope);
    for (std::size_t i = 0; i < s.n_h; ++i) {
        Matrix q_i(1, s.d_h);
        Matrix k_i(n, s.d_h);
        copy_into_cols(q_i, qs.q_nope.slice_cols(i * s.d_nope, s.d_nope), 0);
        copy_into_cols(k_i, k_nope.slice_cols(i * s.d_nope, s.d_nope), 0);
        if (s.d_rope > 0) {
            copy_into_cols(q_i, qs.q_rope.slice_cols(i * s.d_rope, s.d_rope), s.d_nope);
            copy_into_cols(k_i, k_rope_all, s.d_nope);
        }
        Matrix scores = matmul(q_i, k_i.transposed(), threads); // 1xN, all positions visible
        Matrix probs = softmax_rows(scores, scale, /*causal_mask=*/false);
        Matrix o_i = matmul(probs, v.slice_cols(i * s.d_nope, s.d_nope), threads);
        if (ops) ops->attn_scores += static_cast<std::uint64_t>(n) * (s.d_h + s.d_nope);
        copy_into_cols(heads_out, o_i, i * s.d_nope);
    }

    Matrix out = matmul(heads_out, w.w_o.transposed(), threads);
    if (ops) ops->attn_proj += static_cast<std::uint64_t>(s.d) * s.n_h * s.d_nope;
    return std::vector<float>(out.row(0).begin(), out.row(0).end());
}

namespace {

void gqa_check_weights(const GqaLayerConfig& cfg, const GqaWeights& w) {
    cfg.validate();
    check_shape(w.w_q, cfg.n_heads * cfg.d_head, cfg.d_model, "w_q");
    check_shape(w.w_k, cfg.n_kv_heads * cfg.d_head, cfg.d_model, "w_k");
    check_shape(w.w_v, cfg.n_kv_heads * cfg.d_head, cfg.d_model, "w_v");
    check_shape(w.w_o, cfg.d_model, cfg.n_heads * cfg.d_head, "w_o");
}

void rope_per_head(Matrix& m, std::size_t heads, std::size_t d_head,
                   std::span<const std::int64_t> positions, double theta_base) {
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t i = 0; i < heads; ++i)
            apply_rope_inplace(m.row(r).subspan(i * d_head, d_head), positions[r], theta_base);
}

} // namespace

Matrix gqa_prefill(const GqaLayerConfig& cfg, const GqaWeights& w, const Matrix& h,
                   std::span<const std::int64_t> positions, GqaKvCache& cache, OpCounter* counter,
                   std::size_t layer_index, double theta_base, int threads) {
    gqa_check_weights(cfg, w);
    check(h.cols() == cfg.d_model, "gqa_prefill: hidden size mismatch");
    check(positions.size() == h.rows(), "gqa_prefill: one position per row required");
    const std::size_t n = h.rows();
    const std::size_t dh = cfg.d_head;

    OpCounter::LayerOps* ops = nullptr;
    if (counter) {
        counter->ensure_layers(layer_index + 1);
        ops = &counter->layers[layer_index];
    }

    Matrix q = matmul(h, w.w_q.transposed(), threads);
    Matrix k = matmul(h, w.w_k.transposed(), threads);
    Matrix v = matmul(h, w.w_v.transposed(), threads);
    if (ops) {
        ops->attn_proj += static_cast<std::uint64_t>(n) * cfg.n_heads * dh * cfg.d_model;
        ops->attn_proj += 2ull * n * cfg.n_kv_heads * dh * cfg.d_model;
    }
    rope_per_head(q, cfg.n_heads, dh, positions, theta_base);
    rope_per_head(k, cfg.n_kv_heads, dh, positions, theta_base);
    if (ops) ops->attn_rope += static_cast<std::uint64_t>(n) * 2 * (cfg.n_heads + cfg.n_kv_heads) * dh;

    cache.n_kv_heads = cfg.n_kv_heads;
    cache.d_head = dh;
    for (std::size_t t = 0; t < n; ++t) cache.append(k.row(t), v.row(t), positions[t]);

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Matrix heads_out(n, cfg.n_heads * dh);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        const std::size_t g = i % cfg.n_kv_heads;
        Matrix q_i = q.slice_cols(i * dh, dh);
        Matrix k_g = k.slice_cols(g * dh, dh);
        Matrix v_g = v.slice_cols(g * dh, dh);
        Matrix scores = matmul(q_i, k_g.transposed(), threads);
        Matrix probs = softmax_rows(scores, scale, /*causal_mask=*/true);
        Matrix o_i = matmul(probs, v_g, threads);
        if (ops) ops->attn_scores += static_cast<std::uint64_t>(n) * n * 2 * dh;
        copy_into_cols(heads_out, o_i, i * dh);
    }

    Matrix out = matmul(heads_out, w.w_o.transposed(), threads);
    if (ops) ops->attn_proj += static_cast<std::uint64_t>(n) * cfg.d_model * cfg.n_heads * dh;
    return out;
}

std::vector<float> gqa_decode_step(const GqaLayerConfig& cfg, const GqaWeights& w,
                                   std::span<const float> h, GqaKvCache& cache,
                                   std::int64_t position, OpCounter* counter,
                                   std::size_t layer_index, double theta_base, int threads) {
    gqa_check_weights(cfg, w);
    check(h.size() == cfg.d_model, "gqa_decode_step: hidden size mismatch");
    if (!cache.positions.empty() && position <= cache.positions.back())
        throw std::invalid_argument("gqa_decode_step: position must advance past the cache");
    const std::size_t dh = cfg.d_head;
    cache.n_kv_heads = cfg.n_kv_heads;
    cache.d_head = dh;

    OpCounter::LayerOps* ops = nullptr;
    if (counter) {
        counter->ensure_layers(layer_index + 1);
        ops = &counter->layers[layer_index];
    }

    Matrix h_row(1, cfg.d_model, std::vector<float>(h.begin(), h.end()));
    const std::int64_t pos_arr[1] = {position};
    Matrix q = matmul(h_row, w.w_q.transposed(), threads);
    Matrix k_new = matmul(h_row, w.w_k.transposed(), threads);
    Matrix v_new = matmul(h_row, w.w_v.transposed(), threads);
    if (ops) {
        ops->attn_proj += static_cast<std::uint64_t>(cfg.n_heads) * dh * cfg.d_model;
        ops->attn_proj += 2ull * cfg.n_kv_heads * dh * cfg.d_model;
    }
    rope_per_head(q, cfg.n_heads, dh, pos_arr, theta_base);
    rope_per_head(k_new, cfg.n_kv_heads, dh, pos_arr, theta_base);
    if (ops) ops->attn_rope += 2ull * (cfg.n_heads + cfg.n_kv_heads) * dh;

    cache.append(k_new.row(0), v_new.row(0), position);
    const std::size_t n = cache.size();
    Matrix k_all = rows_as_matrix(cache.k, n, cfg.n_kv_heads * dh);
    Matrix v_all = rows_as_matrix(cache.v, n, cfg.n_kv_heads * dh);

    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Matrix heads_out(1, cfg.n_heads * dh);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        const std::size_t g = i % cfg.n_kv_heads;
        Matrix q_i = q.slice_cols(i * dh, dh);
        Matrix k_g = k_all.slice_cols(g * dh, dh);
        Matrix v_g = v_all.slice_cols(g * dh, dh);
        Matrix scores = matmul(q_i, k_g.transposed(), threads);
        Matrix probs = softmax_rows(scores, scale, /*causal_mask=*/false);
        Matrix o_i = matmul(probs, v_g, threads);
        if (ops) ops->attn_scores += static_cast<std::uint64_t>(n) * 2 * dh;
        copy_into_cols(heads_out, o_i, i * dh);
    }

    Matrix out = matmul(heads_out, w.w_o.transposed(), threads);
    if (ops) ops->attn_proj += static_cast<std::uint64_t>(cfg.d_model) * cfg.n_heads * dh;
    return std::vector<float>(out.row(0).begin(), out.row(0).end());
}

Matrix mha_reference(std::size_t d_model, std::size_t n_heads, std::size_t d_head,
                     const GqaWeights& w, const Matrix& h, std::span<const std::int64_t> positions,
                     std::optional<float> scale_override, double theta_base) {
    GqaLayerConfig cfg{d_model, n_heads, n_heads, d_head};
    gqa_check_weights(cfg, w);
    check(h.cols() == d_model, "mha_reference: hidden size mismatch");

    Matrix q = matmul(h, w.w_q.transposed());
    Matrix k = matmul(h, w.w_k.transposed());
    Matrix v = matmul(h, w.w_v.transposed());
    rope_per_head(q, n_heads, d_head, positions, theta_base);
    rope_per_head(k, n_heads, d_head, positions, theta_base);

    const float scale = scale_override.value_or(1.0f / std::sqrt(static_cast<float>(d_head)));
    Matrix heads_out(h.rows(), n_heads * d_head);
    for (std::size_t i = 0; i < n_heads; ++i) {
        Matrix q_i = q.slice_cols(i * d_head, d_head);
        Matrix k_i = k.slice_cols(i * d_head, d_head);
        Matrix v_i = v.slice_cols(i * d_head, d_head);
        Matrix probs = softmax_rows(matmul(q_i, k_i.transposed()), scale, /*causal_mask=*/true);
        copy_into_cols(heads_out, matmul(probs, v_i), i * d_head);
    }
    return matmul(heads_out, w.w_o.transposed());
}

} // namespace plmlab
