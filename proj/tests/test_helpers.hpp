#pragma once

#include <vector>

#include "plmlab/attention.hpp"
#include "plmlab/rng.hpp"

namespace helpers {

inline plmlab::MlaWeights random_mla_weights(const plmlab::MlaLayerConfig& cfg, plmlab::Rng& rng,
                                             double std = 0.3) {
    using plmlab::Matrix;
    plmlab::MlaWeights w;
    const std::size_t q_in = cfg.q_rank.value_or(cfg.d_model);
    if (cfg.q_rank) {
        w.w_dq = rng.normal_matrix(*cfg.q_rank, cfg.d_model, 0.0, std);
        w.w_uq = rng.normal_matrix(cfg.n_heads * cfg.d_nope, *cfg.q_rank, 0.0, std);
    } else {
        w.w_q = rng.normal_matrix(cfg.n_heads * cfg.d_nope, cfg.d_model, 0.0, std);
    }
    if (cfg.d_rope > 0) {
        w.w_qr = rng.normal_matrix(cfg.n_heads * cfg.d_rope, q_in, 0.0, std);
        w.w_kr = rng.normal_matrix(cfg.d_rope, cfg.d_model, 0.0, std);
    }
    w.w_dkv = rng.normal_matrix(cfg.kv_rank, cfg.d_model, 0.0, std);
    w.w_uk = rng.normal_matrix(cfg.n_heads * cfg.d_nope, cfg.kv_rank, 0.0, std);
    w.w_uv = rng.normal_matrix(cfg.n_heads * cfg.d_nope, cfg.kv_rank, 0.0, std);
    w.w_o = rng.normal_matrix(cfg.d_model, cfg.n_heads * cfg.d_nope, 0.0, std);
    return w;
}

inline plmlab::GqaWeights random_gqa_weights(const plmlab::GqaLayerConfig& cfg, plmlab::Rng& rng,
                                             double std = 0.3) {
    plmlab::GqaWeights w;
    w.w_q = rng.normal_matrix(cfg.n_heads * cfg.d_head, cfg.d_model, 0.0, std);
    w.w_k = rng.normal_matrix(cfg.n_kv_heads * cfg.d_head, cfg.d_model, 0.0, std);
    w.w_v = rng.normal_matrix(cfg.n_kv_heads * cfg.d_head, cfg.d_model, 0.0, std);
    w.w_o = rng.normal_matrix(cfg.d_model, cfg.n_heads * cfg.d_head, 0.0, std);
    return w;
}

inline std::vector<std::int64_t> positions_upto(std::size_t n) {
    std::vector<std::int64_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::int64_t>(i);
    return p;
}

} // namespace helpers
