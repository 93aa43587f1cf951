#include "plmlab/cost_model.hpp"

#include <algorithm>
#include <stdexcept>

#include "plmlab/attention.hpp"

namespace plmlab {

void HardwareProfile::validate() const {
    if (!(io_bytes_per_sec > 0.0) || !(flops_per_sec > 0.0))
        throw std::invalid_argument("HardwareProfile: rates must be positive");
}

std::string to_string(Phase p) { return p == Phase::prefill ? "prefill" : "decode"; }

namespace {

// Per-token MACs of the attention projections (everything outside the
// score/value products and the historical key/value expansion).
struct MlaTerms {
    std::uint64_t q_proj;      // query path
    std::uint64_t kv_new;      // c_kv + rotary key for one token
    std::uint64_t out_proj;    // W_O
    std::uint64_t rope;        // rotations, 2 MACs per element
    std::uint64_t kv_expand;   // per cached token: k/v up-projection
    std::uint64_t score_pair;  // per (query, key) pair: dot + weighted value
};

MlaTerms mla_terms(const ModelConfig& cfg) {
    const std::uint64_t d = cfg.d_model, nh = cfg.n_heads, dn = cfg.d_nope, dr = cfg.d_rope,
                        dc = cfg.kv_rank;
    MlaTerms t{};
    if (cfg.q_rank) {
        const std::uint64_t qr = *cfg.q_rank;
        t.q_proj = qr * d + nh * dn * qr + nh * dr * qr;
    } else {
        t.q_proj = nh * dn * d + nh * dr * d;
    }
    t.kv_new = dc * d + dr * d;
    t.out_proj = d * nh * dn;
    t.rope = 2 * (nh + 1) * dr;
    t.kv_expand = 2 * nh * dn * dc;
    t.score_pair = nh * (2 * dn + dr);
    return t;
}

struct GqaTerms {
    std::uint64_t q_proj;
    std::uint64_t kv_new;
    std::uint64_t out_proj;
    std::uint64_t rope;
    std::uint64_t score_pair;
};

GqaTerms gqa_terms(const ModelConfig& cfg) {
    const std::uint64_t d = cfg.d_model, nh = cfg.n_heads, nkv = cfg.n_kv_heads, dh = cfg.head_dim();
    GqaTerms t{};
    t.q_proj = nh * dh * d;
    t.kv_new = 2 * nkv * dh * d;
    t.out_proj = d * nh * dh;
    t.rope = 2 * (nh + nkv) * dh;
    t.score_pair = 2 * nh * dh;
    return t;
}

std::uint64_t ffn_macs_per_token(const ModelConfig& cfg) {
    const std::uint64_t base = 2ull * cfg.d_ffn * cfg.d_model;
    return cfg.activation == Activation::swiglu ? base + static_cast<std::uint64_t>(cfg.d_ffn) * cfg.d_model
                                                : base;
}

CostReport finish(CostReport r, int bit_width, const HardwareProfile* profile) {
    r.flops = 2 * r.macs;
    if (profile) {
        profile->validate();
        r.io_seconds = static_cast<double>(r.cache_bytes) / profile->io_bytes_per_sec;
        r.compute_seconds = static_cast<double>(r.flops) / profile->flops_per_sec;
        r.dominant = r.io_seconds > r.compute_seconds ? CostReport::Dominant::io
                                                      : CostReport::Dominant::compute;
    }
    (void)bit_width;
    return r;
}

} // namespace

CostReport prefill_cost_mla(const ModelConfig& cfg, std::uint64_t n, int bit_width,
                            const HardwareProfile* profile) {
    if (n < 1) throw std::invalid_argument("prefill_cost: n must be >= 1");
    cfg.validate();
    const MlaTerms t = mla_terms(cfg);
    const std::uint64_t layers = cfg.n_layers;

    CostReport r;
    r.phase = Phase::prefill;
    r.attn_linear_macs = layers * (t.q_proj + t.kv_new + t.out_proj + t.rope + t.kv_expand) * n;
    r.attn_quadratic_macs = layers * t.score_pair * n * n;
    r.ffn_macs = layers * ffn_macs_per_token(cfg) * n;
    r.macs = r.attn_linear_macs + r.attn_quadratic_macs + r.ffn_macs;
    r.cache_bytes = mla_cache_bytes(n, cfg.kv_rank, cfg.d_rope, bit_width, layers);
    return finish(r, bit_width, profile);
}

CostReport generate_cost_mla(const ModelConfig& cfg, std::uint64_t n, int bit_width,
                             const HardwareProfile* profile) {
    if (n < 1) throw std::invalid_argument("generate_cost: n must be >= 1");
    cfg.validate();
    const MlaTerms t = mla_terms(cfg);
    const std::uint64_t layers = cfg.n_layers;

    CostReport r;
    r.phase = Phase::decode;
    r.attn_linear_macs = layers * (t.q_proj + t.kv_new + t.out_proj + t.rope + t.kv_expand * n);
    r.attn_quadratic_macs = layers * t.score_pair * n;
    r.ffn_macs = layers * ffn_macs_per_token(cfg);
    r.macs = r.attn_linear_macs + r.attn_quadratic_macs + r.ffn_macs;
    r.cache_bytes = mla_cache_bytes(n - 1, cfg.kv_rank, cfg.d_rope, bit_width, layers);
    return finish(r, bit_width, profile);
}

CostReport prefill_cost_gqa(const ModelConfig& cfg, std::uint64_t n, int bit_width,
                            const HardwareProfile* profile) {
    if (n < 1) throw std::invalid_argument("prefill_cost: n must be >= 1");
    cfg.validate();
    const GqaTerms t = gqa_terms(cfg);
    const std::uint64_t layers = cfg.n_layers;

    CostReport r;
    r.phase = Phase::prefill;
    r.attn_linear_macs = layers * (t.q_proj + t.kv_new + t.out_proj + t.rope) * n;
    r.attn_quadratic_macs = layers * t.score_pair * n * n;
    r.ffn_macs = layers * ffn_macs_per_token(cfg) * n;
    r.macs = r.attn_linear_macs + r.attn_quadratic_macs + r.ffn_macs;
    r.cache_bytes = gqa_cache_bytes(n, cfg.n_kv_heads, cfg.head_dim(), bit_width, layers);
    return finish(r, bit_width, profile);
}

CostReport generate_cost_gqa(const ModelConfig& cfg, std::uint64_t n, int bit_width,
                             const HardwareProfile* profile) {
    if (n < 1) throw std::invalid_argument("generate_cost: n must be >= 1");
    cfg.validate();
    const GqaTerms t = gqa_terms(cfg);
    const std::uint64_t layers = cfg.n_layers;

    CostReport r;
    r.phase = Phase::decode;
    r.attn_linear_macs = layers * (t.q_proj + t.kv_new + t.out_proj + t.rope);
    r.attn_quadratic_macs = layers * t.score_pair * n;
    r.ffn_macs = layers * ffn_macs_per_token(cfg);
    r.macs = r.attn_linear_macs + r.attn_quadratic_macs + r.ffn_macs;
    r.cache_bytes = gqa_cache_bytes(n - 1, cfg.n_kv_heads, cfg.head_dim(), bit_width, layers);
    return finish(r, bit_width, profile);
}

CostReport phase_cost(const ModelConfig& cfg, Phase phase, std::uint64_t n, int bit_width,
                      const HardwareProfile* profile) {
    if (cfg.is_mla())
        return phase == Phase::prefill ? prefill_cost_mla(cfg, n, bit_width, profile)
                                       : generate_cost_mla(cfg, n, bit_width, profile);
    return phase == Phase::prefill ? prefill_cost_gqa(cfg, n, bit_width, profile)
                                   : generate_cost_gqa(cfg, n, bit_width, profile);
}

DecodeCostDifference decode_cost_difference(const ModelConfig& cfg_mla, const ModelConfig& cfg_gqa,
                                            std::uint64_t n, int bit_width) {
    if (!cfg_mla.is_mla() || cfg_gqa.is_mla())
        throw std::invalid_argument("decode_cost_difference: expected (mla, gqa) configs");
    if (cfg_mla.d_model != cfg_gqa.d_model || cfg_mla.n_heads != cfg_gqa.n_heads ||
        cfg_mla.n_layers != cfg_gqa.n_layers)
        throw std::invalid_argument("decode_cost_difference: configs not comparable");

    const CostReport mla = generate_cost_mla(cfg_mla, n, bit_width);
    const CostReport gqa = generate_cost_gqa(cfg_gqa, n, bit_width);

    DecodeCostDifference d;
    d.mac_delta = static_cast<std::int64_t>(mla.macs) - static_cast<std::int64_t>(gqa.macs);
    d.cache_delta_bytes =
        static_cast<std::int64_t>(gqa.cache_bytes) - static_cast<std::int64_t>(mla.cache_bytes);

    const MlaTerms tm = mla_terms(cfg_mla);
    const GqaTerms tg = gqa_terms(cfg_gqa);
    d.mac_coeff_per_layer = static_cast<std::int64_t>(tm.kv_expand + tm.score_pair) -
                            static_cast<std::int64_t>(tg.score_pair);
    const double gqa_per_token = 2.0 * static_cast<double>(cfg_gqa.n_kv_heads) * cfg_gqa.head_dim();
    const double mla_per_token = static_cast<double>(cfg_mla.kv_rank) + cfg_mla.d_rope;
    d.cache_coeff_per_layer_bytes = (gqa_per_token - mla_per_token) * bit_width / 8.0;
    return d;
}

std::vector<RankedCandidate> rank_architectures(const std::vector<ModelConfig>& candidates,
                                                std::uint64_t n, RankKey key, int bit_width,
                                                const std::vector<std::string>* names) {
    if (candidates.empty()) throw std::invalid_argument("rank_architectures: no candidates");

    std::vector<RankedCandidate> rows;
    rows.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const ModelConfig& cfg = candidates[i];
        const ParamCounts params = count_params(cfg);
        const CostReport cost = phase_cost(cfg, Phase::prefill, n, bit_width);
        RankedCandidate row;
        row.name = names && i < names->size() ? (*names)[i] : "candidate-" + std::to_string(i + 1);
        row.index = i;
        row.params_non_embedding = params.non_embedding;
        row.params_total = params.total();
        row.macs = cost.macs;
        row.flops = cost.flops;
        row.macs_per_param = static_cast<double>(cost.macs) / static_cast<double>(params.total());
        row.cache_bytes = cost.cache_bytes;
        rows.push_back(row);
    }

    auto value_of = [key](const RankedCandidate& r) -> double {
        switch (key) {
            case RankKey::macs: return static_cast<double>(r.macs);
            case RankKey::flops: return static_cast<double>(r.flops);
            case RankKey::params: return static_cast<double>(r.params_non_embedding);
            case RankKey::cache_bytes: return static_cast<double>(r.cache_bytes);
            case RankKey::macs_per_param: return r.macs_per_param;
        }
        return 0.0;
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const RankedCandidate& a, const RankedCandidate& b) {
        const double va = value_of(a), vb = value_of(b);
        if (va != vb) return va < vb;
        return a.index < b.index;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
    return rows;
}

} // namespace plmlab
