#include "doctest.h"

#include <cmath>

#include "plmlab/cost_model.hpp"
#include "plmlab/model.hpp"
#include "plmlab/rng.hpp"

using namespace plmlab;

namespace {

std::vector<TokenId> tokens_of(std::size_t n, std::size_t vocab, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TokenId> t(n);
    for (auto& v : t) v = static_cast<TokenId>(rng.next_below(vocab));
    return t;
}

ModelConfig random_tiny_config(Rng& rng, bool mla) {
    ModelConfig cfg;
    cfg.n_layers = 1 + rng.next_below(3);
    cfg.n_heads = 1 + rng.next_below(4);
    cfg.attention_kind = mla ? AttentionKind::mla : AttentionKind::gqa;
    if (mla) {
        cfg.n_kv_heads = cfg.n_heads;
        cfg.d_nope = 2 + 2 * rng.next_below(4);
        cfg.d_rope = 2 * rng.next_below(4); // may be zero
        cfg.kv_rank = 2 + rng.next_below(8);
        if (rng.next_below(2)) cfg.q_rank = 2 + rng.next_below(8);
        cfg.d_model = 4 + 4 * rng.next_below(5);
    } else {
        // n_kv_heads must divide n_heads.
        std::vector<std::size_t> divisors;
        for (std::size_t k = 1; k <= cfg.n_heads; ++k)
            if (cfg.n_heads % k == 0) divisors.push_back(k);
        cfg.n_kv_heads = divisors[rng.next_below(divisors.size())];
        cfg.d_nope = 2 + 2 * rng.next_below(3);
        cfg.d_rope = 0;
        cfg.kv_rank = 0;
        cfg.d_model = 4 + 4 * rng.next_below(5);
    }
    cfg.d_ffn = 4 + rng.next_below(20);
    cfg.activation = rng.next_below(2) ? Activation::relu2 : Activation::swiglu;
    cfg.vocab_size = 16 + rng.next_below(30);
    cfg.max_seq_len = 64;
    cfg.tie_embeddings = true;
    return cfg;
}

} // namespace

TEST_CASE("analytic prefill and decode MACs equal the instrumented counter exactly") {
    Rng rng(777);
    int checked = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const bool mla = trial % 2 == 0;
        const ModelConfig cfg = random_tiny_config(rng, mla);
        Model model = Model::build(cfg, 1000 + static_cast<std::uint64_t>(trial));
        const std::size_t n = 1 + rng.next_below(16);
        const auto tokens = tokens_of(n, cfg.vocab_size, 55 + static_cast<std::uint64_t>(trial));

        // Prefill.
        OpCounter prefill_counter;
        ForwardOptions opts;
        opts.counter = &prefill_counter;
        KvCaches caches = model.make_caches();
        model.prefill(tokens, caches, opts);
        const CostReport prefill = phase_cost(cfg, Phase::prefill, n);
        CHECK(prefill.macs == prefill_counter.macs());
        CHECK(prefill.flops == prefill_counter.flops());
        CHECK(prefill.ffn_macs == prefill_counter.ffn_macs());
        CHECK(prefill.attn_quadratic_macs == prefill_counter.attn_score_macs());
        CHECK(prefill.attn_linear_macs ==
              prefill_counter.attn_proj_macs() + prefill_counter.attn_rope_macs());

        // One decode step at position n (token count n+1 after append).
        OpCounter decode_counter;
        ForwardOptions dopts;
        dopts.counter = &decode_counter;
        model.decode_step(tokens[0], static_cast<std::int64_t>(n), caches, dopts);
        const CostReport decode = phase_cost(cfg, Phase::decode, n + 1);
        CHECK(decode.macs == decode_counter.macs());
        ++checked;
    }
    CHECK(checked >= 10);
}

TEST_CASE("prefill quadratic term at N=1 equals its coefficient") {
    ModelConfig cfg = preset("plm-micro");
    const CostReport r = prefill_cost_mla(cfg, 1);
    CHECK(r.attn_quadratic_macs ==
          cfg.n_layers * cfg.n_heads * (cfg.d_rope + 2 * cfg.d_nope));
}

TEST_CASE("appendix-table MACs at N=128 within 3 percent, flops exactly doubled") {
    const auto candidates = sandbox_candidates();
    const double expected_gmacs[7] = {206, 164, 198, 184, 205, 207, 203};
    for (int i = 0; i < 7; ++i) {
        const CostReport r = prefill_cost_mla(candidates[static_cast<std::size_t>(i)], 128);
        CHECK(r.flops == 2 * r.macs);
        const double rel =
            std::fabs(static_cast<double>(r.macs) - expected_gmacs[i] * 1e9) / (expected_gmacs[i] * 1e9);
        INFO("candidate ", i + 1, " macs ", r.macs);
        CHECK(rel < 0.03);
    }
}

TEST_CASE("generate cost cache bytes follow the N-1 convention") {
    const ModelConfig plm = preset("plm-1.8b");
    CHECK(generate_cost_mla(plm, 4096).cache_bytes == 150958080ull);
    CHECK(generate_cost_mla(plm, 1).cache_bytes == 0);

    // The N-proportional decode term at N=1 contributes one token's worth.
    const CostReport r1 = generate_cost_mla(preset("plm-micro"), 1);
    const ModelConfig micro = preset("plm-micro");
    CHECK(r1.attn_quadratic_macs == micro.n_layers * micro.n_heads * (micro.d_rope + 2 * micro.d_nope));
}

TEST_CASE("gqa reductions and matched-cache ratio") {
    ModelConfig gqa = preset("plm-micro-gqa");
    const CostReport full = prefill_cost_gqa(gqa, 32);

    // n_kv = n_h is plain MHA; halving the kv heads changes only the
    // projection and cache terms.
    ModelConfig half = gqa;
    half.n_kv_heads = 2;
    const CostReport halved = prefill_cost_gqa(half, 32);
    CHECK(full.attn_quadratic_macs == halved.attn_quadratic_macs);
    CHECK(full.ffn_macs == halved.ffn_macs);
    const std::uint64_t proj_delta_per_token =
        2ull * (gqa.n_kv_heads - half.n_kv_heads) * gqa.head_dim() * gqa.d_model +
        2ull * (gqa.n_kv_heads - half.n_kv_heads) * gqa.head_dim(); // projection + rope
    CHECK(full.attn_linear_macs - halved.attn_linear_macs ==
          gqa.n_layers * proj_delta_per_token * 32);
    CHECK(full.cache_bytes == 2 * halved.cache_bytes);

    // PLM-shaped MLA vs 16-kv-head GQA cache gap.
    ModelConfig gqa_match = preset("plm-1.8b");
    gqa_match.attention_kind = AttentionKind::gqa;
    gqa_match.d_nope = 192;
    gqa_match.d_rope = 0;
    gqa_match.kv_rank = 0;
    const std::uint64_t mla_cache = prefill_cost_mla(preset("plm-1.8b"), 4096).cache_bytes;
    const std::uint64_t gqa_cache = prefill_cost_gqa(gqa_match, 4096).cache_bytes;
    CHECK(gqa_cache == 1610612736ull);
    CHECK(std::fabs(static_cast<double>(gqa_cache) / static_cast<double>(mla_cache) -
                    2.0 * 16 * 192 / 576.0) < 1e-9);
}

TEST_CASE("cache formulas are linear in N and bit width") {
    const ModelConfig plm = preset("plm-1.8b");
    for (std::uint64_t n : {2ull, 8ull, 513ull}) {
        const auto once = prefill_cost_mla(plm, n, 8).cache_bytes;
        const auto doubled_n = prefill_cost_mla(plm, 2 * n, 8).cache_bytes;
        const auto doubled_bits = prefill_cost_mla(plm, n, 16).cache_bytes;
        CHECK(doubled_n == 2 * once);
        CHECK(doubled_bits == 2 * once);
    }
}

TEST_CASE("generate cost is affine in N; prefill is quadratic with positive lead") {
    const ModelConfig cfg = preset("plm-micro");
    const auto g = [&](std::uint64_t n) { return generate_cost_mla(cfg, n).macs; };
    const auto second_diff = g(30) - 2 * g(20) + g(10);
    CHECK(second_diff == 0); // affine

    const auto p = [&](std::uint64_t n) { return prefill_cost_mla(cfg, n).macs; };
    const auto lead = p(40) - 2 * p(30) + p(20);
    CHECK(lead > 0);
    CHECK(lead == 2 * 100 * cfg.n_layers * cfg.n_heads * (cfg.d_rope + 2 * cfg.d_nope));
}

TEST_CASE("dominant factor flips with the hardware profile") {
    const ModelConfig cfg = preset("plm-micro");
    HardwareProfile io_bound{1.0, 1e18, "io-starved"};
    HardwareProfile compute_bound{1e18, 1.0, "compute-starved"};
    const CostReport io = generate_cost_mla(cfg, 64, 16, &io_bound);
    const CostReport comp = generate_cost_mla(cfg, 64, 16, &compute_bound);
    CHECK(io.dominant == CostReport::Dominant::io);
    CHECK(comp.dominant == CostReport::Dominant::compute);
    CHECK(io.io_seconds == doctest::Approx(static_cast<double>(io.cache_bytes)).epsilon(1e-12));
    CHECK(comp.compute_seconds == doctest::Approx(static_cast<double>(comp.flops)).epsilon(1e-12));
}

TEST_CASE("decode cost difference coefficients and crossover") {
    ModelConfig mla = preset("plm-1.8b");
    ModelConfig gqa = mla;
    gqa.attention_kind = AttentionKind::gqa;
    gqa.d_nope = 192;
    gqa.d_rope = 0;
    gqa.kv_rank = 0;

    const DecodeCostDifference diff = decode_cost_difference(mla, gqa, 1024);
    const double expected_cache_coeff =
        (2.0 * gqa.n_kv_heads * gqa.head_dim() - mla.kv_rank - mla.d_rope) * 16 / 8.0;
    CHECK(diff.cache_coeff_per_layer_bytes == doctest::Approx(expected_cache_coeff).epsilon(1e-12));

    // Matches the subtraction of the two cache equations.
    const auto cache_at = [&](std::uint64_t n) {
        return static_cast<std::int64_t>(generate_cost_gqa(gqa, n).cache_bytes) -
               static_cast<std::int64_t>(generate_cost_mla(mla, n).cache_bytes);
    };
    CHECK(cache_at(1025) - cache_at(1024) ==
          static_cast<std::int64_t>(expected_cache_coeff * static_cast<double>(mla.n_layers)));

    // d_c + d_rope = 2 n_kv d_h zeroes the gap.
    ModelConfig tiny_mla_cfg = mla;
    tiny_mla_cfg.kv_rank = 320;
    tiny_mla_cfg.d_rope = 64; // 384 total
    ModelConfig tiny_gqa = gqa;
    tiny_gqa.n_kv_heads = 1;
    tiny_gqa.d_nope = 192; // 2*1*192 = 384
    const DecodeCostDifference zero = decode_cost_difference(tiny_mla_cfg, tiny_gqa, 128);
    CHECK(zero.cache_delta_bytes == 0);
    CHECK(zero.cache_coeff_per_layer_bytes == 0.0);

    // MLA pays more compute per decode step (latent re-expansion) while a
    // lean 4-kv-head comparator pays cheaper projections but caches more
    // per token. Under an IO-starved profile the totals cross over in
    // MLA's favor as the context grows; locate the sign change on a grid.
    ModelConfig lean_gqa = mla;
    lean_gqa.attention_kind = AttentionKind::gqa;
    lean_gqa.n_kv_heads = 4;
    lean_gqa.d_nope = 128;
    lean_gqa.d_rope = 0;
    lean_gqa.kv_rank = 0;
    HardwareProfile edge{1e9, 1e13, "io-starved-edge"};
    auto mla_total = [&](std::uint64_t n) {
        const CostReport r = generate_cost_mla(mla, n, 16, &edge);
        return r.io_seconds + r.compute_seconds;
    };
    auto gqa_total = [&](std::uint64_t n) {
        const CostReport r = generate_cost_gqa(lean_gqa, n, 16, &edge);
        return r.io_seconds + r.compute_seconds;
    };
    CHECK(mla_total(1) > gqa_total(1)); // compute-bound at short context
    int crossover = -1;
    for (std::uint64_t n = 2; n <= 4096; ++n) {
        if (mla_total(n) < gqa_total(n)) {
            crossover = static_cast<int>(n);
            break;
        }
    }
    REQUIRE(crossover > 1);
    CHECK(mla_total(4096) < gqa_total(4096));

    ModelConfig mismatched = mla;
    mismatched.n_heads = 8;
    CHECK_THROWS_AS(decode_cost_difference(mismatched, gqa, 16), std::invalid_argument);
}

TEST_CASE("rank_architectures output") {
    const auto candidates = sandbox_candidates();
    const auto rows = rank_architectures(candidates, 128, RankKey::macs);
    REQUIRE(rows.size() == 7);
    for (const auto& r : rows) CHECK(r.flops == 2 * r.macs);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].macs <= rows[i].macs);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].rank == i + 1);

    // Candidates 2 and 7 land near the table's 1.21B / 1.54B.
    const auto by_index = [&](std::size_t idx) {
        for (const auto& r : rows)
            if (r.index == idx) return r;
        throw std::logic_error("missing row");
    };
    CHECK(std::fabs(static_cast<double>(by_index(1).params_non_embedding) - 1.21e9) / 1.21e9 < 0.03);
    CHECK(std::fabs(static_cast<double>(by_index(6).params_non_embedding) - 1.54e9) / 1.54e9 < 0.03);

    const auto single = rank_architectures({candidates[0]}, 128);
    CHECK(single.size() == 1);
    CHECK(single[0].rank == 1);

    // Ties break by candidate index.
    const auto tied = rank_architectures({candidates[1], candidates[1]}, 128);
    CHECK(tied[0].index == 0);
    CHECK(tied[1].index == 1);
    CHECK_THROWS_AS(rank_architectures({}, 128), std::invalid_argument);
}
