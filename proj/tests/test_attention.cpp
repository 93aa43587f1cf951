#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "plmlab/attention.hpp"
#include "test_helpers.hpp"

using namespace plmlab;
using helpers::positions_upto;

namespace {

// Hand-specialized multi-query attention: one shared K/V stream, written
// with its own loops as an independent oracle.
Matrix mqa_oracle(const GqaLayerConfig& cfg, const GqaWeights& w, const Matrix& h,
                  std::span<const std::int64_t> positions) {
    const std::size_t n = h.rows(), dh = cfg.d_head;
    Matrix q = matmul(h, w.w_q.transposed());
    Matrix k = matmul(h, w.w_k.transposed()); // [N x dh], single kv head
    Matrix v = matmul(h, w.w_v.transposed());
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < cfg.n_heads; ++i)
            apply_rope_inplace(q.row(r).subspan(i * dh, dh), positions[r]);
        apply_rope_inplace(k.row(r), positions[r]);
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Matrix heads(n, cfg.n_heads * dh);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        for (std::size_t t = 0; t < n; ++t) {
            std::vector<float> scores(t + 1);
            for (std::size_t j = 0; j <= t; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c)
                    dot += double(q(t, i * dh + c)) * double(k(j, c));
                scores[j] = float(dot);
            }
            const auto probs = oracles::softmax_long_double(scores, scale);
            for (std::size_t c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j <= t; ++j) acc += probs[j] * double(v(j, c));
                heads(t, i * dh + c) = float(acc);
            }
        }
    }
    return matmul(heads, w.w_o.transposed());
}

} // namespace

TEST_CASE("mha single head N=1 reduces to W_O W_V h") {
    GqaLayerConfig cfg{6, 1, 1, 4};
    Rng rng(3);
    GqaWeights w = helpers::random_gqa_weights(cfg, rng);
    Matrix h = rng.normal_matrix(1, 6, 0.0, 1.0);
    const std::int64_t pos[1] = {0};

    Matrix out = mha_reference(cfg.d_model, cfg.n_heads, cfg.d_head, w, h, pos);
    Matrix expect = matmul(matmul(h, w.w_v.transposed()), w.w_o.transposed());
    CHECK(oracles::max_abs_diff(out, expect) < 1e-6f);
}

TEST_CASE("gqa with n_kv = n_heads equals the MHA reference bit-exactly") {
    GqaLayerConfig cfg{12, 3, 3, 4};
    Rng rng(17);
    GqaWeights w = helpers::random_gqa_weights(cfg, rng);
    Matrix h = rng.normal_matrix(6, 12, 0.0, 1.0);
    const auto pos = positions_upto(6);

    GqaKvCache cache;
    Matrix gqa = gqa_prefill(cfg, w, h, pos, cache);
    Matrix mha = mha_reference(cfg.d_model, cfg.n_heads, cfg.d_head, w, h, pos);
    CHECK(oracles::bit_equal(gqa, mha));
}

TEST_CASE("gqa with one kv head matches the hand-specialized MQA oracle") {
    GqaLayerConfig cfg{10, 4, 1, 6};
    Rng rng(23);
    GqaWeights w = helpers::random_gqa_weights(cfg, rng);
    Matrix h = rng.normal_matrix(5, 10, 0.0, 1.0);
    const auto pos = positions_upto(5);

    GqaKvCache cache;
    Matrix out = gqa_prefill(cfg, w, h, pos, cache);
    Matrix expect = mqa_oracle(cfg, w, h, pos);
    CHECK(oracles::max_abs_diff(out, expect) < 1e-5f);
}

TEST_CASE("gqa head grouping validation") {
    GqaLayerConfig cfg{8, 4, 3, 2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("mla N=1 output is W_O applied to the concatenated values") {
    MlaLayerConfig cfg{8, 2, 4, 2, 3, std::nullopt};
    Rng rng(31);
    MlaWeights w = helpers::random_mla_weights(cfg, rng);
    Matrix h = rng.normal_matrix(1, 8, 0.0, 1.0);
    const std::int64_t pos[1] = {0};

    MlaKvCache cache;
    Matrix out = mla_prefill(cfg, w, h, pos, cache);
    Matrix v = matmul(matmul(h, w.w_dkv.transposed()), w.w_uv.transposed());
    Matrix expect = matmul(v, w.w_o.transposed());
    CHECK(oracles::max_abs_diff(out, expect) < 1e-6f);
    CHECK(cache.size() == 1);
}

TEST_CASE("mla full-rank construction equals the MHA reference") {
    // d_c = d with identity down-projection embeds an MHA layer inside the
    // latent path; the rotary stream is disabled through zero projections,
    // so the MHA oracle runs without positional rotation and with the
    // padded-head softmax scale.
    const std::size_t d = 8, n_h = 2, d_head = 4, d_rope = 2;
    MlaLayerConfig cfg{d, n_h, d_head, d_rope, d, std::nullopt};
    Rng rng(37);
    GqaWeights mha_w = helpers::random_gqa_weights(GqaLayerConfig{d, n_h, n_h, d_head}, rng);

    MlaWeights w;
    w.w_q = mha_w.w_q;
    w.w_qr = Matrix(n_h * d_rope, d);
    w.w_kr = Matrix(d_rope, d);
    w.w_dkv = Matrix::identity(d);
    w.w_uk = mha_w.w_k;
    w.w_uv = mha_w.w_v;
    w.w_o = mha_w.w_o;

    Matrix h = rng.normal_matrix(5, d, 0.0, 1.0);
    const auto pos = positions_upto(5);
    const std::vector<std::int64_t> zero_pos(5, 0);

    MlaKvCache cache;
    Matrix mla = mla_prefill(cfg, w, h, pos, cache);
    const float scale = 1.0f / std::sqrt(static_cast<float>(d_head + d_rope));
    Matrix mha = mha_reference(d, n_h, d_head, mha_w, h, zero_pos, scale);
    CHECK(oracles::max_abs_diff(mla, mha) < 1e-5f);
}

TEST_CASE("mla prefill equals stepwise decode") {
    for (bool compress_q : {false, true}) {
        MlaLayerConfig cfg{8, 2, 4, 2, 4, compress_q ? std::optional<std::size_t>(6) : std::nullopt};
        Rng rng(41);
        MlaWeights w = helpers::random_mla_weights(cfg, rng);
        const std::size_t n = 5;
        Matrix h = rng.normal_matrix(n, 8, 0.0, 1.0);
        const auto pos = positions_upto(n);

        MlaKvCache full_cache;
        Matrix full = mla_prefill(cfg, w, h, pos, full_cache);

        MlaKvCache cache;
        for (std::size_t t = 0; t < n; ++t) {
            auto row = mla_decode_step(cfg, w, h.row(t), cache, pos[t]);
            for (std::size_t c = 0; c < 8; ++c)
                CHECK(row[c] == doctest::Approx(full(t, c)).epsilon(1e-5));
        }
        CHECK(cache.size() == full_cache.size());
    }
}

TEST_CASE("mla 4-token prefix plus one decode step equals 5-token prefill") {
    MlaLayerConfig cfg{8, 2, 4, 2, 4, std::nullopt};
    Rng rng(43);
    MlaWeights w = helpers::random_mla_weights(cfg, rng);
    Matrix h = rng.normal_matrix(5, 8, 0.0, 1.0);
    const auto pos = positions_upto(5);

    MlaKvCache full_cache;
    Matrix full = mla_prefill(cfg, w, h, pos, full_cache);

    Matrix prefix4(4, 8);
    for (std::size_t r = 0; r < 4; ++r)
        std::copy(h.row(r).begin(), h.row(r).end(), prefix4.row(r).begin());
    MlaKvCache cache;
    mla_prefill(cfg, w, prefix4, positions_upto(4), cache);
    auto last = mla_decode_step(cfg, w, h.row(4), cache, 4);
    for (std::size_t c = 0; c < 8; ++c) CHECK(last[c] == doctest::Approx(full(4, c)).epsilon(1e-5));
}

TEST_CASE("gqa prefill equals stepwise decode") {
    GqaLayerConfig cfg{8, 4, 2, 4};
    Rng rng(47);
    GqaWeights w = helpers::random_gqa_weights(cfg, rng);
    const std::size_t n = 7;
    Matrix h = rng.normal_matrix(n, 8, 0.0, 1.0);
    const auto pos = positions_upto(n);

    GqaKvCache full_cache;
    Matrix full = gqa_prefill(cfg, w, h, pos, full_cache);

    GqaKvCache cache;
    for (std::size_t t = 0; t < n; ++t) {
        auto row = gqa_decode_step(cfg, w, h.row(t), cache, pos[t]);
        for (std::size_t c = 0; c < 8; ++c) CHECK(row[c] == doctest::Approx(full(t, c)).epsilon(1e-5));
    }
}

TEST_CASE("decode rejects stale positions") {
    MlaLayerConfig cfg{8, 2, 4, 2, 4, std::nullopt};
    Rng rng(53);
    MlaWeights w = helpers::random_mla_weights(cfg, rng);
    Matrix h = rng.normal_matrix(2, 8, 0.0, 1.0);

    MlaKvCache cache;
    mla_decode_step(cfg, w, h.row(0), cache, 5);
    CHECK_THROWS_AS(mla_decode_step(cfg, w, h.row(1), cache, 5), std::invalid_argument);
    CHECK_THROWS_AS(mla_decode_step(cfg, w, h.row(1), cache, 4), std::invalid_argument);
}

TEST_CASE("causality: perturbing token t changes only positions >= t") {
    MlaLayerConfig cfg{8, 2, 4, 2, 4, std::nullopt};
    Rng rng(59);
    MlaWeights w = helpers::random_mla_weights(cfg, rng);
    const std::size_t n = 6, t = 3;
    Matrix h = rng.normal_matrix(n, 8, 0.0, 1.0);
    const auto pos = positions_upto(n);

    MlaKvCache c1;
    Matrix base = mla_prefill(cfg, w, h, pos, c1);

    Matrix h2 = h;
    h2(t, 0) += 1.5f;
    MlaKvCache c2;
    Matrix perturbed = mla_prefill(cfg, w, h2, pos, c2);

    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < 8; ++c) CHECK(base(r, c) == perturbed(r, c));
    bool differs = false;
    for (std::size_t r = t; r < n; ++r)
        for (std::size_t c = 0; c < 8; ++c) differs |= (base(r, c) != perturbed(r, c));
    CHECK(differs);
}

TEST_CASE("cache byte equations") {
    // 32 layers of the released config hold 36,864 bytes per token at fp16.
    CHECK(mla_cache_bytes(1, 512, 64, 16, 32) == 36864);
    CHECK(mla_cache_bytes(0, 512, 64, 16, 32) == 0);
    CHECK(gqa_cache_bytes(1, 1, 1, 8, 1) == 2);
    CHECK(mla_cache_bytes(4095, 512, 64, 16, 32) == 150958080ull);
    CHECK(gqa_cache_bytes(4096, 16, 192, 16, 32) == 1610612736ull);
}

TEST_CASE("live cache audits match the equations and per-step growth") {
    MlaLayerConfig cfg{8, 2, 4, 2, 4, std::nullopt};
    Rng rng(61);
    MlaWeights w = helpers::random_mla_weights(cfg, rng);
    Matrix h = rng.normal_matrix(5, 8, 0.0, 1.0);

    MlaKvCache cache;
    std::uint64_t prev = 0;
    for (std::size_t t = 0; t < 5; ++t) {
        mla_decode_step(cfg, w, h.row(t), cache, static_cast<std::int64_t>(t));
        for (int bits : {4, 8, 16}) {
            CHECK(cache_bytes(cache, bits, 3) == mla_cache_bytes(t + 1, 4, 2, bits, 3));
        }
        const std::uint64_t now = cache_bytes(cache, 16, 1);
        CHECK(now - prev == (4 + 2) * 2); // (d_c + d_rope) * bit_width/8
        prev = now;
    }

    GqaLayerConfig gcfg{8, 4, 2, 4};
    GqaWeights gw = helpers::random_gqa_weights(gcfg, rng);
    GqaKvCache gcache;
    for (std::size_t t = 0; t < 4; ++t)
        gqa_decode_step(gcfg, gw, h.row(t), gcache, static_cast<std::int64_t>(t));
    for (int bits : {4, 8, 16})
        CHECK(cache_bytes(gcache, bits, 7) == gqa_cache_bytes(4, 2, 4, bits, 7));
}

TEST_CASE("mla cache is smaller than gqa cache when d_c + d_rope < 2 n_kv d_h") {
    // Matched 16-kv-head geometry: ratio 2*16*192/576.
    const std::uint64_t mla = mla_cache_bytes(4096, 512, 64, 16, 32);
    const std::uint64_t gqa = gqa_cache_bytes(4096, 16, 192, 16, 32);
    CHECK(mla < gqa);
    CHECK(static_cast<double>(gqa) / static_cast<double>(mla) ==
          doctest::Approx(2.0 * 16 * 192 / 576.0).epsilon(1e-12));
}
