#include "plmlab/model.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "plmlab/rng.hpp"

namespace plmlab {

namespace {

constexpr double kNormEps = 1e-6;

std::vector<std::int64_t> iota_positions(std::size_t n) {
    std::vector<std::int64_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::int64_t>(i);
    return p;
}

} // namespace

void rms_norm_row(std::span<float> x, std::span<const float> gain) {
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kNormEps);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = static_cast<float>(static_cast<double>(x[i]) * inv * gain[i]);
}

Model Model::build(const ModelConfig& cfg, std::uint64_t seed, double init_std) {
    cfg.validate();
    Model m(cfg);
    Rng rng(seed);

    m.embedding_ = rng.normal_matrix(cfg.vocab_size, cfg.d_model, 0.0, init_std);
    m.layers_.resize(cfg.n_layers);
    for (auto& layer : m.layers_) {
        layer.attn_norm = Matrix(1, cfg.d_model, std::vector<float>(cfg.d_model, 1.0f));
        layer.ffn_norm = Matrix(1, cfg.d_model, std::vector<float>(cfg.d_model, 1.0f));
        if (cfg.is_mla()) {
            const auto lc = cfg.mla_layer();
            const std::size_t q_in = lc.q_rank.value_or(cfg.d_model);
            if (lc.q_rank) {
                layer.mla.w_dq = rng.normal_matrix(*lc.q_rank, cfg.d_model, 0.0, init_std);
                layer.mla.w_uq = rng.normal_matrix(cfg.n_heads * cfg.d_nope, *lc.q_rank, 0.0, init_std);
            } else {
                layer.mla.w_q = rng.normal_matrix(cfg.n_heads * cfg.d_nope, cfg.d_model, 0.0, init_std);
            }
            if (cfg.d_rope > 0) {
                layer.mla.w_qr = rng.normal_matrix(cfg.n_heads * cfg.d_rope, q_in, 0.0, init_std);
                layer.mla.w_kr = rng.normal_matrix(cfg.d_rope, cfg.d_model, 0.0, init_std);
            }
            layer.mla.w_dkv = rng.normal_matrix(cfg.kv_rank, cfg.d_model, 0.0, init_std);
            layer.mla.w_uk = rng.normal_matrix(cfg.n_heads * cfg.d_nope, cfg.kv_rank, 0.0, init_std);
            layer.mla.w_uv = rng.normal_matrix(cfg.n_heads * cfg.d_nope, cfg.kv_rank, 0.0, init_std);
            layer.mla.w_o = rng.normal_matrix(cfg.d_model, cfg.n_heads * cfg.d_nope, 0.0, init_std);
        } else {
            const std::size_t dh = cfg.head_dim();
            layer.gqa.w_q = rng.normal_matrix(cfg.n_heads * dh, cfg.d_model, 0.0, init_std);
            layer.gqa.w_k = rng.normal_matrix(cfg.n_kv_heads * dh, cfg.d_model, 0.0, init_std);
            layer.gqa.w_v = rng.normal_matrix(cfg.n_kv_heads * dh, cfg.d_model, 0.0, init_std);
            layer.gqa.w_o = rng.normal_matrix(cfg.d_model, cfg.n_heads * dh, 0.0, init_std);
        }
        layer.ffn.w_up = rng.normal_matrix(cfg.d_ffn, cfg.d_model, 0.0, init_std);
        if (cfg.activation == Activation::swiglu)
            layer.ffn.w_gate = rng.normal_matrix(cfg.d_ffn, cfg.d_model, 0.0, init_std);
        layer.ffn.w_down = rng.normal_matrix(cfg.d_model, cfg.d_ffn, 0.0, init_std);
    }
    m.final_norm_ = Matrix(1, cfg.d_model, std::vector<float>(cfg.d_model, 1.0f));
    if (!cfg.tie_embeddings)
        m.output_head_ = rng.normal_matrix(cfg.vocab_size, cfg.d_model, 0.0, init_std);
    return m;
}

KvCaches Model::make_caches() const {
    KvCaches c;
    if (cfg_.is_mla()) {
        c.mla.resize(cfg_.n_layers);
        for (auto& k : c.mla) {
            k.kv_rank = cfg_.kv_rank;
            k.d_rope = cfg_.d_rope;
        }
    } else {
        c.gqa.resize(cfg_.n_layers);
        for (auto& k : c.gqa) {
            k.n_kv_heads = cfg_.n_kv_heads;
            k.d_head = cfg_.head_dim();
        }
    }
    return c;
}

Matrix Model::forward_hidden(const Matrix& token_rows, std::span<const std::int64_t> positions,
                             KvCaches& caches, const ForwardOptions& opts, bool single_step) const {
    Matrix h = token_rows;
    if (opts.counter) opts.counter->ensure_layers(cfg_.n_layers);

    for (std::size_t li = 0; li < cfg_.n_layers; ++li) {
        const LayerWeights* streamed = opts.layer_provider ? opts.layer_provider(li) : nullptr;
        const LayerWeights& lw = streamed ? *streamed : layers_[li];

        Matrix normed = h;
        for (std::size_t r = 0; r < normed.rows(); ++r) rms_norm_row(normed.row(r), lw.attn_norm.row(0));

        Matrix attn_out;
        if (cfg_.is_mla()) {
            if (single_step) {
                auto row = mla_decode_step(cfg_.mla_layer(), lw.mla, normed.row(0), caches.mla[li],
                                           positions[0], opts.counter, li, kDefaultRopeThetaBase,
                                           opts.threads);
                attn_out = Matrix(1, cfg_.d_model, std::move(row));
            } else {
                attn_out = mla_prefill(cfg_.mla_layer(), lw.mla, normed, positions, caches.mla[li],
                                       opts.counter, li, kDefaultRopeThetaBase, opts.threads);
            }
        } else {
            if (single_step) {
                auto row = gqa_decode_step(cfg_.gqa_layer(), lw.gqa, normed.row(0), caches.gqa[li],
                                           positions[0], opts.counter, li, kDefaultRopeThetaBase,
                                           opts.threads);
                attn_out = Matrix(1, cfg_.d_model, std::move(row));
            } else {
                attn_out = gqa_prefill(cfg_.gqa_layer(), lw.gqa, normed, positions, caches.gqa[li],
                                       opts.counter, li, kDefaultRopeThetaBase, opts.threads);
            }
        }
        h = add(h, attn_out);

        Matrix ffn_in = h;
        for (std::size_t r = 0; r < ffn_in.rows(); ++r) rms_norm_row(ffn_in.row(r), lw.ffn_norm.row(0));

        FfnHooks hooks;
        if (opts.ffn_mask_thresholds) {
            if (opts.ffn_mask_thresholds->size() != cfg_.n_layers)
                throw std::invalid_argument("forward: one mask threshold per layer required");
            hooks.mask_threshold = (*opts.ffn_mask_thresholds)[li];
        }
        std::function<void(std::span<const float>)> observer;
        if (opts.observe_activations) {
            observer = [&, li](std::span<const float> x) { opts.observe_activations(li, x); };
            hooks.observe = &observer;
        }
        FfnConfig fc{cfg_.d_model, cfg_.d_ffn, cfg_.activation};
        Matrix ffn_out = ffn_forward(fc, lw.ffn, ffn_in, opts.counter, li, hooks, opts.threads);
        h = add(h, ffn_out);
    }

    for (std::size_t r = 0; r < h.rows(); ++r) rms_norm_row(h.row(r), final_norm_.row(0));
    return h;
}

Matrix Model::prefill(std::span<const TokenId> tokens, KvCaches& caches,
                      const ForwardOptions& opts) const {
    if (tokens.empty()) throw std::invalid_argument("prefill: empty token stream");
    if (caches.tokens() + tokens.size() > cfg_.max_seq_len)
        throw std::invalid_argument("prefill: sequence exceeds max_seq_len");

    Matrix rows(tokens.size(), cfg_.d_model);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const TokenId id = tokens[t];
        if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
            throw std::invalid_argument("prefill: unknown token id " + std::to_string(id));
        auto src = embedding_.row(static_cast<std::size_t>(id));
        std::copy(src.begin(), src.end(), rows.row(t).begin());
    }
    const auto positions = iota_positions(tokens.size());

    Matrix hidden = forward_hidden(rows, positions, caches, opts, /*single_step=*/false);
    Matrix logits = matmul(hidden, output_head().transposed(), opts.threads);
    if (opts.counter)
        opts.counter->logit_head_macs +=
            static_cast<std::uint64_t>(tokens.size()) * cfg_.vocab_size * cfg_.d_model;
    return logits;
}

std::vector<float> Model::decode_step(TokenId token, std::int64_t position, KvCaches& caches,
                                      const ForwardOptions& opts) const {
    if (token < 0 || static_cast<std::size_t>(token) >= cfg_.vocab_size)
        throw std::invalid_argument("decode_step: unknown token id " + std::to_string(token));
    if (static_cast<std::size_t>(position) >= cfg_.max_seq_len)
        throw std::invalid_argument("decode_step: position exceeds max_seq_len");

    Matrix row(1, cfg_.d_model);
    auto src = embedding_.row(static_cast<std::size_t>(token));
    std::copy(src.begin(), src.end(), row.row(0).begin());
    const std::int64_t pos_arr[1] = {position};

    Matrix hidden = forward_hidden(row, pos_arr, caches, opts, /*single_step=*/true);
    Matrix logits = matmul(hidden, output_head().transposed(), opts.threads);
    if (opts.counter)
        opts.counter->logit_head_macs += static_cast<std::uint64_t>(cfg_.vocab_size) * cfg_.d_model;
    return std::vector<float>(logits.row(0).begin(), logits.row(0).end());
}

GenerateResult Model::generate(std::span<const TokenId> prompt, std::size_t n_new,
                               const ForwardOptions& opts) const {
    if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
    if (prompt.size() + n_new > cfg_.max_seq_len)
        throw std::invalid_argument("generate: prompt + n_new exceeds max_seq_len");

    GenerateResult res;
    res.tokens.assign(prompt.begin(), prompt.end());
    ForwardOptions run_opts = opts;
    run_opts.counter = &res.counter;

    KvCaches caches = make_caches();
    const auto t0 = std::chrono::steady_clock::now();
    Matrix logits = prefill(prompt, caches, run_opts);
    const auto t1 = std::chrono::steady_clock::now();
    res.prefill_seconds = std::chrono::duration<double>(t1 - t0).count();
    res.prefill_macs = res.counter.macs();

    auto argmax = [](std::span<const float> row) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < row.size(); ++i)
            if (row[i] > row[best]) best = i;
        return static_cast<TokenId>(best);
    };

    // Every accepted token is decoded against the cache, so the decode
    // phase runs exactly n_new single-token steps.
    std::vector<float> last_logits(logits.row(logits.rows() - 1).begin(),
                                   logits.row(logits.rows() - 1).end());
    const auto t2 = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < n_new; ++s) {
        const TokenId next = argmax(last_logits);
        res.tokens.push_back(next);
        last_logits = decode_step(next, static_cast<std::int64_t>(res.tokens.size() - 1), caches, run_opts);
    }
    const auto t3 = std::chrono::steady_clock::now();
    res.decode_seconds = std::chrono::duration<double>(t3 - t2).count();
    res.decode_macs = res.counter.macs() - res.prefill_macs;
    return res;
}

double Model::perplexity(std::span<const TokenId> tokens, const ForwardOptions& opts) const {
    if (tokens.size() < 2) throw std::invalid_argument("perplexity: stream length must be >= 2");
    KvCaches caches = make_caches();
    Matrix logits = prefill(tokens, caches, opts);
    return perplexity_from_logits(logits, tokens);
}

double perplexity_from_logits(const Matrix& logits, std::span<const TokenId> tokens) {
    if (tokens.size() < 2) throw std::invalid_argument("perplexity: stream length must be >= 2");
    if (logits.rows() != tokens.size()) throw std::invalid_argument("perplexity: row/token mismatch");
    double nll = 0.0;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        auto row = logits.row(t);
        double maxv = row[0];
        for (float v : row) maxv = std::max(maxv, static_cast<double>(v));
        double sum = 0.0;
        for (float v : row) sum += std::exp(static_cast<double>(v) - maxv);
        const double logz = maxv + std::log(sum);
        nll += logz - static_cast<double>(row[static_cast<std::size_t>(tokens[t + 1])]);
    }
    return std::exp(nll / static_cast<double>(tokens.size() - 1));
}

void Model::for_each_tensor(const std::function<void(const std::string&, Matrix&)>& fn) {
    fn("embed.weight", embedding_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        LayerWeights& lw = layers_[i];
        fn(p + "attn_norm.weight", lw.attn_norm);
        fn(p + "ffn_norm.weight", lw.ffn_norm);
        if (cfg_.is_mla()) {
            if (cfg_.q_rank) {
                fn(p + "attn.w_dq", lw.mla.w_dq);
                fn(p + "attn.w_uq", lw.mla.w_uq);
            } else {
                fn(p + "attn.w_q", lw.mla.w_q);
            }
            if (cfg_.d_rope > 0) {
                fn(p + "attn.w_qr", lw.mla.w_qr);
                fn(p + "attn.w_kr", lw.mla.w_kr);
            }
            fn(p + "attn.w_dkv", lw.mla.w_dkv);
            fn(p + "attn.w_uk", lw.mla.w_uk);
            fn(p + "attn.w_uv", lw.mla.w_uv);
            fn(p + "attn.w_o", lw.mla.w_o);
        } else {
            fn(p + "attn.w_q", lw.gqa.w_q);
            fn(p + "attn.w_k", lw.gqa.w_k);
            fn(p + "attn.w_v", lw.gqa.w_v);
            fn(p + "attn.w_o", lw.gqa.w_o);
        }
        fn(p + "ffn.w_up", lw.ffn.w_up);
        if (cfg_.activation == Activation::swiglu) fn(p + "ffn.w_gate", lw.ffn.w_gate);
        fn(p + "ffn.w_down", lw.ffn.w_down);
    }
    fn("final_norm.weight", final_norm_);
    if (!cfg_.tie_embeddings) fn("head.weight", output_head_);
}

std::uint64_t Model::allocated_params() {
    std::uint64_t total = 0;
    for_each_tensor([&](const std::string&, Matrix& m) { total += m.size(); });
    return total;
}

std::vector<std::pair<std::string, std::uint64_t>> Model::tensor_sizes(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, std::uint64_t>> out;
    auto add = [&](const std::string& name, std::uint64_t rows, std::uint64_t cols) {
        out.emplace_back(name, rows * cols);
    };
    add("embed.weight", cfg.vocab_size, cfg.d_model);
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        add(p + "attn_norm.weight", 1, cfg.d_model);
        add(p + "ffn_norm.weight", 1, cfg.d_model);
        if (cfg.is_mla()) {
            const std::uint64_t q_in = cfg.q_rank.value_or(cfg.d_model);
            if (cfg.q_rank) {
                add(p + "attn.w_dq", *cfg.q_rank, cfg.d_model);
                add(p + "attn.w_uq", cfg.n_heads * cfg.d_nope, *cfg.q_rank);
            } else {
                add(p + "attn.w_q", cfg.n_heads * cfg.d_nope, cfg.d_model);
            }
            if (cfg.d_rope > 0) {
                add(p + "attn.w_qr", cfg.n_heads * cfg.d_rope, q_in);
                add(p + "attn.w_kr", cfg.d_rope, cfg.d_model);
            }
            add(p + "attn.w_dkv", cfg.kv_rank, cfg.d_model);
            add(p + "attn.w_uk", cfg.n_heads * cfg.d_nope, cfg.kv_rank);
            add(p + "attn.w_uv", cfg.n_heads * cfg.d_nope, cfg.kv_rank);
            add(p + "attn.w_o", cfg.d_model, cfg.n_heads * cfg.d_nope);
        } else {
            const std::uint64_t dh = cfg.head_dim();
            add(p + "attn.w_q", cfg.n_heads * dh, cfg.d_model);
            add(p + "attn.w_k", cfg.n_kv_heads * dh, cfg.d_model);
            add(p + "attn.w_v", cfg.n_kv_heads * dh, cfg.d_model);
            add(p + "attn.w_o", cfg.d_model, cfg.n_heads * dh);
        }
        add(p + "ffn.w_up", cfg.d_ffn, cfg.d_model);
        if (cfg.activation == Activation::swiglu) add(p + "ffn.w_gate", cfg.d_ffn, cfg.d_model);
        add(p + "ffn.w_down", cfg.d_model, cfg.d_ffn);
    }
    add("final_norm.weight", 1, cfg.d_model);
    if (!cfg.tie_embeddings) add("head.weight", cfg.vocab_size, cfg.d_model);
    return out;
}

} // namespace plmlab
