#include "plmlab/ffn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace plmlab {

void FfnConfig::validate() const {
    if (d_model == 0 || d_ffn == 0) throw std::invalid_argument("FfnConfig: dimensions must be positive");
}

Matrix ffn_forward(const FfnConfig& cfg, const FfnWeights& w, const Matrix& h, OpCounter* counter,
                   std::size_t layer_index, const FfnHooks& hooks, int threads) {
    cfg.validate();
    if (h.cols() != cfg.d_model) throw std::invalid_argument("ffn_forward: hidden size mismatch");
    if (w.w_up.rows() != cfg.d_ffn || w.w_up.cols() != cfg.d_model)
        throw std::invalid_argument("ffn_forward: w_up shape mismatch");
    if (w.w_down.rows() != cfg.d_model || w.w_down.cols() != cfg.d_ffn)
        throw std::invalid_argument("ffn_forward: w_down shape mismatch");
    if (cfg.gated() && (w.w_gate.rows() != cfg.d_ffn || w.w_gate.cols() != cfg.d_model))
        throw std::invalid_argument("ffn_forward: w_gate shape mismatch");

    OpCounter::LayerOps* ops = nullptr;
    if (counter) {
        counter->ensure_layers(layer_index + 1);
        ops = &counter->layers[layer_index];
    }
    const std::size_t n = h.rows();

    Matrix x = matmul(h, w.w_up.transposed(), threads); // [N x d_ffn]
    if (ops) ops->ffn += static_cast<std::uint64_t>(n) * cfg.d_ffn * cfg.d_model;

    if (cfg.gated()) {
        Matrix g = matmul(h, w.w_gate.transposed(), threads);
        if (ops) ops->ffn += static_cast<std::uint64_t>(n) * cfg.d_ffn * cfg.d_model;
        for (std::size_t i = 0; i < x.size(); ++i) x.storage()[i] = silu(g.storage()[i]) * x.storage()[i];
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) x.storage()[i] = relu2(x.storage()[i]);
    }

    if (hooks.observe && *hooks.observe)
        for (std::size_t r = 0; r < n; ++r) (*hooks.observe)(x.row(r));
    if (hooks.mask_threshold) {
        const float t = *hooks.mask_threshold;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::fabs(x.storage()[i]) <= t) x.storage()[i] = 0.0f;
    }

    Matrix out = matmul(x, w.w_down.transposed(), threads);
    if (ops) ops->ffn += static_cast<std::uint64_t>(n) * cfg.d_model * cfg.d_ffn;
    return out;
}

MaskResult mask_smallest(std::span<const float> x, double r) {
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("mask_smallest: r must be in [0, 1]");
    const std::size_t len = x.size();
    const std::size_t k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(len)));

    MaskResult res;
    res.masked.assign(x.begin(), x.end());
    res.mask.assign(len, 1);
    if (k == 0) return res;

    std::vector<std::size_t> order(len);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(x[a]) < std::fabs(x[b]);
    });
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t idx = order[i];
        res.masked[idx] = 0.0f;
        res.mask[idx] = 0;
        res.threshold = std::max(res.threshold, std::fabs(x[idx]));
    }
    return res;
}

} // namespace plmlab
