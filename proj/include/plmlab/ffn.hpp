#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "plmlab/matrix.hpp"
#include "plmlab/op_counter.hpp"

namespace plmlab {

enum class Activation { relu2, swiglu };

// Feed-forward geometry. relu2 is the gate-free path (up + down only);
// swiglu keeps the conventional gated form for baselines.
struct FfnConfig {
    std::size_t d_model = 0;
    std::size_t d_ffn = 0;
    Activation activation = Activation::relu2;

    bool gated() const { return activation == Activation::swiglu; }
    void validate() const;
};

struct FfnWeights {
    Matrix w_up;   // [d_ffn x d_model]
    Matrix w_gate; // [d_ffn x d_model], swiglu only
    Matrix w_down; // [d_model x d_ffn]
};

inline float relu2(float x) { return x > 0.0f ? x * x : 0.0f; }
inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

// Hooks into the hidden activation x (post act_fn, pre down-projection).
// `mask_threshold` zeroes entries with |x_i| <= threshold; `observe` sees
// the activation values before masking.
struct FfnHooks {
    std::optional<float> mask_threshold;
    std::function<void(std::span<const float>)>* observe = nullptr;
};

Matrix ffn_forward(const FfnConfig& cfg, const FfnWeights& w, const Matrix& h,
                   OpCounter* counter = nullptr, std::size_t layer_index = 0,
                   const FfnHooks& hooks = {}, int threads = 1);

struct MaskResult {
    std::vector<float> masked;
    float threshold = 0.0f;
    std::vector<std::uint8_t> mask; // 1 = kept, 0 = zeroed
};

// Zeroes the ceil(r*len) smallest-magnitude entries; ties go to the lower
// index. threshold is the largest |x_i| among the zeroed entries (0 when
// nothing is masked).
MaskResult mask_smallest(std::span<const float> x, double r);

} // namespace plmlab
