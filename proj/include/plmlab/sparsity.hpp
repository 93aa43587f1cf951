#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plmlab/model.hpp"

namespace plmlab {

struct SparsityReport {
    double rate = 0.0;
    double threshold = 0.0; // mean of the per-layer thresholds
    double baseline_ppl = 0.0;
    double masked_ppl = 0.0;
    double zero_fraction = 0.0; // post-mask exact zeros on the eval stream
    std::uint64_t masked_params = 0;
    std::uint64_t executed_params = 0;
    double executed_ratio = 0.0;
};

// Fraction of post-activation FFN entries that are exactly zero, averaged
// over tokens and layers of a forward pass.
double activation_sparsity_measure(const Model& model, std::span<const TokenId> tokens);

struct ExecutedParams {
    std::uint64_t masked = 0;
    std::uint64_t executed = 0;
    double ratio = 0.0; // executed / total
};

// Down-projection rows whose activation input is zero can be skipped, so
// the maskable pool is n_layers * d_ffn * d_model.
std::uint64_t masked_param_count(std::size_t n_layers, std::size_t d_ffn, std::size_t d_model,
                                 double rate);
ExecutedParams executed_params(const ModelConfig& cfg, double rate);

struct SparsityOptions {
    double delta_ppl = 1.0;
    // The literal acceptance direction requires masking to lower perplexity
    // by delta_ppl and returns the first qualifying rate; the default keeps
    // the perplexity increase bounded by delta_ppl and returns the largest
    // qualifying rate.
    bool literal_direction = false;
};

struct SweepRow {
    double r = 0.0;
    double threshold = 0.0;
    double ppl = 0.0;
    double ppl_delta = 0.0;
    double zero_fraction = 0.0;
    std::uint64_t masked_params = 0;
    std::uint64_t executed_params = 0;
};

// Calibrates per-layer magnitude thresholds on `tokens`, evaluates the
// masked model at every candidate rate, and returns one row per rate
// (baseline perplexity rides along in `baseline_ppl`).
struct SweepResult {
    double baseline_ppl = 0.0;
    std::vector<SweepRow> rows;
};

SweepResult sparsity_sweep(const Model& model, std::span<const TokenId> tokens,
                           const std::vector<double>& rates);

// Sweep + selection rule; empty optional when no candidate qualifies.
std::optional<SparsityReport> determine_sparsity_rate(const Model& model,
                                                      std::span<const TokenId> tokens,
                                                      const std::vector<double>& rates,
                                                      const SparsityOptions& opts = {});

std::string sweep_csv(const SweepResult& sweep);

} // namespace plmlab
