#include "plmlab/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace plmlab {

double activation_sparsity_measure(const Model& model, std::span<const TokenId> tokens) {
    if (tokens.empty()) throw std::invalid_argument("activation_sparsity_measure: empty stream");
    std::uint64_t zeros = 0, total = 0;
    ForwardOptions opts;
    opts.observe_activations = [&](std::size_t, std::span<const float> x) {
        for (float v : x) {
            zeros += (v == 0.0f);
            ++total;
        }
    };
    KvCaches caches = model.make_caches();
    model.prefill(tokens, caches, opts);
    return static_cast<double>(zeros) / static_cast<double>(total);
}

std::uint64_t masked_param_count(std::size_t n_layers, std::size_t d_ffn, std::size_t d_model,
                                 double rate) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("masked_param_count: rate in [0,1]");
    const double pool = static_cast<double>(n_layers) * static_cast<double>(d_ffn) *
                        static_cast<double>(d_model);
    return static_cast<std::uint64_t>(std::llround(rate * pool));
}

ExecutedParams executed_params(const ModelConfig& cfg, double rate) {
    const ParamCounts counts = count_params(cfg);
    ExecutedParams e;
    e.masked = masked_param_count(cfg.n_layers, cfg.d_ffn, cfg.d_model, rate);
    e.executed = counts.total() - e.masked;
    e.ratio = static_cast<double>(e.executed) / static_cast<double>(counts.total());
    return e;
}

namespace {

// Per-layer sorted |activation| samples from one calibration pass.
std::vector<std::vector<float>> calibrate_magnitudes(const Model& model,
                                                     std::span<const TokenId> tokens) {
    std::vector<std::vector<float>> mags(model.config().n_layers);
    ForwardOptions opts;
    opts.observe_activations = [&](std::size_t layer, std::span<const float> x) {
        auto& m = mags[layer];
        for (float v : x) m.push_back(std::fabs(v));
    };
    KvCaches caches = model.make_caches();
    model.prefill(tokens, caches, opts);
    for (auto& m : mags) std::sort(m.begin(), m.end());
    return mags;
}

// Threshold T_r: the ceil(r*K)-th smallest magnitude, so at least r*K
// entries satisfy |x| <= T_r. r = 0 maps to a sentinel below any |x|.
float threshold_for_rate(const std::vector<float>& sorted_mags, double r) {
    const std::size_t k =
        static_cast<std::size_t>(std::ceil(r * static_cast<double>(sorted_mags.size())));
    if (k == 0) return -1.0f;
    return sorted_mags[k - 1];
}

} // namespace

SweepResult sparsity_sweep(const Model& model, std::span<const TokenId> tokens,
                           const std::vector<double>& rates) {
    if (tokens.size() < 2) throw std::invalid_argument("sparsity_sweep: stream length must be >= 2");
    for (double r : rates)
        if (r < 0.0 || r > 1.0) throw std::invalid_argument("sparsity_sweep: rate in [0,1]");

    const auto mags = calibrate_magnitudes(model, tokens);
    const double base_ppl = model.perplexity(tokens);

    SweepResult result;
    result.baseline_ppl = base_ppl;
    const ModelConfig& cfg = model.config();

    for (double r : rates) {
        std::vector<float> thresholds(cfg.n_layers);
        double threshold_sum = 0.0;
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            thresholds[l] = threshold_for_rate(mags[l], r);
            threshold_sum += std::max(0.0f, thresholds[l]);
        }

        std::uint64_t zeros = 0, total = 0;
        ForwardOptions opts;
        opts.ffn_mask_thresholds = &thresholds;
        opts.observe_activations = [&](std::size_t layer, std::span<const float> x) {
            // The observer fires before masking; entries at or below the
            // layer threshold become exact zeros afterwards.
            const float t = thresholds[layer];
            for (float v : x) {
                zeros += (v == 0.0f) || (std::fabs(v) <= t);
                ++total;
            }
        };
        KvCaches caches = model.make_caches();
        Matrix logits = model.prefill(tokens, caches, opts);
        const double ppl = perplexity_from_logits(logits, tokens);

        const ExecutedParams ep = executed_params(cfg, r);
        SweepRow row;
        row.r = r;
        row.threshold = threshold_sum / static_cast<double>(cfg.n_layers);
        row.ppl = ppl;
        row.ppl_delta = ppl - base_ppl;
        row.zero_fraction = static_cast<double>(zeros) / static_cast<double>(total);
        row.masked_params = ep.masked;
        row.executed_params = ep.executed;
        result.rows.push_back(row);
    }
    return result;
}

std::optional<SparsityReport> determine_sparsity_rate(const Model& model,
                                                      std::span<const TokenId> tokens,
                                                      const std::vector<double>& rates,
                                                      const SparsityOptions& opts) {
    if (rates.empty()) throw std::invalid_argument("determine_sparsity_rate: no candidate rates");
    const SweepResult sweep = sparsity_sweep(model, tokens, rates);

    const SweepRow* chosen = nullptr;
    if (opts.literal_direction) {
        for (const auto& row : sweep.rows) {
            if (sweep.baseline_ppl - row.ppl >= opts.delta_ppl) {
                chosen = &row;
                break;
            }
        }
    } else {
        for (const auto& row : sweep.rows) {
            if (row.ppl - sweep.baseline_ppl <= opts.delta_ppl) {
                if (!chosen || row.r > chosen->r) chosen = &row;
            }
        }
    }
    if (!chosen) return std::nullopt;

    SparsityReport rep;
    rep.rate = chosen->r;
    rep.threshold = chosen->threshold;
    rep.baseline_ppl = sweep.baseline_ppl;
    rep.masked_ppl = chosen->ppl;
    rep.zero_fraction = chosen->zero_fraction;
    rep.masked_params = chosen->masked_params;
    rep.executed_params = chosen->executed_params;
    rep.executed_ratio = static_cast<double>(chosen->executed_params) /
                         static_cast<double>(count_params(model.config()).total());
    return rep;
}

std::string sweep_csv(const SweepResult& sweep) {
    std::ostringstream out;
    out << "r,threshold,ppl,ppl_delta,zero_fraction,masked_params,executed_params\n";
    out.precision(9);
    for (const auto& row : sweep.rows) {
        out << row.r << ',' << row.threshold << ',' << row.ppl << ',' << row.ppl_delta << ','
            << row.zero_fraction << ',' << row.masked_params << ',' << row.executed_params << '\n';
    }
    return out.str();
}

} // namespace plmlab
