#include "plmlab/bench.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "plmlab/attention.hpp"
#include "plmlab/quant.hpp"
#include "plmlab/rng.hpp"
#include "plmlab/weight_io.hpp"

namespace plmlab {

int quant_bit_width(QuantLevel q) {
    switch (q) {
        case QuantLevel::fp16: return 16;
        case QuantLevel::q8: return 8;
        case QuantLevel::q4: return 4;
    }
    return 16;
}

std::string to_string(QuantLevel q) {
    switch (q) {
        case QuantLevel::fp16: return "fp16";
        case QuantLevel::q8: return "q8";
        case QuantLevel::q4: return "q4";
    }
    return "?";
}

QuantLevel quant_from_string(const std::string& s) {
    if (s == "fp16") return QuantLevel::fp16;
    if (s == "q8") return QuantLevel::q8;
    if (s == "q4") return QuantLevel::q4;
    throw std::invalid_argument("unknown quant level: " + s);
}

void BenchSpec::validate() const {
    config.validate();
    if (trials < 1) throw std::invalid_argument("BenchSpec: trials must be >= 1");
    if (prefill_tokens < 1) throw std::invalid_argument("BenchSpec: prefill_tokens must be >= 1");
    if (prefill_tokens + gen_tokens > config.max_seq_len)
        throw std::invalid_argument("BenchSpec: prefill + generation exceeds max_seq_len");
    if (offload_layers > config.n_layers)
        throw std::invalid_argument("BenchSpec: offload_layers exceeds layer count");
    if (offload_layers > 0 && weight_file.empty())
        throw std::invalid_argument("BenchSpec: offload run needs a weight file");
}

QuantizedModelBytes quantize_model_weights(Model& model, QuantLevel quant) {
    const int bits = quant_bit_width(quant);
    QuantizedModelBytes bytes;
    model.for_each_tensor([&](const std::string&, Matrix& m) {
        QuantizedMatrix q = quantize(m, bits);
        bytes.payload += q.payload_bytes();
        bytes.scales += q.scale_bytes();
        m = dequantize(q);
    });
    return bytes;
}

namespace {

std::vector<TokenId> make_prompt(const BenchSpec& spec) {
    Rng rng(spec.seed ^ 0x5EEDF00Dull);
    std::vector<TokenId> prompt(spec.prefill_tokens);
    for (auto& t : prompt) t = static_cast<TokenId>(rng.next_below(spec.config.vocab_size));
    return prompt;
}

std::uint64_t available_memory_bytes() {
    std::ifstream meminfo("/proc/meminfo");
    std::string key;
    std::uint64_t kb = 0;
    while (meminfo >> key >> kb) {
        if (key == "MemAvailable:") return kb * 1024;
        meminfo.ignore(256, '\n');
    }
    return 0;
}

// f32 weights plus one transient quantization copy must fit the budget;
// the walk names the tensor that breaks it.
void check_capacity(const BenchSpec& spec) {
    std::uint64_t budget = spec.memory_budget_bytes;
    if (budget == 0) budget = available_memory_bytes();
    if (budget == 0) return;
    std::uint64_t used = 0;
    for (const auto& [name, elements] : Model::tensor_sizes(spec.config)) {
        used += elements * sizeof(float);
        if (used > budget) {
            throw std::runtime_error("bench: capacity exceeded at tensor '" + name + "' (" +
                                     std::to_string(elements * sizeof(float)) +
                                     " bytes); model weights need " + std::to_string(used) +
                                     "+ bytes against a budget of " + std::to_string(budget));
        }
    }
}

struct TrialTimes {
    std::vector<double> prefill_tps;
    std::vector<double> decode_tps;
};

void fill_stats(PhaseStats& stats, const std::vector<double>& tps) {
    double sum = 0.0;
    for (double v : tps) sum += v;
    stats.tps_mean = sum / static_cast<double>(tps.size());
    if (tps.size() > 1) {
        double ss = 0.0;
        for (double v : tps) ss += (v - stats.tps_mean) * (v - stats.tps_mean);
        stats.tps_std = std::sqrt(ss / static_cast<double>(tps.size() - 1));
    }
}

BenchRecord run_bench(const BenchSpec& spec, bool offload) {
    spec.validate();
    check_capacity(spec);
    const int bits = quant_bit_width(spec.quant);

    Model model = Model::build(spec.config, spec.seed);
    const QuantizedModelBytes weight_bytes = quantize_model_weights(model, spec.quant);

    std::unique_ptr<WeightFileReader> reader;
    std::uint64_t offload_layer_bytes = 0;
    if (offload && spec.offload_layers > 0) {
        save_weights(model, spec.weight_file);
        reader = std::make_unique<WeightFileReader>(spec.weight_file);
        for (std::size_t i = 0; i < spec.offload_layers; ++i)
            offload_layer_bytes += reader->layer_bytes(i);
    }

    const std::vector<TokenId> prompt = make_prompt(spec);

    BenchRecord rec;
    rec.model_name = spec.model_name;
    rec.quant = spec.quant;
    rec.trials = spec.trials;
    rec.warmup_trials = spec.warmup_trials;
    rec.offload_layers = offload ? spec.offload_layers : 0;
    rec.seed = spec.seed;
    rec.prefill.tokens = spec.prefill_tokens;
    rec.decode.tokens = spec.gen_tokens;

    std::uint64_t io_bytes_total = 0;
    LayerWeights scratch;
    ForwardOptions opts;
    opts.threads = spec.threads;
    if (reader) {
        opts.layer_provider = [&](std::size_t layer) -> const LayerWeights* {
            if (layer >= spec.offload_layers) return nullptr;
            scratch = reader->read_layer(layer, &io_bytes_total);
            return &scratch;
        };
    }

    TrialTimes times;
    for (std::size_t trial = 0; trial < spec.warmup_trials + spec.trials; ++trial) {
        GenerateResult gen = model.generate(prompt, spec.gen_tokens, opts);
        if (trial < spec.warmup_trials) continue;

        const std::vector<TokenId> out(gen.tokens.begin() + static_cast<std::ptrdiff_t>(prompt.size()),
                                       gen.tokens.end());
        if (rec.generated.empty()) {
            rec.generated = out;
            rec.prefill.macs = gen.prefill_macs;
            rec.decode.macs = gen.decode_macs;
        } else if (rec.generated != out) {
            throw std::runtime_error("bench: token outputs differ across trials");
        }
        times.prefill_tps.push_back(static_cast<double>(spec.prefill_tokens) / gen.prefill_seconds);
        times.decode_tps.push_back(static_cast<double>(spec.gen_tokens) / gen.decode_seconds);
    }
    fill_stats(rec.prefill, times.prefill_tps);
    fill_stats(rec.decode, times.decode_tps);
    rec.macs_total = rec.prefill.macs + rec.decode.macs;

    const std::size_t final_tokens = spec.prefill_tokens + spec.gen_tokens;
    if (spec.config.is_mla()) {
        rec.cache_bytes_final = mla_cache_bytes(final_tokens, spec.config.kv_rank, spec.config.d_rope,
                                                bits, spec.config.n_layers);
    } else {
        rec.cache_bytes_final = gqa_cache_bytes(final_tokens, spec.config.n_kv_heads,
                                                spec.config.head_dim(), bits, spec.config.n_layers);
    }

    rec.weight_payload_bytes = weight_bytes.payload;
    std::uint64_t resident_payload = weight_bytes.payload + weight_bytes.scales;
    if (reader) {
        // Streamed layers do not stay resident; subtract their quantized
        // share (payload scales uniformly with the per-layer f32 sizes).
        Model fresh = Model::build(spec.config, spec.seed);
        std::uint64_t off_payload = 0, off_scales = 0;
        for (std::size_t i = 0; i < spec.offload_layers; ++i) {
            const std::string p = "layers." + std::to_string(i) + ".";
            fresh.for_each_tensor([&](const std::string& name, Matrix& m) {
                if (name.rfind(p, 0) == 0) {
                    QuantizedMatrix q = quantize(m, bits);
                    off_payload += q.payload_bytes();
                    off_scales += q.scale_bytes();
                }
            });
        }
        resident_payload -= off_payload + off_scales;
        rec.io_bytes_total = io_bytes_total;
        const std::uint64_t forwards =
            (spec.warmup_trials + spec.trials) * (1 + spec.gen_tokens); // prefill + decode steps
        (void)forwards;
        rec.io_bytes_per_decode_step = offload_layer_bytes;
    }
    rec.peak_resident_bytes = resident_payload + rec.cache_bytes_final;
    return rec;
}

} // namespace

BenchRecord run_latency_bench(const BenchSpec& spec) {
    BenchSpec s = spec;
    s.offload_layers = 0;
    return run_bench(s, /*offload=*/false);
}

BenchRecord run_offload_bench(const BenchSpec& spec) {
    if (spec.offload_layers == 0) return run_bench(spec, /*offload=*/false);
    return run_bench(spec, /*offload=*/true);
}

} // namespace plmlab
