#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plmlab/model.hpp"

namespace plmlab {

enum class QuantLevel { fp16, q8, q4 };

int quant_bit_width(QuantLevel q);
std::string to_string(QuantLevel q);
QuantLevel quant_from_string(const std::string& s);

// One benchmark configuration, mirroring the measurement protocol:
// a fixed-size prefill followed by greedy generation, repeated over
// timed trials after discarded warmup runs.
struct BenchSpec {
    std::string model_name = "plm-micro";
    ModelConfig config;
    QuantLevel quant = QuantLevel::fp16;
    std::size_t prefill_tokens = 512;
    std::size_t gen_tokens = 128;
    std::size_t trials = 5;
    std::size_t warmup_trials = 1;
    std::size_t offload_layers = 0; // layers re-read from storage per use; 0 = fully resident
    std::uint64_t seed = 0;
    int threads = 1;
    std::string weight_file; // required when offload_layers > 0
    // Weight-memory ceiling for the run; 0 reads MemAvailable from
    // /proc/meminfo (no check when that is unreadable).
    std::uint64_t memory_budget_bytes = 0;

    void validate() const;
};

struct PhaseStats {
    std::size_t tokens = 0;
    double tps_mean = 0.0;
    double tps_std = 0.0; // sample std (n-1)
    std::uint64_t macs = 0;
};

struct BenchRecord {
    // spec echo
    std::string model_name;
    QuantLevel quant = QuantLevel::fp16;
    std::size_t trials = 0;
    std::size_t warmup_trials = 0;
    std::size_t offload_layers = 0;
    std::uint64_t seed = 0;

    PhaseStats prefill;
    PhaseStats decode;
    std::uint64_t peak_resident_bytes = 0;  // resident weights + final caches
    std::uint64_t weight_payload_bytes = 0; // quantized weight payload only
    std::uint64_t macs_total = 0;
    std::uint64_t cache_bytes_final = 0;
    std::uint64_t io_bytes_per_decode_step = 0; // offload runs only
    std::uint64_t io_bytes_total = 0;
    std::vector<TokenId> generated;
};

// Quantizes every weight tensor in place at the given width and returns
// the packed payload byte count (scale vectors are reported separately).
struct QuantizedModelBytes {
    std::uint64_t payload = 0;
    std::uint64_t scales = 0;
};
QuantizedModelBytes quantize_model_weights(Model& model, QuantLevel quant);

BenchRecord run_latency_bench(const BenchSpec& spec);

// Same protocol, but the first `offload_layers` layers are re-read from
// `weight_file` before every use; the file must exist (save_weights).
BenchRecord run_offload_bench(const BenchSpec& spec);

} // namespace plmlab
