#include "plmlab/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "plmlab/bench.hpp"
#include "plmlab/cost_model.hpp"
#include "plmlab/model.hpp"
#include "plmlab/preference.hpp"
#include "plmlab/report.hpp"
#include "plmlab/rng.hpp"
#include "plmlab/schedule.hpp"
#include "plmlab/sparsity.hpp"

namespace plmlab {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_or_print(const std::string& text, const std::string& out_path, std::ostream& out) {
    if (out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + out_path);
    f << text;
    if (!f) throw std::runtime_error("write failed for " + out_path);
}

struct ModelSelection {
    std::string preset_name;
    std::string config_path;

    ModelConfig resolve() const {
        if (!config_path.empty()) return model_config_from_json(read_file(config_path));
        if (!preset_name.empty()) return preset(preset_name);
        throw std::runtime_error("one of --preset or --config is required");
    }
    std::string display_name() const { return config_path.empty() ? preset_name : config_path; }
};

void add_model_options(CLI::App* cmd, ModelSelection& sel) {
    cmd->add_option("--preset", sel.preset_name, "built-in preset name");
    cmd->add_option("--config", sel.config_path, "model config JSON file");
}

std::vector<TokenId> synthetic_tokens(const ModelConfig& cfg, std::size_t count, std::uint64_t seed) {
    Rng rng(seed ^ 0x70C3ED5ull);
    std::vector<TokenId> tokens(count);
    for (auto& t : tokens) t = static_cast<TokenId>(rng.next_below(cfg.vocab_size));
    return tokens;
}

nlohmann::json cost_report_json(const CostReport& r, bool with_profile) {
    nlohmann::json j;
    j["phase"] = to_string(r.phase);
    j["macs"] = r.macs;
    j["flops"] = r.flops;
    j["cache_bytes"] = r.cache_bytes;
    j["attn_linear_macs"] = r.attn_linear_macs;
    j["attn_quadratic_macs"] = r.attn_quadratic_macs;
    j["ffn_macs"] = r.ffn_macs;
    if (with_profile) {
        j["io_seconds"] = r.io_seconds;
        j["compute_seconds"] = r.compute_seconds;
        j["dominant"] = r.dominant == CostReport::Dominant::io ? "io" : "compute";
    }
    return j;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"desk-scale lab for latent-attention edge LLM runtimes"};
    app.require_subcommand(1);

    // --- params ---
    auto* params_cmd = app.add_subcommand("params", "closed-form parameter counts");
    ModelSelection params_sel;
    add_model_options(params_cmd, params_sel);

    // --- cost ---
    auto* cost_cmd = app.add_subcommand("cost", "analytic MAC/FLOP/cache cost report");
    ModelSelection cost_sel;
    add_model_options(cost_cmd, cost_sel);
    std::string cost_phase = "prefill";
    std::uint64_t cost_n = 128;
    int cost_bits = 16;
    double cost_io = 0.0, cost_flops = 0.0;
    std::string cost_out;
    cost_cmd->add_option("--phase", cost_phase, "prefill|decode")->check(CLI::IsMember({"prefill", "decode"}));
    cost_cmd->add_option("--n", cost_n, "sequence length / generate position");
    cost_cmd->add_option("--bits", cost_bits, "cache bit width")->check(CLI::IsMember({4, 8, 16}));
    cost_cmd->add_option("--io-bytes-per-sec", cost_io, "hardware profile IO rate");
    cost_cmd->add_option("--flops-per-sec", cost_flops, "hardware profile compute rate");
    cost_cmd->add_option("--out", cost_out, "output path (default stdout)");

    // --- cache ---
    auto* cache_cmd = app.add_subcommand("cache", "cache bytes read when generating token N");
    ModelSelection cache_sel;
    add_model_options(cache_cmd, cache_sel);
    std::uint64_t cache_n = 4096;
    int cache_bits = 16;
    cache_cmd->add_option("--n", cache_n, "generate position (cache holds N-1 tokens)");
    cache_cmd->add_option("--bits", cache_bits, "cache bit width")->check(CLI::IsMember({4, 8, 16}));

    // --- search ---
    auto* search_cmd = app.add_subcommand("search", "rank the sandbox candidates");
    std::uint64_t search_n = 128;
    std::string search_sort = "macs";
    std::string search_format = "csv";
    std::string search_out;
    search_cmd->add_option("--n", search_n, "token budget");
    search_cmd->add_option("--sort", search_sort, "macs|flops|params|cache|macs-per-param")
        ->check(CLI::IsMember({"macs", "flops", "params", "cache", "macs-per-param"}));
    search_cmd->add_option("--format", search_format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    search_cmd->add_option("--out", search_out, "output path (default stdout)");

    // --- bench ---
    auto* bench_cmd = app.add_subcommand("bench", "latency benchmark (prefill + greedy decode)");
    ModelSelection bench_sel;
    add_model_options(bench_cmd, bench_sel);
    std::string bench_quant = "all";
    BenchSpec bench_spec;
    std::string bench_format = "csv";
    std::string bench_out;
    bench_cmd->add_option("--quant", bench_quant, "fp16|q8|q4|all")
        ->check(CLI::IsMember({"fp16", "q8", "q4", "all"}));
    bench_cmd->add_option("--prefill", bench_spec.prefill_tokens, "prompt tokens (default 512)");
    bench_cmd->add_option("--gen", bench_spec.gen_tokens, "generated tokens (default 128)");
    bench_cmd->add_option("--trials", bench_spec.trials, "timed trials (default 5)");
    bench_cmd->add_option("--warmup", bench_spec.warmup_trials, "discarded warmup trials (default 1)");
    bench_cmd->add_option("--seed", bench_spec.seed, "rng seed");
    bench_cmd->add_option("--offload", bench_spec.offload_layers,
                          "layers re-read from storage per use (0 = resident)");
    bench_cmd->add_option("--weight-file", bench_spec.weight_file, "weight file for offload runs");
    bench_cmd->add_option("--threads", bench_spec.threads,
                          "matmul threads (>1 invalidates golden timings)");
    bench_cmd->add_option("--format", bench_format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    bench_cmd->add_option("--out", bench_out, "output path (default stdout)");

    // --- sparsity ---
    auto* sparsity_cmd = app.add_subcommand("sparsity", "activation sparsity experiments");
    sparsity_cmd->require_subcommand(1);
    ModelSelection sparsity_sel;
    std::size_t sparsity_tokens = 64;
    std::uint64_t sparsity_seed = 0;
    std::vector<double> sparsity_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double sparsity_delta = 1.0;
    bool sparsity_literal = false;
    std::string sparsity_out;
    auto* measure_cmd = sparsity_cmd->add_subcommand("measure", "exact-zero fraction of a forward pass");
    auto* sweep_cmd = sparsity_cmd->add_subcommand("sweep", "perplexity vs masking rate CSV");
    auto* determine_cmd = sparsity_cmd->add_subcommand("determine", "largest rate within the ppl budget");
    for (CLI::App* c : {measure_cmd, sweep_cmd, determine_cmd}) {
        ModelSelection* sel = &sparsity_sel;
        c->add_option("--preset", sel->preset_name, "built-in preset name");
        c->add_option("--config", sel->config_path, "model config JSON file");
        c->add_option("--tokens", sparsity_tokens, "eval stream length (synthetic)");
        c->add_option("--seed", sparsity_seed, "rng seed");
    }
    for (CLI::App* c : {sweep_cmd, determine_cmd}) {
        c->add_option("--rates", sparsity_rates, "candidate rates, ascending");
        c->add_option("--out", sparsity_out, "output path (default stdout)");
    }
    determine_cmd->add_option("--delta-ppl", sparsity_delta, "perplexity budget (default 1)");
    determine_cmd->add_flag("--literal", sparsity_literal,
                            "require a perplexity DROP of delta-ppl (literal direction)");

    // --- schedule ---
    auto* schedule_cmd = app.add_subcommand("schedule", "learning-rate schedule CSV (step, lr)");
    WsdcSchedule sched;
    sched.total_steps = 10000;
    sched.stable_end_step = 7000;
    sched.decay_end_step = 9000;
    std::uint64_t sched_stride = 1;
    std::string sched_out;
    std::uint64_t sched_cosine_start = 0;
    double sched_cosine_end_lr = -1.0;
    schedule_cmd->add_option("--total-steps", sched.total_steps, "total steps");
    schedule_cmd->add_option("--warmup-frac", sched.warmup_fraction, "warmup fraction (default 0.01)");
    schedule_cmd->add_option("--peak-lr", sched.peak_lr, "peak learning rate (default 3e-4)");
    schedule_cmd->add_option("--decay-end-lr", sched.decay_end_lr, "decay target (default 3e-5)");
    schedule_cmd->add_option("--stable-end", sched.stable_end_step, "last step of the stable phase");
    schedule_cmd->add_option("--decay-end", sched.decay_end_step, "last step of the decay phase");
    schedule_cmd->add_option("--constant-lr", sched.constant_lr, "constant floor (default 3e-5)");
    schedule_cmd->add_option("--cosine-start", sched_cosine_start, "optional final-cosine start step");
    schedule_cmd->add_option("--cosine-end-lr", sched_cosine_end_lr, "optional final-cosine end lr");
    schedule_cmd->add_option("--stride", sched_stride, "emit every k-th step");
    schedule_cmd->add_option("--out", sched_out, "output path (default stdout)");

    // --- prefloss ---
    auto* prefloss_cmd = app.add_subcommand("prefloss", "preference losses over a JSON batch");
    std::string prefloss_file;
    LossParams loss_params;
    prefloss_cmd->add_option("--batch", prefloss_file, "JSON batch file")->required();
    prefloss_cmd->add_option("--alpha", loss_params.alpha, "refine weight (default 0.8)");
    prefloss_cmd->add_option("--beta-dpo", loss_params.beta_dpo, "DPO beta (default 0.1)");
    prefloss_cmd->add_option("--beta-refine", loss_params.beta_refine, "refine beta (default 0.01)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return 0;
        }
        err << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (params_cmd->parsed()) {
            const ModelConfig cfg = params_sel.resolve();
            const ParamCounts counts = count_params(cfg);
            out << "embedding_params=" << counts.embedding << "\n";
            out << "non_embedding_params=" << counts.non_embedding << "\n";
            out << "total_params=" << counts.total() << "\n";
            return 0;
        }

        if (cost_cmd->parsed()) {
            const ModelConfig cfg = cost_sel.resolve();
            HardwareProfile profile{cost_io, cost_flops, "cli"};
            const bool with_profile = cost_io > 0.0 && cost_flops > 0.0;
            const Phase phase = cost_phase == "prefill" ? Phase::prefill : Phase::decode;
            const CostReport r = phase_cost(cfg, phase, cost_n, cost_bits, with_profile ? &profile : nullptr);
            write_or_print(cost_report_json(r, with_profile).dump(2) + "\n", cost_out, out);
            return 0;
        }

        if (cache_cmd->parsed()) {
            const ModelConfig cfg = cache_sel.resolve();
            const CostReport r = phase_cost(cfg, Phase::decode, cache_n, cache_bits);
            out << r.cache_bytes << "\n";
            return 0;
        }

        if (search_cmd->parsed()) {
            RankKey key = RankKey::macs;
            if (search_sort == "flops") key = RankKey::flops;
            else if (search_sort == "params") key = RankKey::params;
            else if (search_sort == "cache") key = RankKey::cache_bytes;
            else if (search_sort == "macs-per-param") key = RankKey::macs_per_param;
            const auto rows = rank_architectures(sandbox_candidates(), search_n, key);
            if (search_format == "csv") {
                std::ostringstream csv;
                csv << "name,params_nonemb,macs,flops,macs_per_param,cache_bytes,rank\n";
                csv.precision(6);
                csv << std::fixed;
                for (const auto& r : rows)
                    csv << r.name << ',' << r.params_non_embedding << ',' << r.macs << ',' << r.flops
                        << ',' << r.macs_per_param << ',' << r.cache_bytes << ',' << r.rank << '\n';
                write_or_print(csv.str(), search_out, out);
            } else {
                nlohmann::json arr = nlohmann::json::array();
                for (const auto& r : rows) {
                    arr.push_back({{"name", r.name},
                                   {"params_nonemb", r.params_non_embedding},
                                   {"macs", r.macs},
                                   {"flops", r.flops},
                                   {"macs_per_param", r.macs_per_param},
                                   {"cache_bytes", r.cache_bytes},
                                   {"rank", r.rank}});
                }
                write_or_print(arr.dump(2) + "\n", search_out, out);
            }
            return 0;
        }

        if (bench_cmd->parsed()) {
            bench_spec.config = bench_sel.resolve();
            bench_spec.model_name = bench_sel.display_name();
            std::vector<QuantLevel> levels;
            if (bench_quant == "all")
                levels = {QuantLevel::fp16, QuantLevel::q8, QuantLevel::q4};
            else
                levels = {quant_from_string(bench_quant)};
            std::vector<BenchRecord> records;
            for (QuantLevel q : levels) {
                BenchSpec s = bench_spec;
                s.quant = q;
                records.push_back(s.offload_layers > 0 ? run_offload_bench(s) : run_latency_bench(s));
            }
            const ReportFormat fmt = report_format_from_string(bench_format);
            write_or_print(fmt == ReportFormat::csv ? emit_csv(records) : emit_json(records),
                           bench_out, out);
            return 0;
        }

        if (sparsity_cmd->parsed()) {
            const ModelConfig cfg = sparsity_sel.resolve();
            const Model model = Model::build(cfg, sparsity_seed);
            const auto tokens = synthetic_tokens(cfg, sparsity_tokens, sparsity_seed);
            if (measure_cmd->parsed()) {
                out << "zero_fraction=" << activation_sparsity_measure(model, tokens) << "\n";
                return 0;
            }
            if (sweep_cmd->parsed()) {
                const SweepResult sweep = sparsity_sweep(model, tokens, sparsity_rates);
                write_or_print(sweep_csv(sweep), sparsity_out, out);
                return 0;
            }
            SparsityOptions opts;
            opts.delta_ppl = sparsity_delta;
            opts.literal_direction = sparsity_literal;
            const auto report = determine_sparsity_rate(model, tokens, sparsity_rates, opts);
            if (!report) {
                out << "no sparsity rate satisfies the condition\n";
                return 0;
            }
            out << "rate=" << report->rate << "\n"
                << "threshold=" << report->threshold << "\n"
                << "baseline_ppl=" << report->baseline_ppl << "\n"
                << "masked_ppl=" << report->masked_ppl << "\n"
                << "zero_fraction=" << report->zero_fraction << "\n"
                << "masked_params=" << report->masked_params << "\n"
                << "executed_params=" << report->executed_params << "\n"
                << "executed_ratio=" << report->executed_ratio << "\n";
            return 0;
        }

        if (schedule_cmd->parsed()) {
            if (sched_cosine_end_lr >= 0.0)
                sched.final_cosine = WsdcSchedule::FinalCosine{sched_cosine_start, sched_cosine_end_lr};
            std::ostringstream csv;
            csv << "step,lr\n";
            for (std::uint64_t s = 0; s <= sched.total_steps; s += sched_stride)
                csv << s << ',' << wsdc_lr(s, sched) << '\n';
            write_or_print(csv.str(), sched_out, out);
            return 0;
        }

        if (prefloss_cmd->parsed()) {
            const PreferenceBatch batch = preference_batch_from_json(read_file(prefloss_file));
            const LossResult dpo = dpo_loss(batch, loss_params.beta_dpo);
            const LossResult refine = refine_loss(batch, loss_params.beta_refine);
            const LossResult aries = aries_loss(batch, loss_params);

            auto check_loss = [&batch](const std::function<LossResult(const PreferenceBatch&)>& fn) {
                const auto coords = policy_coords(batch);
                const LossResult at_point = fn(batch);
                return grad_check(
                    [&](std::span<const double> x) { return fn(with_policy_coords(batch, x)).loss; },
                    at_point.grad, coords);
            };
            const double dpo_err =
                check_loss([&](const PreferenceBatch& b) { return dpo_loss(b, loss_params.beta_dpo); });
            const double refine_err = check_loss(
                [&](const PreferenceBatch& b) { return refine_loss(b, loss_params.beta_refine); });
            const double aries_err =
                check_loss([&](const PreferenceBatch& b) { return aries_loss(b, loss_params); });

            out << "dpo_loss=" << dpo.loss << "\n"
                << "refine_loss=" << refine.loss << "\n"
                << "aries_loss=" << aries.loss << "\n"
                << "implicit_reward_accuracy=" << implicit_reward_accuracy(batch, loss_params.beta_dpo)
                << "\n"
                << "grad_check_dpo=" << dpo_err << "\n"
                << "grad_check_refine=" << refine_err << "\n"
                << "grad_check_aries=" << aries_err << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

} // namespace plmlab
