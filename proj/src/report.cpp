#include "plmlab/report.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace plmlab {

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    throw std::invalid_argument("unknown report format: " + s);
}

std::string emit_csv(const std::vector<BenchRecord>& records) {
    std::ostringstream out;
    out << kBenchCsvHeader << '\n';
    out.precision(6);
    out << std::fixed;
    for (const auto& r : records) {
        const struct {
            const char* phase;
            const PhaseStats* stats;
        } phases[2] = {{"prefill", &r.prefill}, {"decode", &r.decode}};
        for (const auto& p : phases) {
            out << r.model_name << ',' << to_string(r.quant) << ',' << p.phase << ','
                << p.stats->tokens << ',' << p.stats->tps_mean << ',' << p.stats->tps_std << ','
                << r.peak_resident_bytes << ',' << p.stats->macs << ',' << r.cache_bytes_final
                << '\n';
        }
    }
    return out.str();
}

namespace {

using nlohmann::json;

json phase_to_json(const PhaseStats& p) {
    return json{{"tokens", p.tokens}, {"tps_mean", p.tps_mean}, {"tps_std", p.tps_std}, {"macs", p.macs}};
}

PhaseStats phase_from_json(const json& j) {
    PhaseStats p;
    p.tokens = j.at("tokens").get<std::size_t>();
    p.tps_mean = j.at("tps_mean").get<double>();
    p.tps_std = j.at("tps_std").get<double>();
    p.macs = j.at("macs").get<std::uint64_t>();
    return p;
}

} // namespace

std::string emit_json(const std::vector<BenchRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        json j;
        j["model"] = r.model_name;
        j["quant"] = to_string(r.quant);
        j["trials"] = r.trials;
        j["warmup_trials"] = r.warmup_trials;
        j["offload_layers"] = r.offload_layers;
        j["seed"] = r.seed;
        j["prefill"] = phase_to_json(r.prefill);
        j["decode"] = phase_to_json(r.decode);
        j["peak_resident_bytes"] = r.peak_resident_bytes;
        j["weight_payload_bytes"] = r.weight_payload_bytes;
        j["macs_total"] = r.macs_total;
        j["cache_bytes_final"] = r.cache_bytes_final;
        j["io_bytes_per_decode_step"] = r.io_bytes_per_decode_step;
        j["io_bytes_total"] = r.io_bytes_total;
        j["generated_tokens"] = r.generated;
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

std::vector<BenchRecord> records_from_json(const std::string& json_text) {
    json arr;
    try {
        arr = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("report: invalid JSON: ") + e.what());
    }
    if (!arr.is_array()) throw std::invalid_argument("report: top-level array required");

    std::vector<BenchRecord> records;
    for (const auto& j : arr) {
        BenchRecord r;
        r.model_name = j.at("model").get<std::string>();
        r.quant = quant_from_string(j.at("quant").get<std::string>());
        r.trials = j.at("trials").get<std::size_t>();
        r.warmup_trials = j.at("warmup_trials").get<std::size_t>();
        r.offload_layers = j.at("offload_layers").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.prefill = phase_from_json(j.at("prefill"));
        r.decode = phase_from_json(j.at("decode"));
        r.peak_resident_bytes = j.at("peak_resident_bytes").get<std::uint64_t>();
        r.weight_payload_bytes = j.at("weight_payload_bytes").get<std::uint64_t>();
        r.macs_total = j.at("macs_total").get<std::uint64_t>();
        r.cache_bytes_final = j.at("cache_bytes_final").get<std::uint64_t>();
        r.io_bytes_per_decode_step = j.at("io_bytes_per_decode_step").get<std::uint64_t>();
        r.io_bytes_total = j.at("io_bytes_total").get<std::uint64_t>();
        r.generated = j.at("generated_tokens").get<std::vector<TokenId>>();
        records.push_back(std::move(r));
    }
    return records;
}

void write_report(const std::vector<BenchRecord>& records, ReportFormat format,
                  const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_report: cannot open " + path);
    out << (format == ReportFormat::csv ? emit_csv(records) : emit_json(records));
    if (!out) throw std::runtime_error("write_report: write failed for " + path);
}

} // namespace plmlab
