#pragma once

#include <string>
#include <vector>

#include "plmlab/bench.hpp"

namespace plmlab {

enum class ReportFormat { json, csv };

ReportFormat report_format_from_string(const std::string& s);

// CSV: fixed header, one row per (record, phase).
inline constexpr const char* kBenchCsvHeader =
    "model,quant,phase,tokens,tps_mean,tps_std,peak_bytes,macs,cache_bytes";

std::string emit_csv(const std::vector<BenchRecord>& records);
std::string emit_json(const std::vector<BenchRecord>& records);
std::vector<BenchRecord> records_from_json(const std::string& json_text);

void write_report(const std::vector<BenchRecord>& records, ReportFormat format,
                  const std::string& path);

} // namespace plmlab
