#pragma once

#include <string>
#include <vector>

#include "pfedgrp/orchestrator.hpp"

namespace pfedgrp {

// Locale-independent formatting: '.' decimal separator, 17 significant
// digits, enough to round-trip any double exactly.
std::string format_double(double v);

// Writes iaa.csv, summary.json and iaa.svg into out_dir. The CSV header is
// exactly `method,scenario,seed,round,iaa`; summary.json carries aa/afm per
// (method, seed) plus per-method mean and sample standard deviation.
void emit_results(const std::vector<RunRecord>& records, const std::string& out_dir);

// Rebuilds the records held in an iaa.csv (timings and per-client detail are
// not part of the file and come back empty).
std::vector<RunRecord> parse_iaa_csv(const std::string& path);

std::string render_iaa_svg(const std::vector<RunRecord>& records);

}  // namespace pfedgrp
