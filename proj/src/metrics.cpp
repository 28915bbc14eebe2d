#include "pfedgrp/metrics.hpp"

#include <algorithm>

namespace pfedgrp {

double iaa(const AccuracyRow& row) {
    if (row.accuracy.empty() || row.accuracy.size() != row.counts.size()) {
        throw ContractViolation("iaa: empty or inconsistent accuracy row");
    }
    double weighted = 0.0;
    long long total = 0;
    for (size_t i = 0; i < row.accuracy.size(); ++i) {
        weighted += static_cast<double>(row.counts[i]) * row.accuracy[i];
        total += row.counts[i];
    }
    if (total <= 0) throw ContractViolation("iaa: zero total data count");
    return weighted / static_cast<double>(total);
}

double aa(const std::vector<double>& iaa_series) {
    if (iaa_series.empty()) throw ContractViolation("aa: empty IAA series");
    double sum = 0.0;
    for (double v : iaa_series) sum += v;
    return sum / static_cast<double>(iaa_series.size());
}

double afm(const std::vector<double>& iaa_series) {
    if (iaa_series.size() < 2) throw ContractViolation("afm: series needs at least two rounds");
    double sum = 0.0;
    for (size_t t = 1; t < iaa_series.size(); ++t) {
        sum += std::max(0.0, iaa_series[t - 1] - iaa_series[t]);
    }
    return sum / static_cast<double>(iaa_series.size() - 1);
}

MetricSummary summarize(const std::vector<double>& iaa_series) {
    MetricSummary s;
    s.iaa_series = iaa_series;
    s.aa = aa(iaa_series);
    s.afm = iaa_series.size() >= 2 ? afm(iaa_series) : 0.0;
    return s;
}

}  // namespace pfedgrp
