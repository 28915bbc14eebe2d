#pragma once

#include <vector>

#include "pfedgrp/errors.hpp"

namespace pfedgrp {

// One evaluation round: per-client accuracy and cumulative training data count.
struct AccuracyRow {
    std::vector<double> accuracy;
    std::vector<long long> counts;
};

struct MetricSummary {
    std::vector<double> iaa_series;
    double aa = 0.0;
    double afm = 0.0;
};

// Data-count weighted mean accuracy of the round.
double iaa(const AccuracyRow& row);

// Mean of the per-round IAA values.
double aa(const std::vector<double>& iaa_series);

// Mean positive round-to-round IAA drop; zero iff the series never decreases.
double afm(const std::vector<double>& iaa_series);

MetricSummary summarize(const std::vector<double>& iaa_series);

}  // namespace pfedgrp
