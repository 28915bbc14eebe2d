#pragma once

#include <vector>

#include "pfedgrp/model.hpp"

namespace pfedgrp::reference {

// Serial reference implementations of the batch kernels: one plain loop over
// samples, accumulation in sample order, no blocking and no OpenMP. Kept as
// the ground truth the parallel kernels are tested and benchmarked against.

std::vector<double> forward_batch_serial(const ModelArch& arch, const std::vector<double>& params,
                                         const double* features, size_t rows, size_t feature_dim);

double objective_batch_serial(const ModelArch& arch, const std::vector<double>& params,
                              const LabeledBatch& batch, const Objective& objective,
                              std::vector<double>& grad_out);

}  // namespace pfedgrp::reference
