#pragma once

#include <vector>

#include "pfedgrp/model.hpp"

namespace pfedgrp {

// Samples per reduction block. Per-block partials are summed in block order,
// so results are identical for any worker count, including 1.
inline constexpr size_t kGradBlock = 64;

// OpenMP-parallel batch kernels. Serial counterparts with the naive
// per-sample accumulation order live in reference.hpp and are used by the
// tests and the benchmark as the baseline.

// Logits for rows [0, n) of the batch.
std::vector<double> forward_batch(const ModelArch& arch, const std::vector<double>& params,
                                  const double* features, size_t rows, size_t feature_dim);

// Loss and gradient of the full objective on the batch. grad_out is resized
// to the parameter count.
double objective_batch(const ModelArch& arch, const std::vector<double>& params,
                       const LabeledBatch& batch, const Objective& objective,
                       std::vector<double>& grad_out);

}  // namespace pfedgrp
