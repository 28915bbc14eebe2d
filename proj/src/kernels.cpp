#include "pfedgrp/kernels.hpp"

#include <algorithm>

#include "layerwise.hpp"

namespace pfedgrp {

std::vector<double> forward_batch(const ModelArch& arch, const std::vector<double>& params,
                                  const double* features, size_t rows, size_t feature_dim) {
    const detail::LayerDims d = detail::layer_dims(arch);
    const size_t k = static_cast<size_t>(arch.num_classes);
    std::vector<double> logits(rows * k);
    const long long nblocks =
        static_cast<long long>((rows + kGradBlock - 1) / kGradBlock);
#pragma omp parallel for schedule(static)
    for (long long b = 0; b < nblocks; ++b) {
        detail::Workspace ws;
        ws.resize(d);
        const size_t lo = static_cast<size_t>(b) * kGradBlock;
        const size_t hi = std::min(rows, lo + kGradBlock);
        for (size_t i = lo; i < hi; ++i) {
            detail::forward_logits_sample(d, arch.activation, params.data(),
                                          features + i * feature_dim, ws, logits.data() + i * k);
        }
    }
    return logits;
}

double objective_batch(const ModelArch& arch, const std::vector<double>& params,
                       const LabeledBatch& batch, const Objective& objective,
                       std::vector<double>& grad_out) {
    const detail::LayerDims d = detail::layer_dims(arch);
    const size_t rows = batch.rows();
    const size_t k = static_cast<size_t>(arch.num_classes);
    const bool align = objective.alignment_active();
    const double* teacher = align ? objective.teacher->values.data() : nullptr;

    const size_t nblocks = (rows + kGradBlock - 1) / kGradBlock;
    std::vector<double> block_grad(nblocks * d.param_count, 0.0);
    std::vector<double> block_loss(nblocks, 0.0);

#pragma omp parallel for schedule(static)
    for (long long b = 0; b < static_cast<long long>(nblocks); ++b) {
        detail::Workspace ws, teacher_ws;
        ws.resize(d);
        teacher_ws.resize(d);
        std::vector<double> dlogits(k);
        double* g = block_grad.data() + static_cast<size_t>(b) * d.param_count;
        double loss = 0.0;
        const size_t lo = static_cast<size_t>(b) * kGradBlock;
        const size_t hi = std::min(rows, lo + kGradBlock);
        for (size_t i = lo; i < hi; ++i) {
            const double* x = batch.row(i);
            loss += detail::sample_output_terms(d, arch.activation, params, teacher, objective, x,
                                                batch.labels[i], ws, teacher_ws, dlogits.data());
            detail::backward_sample(d, arch.activation, params.data(), x, ws, dlogits.data(), g);
        }
        block_loss[static_cast<size_t>(b)] = loss;
    }

    // Block partials combined in block order: bit-identical for any worker count.
    grad_out.assign(d.param_count, 0.0);
    double loss = 0.0;
    for (size_t b = 0; b < nblocks; ++b) {
        const double* g = block_grad.data() + b * d.param_count;
        for (size_t p = 0; p < d.param_count; ++p) grad_out[p] += g[p];
        loss += block_loss[b];
    }
    const double inv_n = 1.0 / static_cast<double>(rows);
    for (double& g : grad_out) g *= inv_n;
    loss *= inv_n;

    if (objective.prox_mu > 0.0) {
        const std::vector<double>& center = objective.prox_center->values;
        double sq = 0.0;
        for (size_t p = 0; p < d.param_count; ++p) {
            const double diff = params[p] - center[p];
            grad_out[p] += objective.prox_mu * diff;
            sq += diff * diff;
        }
        loss += 0.5 * objective.prox_mu * sq;
    }
    return loss;
}

}  // namespace pfedgrp
