#include "pfedgrp/reference.hpp"

#include "layerwise.hpp"

namespace pfedgrp::reference {

std::vector<double> forward_batch_serial(const ModelArch& arch, const std::vector<double>& params,
                                         const double* features, size_t rows,
                                         size_t feature_dim) {
    const detail::LayerDims d = detail::layer_dims(arch);
    const size_t k = static_cast<size_t>(arch.num_classes);
    std::vector<double> logits(rows * k);
    detail::Workspace ws;
    ws.resize(d);
    for (size_t i = 0; i < rows; ++i) {
        detail::forward_logits_sample(d, arch.activation, params.data(), features + i * feature_dim,
                                      ws, logits.data() + i * k);
    }
    return logits;
}

double objective_batch_serial(const ModelArch& arch, const std::vector<double>& params,
                              const LabeledBatch& batch, const Objective& objective,
                              std::vector<double>& grad_out) {
    const detail::LayerDims d = detail::layer_dims(arch);
    const size_t rows = batch.rows();
    const size_t k = static_cast<size_t>(arch.num_classes);
    const bool align = objective.alignment_active();
    const double* teacher = align ? objective.teacher->values.data() : nullptr;

    grad_out.assign(d.param_count, 0.0);
    detail::Workspace ws, teacher_ws;
    ws.resize(d);
    teacher_ws.resize(d);
    std::vector<double> dlogits(k);
    double loss = 0.0;
    for (size_t i = 0; i < rows; ++i) {
        const double* x = batch.row(i);
        loss += detail::sample_output_terms(d, arch.activation, params, teacher, objective, x,
                                            batch.labels[i], ws, teacher_ws, dlogits.data());
        detail::backward_sample(d, arch.activation, params.data(), x, ws, dlogits.data(),
                                grad_out.data());
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

}  // namespace pfedgrp::reference
