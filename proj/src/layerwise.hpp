#pragma once

// Internal per-sample forward/backward math shared by the OpenMP kernels and
// the serial reference. Not installed.

#include <cmath>
#include <vector>

#include "pfedgrp/model.hpp"

namespace pfedgrp::detail {

struct LayerDims {
    std::vector<int> dims;      // d0 (input) .. dL (num_classes)
    std::vector<size_t> w_off;  // weight offset per layer 1..L
    std::vector<size_t> b_off;  // bias offset per layer 1..L
    size_t param_count = 0;
    size_t layers = 0;
};

inline LayerDims layer_dims(const ModelArch& arch) {
    LayerDims d;
    d.dims.push_back(arch.input_dim);
    for (int h : arch.hidden_dims) d.dims.push_back(h);
    d.dims.push_back(arch.num_classes);
    d.layers = d.dims.size() - 1;
    size_t off = 0;
    for (size_t l = 0; l < d.layers; ++l) {
        const size_t in = static_cast<size_t>(d.dims[l]);
        const size_t out = static_cast<size_t>(d.dims[l + 1]);
        d.w_off.push_back(off);
        off += out * in;
        d.b_off.push_back(off);
        off += out;
    }
    d.param_count = off;
    return d;
}

inline double activate(Activation act, double z) {
    return act == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

inline double activate_derivative(Activation act, double z, double a) {
    return act == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// Scratch buffers for one sample pass; reusable across samples.
struct Workspace {
    std::vector<std::vector<double>> z;  // pre-activation per layer 1..L
    std::vector<std::vector<double>> a;  // activation per layer 1..L
    std::vector<double> delta;           // backprop buffer, max layer width
    std::vector<double> delta_prev;
    std::vector<double> teacher_logits;
    std::vector<double> probs;

    void resize(const LayerDims& d) {
        z.resize(d.layers);
        a.resize(d.layers);
        size_t widest = 0;
        for (size_t l = 0; l < d.layers; ++l) {
            const size_t out = static_cast<size_t>(d.dims[l + 1]);
            z[l].resize(out);
            a[l].resize(out);
            widest = std::max(widest, out);
        }
        widest = std::max(widest, static_cast<size_t>(d.dims[0]));
        delta.resize(widest);
        delta_prev.resize(widest);
        teacher_logits.resize(static_cast<size_t>(d.dims.back()));
        probs.resize(static_cast<size_t>(d.dims.back()));
    }
};

// Fills ws.z / ws.a; the logits are ws.z.back().
inline void forward_sample(const LayerDims& d, Activation act, const double* params,
                           const double* x, Workspace& ws) {
    const double* input = x;
    for (size_t l = 0; l < d.layers; ++l) {
        const size_t in = static_cast<size_t>(d.dims[l]);
        const size_t out = static_cast<size_t>(d.dims[l + 1]);
        const double* w = params + d.w_off[l];
        const double* b = params + d.b_off[l];
        const bool last = (l + 1 == d.layers);
        for (size_t j = 0; j < out; ++j) {
            double s = b[j];
            const double* wrow = w + j * in;
            for (size_t k = 0; k < in; ++k) s += wrow[k] * input[k];
            ws.z[l][j] = s;
            ws.a[l][j] = last ? s : activate(act, s);
        }
        input = ws.a[l].data();
    }
}

// Logits only, into out[0..num_classes).
inline void forward_logits_sample(const LayerDims& d, Activation act, const double* params,
                                  const double* x, Workspace& ws, double* out) {
    forward_sample(d, act, params, x, ws);
    const std::vector<double>& logits = ws.z.back();
    for (size_t j = 0; j < logits.size(); ++j) out[j] = logits[j];
}

// Backpropagates dlogits (the gradient at the output layer) for the sample
// whose forward pass is in ws, accumulating into grad (unscaled).
inline void backward_sample(const LayerDims& d, Activation act, const double* params,
                            const double* x, Workspace& ws, const double* dlogits,
                            double* grad) {
    const size_t L = d.layers;
    for (size_t j = 0; j < static_cast<size_t>(d.dims[L]); ++j) ws.delta[j] = dlogits[j];
    for (size_t l = L; l-- > 0;) {
        const size_t in = static_cast<size_t>(d.dims[l]);
        const size_t out = static_cast<size_t>(d.dims[l + 1]);
        const double* w = params + d.w_off[l];
        const double* prev_a = (l == 0) ? x : ws.a[l - 1].data();
        double* gw = grad + d.w_off[l];
        double* gb = grad + d.b_off[l];
        for (size_t j = 0; j < out; ++j) {
            const double dj = ws.delta[j];
            double* gwrow = gw + j * in;
            for (size_t k = 0; k < in; ++k) gwrow[k] += dj * prev_a[k];
            gb[j] += dj;
        }
        if (l == 0) break;
        for (size_t k = 0; k < in; ++k) {
            double s = 0.0;
            for (size_t j = 0; j < out; ++j) s += w[j * in + k] * ws.delta[j];
            ws.delta_prev[k] = s * activate_derivative(act, ws.z[l - 1][k], ws.a[l - 1][k]);
        }
        std::swap(ws.delta, ws.delta_prev);
    }
}

// Per-sample objective contribution at the output layer. Returns the raw
// (un-averaged) loss contribution and fills dlogits with the raw gradient at
// the logits; the caller divides sums by the batch size.
inline double sample_output_terms(const LayerDims& d, Activation act,
                                  const std::vector<double>& params,
                                  const double* teacher_params, const Objective& objective,
                                  const double* x, int label, Workspace& ws,
                                  Workspace& teacher_ws, double* dlogits) {
    const size_t k = static_cast<size_t>(d.dims.back());
    forward_sample(d, act, params.data(), x, ws);
    const std::vector<double>& logits = ws.z.back();

    double zmax = logits[0];
    for (size_t j = 1; j < k; ++j) zmax = std::max(zmax, logits[j]);
    double sum = 0.0;
    for (size_t j = 0; j < k; ++j) {
        ws.probs[j] = std::exp(logits[j] - zmax);
        sum += ws.probs[j];
    }
    const double log_sum = std::log(sum);
    double loss = -(logits[static_cast<size_t>(label)] - zmax - log_sum);
    for (size_t j = 0; j < k; ++j) dlogits[j] = ws.probs[j] / sum;
    dlogits[static_cast<size_t>(label)] -= 1.0;

    if (teacher_params != nullptr && objective.previous_classes.count(label) > 0) {
        forward_sample(d, act, teacher_params, x, teacher_ws);
        const std::vector<double>& t = teacher_ws.z.back();
        double mse = 0.0;
        for (size_t j = 0; j < k; ++j) {
            const double diff = logits[j] - t[j];
            mse += diff * diff;
            dlogits[j] += objective.lambda_align * 2.0 * diff / static_cast<double>(k);
        }
        loss += objective.lambda_align * mse / static_cast<double>(k);
    }
    return loss;
}

}  // namespace pfedgrp::detail
