#include "pfedgrp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfedgrp/kernels.hpp"
#include "layerwise.hpp"

namespace pfedgrp {

namespace {

void check_params(const ModelArch& arch, const ParamVector& params, const char* where) {
    if (params.arch_fingerprint != arch.fingerprint()) {
        throw ArchitectureError(std::string(where) + ": parameter fingerprint does not match architecture");
    }
    if (params.values.size() != arch.param_count()) {
        throw ArchitectureError(std::string(where) + ": parameter count mismatch");
    }
}

void check_finite(const ModelArch& arch, const ParamVector& params, const LabeledBatch& batch,
                  const char* where) {
    if (!params.all_finite()) throw NumericError(std::string(where) + ": non-finite parameter");
    for (double v : batch.features) {
        if (!std::isfinite(v)) throw NumericError(std::string(where) + ": non-finite feature");
    }
    (void)arch;
}

}  // namespace

void ModelArch::validate() const {
    if (input_dim <= 0) throw ContractViolation("ModelArch: input_dim must be positive");
    if (num_classes < 2) throw ContractViolation("ModelArch: num_classes must be at least 2");
    for (int h : hidden_dims) {
        if (h <= 0) throw ContractViolation("ModelArch: hidden dims must be positive");
    }
}

size_t ModelArch::param_count() const {
    return detail::layer_dims(*this).param_count;
}

uint64_t ModelArch::fingerprint() const {
    uint64_t s = 0x50464752ULL;
    auto feed = [&s](uint64_t v) {
        s ^= v + 0x9e3779b97f4a7c15ULL;
        (void)splitmix64(s);
    };
    feed(static_cast<uint64_t>(input_dim));
    for (int h : hidden_dims) feed(static_cast<uint64_t>(h));
    feed(0xffffffffULL);  // separates hidden dims from the tail fields
    feed(static_cast<uint64_t>(num_classes));
    feed(static_cast<uint64_t>(activation));
    return splitmix64(s);
}

bool ParamVector::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void LabeledBatch::append_row(const double* x, int label, bool synthetic) {
    features.insert(features.end(), x, x + feature_dim);
    labels.push_back(label);
    is_synthetic.push_back(synthetic ? 1 : 0);
}

void LabeledBatch::append(const LabeledBatch& other) {
    if (rows() == 0 && feature_dim == 0) feature_dim = other.feature_dim;
    if (other.rows() == 0) return;
    if (other.feature_dim != feature_dim) {
        throw ContractViolation("LabeledBatch::append: feature_dim mismatch");
    }
    features.insert(features.end(), other.features.begin(), other.features.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    is_synthetic.insert(is_synthetic.end(), other.is_synthetic.begin(), other.is_synthetic.end());
}

void LabeledBatch::validate(int num_classes) const {
    if (features.size() != rows() * feature_dim || is_synthetic.size() != rows()) {
        throw ContractViolation("LabeledBatch: inconsistent row counts");
    }
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw ContractViolation("LabeledBatch: label out of range");
    }
}

void SgdConfig::validate() const {
    if (learning_rate <= 0.0) throw ContractViolation("SgdConfig: learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ContractViolation("SgdConfig: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ContractViolation("SgdConfig: weight_decay must be nonnegative");
    if (epochs < 0) throw ContractViolation("SgdConfig: epochs must be nonnegative");
    if (batch_size <= 0) throw ContractViolation("SgdConfig: batch_size must be positive");
}

void AggregationWeights::validate() const {
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ContractViolation("AggregationWeights: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractViolation("AggregationWeights: weights must sum to 1 within 1e-9");
    }
}

AggregationWeights AggregationWeights::uniform(size_t n) {
    return AggregationWeights{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

ParamVector zero_params(const ModelArch& arch) {
    return ParamVector{std::vector<double>(arch.param_count(), 0.0), arch.fingerprint()};
}

ParamVector random_init(const ModelArch& arch, Rng& rng) {
    const detail::LayerDims d = detail::layer_dims(arch);
    ParamVector p = zero_params(arch);
    for (size_t l = 0; l < d.layers; ++l) {
        const size_t in = static_cast<size_t>(d.dims[l]);
        const size_t out = static_cast<size_t>(d.dims[l + 1]);
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (size_t i = 0; i < out * in; ++i) {
            p.values[d.w_off[l] + i] = scale * rng.normal();
        }
        // biases stay zero
    }
    return p;
}

std::vector<double> forward(const ModelArch& arch, const ParamVector& params,
                            const LabeledBatch& batch) {
    arch.validate();
    check_params(arch, params, "forward");
    check_finite(arch, params, batch, "forward");
    if (batch.feature_dim != static_cast<size_t>(arch.input_dim)) {
        throw ContractViolation("forward: batch feature_dim does not match input_dim");
    }
    return forward_batch(arch, params.values, batch.features.data(), batch.rows(),
                         batch.feature_dim);
}

double cross_entropy(const std::vector<double>& logits, size_t num_classes,
                     const std::vector<int>& labels) {
    if (labels.empty()) throw ContractViolation("cross_entropy: empty batch");
    if (logits.size() != labels.size() * num_classes) {
        throw ContractViolation("cross_entropy: logit row count does not match label count");
    }
    double total = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const double* z = logits.data() + i * num_classes;
        double zmax = z[0];
        for (size_t j = 1; j < num_classes; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (size_t j = 0; j < num_classes; ++j) sum += std::exp(z[j] - zmax);
        total += -(z[static_cast<size_t>(labels[i])] - zmax - std::log(sum));
    }
    return total / static_cast<double>(labels.size());
}

double alignment_loss(const std::vector<double>& student_logits,
                      const std::vector<double>& teacher_logits, size_t num_classes,
                      const std::vector<int>& labels, const std::set<int>& previous_classes) {
    if (student_logits.size() != teacher_logits.size()) {
        throw ContractViolation("alignment_loss: logit shape mismatch");
    }
    if (student_logits.size() != labels.size() * num_classes) {
        throw ContractViolation("alignment_loss: logit row count does not match label count");
    }
    if (labels.empty()) return 0.0;
    double total = 0.0;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (previous_classes.count(labels[i]) == 0) continue;
        const double* s = student_logits.data() + i * num_classes;
        const double* t = teacher_logits.data() + i * num_classes;
        double mse = 0.0;
        for (size_t j = 0; j < num_classes; ++j) {
            const double diff = s[j] - t[j];
            mse += diff * diff;
        }
        total += mse / static_cast<double>(num_classes);
    }
    return total / static_cast<double>(labels.size());
}

namespace {

void check_objective(const ModelArch& arch, const Objective& objective, const char* where) {
    if (objective.lambda_align > 0.0 && objective.teacher == nullptr) {
        throw ConfigError(std::string(where) + ": lambda_align > 0 requires a teacher model");
    }
    if (objective.teacher != nullptr) check_params(arch, *objective.teacher, where);
    if (objective.prox_mu > 0.0 && objective.prox_center == nullptr) {
        throw ConfigError(std::string(where) + ": prox_mu > 0 requires a prox center");
    }
    if (objective.prox_center != nullptr) check_params(arch, *objective.prox_center, where);
}

}  // namespace

double objective_loss(const ModelArch& arch, const ParamVector& params,
                      const LabeledBatch& batch, const Objective& objective) {
    arch.validate();
    check_params(arch, params, "objective_loss");
    check_objective(arch, objective, "objective_loss");
    check_finite(arch, params, batch, "objective_loss");
    if (batch.rows() == 0) throw ContractViolation("objective_loss: empty batch");
    std::vector<double> scratch;
    // Loss value reuses the kernel so the descent tests see one arithmetic path.
    return objective_batch(arch, params.values, batch, objective, scratch);
}

ParamVector grad(const ModelArch& arch, const ParamVector& params, const LabeledBatch& batch,
                 const Objective& objective, double* loss_out) {
    arch.validate();
    check_params(arch, params, "grad");
    check_objective(arch, objective, "grad");
    check_finite(arch, params, batch, "grad");
    if (batch.rows() == 0) throw ContractViolation("grad: empty batch");
    ParamVector g = zero_params(arch);
    const double loss = objective_batch(arch, params.values, batch, objective, g.values);
    if (loss_out != nullptr) *loss_out = loss;
    return g;
}

ParamVector sgd_train(const ModelArch& arch, const ParamVector& init, const LabeledBatch& data,
                      const SgdConfig& cfg, const Objective& objective, uint64_t seed) {
    arch.validate();
    cfg.validate();
    check_params(arch, init, "sgd_train");
    check_objective(arch, objective, "sgd_train");
    if (data.rows() == 0) throw ContractViolation("sgd_train: empty training set");

    ParamVector params = init;
    std::vector<double> velocity(params.size(), 0.0);
    std::vector<size_t> order(data.rows());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);

    LabeledBatch minibatch;
    minibatch.feature_dim = data.feature_dim;
    std::vector<double> g;
    const size_t bs = static_cast<size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += bs) {
            const size_t end = std::min(order.size(), start + bs);
            minibatch.features.clear();
            minibatch.labels.clear();
            minibatch.is_synthetic.clear();
            for (size_t i = start; i < end; ++i) {
                minibatch.append_row(data.row(order[i]), data.labels[order[i]],
                                     data.is_synthetic[order[i]] != 0);
            }
            const double loss = objective_batch(arch, params.values, minibatch, objective, g);
            if (!std::isfinite(loss)) {
                throw TrainingError("sgd_train: non-finite loss at epoch " + std::to_string(epoch));
            }
            for (size_t p = 0; p < params.size(); ++p) {
                velocity[p] = cfg.momentum * velocity[p] + g[p] + cfg.weight_decay * params.values[p];
                params.values[p] -= cfg.learning_rate * velocity[p];
            }
        }
    }
    return params;
}

ParamVector mix_params(const std::vector<ParamVector>& params_list,
                       const AggregationWeights& weights) {
    if (params_list.empty()) throw ContractViolation("mix_params: empty parameter list");
    if (weights.weights.size() != params_list.size()) {
        throw ContractViolation("mix_params: weight count does not match parameter count");
    }
    const uint64_t fp = params_list.front().arch_fingerprint;
    const size_t n = params_list.front().values.size();
    for (const ParamVector& p : params_list) {
        if (p.arch_fingerprint != fp || p.values.size() != n) {
            throw ArchitectureError("mix_params: mismatched parameter vectors");
        }
    }
    ParamVector out{std::vector<double>(n, 0.0), fp};
    for (size_t j = 0; j < params_list.size(); ++j) {
        const double w = weights.weights[j];
        const std::vector<double>& v = params_list[j].values;
        for (size_t p = 0; p < n; ++p) out.values[p] += w * v[p];
    }
    return out;
}

double accuracy(const ModelArch& arch, const ParamVector& params, const LabeledBatch& batch) {
    if (batch.rows() == 0) throw ContractViolation("accuracy: empty batch");
    const std::vector<double> logits = forward(arch, params, batch);
    const size_t k = static_cast<size_t>(arch.num_classes);
    size_t correct = 0;
    for (size_t i = 0; i < batch.rows(); ++i) {
        const double* z = logits.data() + i * k;
        size_t best = 0;
        for (size_t j = 1; j < k; ++j) {
            if (z[j] > z[best]) best = j;  // strict: ties keep the lowest class id
        }
        if (static_cast<int>(best) == batch.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.rows());
}

}  // namespace pfedgrp
