#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pfedgrp/errors.hpp"
#include "pfedgrp/rng.hpp"

namespace pfedgrp {

enum class Activation { relu, tanh };

// Fully connected classifier: input -> hidden layers -> linear logits.
struct ModelArch {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int num_classes = 0;
    Activation activation = Activation::relu;

    void validate() const;
    size_t param_count() const;
    uint64_t fingerprint() const;
    size_t layer_count() const { return hidden_dims.size() + 1; }
};

// Flat parameter vector; the unit of aggregation. Layout per layer:
// weight matrix (out x in, row-major) followed by bias (out).
struct ParamVector {
    std::vector<double> values;
    uint64_t arch_fingerprint = 0;

    size_t size() const { return values.size(); }
    bool all_finite() const;
};

struct LabeledBatch {
    std::vector<double> features;  // row-major, rows() x feature_dim
    size_t feature_dim = 0;
    std::vector<int> labels;
    std::vector<uint8_t> is_synthetic;

    size_t rows() const { return labels.size(); }
    const double* row(size_t i) const { return features.data() + i * feature_dim; }
    void append_row(const double* x, int label, bool synthetic);
    void append(const LabeledBatch& other);
    void validate(int num_classes) const;
};

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.01;
    int epochs = 20;
    int batch_size = 32;

    void validate() const;
};

// Convex combination weights over the client set; all >= 0, sum = 1
// within 1e-9.
struct AggregationWeights {
    std::vector<double> weights;

    void validate() const;
    static AggregationWeights uniform(size_t n);
};

// Optional terms around plain cross-entropy. Teacher/center pointers must
// outlive the call; they are treated as constants by the gradient.
struct Objective {
    double lambda_align = 0.0;
    const ParamVector* teacher = nullptr;
    std::set<int> previous_classes;
    double prox_mu = 0.0;
    const ParamVector* prox_center = nullptr;

    bool alignment_active() const { return lambda_align > 0.0 && !previous_classes.empty(); }
};

ParamVector zero_params(const ModelArch& arch);
ParamVector random_init(const ModelArch& arch, Rng& rng);

// Logits for every row, row-major rows() x num_classes.
std::vector<double> forward(const ModelArch& arch, const ParamVector& params,
                            const LabeledBatch& batch);

// Mean negative log softmax probability of the true labels.
double cross_entropy(const std::vector<double>& logits, size_t num_classes,
                     const std::vector<int>& labels);

// Mean over all samples of 1[label in previous_classes] * rowwise MSE.
// The denominator is the full batch size; unmasked rows contribute zero.
double alignment_loss(const std::vector<double>& student_logits,
                      const std::vector<double>& teacher_logits, size_t num_classes,
                      const std::vector<int>& labels, const std::set<int>& previous_classes);

// Full objective value: CE + lambda * alignment + (mu/2)||params - center||^2.
double objective_loss(const ModelArch& arch, const ParamVector& params,
                      const LabeledBatch& batch, const Objective& objective);

// Gradient of objective_loss with respect to params. Optionally reports the
// loss value computed along the way.
ParamVector grad(const ModelArch& arch, const ParamVector& params, const LabeledBatch& batch,
                 const Objective& objective, double* loss_out = nullptr);

// Minibatch SGD with momentum and coupled weight decay:
//   v <- m*v + g + wd*theta;  theta <- theta - lr*v
// Shuffling is seeded; a fixed seed reproduces the result bit for bit.
ParamVector sgd_train(const ModelArch& arch, const ParamVector& init, const LabeledBatch& data,
                      const SgdConfig& cfg, const Objective& objective, uint64_t seed);

// Elementwise convex combination of parameter vectors.
ParamVector mix_params(const std::vector<ParamVector>& params_list,
                       const AggregationWeights& weights);

// Fraction of argmax(logits) == label; argmax ties break to the lowest class id.
double accuracy(const ModelArch& arch, const ParamVector& params, const LabeledBatch& batch);

}  // namespace pfedgrp
