#include <doctest.h>

#include <cmath>

#include "pfedgrp/kernels.hpp"
#include "pfedgrp/model.hpp"
#include "pfedgrp/reference.hpp"
#include "oracles.hpp"

using namespace pfedgrp;

namespace {

ModelArch small_arch(int input, std::vector<int> hidden, int classes,
                     Activation act = Activation::relu) {
    ModelArch arch;
    arch.input_dim = input;
    arch.hidden_dims = std::move(hidden);
    arch.num_classes = classes;
    arch.activation = act;
    return arch;
}

LabeledBatch random_batch(const ModelArch& arch, size_t rows, Rng& rng) {
    LabeledBatch batch;
    batch.feature_dim = static_cast<size_t>(arch.input_dim);
    std::vector<double> row(batch.feature_dim);
    for (size_t i = 0; i < rows; ++i) {
        for (double& v : row) v = rng.normal();
        batch.append_row(row.data(), static_cast<int>(rng.uniform_int(arch.num_classes)), false);
    }
    return batch;
}

// Two linearly separable blobs on the x axis.
LabeledBatch blob_batch(size_t per_class, double separation, uint64_t seed) {
    LabeledBatch batch;
    batch.feature_dim = 2;
    Rng rng(seed);
    for (size_t i = 0; i < per_class; ++i) {
        const double a[2] = {-separation + 0.3 * rng.normal(), 0.3 * rng.normal()};
        const double b[2] = {separation + 0.3 * rng.normal(), 0.3 * rng.normal()};
        batch.append_row(a, 0, false);
        batch.append_row(b, 1, false);
    }
    return batch;
}

}  // namespace

TEST_CASE("forward: zero weights give zero logits") {
    const ModelArch arch = small_arch(3, {4}, 3);
    const ParamVector params = zero_params(arch);
    Rng rng(1);
    const LabeledBatch batch = random_batch(arch, 6, rng);
    for (double v : forward(arch, params, batch)) CHECK(v == 0.0);
}

TEST_CASE("forward: identity single-layer network reproduces its input") {
    const ModelArch arch = small_arch(3, {}, 3);
    ParamVector params = zero_params(arch);
    for (int j = 0; j < 3; ++j) params.values[static_cast<size_t>(j * 3 + j)] = 1.0;
    LabeledBatch batch;
    batch.feature_dim = 3;
    const double x[3] = {0.5, -2.0, 3.25};
    batch.append_row(x, 0, false);
    const std::vector<double> logits = forward(arch, params, batch);
    for (int j = 0; j < 3; ++j) CHECK(logits[static_cast<size_t>(j)] == doctest::Approx(x[j]).epsilon(1e-15));
}

TEST_CASE("forward: matches straight-line matmul oracle on a random 2-16-3 net") {
    const ModelArch arch = small_arch(2, {16}, 3);
    Rng rng(7);
    const ParamVector params = random_init(arch, rng);
    const LabeledBatch batch = random_batch(arch, 5, rng);
    const std::vector<double> got = forward(arch, params, batch);
    const std::vector<double> want = oracles::matmul_forward(arch, params.values, batch.features, 5);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("forward: fingerprint mismatch raises ArchitectureError") {
    const ModelArch arch = small_arch(3, {4}, 3);
    ParamVector params = zero_params(arch);
    params.arch_fingerprint ^= 1;
    Rng rng(1);
    const LabeledBatch batch = random_batch(arch, 2, rng);
    CHECK_THROWS_AS(forward(arch, params, batch), ArchitectureError);
}

TEST_CASE("forward: non-finite input raises NumericError") {
    const ModelArch arch = small_arch(2, {}, 2);
    const ParamVector params = zero_params(arch);
    LabeledBatch batch;
    batch.feature_dim = 2;
    const double x[2] = {1.0, std::numeric_limits<double>::quiet_NaN()};
    batch.append_row(x, 0, false);
    CHECK_THROWS_AS(forward(arch, params, batch), NumericError);
}

TEST_CASE("cross_entropy: uniform logits give ln(k)") {
    for (size_t k : {2, 3, 10}) {
        std::vector<double> logits(k, 0.7);
        CHECK(cross_entropy(logits, k, {0}) == doctest::Approx(std::log(static_cast<double>(k)))
                                                   .epsilon(1e-12));
    }
}

TEST_CASE("cross_entropy: decreases monotonically in the true-class logit") {
    double prev = std::numeric_limits<double>::max();
    for (double z = 0.0; z <= 20.0; z += 1.0) {
        const std::vector<double> logits = {z, 0.0, 0.0};
        const double loss = cross_entropy(logits, 3, {0});
        CHECK(loss < prev);
        prev = loss;
    }
    CHECK(prev < 1e-8);  // loss tends to 0 as the true logit dominates
}

TEST_CASE("cross_entropy: fixed 3-sample case equals the log-sum-exp oracle") {
    const std::vector<double> logits = {1.5, -0.25, 0.0, 2.0, 2.0, -1.0, 0.1, 0.2, 0.3};
    const std::vector<int> labels = {2, 0, 1};
    CHECK(cross_entropy(logits, 3, labels) ==
          doctest::Approx(oracles::logsumexp_cross_entropy(logits, 3, labels)).epsilon(1e-12));
}

TEST_CASE("cross_entropy: empty batch is a contract violation") {
    CHECK_THROWS_AS(cross_entropy({}, 3, {}), ContractViolation);
}

TEST_CASE("alignment_loss: identical logits give zero") {
    const std::vector<double> logits = {1.0, 2.0, 3.0, 4.0};
    CHECK(alignment_loss(logits, logits, 2, {0, 1}, {0, 1}) == 0.0);
}

TEST_CASE("alignment_loss: labels outside previous classes contribute nothing") {
    const std::vector<double> student = {5.0, -5.0};
    const std::vector<double> teacher = {-5.0, 5.0};
    CHECK(alignment_loss(student, teacher, 2, {1}, {0}) == 0.0);
}

TEST_CASE("alignment_loss: one masked sample, (1,0) vs (0,1), is exactly 1") {
    CHECK(alignment_loss({1.0, 0.0}, {0.0, 1.0}, 2, {0}, {0}) == doctest::Approx(1.0));
}

TEST_CASE("alignment_loss: unmasked rows never change the value") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> student(8), teacher(8);
        for (double& v : student) v = rng.normal();
        for (double& v : teacher) v = rng.normal();
        const std::vector<int> labels = {0, 1, 0, 1};
        const double masked_only = alignment_loss(student, teacher, 2, labels, {0});
        std::vector<double> student2 = student;
        std::vector<double> teacher2 = teacher;
        // rewrite the unmasked rows arbitrarily
        for (size_t i : {1u, 3u}) {
            student2[i * 2] = rng.normal();
            teacher2[i * 2 + 1] = rng.normal();
        }
        CHECK(alignment_loss(student2, teacher2, 2, labels, {0}) == doctest::Approx(masked_only));
        CHECK(masked_only >= 0.0);
    }
}

TEST_CASE("alignment_loss: shape mismatch is a contract violation") {
    CHECK_THROWS_AS(alignment_loss({1.0, 2.0}, {1.0}, 2, {0}, {0}), ContractViolation);
}

TEST_CASE("grad: lambda zero equals plain cross-entropy gradient") {
    const ModelArch arch = small_arch(3, {6}, 3);
    Rng rng(11);
    const ParamVector params = random_init(arch, rng);
    const ParamVector teacher = random_init(arch, rng);
    const LabeledBatch batch = random_batch(arch, 10, rng);
    Objective plain;
    Objective with_teacher;
    with_teacher.lambda_align = 0.0;
    with_teacher.teacher = &teacher;
    with_teacher.previous_classes = {0, 1, 2};
    const ParamVector a = grad(arch, params, batch, plain);
    const ParamVector b = grad(arch, params, batch, with_teacher);
    for (size_t p = 0; p < a.size(); ++p) CHECK(a.values[p] == b.values[p]);
}

TEST_CASE("grad: matches central finite differences on a 2-8-3 net") {
    const ModelArch arch = small_arch(2, {8}, 3, Activation::tanh);
    Rng rng(13);
    const ParamVector params = random_init(arch, rng);
    const ParamVector teacher = random_init(arch, rng);
    const LabeledBatch batch = random_batch(arch, 12, rng);
    Objective objective;
    objective.lambda_align = 0.7;
    objective.teacher = &teacher;
    objective.previous_classes = {0, 2};
    const ParamVector g = grad(arch, params, batch, objective);
    const ParamVector fd = oracles::finite_difference_grad(arch, params, batch, objective);
    for (size_t p = 0; p < g.size(); ++p) {
        const double scale = std::max({1.0, std::abs(g.values[p]), std::abs(fd.values[p])});
        CHECK(std::abs(g.values[p] - fd.values[p]) / scale < 1e-4);
    }
}

TEST_CASE("grad: teacher equal to student with all labels previous adds no gradient") {
    const ModelArch arch = small_arch(3, {5}, 3);
    Rng rng(17);
    const ParamVector params = random_init(arch, rng);
    const LabeledBatch batch = random_batch(arch, 9, rng);
    Objective aligned;
    aligned.lambda_align = 4.0;
    aligned.teacher = &params;
    aligned.previous_classes = {0, 1, 2};
    const ParamVector a = grad(arch, params, batch, Objective{});
    const ParamVector b = grad(arch, params, batch, aligned);
    for (size_t p = 0; p < a.size(); ++p) {
        CHECK(a.values[p] == doctest::Approx(b.values[p]).epsilon(1e-12));
    }
}

TEST_CASE("grad: missing teacher with positive lambda is a configuration error") {
    const ModelArch arch = small_arch(2, {}, 2);
    const ParamVector params = zero_params(arch);
    LabeledBatch batch;
    batch.feature_dim = 2;
    const double x[2] = {1.0, 2.0};
    batch.append_row(x, 0, false);
    Objective objective;
    objective.lambda_align = 1.0;
    objective.previous_classes = {0};
    CHECK_THROWS_AS(grad(arch, params, batch, objective), ConfigError);
}

TEST_CASE("kernels: parallel blocked gradient agrees with the serial reference") {
    const ModelArch arch = small_arch(4, {16, 16}, 5);
    Rng rng(21);
    const ParamVector params = random_init(arch, rng);
    const ParamVector teacher = random_init(arch, rng);
    const LabeledBatch batch = random_batch(arch, 333, rng);  // not a block multiple
    Objective objective;
    objective.lambda_align = 0.5;
    objective.teacher = &teacher;
    objective.previous_classes = {1, 2};
    std::vector<double> g_par, g_ser;
    const double loss_par = objective_batch(arch, params.values, batch, objective, g_par);
    const double loss_ser =
        reference::objective_batch_serial(arch, params.values, batch, objective, g_ser);
    CHECK(loss_par == doctest::Approx(loss_ser).epsilon(1e-12));
    REQUIRE(g_par.size() == g_ser.size());
    for (size_t p = 0; p < g_par.size(); ++p) {
        CHECK(g_par[p] == doctest::Approx(g_ser[p]).epsilon(1e-10));
    }
    const std::vector<double> f_par =
        forward_batch(arch, params.values, batch.features.data(), batch.rows(), batch.feature_dim);
    const std::vector<double> f_ser = reference::forward_batch_serial(
        arch, params.values, batch.features.data(), batch.rows(), batch.feature_dim);
    for (size_t i = 0; i < f_par.size(); ++i) CHECK(f_par[i] == f_ser[i]);
}

TEST_CASE("sgd_train: zero epochs returns the initialization unchanged") {
    const ModelArch arch = small_arch(2, {4}, 2);
    Rng rng(23);
    const ParamVector init = random_init(arch, rng);
    const LabeledBatch batch = random_batch(arch, 8, rng);
    SgdConfig cfg;
    cfg.epochs = 0;
    const ParamVector out = sgd_train(arch, init, batch, cfg, Objective{}, 5);
    CHECK(out.values == init.values);
}

TEST_CASE("sgd_train: separable blobs train to perfect accuracy with decreasing loss") {
    const ModelArch arch = small_arch(2, {8}, 2);
    Rng rng(29);
    const ParamVector init = random_init(arch, rng);
    const LabeledBatch data = blob_batch(40, 3.0, 31);
    SgdConfig cfg;
    cfg.epochs = 1;
    cfg.weight_decay = 0.0;
    ParamVector params = init;
    double prev_loss = objective_loss(arch, params, data, Objective{});
    for (int epoch = 0; epoch < 15; ++epoch) {
        params = sgd_train(arch, params, data, cfg, Objective{}, 37 + static_cast<uint64_t>(epoch));
        const double loss = objective_loss(arch, params, data, Objective{});
        CHECK(loss < prev_loss);
        prev_loss = loss;
    }
    CHECK(accuracy(arch, params, data) == doctest::Approx(1.0));
}

TEST_CASE("sgd_train: identical seeds give bit-identical parameters") {
    const ModelArch arch = small_arch(3, {10}, 4);
    Rng rng(41);
    const ParamVector init = random_init(arch, rng);
    const LabeledBatch data = random_batch(arch, 50, rng);
    SgdConfig cfg;
    cfg.epochs = 3;
    const ParamVector a = sgd_train(arch, init, data, cfg, Objective{}, 99);
    const ParamVector b = sgd_train(arch, init, data, cfg, Objective{}, 99);
    CHECK(a.values == b.values);
}

TEST_CASE("sgd_train: divergence raises TrainingError naming an epoch") {
    const ModelArch arch = small_arch(2, {8}, 2);
    Rng rng(43);
    const ParamVector init = random_init(arch, rng);
    const LabeledBatch data = blob_batch(20, 50.0, 47);
    SgdConfig cfg;
    cfg.learning_rate = 1e12;  // guaranteed blow-up
    cfg.epochs = 50;
    try {
        sgd_train(arch, init, data, cfg, Objective{}, 1);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("mix_params: one-hot weights select that exact vector") {
    const ModelArch arch = small_arch(2, {3}, 2);
    Rng rng(51);
    const std::vector<ParamVector> thetas = {random_init(arch, rng), random_init(arch, rng),
                                             random_init(arch, rng)};
    const ParamVector out = mix_params(thetas, AggregationWeights{{0.0, 1.0, 0.0}});
    CHECK(out.values == thetas[1].values);
}

TEST_CASE("mix_params: (0.25, 0.75) over (0,0) and (4,8) gives (3,6)") {
    const ModelArch arch = small_arch(1, {}, 2);  // exactly 4 params; use first two
    ParamVector a = zero_params(arch);
    ParamVector b = zero_params(arch);
    b.values = {4.0, 8.0, 0.0, 0.0};
    const ParamVector out = mix_params({a, b}, AggregationWeights{{0.25, 0.75}});
    CHECK(out.values[0] == doctest::Approx(3.0));
    CHECK(out.values[1] == doctest::Approx(6.0));
}

TEST_CASE("mix_params: uniform weights over copies return the same vector") {
    const ModelArch arch = small_arch(2, {4}, 3);
    Rng rng(53);
    const ParamVector theta = random_init(arch, rng);
    const std::vector<ParamVector> copies(5, theta);
    const ParamVector out = mix_params(copies, AggregationWeights::uniform(5));
    for (size_t p = 0; p < theta.size(); ++p) {
        CHECK(out.values[p] == doctest::Approx(theta.values[p]).epsilon(1e-15));
    }
}

TEST_CASE("mix_params: linear in the parameter lists") {
    const ModelArch arch = small_arch(2, {3}, 2);
    Rng rng(59);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<ParamVector> thetas = {random_init(arch, rng), random_init(arch, rng)};
        std::vector<ParamVector> phis = {random_init(arch, rng), random_init(arch, rng)};
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        const AggregationWeights w{{0.3, 0.7}};
        std::vector<ParamVector> combined = thetas;
        for (size_t j = 0; j < combined.size(); ++j) {
            for (size_t p = 0; p < combined[j].size(); ++p) {
                combined[j].values[p] = a * thetas[j].values[p] + b * phis[j].values[p];
            }
        }
        const ParamVector left = mix_params(combined, w);
        const ParamVector mt = mix_params(thetas, w);
        const ParamVector mp = mix_params(phis, w);
        for (size_t p = 0; p < left.size(); ++p) {
            CHECK(left.values[p] ==
                  doctest::Approx(a * mt.values[p] + b * mp.values[p]).epsilon(1e-12));
        }
    }
}

TEST_CASE("mix_params: fingerprint mismatch raises ArchitectureError") {
    const ModelArch arch = small_arch(2, {3}, 2);
    Rng rng(61);
    ParamVector a = random_init(arch, rng);
    ParamVector b = random_init(arch, rng);
    b.arch_fingerprint ^= 1;
    CHECK_THROWS_AS(mix_params({a, b}, AggregationWeights::uniform(2)), ArchitectureError);
}

TEST_CASE("accuracy: all predictions correct gives 1") {
    const ModelArch arch = small_arch(2, {8}, 2);
    Rng rng(67);
    ParamVector params = random_init(arch, rng);
    LabeledBatch data = blob_batch(30, 3.0, 71);
    SgdConfig cfg;
    cfg.weight_decay = 0.0;
    params = sgd_train(arch, params, data, cfg, Objective{}, 3);
    CHECK(accuracy(arch, params, data) == doctest::Approx(1.0));
}

TEST_CASE("accuracy: zero network predicts class 0 by the tie-break rule") {
    const ModelArch arch = small_arch(3, {}, 4);
    const ParamVector params = zero_params(arch);
    Rng rng(73);
    LabeledBatch batch = random_batch(arch, 40, rng);
    size_t zeros = 0;
    for (int y : batch.labels) zeros += (y == 0);
    CHECK(accuracy(arch, params, batch) ==
          doctest::Approx(static_cast<double>(zeros) / 40.0));
}

TEST_CASE("accuracy: ten-sample fixed case matches a hand count") {
    const ModelArch arch = small_arch(2, {}, 2);
    ParamVector params = zero_params(arch);
    // logits = [x0, x1]: predicts argmax coordinate
    params.values = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    LabeledBatch batch;
    batch.feature_dim = 2;
    const double rows[10][2] = {{2, 1}, {1, 2}, {3, 0}, {0, 3}, {5, 4},
                                {4, 5}, {1, 1}, {2, 2}, {9, 8}, {8, 9}};
    const int labels[10] = {0, 1, 0, 1, 0, 1, 1, 1, 0, 0};
    for (int i = 0; i < 10; ++i) batch.append_row(rows[i], labels[i], false);
    // rows 0..5 correct; ties (rows 6,7) predict 0 -> wrong; row 8 correct; row 9 wrong.
    CHECK(accuracy(arch, params, batch) == doctest::Approx(7.0 / 10.0));
}

TEST_CASE("grad property: randomized architectures match finite differences") {
    Rng rng(79);
    for (int trial = 0; trial < 25; ++trial) {
        const int input = 2 + static_cast<int>(rng.uniform_int(3));
        const int hidden = 3 + static_cast<int>(rng.uniform_int(6));
        const int classes = 2 + static_cast<int>(rng.uniform_int(3));
        const ModelArch arch = small_arch(
            input, {hidden}, classes,
            rng.uniform() < 0.5 ? Activation::relu : Activation::tanh);
        const ParamVector params = random_init(arch, rng);
        const ParamVector teacher = random_init(arch, rng);
        LabeledBatch batch = random_batch(arch, 6, rng);
        Objective objective;
        if (rng.uniform() < 0.5) {
            objective.lambda_align = rng.uniform(0.1, 2.0);
            objective.teacher = &teacher;
            objective.previous_classes = {0, 1};
        }
        if (rng.uniform() < 0.5) {
            objective.prox_mu = rng.uniform(0.01, 0.5);
            objective.prox_center = &teacher;
        }
        const ParamVector g = grad(arch, params, batch, objective);
        const ParamVector fd = oracles::finite_difference_grad(arch, params, batch, objective);
        for (size_t p = 0; p < g.size(); ++p) {
            const double scale = std::max({1.0, std::abs(g.values[p]), std::abs(fd.values[p])});
            CHECK(std::abs(g.values[p] - fd.values[p]) / scale < 1e-4);
        }
    }
}
