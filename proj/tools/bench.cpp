// Benchmark comparing the OpenMP kernels against the serial reference, plus
// end-to-end round throughput at 1 vs N workers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pfedgrp/config.hpp"
#include "pfedgrp/kernels.hpp"
#include "pfedgrp/orchestrator.hpp"
#include "pfedgrp/reference.hpp"

using namespace pfedgrp;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Timing {
    double serial_ms = 0.0;
    double parallel_ms = 0.0;
    double max_abs_diff = 0.0;
};

void print_row(const std::string& name, const Timing& t) {
    std::printf("%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   max|diff| %.3g\n",
                name.c_str(), t.serial_ms, t.parallel_ms,
                t.parallel_ms > 0 ? t.serial_ms / t.parallel_ms : 0.0, t.max_abs_diff);
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

Timing bench_grad(const ModelArch& arch, const LabeledBatch& batch, int reps) {
    Rng rng(7);
    ParamVector params = random_init(arch, rng);
    Objective objective;
    std::vector<double> g_serial, g_parallel;

    Timing t;
    double start = now_ms();
    for (int r = 0; r < reps; ++r) {
        reference::objective_batch_serial(arch, params.values, batch, objective, g_serial);
    }
    t.serial_ms = (now_ms() - start) / reps;
    start = now_ms();
    for (int r = 0; r < reps; ++r) {
        objective_batch(arch, params.values, batch, objective, g_parallel);
    }
    t.parallel_ms = (now_ms() - start) / reps;
    for (size_t i = 0; i < g_serial.size(); ++i) {
        t.max_abs_diff = std::max(t.max_abs_diff, std::abs(g_serial[i] - g_parallel[i]));
    }
    return t;
}

Timing bench_forward(const ModelArch& arch, const LabeledBatch& batch, int reps) {
    Rng rng(7);
    ParamVector params = random_init(arch, rng);
    Timing t;
    std::vector<double> serial, parallel;
    double start = now_ms();
    for (int r = 0; r < reps; ++r) {
        serial = reference::forward_batch_serial(arch, params.values, batch.features.data(),
                                                 batch.rows(), batch.feature_dim);
    }
    t.serial_ms = (now_ms() - start) / reps;
    start = now_ms();
    for (int r = 0; r < reps; ++r) {
        parallel = forward_batch(arch, params.values, batch.features.data(), batch.rows(),
                                 batch.feature_dim);
    }
    t.parallel_ms = (now_ms() - start) / reps;
    for (size_t i = 0; i < serial.size(); ++i) {
        t.max_abs_diff = std::max(t.max_abs_diff, std::abs(serial[i] - parallel[i]));
    }
    return t;
}

Timing bench_round(int workers_high) {
    RunConfig cfg;
    cfg.scenario.kind = ScenarioKind::class_incremental;
    cfg.scenario.num_clients = 4;
    cfg.scenario.num_classes = 8;
    cfg.scenario.classes_per_task = 2;
    cfg.scenario.samples_per_class = 200;
    cfg.sgd.epochs = 5;
    const DatasetStore store = build_dataset(cfg, 1);
    const ExperimentConfig exp = experiment_config(cfg, store);

    Timing t;
    std::vector<double> iaa_serial, iaa_parallel;
#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    double start = now_ms();
    iaa_serial = run_experiment(MethodId::pfedgrp, cfg.scenario, store, exp, 1).iaa;
    t.serial_ms = now_ms() - start;
#ifdef _OPENMP
    omp_set_num_threads(workers_high);
#endif
    start = now_ms();
    iaa_parallel = run_experiment(MethodId::pfedgrp, cfg.scenario, store, exp, 1).iaa;
    t.parallel_ms = now_ms() - start;
    for (size_t i = 0; i < iaa_serial.size(); ++i) {
        t.max_abs_diff = std::max(t.max_abs_diff, std::abs(iaa_serial[i] - iaa_parallel[i]));
    }
    return t;
}

}  // namespace

int main() {
#ifdef _OPENMP
    const int workers = omp_get_max_threads();
    std::printf("OpenMP enabled, %d worker(s)\n\n", workers);
#else
    const int workers = 1;
    std::printf("OpenMP disabled (serial build)\n\n");
#endif

    ModelArch arch;
    arch.input_dim = 32;
    arch.hidden_dims = {128, 128};
    arch.num_classes = 10;
    Rng rng(42);
    const LabeledBatch batch = random_batch(arch, 4096, rng);

    print_row("forward 4096x32 (128,128)", bench_forward(arch, batch, 5));
    print_row("gradient 4096x32 (128,128)", bench_grad(arch, batch, 5));
    print_row("full run, 1 vs N workers", bench_round(workers));
    std::printf("\nround results must agree bit-for-bit across worker counts: ");
    std::printf("the max|diff| above is required to be 0.\n");
    return 0;
}
