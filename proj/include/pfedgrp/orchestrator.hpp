#pragma once

#include <string>
#include <vector>

#include "pfedgrp/client.hpp"
#include "pfedgrp/data.hpp"
#include "pfedgrp/metrics.hpp"
#include "pfedgrp/server.hpp"

namespace pfedgrp {

enum class MethodId { pfedgrp, fedavg, fedprox, fedavg_replay, pfedgrp_asg, pfedgrp_asp };

MethodId parse_method(const std::string& name);
std::string method_name(MethodId method);

// pfedgrp-family methods receive a personalized model per client; the FL
// baselines receive the single global model.
bool is_personalized(MethodId method);

// Harness switches used by degenerate-case checks; off in normal runs.
struct RunOptions {
    bool disable_replay = false;
    bool force_uniform_weights = false;
    bool unweighted_fedavg = false;
};

struct ExperimentConfig {
    ModelArch arch;
    SgdConfig sgd;
    double lambda_align = 0.25;
    double fedprox_mu = 0.01;
    GeneratorConfig generator;
    WeightOptConfig weight_opt;
    long long replay_budget = 512;
    RunOptions options;
};

struct PhaseTimings {
    double local_seconds = 0.0;
    double aggregate_seconds = 0.0;
    double evaluate_seconds = 0.0;
};

struct RunRecord {
    std::string method;
    std::string scenario;
    uint64_t seed = 0;
    std::vector<double> iaa;                          // one entry per round
    std::vector<std::vector<double>> client_accuracy; // [round][client]
    std::vector<std::vector<long long>> client_counts;
    PhaseTimings timings;
};

// Runs the full FL loop for one (method, scenario, seed). Deterministic: the
// record is a pure function of the arguments, and for a fixed seed every
// method sees identical task streams and data slices.
RunRecord run_experiment(MethodId method, const ScenarioConfig& scenario,
                         const DatasetStore& store, const ExperimentConfig& cfg, uint64_t seed);

// Per-client accuracies and the round IAA for a set of evaluated models.
AccuracyRow evaluate_round(const ModelArch& arch, const std::vector<ParamVector>& models,
                           const std::vector<const LabeledBatch*>& cumulative_tests,
                           const std::vector<long long>& counts);

}  // namespace pfedgrp
