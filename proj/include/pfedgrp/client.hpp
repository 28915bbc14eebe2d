#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>

#include "pfedgrp/model.hpp"
#include "pfedgrp/replay.hpp"

namespace pfedgrp {

struct ClientState {
    int client_id = 0;
    LabelCountVector cumulative_counts;
    AuxiliaryModel aux;
    LabeledBatch cumulative_test;
    std::optional<ParamVector> last_personalized;
    std::set<int> seen_classes;
};

// How many generator fits ran at each budget this round; lets tests verify
// the cache-transfer path without instrumenting globals.
struct FitStats {
    int init_fits = 0;
    int transfer_fits = 0;
};

struct RoundUpload {
    int client_id = 0;
    ParamVector theta_star;
    std::map<int, GeneratorParams> updated_submodels;
    LabelCountVector label_counts;  // cumulative label distribution
    long long real_sample_count = 0;
    long long train_sample_count = 0;  // real + replay
    FitStats fit_stats;
};

struct ClientConfig {
    ModelArch arch;
    SgdConfig sgd;
    double lambda_align = 0.25;
    double fedprox_mu = 0.01;
    GeneratorConfig generator;
    bool disable_replay = false;
};

// Server-side parameter cache probe for classes this client has never seen.
using CacheLookup = std::function<std::optional<GeneratorParams>(int)>;

// One full local round: accumulate label counts, plan and sample replay,
// train the task model from the global initialization with alignment against
// the personalized model, refresh the current classes' generators. The round
// is transactional; any error leaves the input state untouched.
std::pair<RoundUpload, ClientState> local_round(const ClientState& state,
                                                const LabeledBatch& task_train,
                                                const ParamVector& global_model,
                                                const std::optional<ParamVector>& personalized,
                                                const ClientConfig& cfg,
                                                const CacheLookup& cache_lookup, uint64_t seed);

enum class BaselineMethod { fedavg, fedprox, fedavg_replay, asg, asp };

// Baselines and ablations. fedavg/fedprox train on real data only; the
// replay variants reuse the full replay pipeline. asg and asp drop the
// alignment loss and differ only in the training initialization (global vs
// the previous personalized model).
std::pair<RoundUpload, ClientState> local_round_baseline(
    const ClientState& state, const LabeledBatch& task_train, const ParamVector& global_model,
    BaselineMethod method, const ClientConfig& cfg, const CacheLookup& cache_lookup,
    uint64_t seed);

}  // namespace pfedgrp
