#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pfedgrp/client.hpp"
#include "pfedgrp/model.hpp"
#include "pfedgrp/replay.hpp"

namespace pfedgrp {

struct CachedSubmodel {
    GeneratorParams params;
    int round = 0;
    int client_id = 0;
};

struct ServerCache {
    std::map<int, ParamVector> theta_by_client;
    std::map<int, AuxiliaryModel> aux_by_client;
    std::map<int, CachedSubmodel> newest_by_class;
    std::map<int, LabelCountVector> counts_by_client;
    int round = 0;
};

struct WeightOptConfig {
    int steps = 20;
    double step_size = 0.1;
};

// Collaboration weights for one client: softmax-reparameterized gradient
// descent on the replay loss of the mixed model, cold-started at uniform.
// The step seeds at step_size, doubles after an accepted move and halves on
// a rejected one; an increase is never accepted, so the returned weights
// never do worse than uniform.
AggregationWeights optimize_weights(const std::vector<ParamVector>& thetas,
                                    const LabeledBatch& replay_set, const ModelArch& arch,
                                    const WeightOptConfig& cfg);

// Per-class replay counts for a budget, proportional to label counts by
// largest-remainder apportionment (remainder ties to the lowest class id).
LabelCountVector apportion_replay(const LabelCountVector& label_counts, long long budget);

// Advances the round counter and folds the uploads into the cache mirrors.
// Uploads are merged in ascending client-id order, so when two clients upload
// the same class in one round the higher id wins the per-class cache slot.
ServerCache merge_uploads(ServerCache cache, const std::vector<RoundUpload>& uploads);

struct AggregateResult {
    std::vector<ParamVector> personalized;     // one per upload, same order
    std::vector<AggregationWeights> weights;   // the optimized W* per client
    ParamVector global_mean;                   // unweighted mean of uploads
    ServerCache cache;
};

// One aggregation round: merge uploads into the cache, then per client draw
// a replay set from its mirrored generators and optimize its collaboration
// weights. force_uniform skips optimization and mixes uniformly.
AggregateResult aggregate_round(const std::vector<RoundUpload>& uploads, const ServerCache& cache,
                                const ModelArch& arch, const WeightOptConfig& opt_cfg,
                                long long replay_budget, uint64_t seed,
                                bool force_uniform = false);

// Newest cached generator for the class across all clients, if any.
std::optional<GeneratorParams> lookup_class(const ServerCache& cache, int class_id);

// Versioned checkpoint of the full cache.
void save_cache(const ServerCache& cache, const std::string& path);
ServerCache load_cache(const std::string& path);

}  // namespace pfedgrp
