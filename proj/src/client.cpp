#include "pfedgrp/client.hpp"

#include <algorithm>

namespace pfedgrp {

namespace {

struct RoundTraits {
    bool use_replay = true;
    bool fit_generators = true;
    bool use_alignment = true;
    bool init_from_personalized = false;
    double prox_mu = 0.0;
};

// Rows of one class, contiguous.
std::vector<double> class_rows(const LabeledBatch& batch, int c, long long& count) {
    std::vector<double> rows;
    count = 0;
    for (size_t i = 0; i < batch.rows(); ++i) {
        if (batch.labels[i] != c) continue;
        const double* x = batch.row(i);
        rows.insert(rows.end(), x, x + batch.feature_dim);
        ++count;
    }
    return rows;
}

std::pair<RoundUpload, ClientState> run_round(const ClientState& state,
                                              const LabeledBatch& task_train,
                                              const ParamVector& global_model,
                                              const std::optional<ParamVector>& personalized,
                                              const RoundTraits& traits, const ClientConfig& cfg,
                                              const CacheLookup& cache_lookup, uint64_t seed) {
    if (task_train.rows() == 0) throw ContractViolation("local_round: empty task data");
    task_train.validate(cfg.arch.num_classes);

    const std::set<int> previous_classes = state.seen_classes;
    const LabelCountVector current = counts_of(task_train);
    const LabelCountVector cumulative = accumulate(state.cumulative_counts, current);

    ReconstructionPlan plan;
    if (traits.use_replay && !cfg.disable_replay) {
        plan = reconstruction_plan(cumulative, current);
    }

    // Warm starts for the current task's generators. A class this client has
    // never seen probes the server cache; a miss means a fresh init-budget fit.
    std::map<int, std::optional<GeneratorParams>> warm_starts;
    if (traits.fit_generators) {
        for (int c : current.support()) {
            auto it = state.aux.find(c);
            if (it != state.aux.end()) {
                warm_starts[c] = it->second;
            } else {
                warm_starts[c] = cache_lookup ? cache_lookup(c) : std::nullopt;
            }
        }
    }

    // Replay-only classes must already hold a local generator; sample_replay
    // raises ReplayError otherwise.
    const LabeledBatch replay = sample_replay(state.aux, plan, derive_seed(seed, 0x4e9, 0));

    LabeledBatch train_set = task_train;
    train_set.append(replay);

    const ParamVector* init = &global_model;
    if (traits.init_from_personalized && state.last_personalized.has_value()) {
        init = &state.last_personalized.value();
    }

    Objective objective;
    if (traits.use_alignment && personalized.has_value() && !previous_classes.empty()) {
        objective.lambda_align = cfg.lambda_align;
        objective.teacher = &personalized.value();
        objective.previous_classes = previous_classes;
    }
    if (traits.prox_mu > 0.0) {
        objective.prox_mu = traits.prox_mu;
        objective.prox_center = &global_model;
    }

    RoundUpload upload;
    upload.client_id = state.client_id;
    upload.theta_star =
        sgd_train(cfg.arch, *init, train_set, cfg.sgd, objective, derive_seed(seed, 0x59d, 0));
    upload.label_counts = cumulative;
    upload.real_sample_count = static_cast<long long>(task_train.rows());
    upload.train_sample_count = static_cast<long long>(train_set.rows());

    ClientState next = state;
    next.cumulative_counts = cumulative;
    next.seen_classes = cumulative.support();
    if (traits.fit_generators) {
        for (int c : current.support()) {
            long long count = 0;
            const std::vector<double> rows = class_rows(task_train, c, count);
            const std::optional<GeneratorParams>& warm = warm_starts[c];
            const FitBudget budget = warm.has_value() ? FitBudget::transfer : FitBudget::init;
            GeneratorParams fitted = fit_submodel(
                rows.data(), count, static_cast<int>(task_train.feature_dim), warm, budget,
                cfg.generator, derive_seed(seed, 0xf17, static_cast<uint64_t>(c)));
            if (budget == FitBudget::transfer) {
                ++upload.fit_stats.transfer_fits;
            } else {
                ++upload.fit_stats.init_fits;
            }
            upload.updated_submodels[c] = fitted;
            next.aux[c] = std::move(fitted);
        }
    }
    return {std::move(upload), std::move(next)};
}

}  // namespace

std::pair<RoundUpload, ClientState> local_round(const ClientState& state,
                                                const LabeledBatch& task_train,
                                                const ParamVector& global_model,
                                                const std::optional<ParamVector>& personalized,
                                                const ClientConfig& cfg,
                                                const CacheLookup& cache_lookup, uint64_t seed) {
    RoundTraits traits;
    traits.use_replay = true;
    traits.use_alignment = true;
    return run_round(state, task_train, global_model, personalized, traits, cfg, cache_lookup,
                     seed);
}

std::pair<RoundUpload, ClientState> local_round_baseline(
    const ClientState& state, const LabeledBatch& task_train, const ParamVector& global_model,
    BaselineMethod method, const ClientConfig& cfg, const CacheLookup& cache_lookup,
    uint64_t seed) {
    RoundTraits traits;
    traits.use_alignment = false;
    switch (method) {
        case BaselineMethod::fedavg:
            traits.use_replay = false;
            traits.fit_generators = false;
            break;
        case BaselineMethod::fedprox:
            traits.use_replay = false;
            traits.fit_generators = false;
            traits.prox_mu = cfg.fedprox_mu;
            break;
        case BaselineMethod::fedavg_replay:
            break;
        case BaselineMethod::asg:
            break;
        case BaselineMethod::asp:
            traits.init_from_personalized = true;
            break;
    }
    return run_round(state, task_train, global_model, std::nullopt, traits, cfg, cache_lookup,
                     seed);
}

}  // namespace pfedgrp
