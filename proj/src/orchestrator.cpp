#include "pfedgrp/orchestrator.hpp"

#include <chrono>
#include <exception>

#include "pfedgrp/parallel.hpp"

namespace pfedgrp {

MethodId parse_method(const std::string& name) {
    if (name == "pfedgrp") return MethodId::pfedgrp;
    if (name == "fedavg") return MethodId::fedavg;
    if (name == "fedprox") return MethodId::fedprox;
    if (name == "fedavg_replay") return MethodId::fedavg_replay;
    if (name == "pfedgrp_asg") return MethodId::pfedgrp_asg;
    if (name == "pfedgrp_asp") return MethodId::pfedgrp_asp;
    throw ConfigError("unknown method '" + name + "'");
}

std::string method_name(MethodId method) {
    switch (method) {
        case MethodId::pfedgrp: return "pfedgrp";
        case MethodId::fedavg: return "fedavg";
        case MethodId::fedprox: return "fedprox";
        case MethodId::fedavg_replay: return "fedavg_replay";
        case MethodId::pfedgrp_asg: return "pfedgrp_asg";
        case MethodId::pfedgrp_asp: return "pfedgrp_asp";
    }
    return "unknown";
}

bool is_personalized(MethodId method) {
    return method == MethodId::pfedgrp || method == MethodId::pfedgrp_asg ||
           method == MethodId::pfedgrp_asp;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Substream tags; clients, rounds and purposes never collide.
constexpr uint64_t kTagInit = 0x1a17;
constexpr uint64_t kTagLocal = 0x10ca1;
constexpr uint64_t kTagAggregate = 0xa99;

}  // namespace

AccuracyRow evaluate_round(const ModelArch& arch, const std::vector<ParamVector>& models,
                           const std::vector<const LabeledBatch*>& cumulative_tests,
                           const std::vector<long long>& counts) {
    if (models.size() != cumulative_tests.size() || models.size() != counts.size()) {
        throw ContractViolation("evaluate_round: inconsistent client counts");
    }
    AccuracyRow row;
    row.accuracy.resize(models.size());
    row.counts = counts;
    std::exception_ptr failure;
    parallel_for(models.size(), [&](size_t i) {
        try {
            row.accuracy[i] = accuracy(arch, models[i], *cumulative_tests[i]);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);
    return row;
}

RunRecord run_experiment(MethodId method, const ScenarioConfig& scenario,
                         const DatasetStore& store, const ExperimentConfig& cfg, uint64_t seed) {
    cfg.arch.validate();
    cfg.sgd.validate();
    if (cfg.arch.input_dim != store.feature_dim) {
        throw ConfigError("run_experiment: model input_dim does not match dataset feature_dim");
    }
    if (cfg.arch.num_classes < scenario.num_classes) {
        throw ConfigError("run_experiment: model num_classes smaller than scenario classes");
    }

    ScenarioConfig stream_cfg = scenario;
    stream_cfg.seed = derive_seed(seed, 0x57e, 0);  // method-independent by construction
    const std::vector<TaskStream> streams = fit_streams_to_store(build_streams(stream_cfg), store);
    const size_t n = streams.size();
    const int rounds = stream_cfg.rounds();

    ClientConfig client_cfg;
    client_cfg.arch = cfg.arch;
    client_cfg.sgd = cfg.sgd;
    client_cfg.lambda_align = cfg.lambda_align;
    client_cfg.fedprox_mu = cfg.fedprox_mu;
    client_cfg.generator = cfg.generator;
    client_cfg.disable_replay = cfg.options.disable_replay;

    std::vector<ClientState> states(n);
    for (size_t i = 0; i < n; ++i) {
        states[i].client_id = streams[i].client_id;
        states[i].cumulative_test.feature_dim = static_cast<size_t>(store.feature_dim);
    }
    std::vector<long long> cumulative_real(n, 0);

    Rng init_rng(derive_seed(seed, kTagInit, 0));
    ParamVector global = random_init(cfg.arch, init_rng);
    std::vector<ParamVector> received(n, global);
    ServerCache cache;

    RunRecord record;
    record.method = method_name(method);
    record.scenario = scenario_kind_name(scenario.kind);
    record.seed = seed;

    for (int t = 1; t <= rounds; ++t) {
        // --- local phase -------------------------------------------------
        const auto local_start = std::chrono::steady_clock::now();
        const ServerCache cache_snapshot = cache;
        const CacheLookup lookup = [&cache_snapshot](int c) {
            return lookup_class(cache_snapshot, c);
        };
        std::vector<RoundUpload> uploads(n);
        std::exception_ptr failure;
        parallel_for(n, [&](size_t i) {
            try {
                auto [train, shard] = materialize(store, streams[i].tasks[static_cast<size_t>(t - 1)]);
                states[i].cumulative_test.append(shard);
                cumulative_real[i] += static_cast<long long>(train.rows());
                const uint64_t round_seed =
                    derive_seed(seed, kTagLocal,
                                (static_cast<uint64_t>(streams[i].client_id) << 24) |
                                    static_cast<uint64_t>(t));
                std::pair<RoundUpload, ClientState> out = [&] {
                    switch (method) {
                        case MethodId::pfedgrp:
                            return local_round(states[i], train, global,
                                               states[i].last_personalized, client_cfg, lookup,
                                               round_seed);
                        case MethodId::fedavg:
                            return local_round_baseline(states[i], train, global,
                                                        BaselineMethod::fedavg, client_cfg,
                                                        lookup, round_seed);
                        case MethodId::fedprox:
                            return local_round_baseline(states[i], train, global,
                                                        BaselineMethod::fedprox, client_cfg,
                                                        lookup, round_seed);
                        case MethodId::fedavg_replay:
                            return local_round_baseline(states[i], train, global,
                                                        BaselineMethod::fedavg_replay, client_cfg,
                                                        lookup, round_seed);
                        case MethodId::pfedgrp_asg:
                            return local_round_baseline(states[i], train, global,
                                                        BaselineMethod::asg, client_cfg, lookup,
                                                        round_seed);
                        case MethodId::pfedgrp_asp:
                            return local_round_baseline(states[i], train, global,
                                                        BaselineMethod::asp, client_cfg, lookup,
                                                        round_seed);
                    }
                    throw ConfigError("run_experiment: unhandled method");
                }();
                uploads[i] = std::move(out.first);
                states[i] = std::move(out.second);
            } catch (...) {
#pragma omp critical
                if (!failure) failure = std::current_exception();
            }
        });
        if (failure) {
            try {
                std::rethrow_exception(failure);
            } catch (const std::exception& e) {
                throw std::runtime_error("round " + std::to_string(t) +
                                         " local phase failed: " + e.what());
            }
        }
        record.timings.local_seconds += seconds_since(local_start);

        // --- aggregation phase -------------------------------------------
        const auto agg_start = std::chrono::steady_clock::now();
        try {
            if (is_personalized(method)) {
                AggregateResult agg = aggregate_round(
                    uploads, cache, cfg.arch, cfg.weight_opt, cfg.replay_budget,
                    derive_seed(seed, kTagAggregate, static_cast<uint64_t>(t)),
                    cfg.options.force_uniform_weights);
                for (size_t i = 0; i < n; ++i) {
                    received[i] = agg.personalized[i];
                    states[i].last_personalized = received[i];
                }
                global = agg.global_mean;
                cache = std::move(agg.cache);
            } else {
                // FedAvg-style mean, weighted by the current-round training
                // set size (replay included for fedavg_replay).
                std::vector<ParamVector> thetas;
                thetas.reserve(n);
                for (const RoundUpload& up : uploads) thetas.push_back(up.theta_star);
                AggregationWeights weights = AggregationWeights::uniform(n);
                if (!cfg.options.unweighted_fedavg) {
                    long long total = 0;
                    for (const RoundUpload& up : uploads) total += up.train_sample_count;
                    for (size_t i = 0; i < n; ++i) {
                        weights.weights[i] = static_cast<double>(uploads[i].train_sample_count) /
                                             static_cast<double>(total);
                    }
                }
                global = mix_params(thetas, weights);
                for (size_t i = 0; i < n; ++i) received[i] = global;
                // The cache still mirrors uploads so replay-based baselines
                // can serve transfer requests.
                cache = merge_uploads(std::move(cache), uploads);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(t) +
                                     " aggregation phase failed: " + e.what());
        }
        record.timings.aggregate_seconds += seconds_since(agg_start);

        // --- evaluation phase ----------------------------------------------
        const auto eval_start = std::chrono::steady_clock::now();
        std::vector<const LabeledBatch*> tests(n);
        for (size_t i = 0; i < n; ++i) tests[i] = &states[i].cumulative_test;
        AccuracyRow row;
        try {
            row = evaluate_round(cfg.arch, received, tests, cumulative_real);
        } catch (const std::exception& e) {
            throw std::runtime_error("round " + std::to_string(t) +
                                     " evaluation phase failed: " + e.what());
        }
        record.iaa.push_back(iaa(row));
        record.client_accuracy.push_back(row.accuracy);
        record.client_counts.push_back(row.counts);
        record.timings.evaluate_seconds += seconds_since(eval_start);
    }
    return record;
}

}  // namespace pfedgrp
