#pragma once

#include <string>
#include <vector>

#include "pfedgrp/data.hpp"
#include "pfedgrp/orchestrator.hpp"

namespace pfedgrp {

struct SyntheticSpec {
    int feature_dim = 8;
    double class_separation = 6.0;
    long long per_class_train = 0;  // 0: sized to the stream demand
    long long per_class_test = 0;   // 0: half of per_class_train
};

struct IdxSpec {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

enum class DatasetSource { synthetic, idx };

struct RunConfig {
    std::vector<MethodId> methods = {MethodId::pfedgrp};
    std::vector<uint64_t> seeds = {1};
    std::string output_dir = "results";
    ScenarioConfig scenario;
    DatasetSource source = DatasetSource::synthetic;
    SyntheticSpec synthetic;
    IdxSpec idx;
    std::vector<int> hidden_dims = {64, 64};
    Activation activation = Activation::relu;
    SgdConfig sgd;
    double lambda_align = 0.25;
    double fedprox_mu = 0.01;
    long long replay_budget = 512;
    WeightOptConfig weight_opt;
    GeneratorConfig generator;
    RunOptions options;
};

// Parses a JSON config. Missing keys take the defaults above; unknown keys
// are hard errors naming the offending path.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

// Fully-resolved config as JSON; re-parsing it reproduces the RunConfig.
std::string effective_config_json(const RunConfig& cfg);

// Referenced files must exist; numeric and structural constraints hold.
void validate_config(const RunConfig& cfg);

// Builds the dataset for one seed. Synthetic pools with auto sizing are cut
// to the exact per-class stream demand.
DatasetStore build_dataset(const RunConfig& cfg, uint64_t seed);

ExperimentConfig experiment_config(const RunConfig& cfg, const DatasetStore& store);

}  // namespace pfedgrp
