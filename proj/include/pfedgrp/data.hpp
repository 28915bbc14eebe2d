#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pfedgrp/model.hpp"

namespace pfedgrp {

// Raw IDX contents. Parsing keeps every byte of information so
// parse -> serialize round-trips are byte-identical.
struct IdxImages {
    std::vector<uint32_t> dims;  // count, rows, cols
    std::vector<uint8_t> pixels;
};

struct IdxLabels {
    std::vector<uint8_t> labels;
};

IdxImages read_idx_images(const std::string& path);
IdxLabels read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const IdxLabels& labels);

// Per-class sample pools, features row-major and scaled to [0, 1].
struct ClassPools {
    int feature_dim = 0;
    std::vector<std::vector<double>> by_class;

    long long count(int c) const {
        if (c < 0 || static_cast<size_t>(c) >= by_class.size() || feature_dim == 0) return 0;
        return static_cast<long long>(by_class[static_cast<size_t>(c)].size()) / feature_dim;
    }
    const double* sample(int c, long long i) const {
        return by_class[static_cast<size_t>(c)].data() + static_cast<size_t>(i) * feature_dim;
    }
};

// Pairs an IDX image file with its label file and groups samples per class.
ClassPools load_idx(const std::string& images_path, const std::string& labels_path);

struct DatasetStore {
    int feature_dim = 0;
    int num_classes = 0;
    ClassPools train;
    ClassPools test;
};

DatasetStore make_store(ClassPools train, ClassPools test);

// Gaussian blobs with class means on a deterministic lattice scaled by
// class_separation, unit diagonal covariance. Fully seeded.
DatasetStore make_synthetic(int num_classes, int feature_dim, long long per_class_train,
                            long long per_class_test, double class_separation, uint64_t seed);

// Lattice mean of class c; exposed so tests can build centroid oracles.
std::vector<double> synthetic_class_mean(int num_classes, int feature_dim,
                                         double class_separation, int c);

enum class ScenarioKind { gradual, circulating, class_incremental, overlap_sweep };

ScenarioKind parse_scenario_kind(const std::string& name);
std::string scenario_kind_name(ScenarioKind kind);

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::class_incremental;
    int num_clients = 4;
    int num_classes = 8;
    int classes_per_task = 2;
    long long samples_per_class = 200;
    int loop_size = 2;        // gradual: tasks in the active loop
    int replace_period = 30;  // gradual: executed tasks between replacements
    int overlap = 0;          // overlap_sweep: classes shared by adjacent tasks
    int total_rounds = 0;     // 0 for class_incremental derives one pass over all classes
    uint64_t seed = 1;

    void validate() const;
    int rounds() const;  // total_rounds with the class_incremental default applied
};

// One task: per-class sample demand plus which pool slice serves it.
struct TaskSpec {
    int round = 0;
    std::map<int, long long> class_counts;
    std::map<int, int> part_index;
};

struct TaskStream {
    int client_id = 0;
    std::vector<TaskSpec> tasks;
};

// Per-client task schedules for the scenario. Pure function of the config.
std::vector<TaskStream> build_streams(const ScenarioConfig& cfg);

// Caps per-task class counts so every demanded slice fits in the store:
// count = min(requested, floor(pool / demanded occurrences)) per (client,
// class). Throws DataBudgetError when a class pool cannot serve its demand.
std::vector<TaskStream> fit_streams_to_store(std::vector<TaskStream> streams,
                                             const DatasetStore& store);

// Training slice plus its proportional test shard. The caller appends the
// shard to the client's cumulative test set.
std::pair<LabeledBatch, LabeledBatch> materialize(const DatasetStore& store, const TaskSpec& spec);

}  // namespace pfedgrp
