#include "pfedgrp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pfedgrp/rng.hpp"

namespace pfedgrp {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_u32_be(std::istream& in, size_t offset, const std::string& path) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) {
        throw ParseError(path + ": truncated file at byte offset " + std::to_string(offset));
    }
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_u32_be(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                          static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    return in;
}

}  // namespace

IdxImages read_idx_images(const std::string& path) {
    std::ifstream in = open_input(path);
    const uint32_t magic = read_u32_be(in, 0, path);
    if (magic != kImageMagic) {
        throw ParseError(path + ": bad image magic at byte offset 0 (expected 0x00000803)");
    }
    IdxImages img;
    img.dims.resize(3);
    for (size_t i = 0; i < 3; ++i) img.dims[i] = read_u32_be(in, 4 + 4 * i, path);
    const size_t total = static_cast<size_t>(img.dims[0]) * img.dims[1] * img.dims[2];
    img.pixels.resize(total);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(total));
    if (static_cast<size_t>(in.gcount()) != total) {
        throw ParseError(path + ": truncated pixel data at byte offset " +
                         std::to_string(16 + in.gcount()));
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw ParseError(path + ": trailing bytes at byte offset " + std::to_string(16 + total));
    }
    return img;
}

IdxLabels read_idx_labels(const std::string& path) {
    std::ifstream in = open_input(path);
    const uint32_t magic = read_u32_be(in, 0, path);
    if (magic != kLabelMagic) {
        throw ParseError(path + ": bad label magic at byte offset 0 (expected 0x00000801)");
    }
    const uint32_t count = read_u32_be(in, 4, path);
    IdxLabels out;
    out.labels.resize(count);
    in.read(reinterpret_cast<char*>(out.labels.data()), count);
    if (static_cast<size_t>(in.gcount()) != count) {
        throw ParseError(path + ": truncated label data at byte offset " +
                         std::to_string(8 + in.gcount()));
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw ParseError(path + ": trailing bytes at byte offset " + std::to_string(8 + count));
    }
    return out;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open file for writing");
    write_u32_be(out, kImageMagic);
    for (uint32_t d : images.dims) write_u32_be(out, d);
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::string& path, const IdxLabels& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open file for writing");
    write_u32_be(out, kLabelMagic);
    write_u32_be(out, static_cast<uint32_t>(labels.labels.size()));
    out.write(reinterpret_cast<const char*>(labels.labels.data()),
              static_cast<std::streamsize>(labels.labels.size()));
}

ClassPools load_idx(const std::string& images_path, const std::string& labels_path) {
    const IdxImages img = read_idx_images(images_path);
    const IdxLabels lab = read_idx_labels(labels_path);
    if (img.dims[0] != lab.labels.size()) {
        throw ParseError(images_path + ": image count " + std::to_string(img.dims[0]) +
                         " (header byte offset 4) does not match label count " +
                         std::to_string(lab.labels.size()));
    }
    ClassPools pools;
    pools.feature_dim = static_cast<int>(img.dims[1] * img.dims[2]);
    int max_label = 0;
    for (uint8_t y : lab.labels) max_label = std::max(max_label, static_cast<int>(y));
    pools.by_class.resize(static_cast<size_t>(max_label) + 1);
    const size_t dim = static_cast<size_t>(pools.feature_dim);
    for (size_t i = 0; i < lab.labels.size(); ++i) {
        std::vector<double>& pool = pools.by_class[lab.labels[i]];
        const uint8_t* px = img.pixels.data() + i * dim;
        for (size_t j = 0; j < dim; ++j) pool.push_back(static_cast<double>(px[j]) / 255.0);
    }
    return pools;
}

DatasetStore make_store(ClassPools train, ClassPools test) {
    if (train.feature_dim != test.feature_dim) {
        throw ContractViolation("make_store: train/test feature_dim mismatch");
    }
    DatasetStore store;
    store.feature_dim = train.feature_dim;
    store.num_classes =
        static_cast<int>(std::max(train.by_class.size(), test.by_class.size()));
    train.by_class.resize(static_cast<size_t>(store.num_classes));
    test.by_class.resize(static_cast<size_t>(store.num_classes));
    store.train = std::move(train);
    store.test = std::move(test);
    return store;
}

std::vector<double> synthetic_class_mean(int num_classes, int feature_dim,
                                         double class_separation, int c) {
    // Classes sit on an integer lattice: class index written in base `side`
    // across the feature dimensions, scaled by the separation.
    int side = 1;
    while (std::pow(static_cast<double>(side), feature_dim) < static_cast<double>(num_classes)) {
        ++side;
    }
    std::vector<double> mean(static_cast<size_t>(feature_dim), 0.0);
    int rest = c;
    for (int j = 0; j < feature_dim && rest > 0; ++j) {
        mean[static_cast<size_t>(j)] = class_separation * static_cast<double>(rest % side);
        rest /= side;
    }
    return mean;
}

DatasetStore make_synthetic(int num_classes, int feature_dim, long long per_class_train,
                            long long per_class_test, double class_separation, uint64_t seed) {
    if (num_classes < 2 || feature_dim <= 0 || per_class_train <= 0 || per_class_test <= 0) {
        throw ContractViolation("make_synthetic: sizes must be positive and num_classes >= 2");
    }
    DatasetStore store;
    store.feature_dim = feature_dim;
    store.num_classes = num_classes;
    store.train.feature_dim = feature_dim;
    store.test.feature_dim = feature_dim;
    store.train.by_class.resize(static_cast<size_t>(num_classes));
    store.test.by_class.resize(static_cast<size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        const std::vector<double> mean =
            synthetic_class_mean(num_classes, feature_dim, class_separation, c);
        for (int part = 0; part < 2; ++part) {
            Rng rng(derive_seed(seed, static_cast<uint64_t>(c), static_cast<uint64_t>(part)));
            const long long n = part == 0 ? per_class_train : per_class_test;
            std::vector<double>& pool =
                part == 0 ? store.train.by_class[static_cast<size_t>(c)]
                          : store.test.by_class[static_cast<size_t>(c)];
            pool.reserve(static_cast<size_t>(n) * static_cast<size_t>(feature_dim));
            for (long long i = 0; i < n; ++i) {
                for (int j = 0; j < feature_dim; ++j) {
                    pool.push_back(mean[static_cast<size_t>(j)] + rng.normal());
                }
            }
        }
    }
    return store;
}

ScenarioKind parse_scenario_kind(const std::string& name) {
    if (name == "gradual") return ScenarioKind::gradual;
    if (name == "circulating") return ScenarioKind::circulating;
    if (name == "class_incremental") return ScenarioKind::class_incremental;
    if (name == "overlap_sweep") return ScenarioKind::overlap_sweep;
    throw ConfigError("unknown scenario kind '" + name + "'");
}

std::string scenario_kind_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::gradual: return "gradual";
        case ScenarioKind::circulating: return "circulating";
        case ScenarioKind::class_incremental: return "class_incremental";
        case ScenarioKind::overlap_sweep: return "overlap_sweep";
    }
    return "unknown";
}

void ScenarioConfig::validate() const {
    if (num_clients <= 0) throw ConfigError("scenario: num_clients must be positive");
    if (num_classes < 2) throw ConfigError("scenario: num_classes must be at least 2");
    if (classes_per_task <= 0) throw ConfigError("scenario: classes_per_task must be positive");
    if (samples_per_class <= 0) throw ConfigError("scenario: samples_per_class must be positive");
    if (total_rounds < 0) throw ConfigError("scenario: total_rounds must be nonnegative");
    if (kind == ScenarioKind::overlap_sweep) {
        if (overlap < 0) throw ConfigError("scenario: overlap must be nonnegative");
        if (classes_per_task != overlap + 2) {
            throw ConfigError("scenario: overlap_sweep requires classes_per_task = overlap + 2");
        }
        if (num_classes % 2 != 0) {
            throw ConfigError("scenario: overlap_sweep requires an even num_classes");
        }
        if (classes_per_task > num_classes) {
            throw ConfigError("scenario: classes_per_task exceeds num_classes");
        }
    } else {
        if (num_classes % classes_per_task != 0) {
            throw ConfigError("scenario: num_classes must be divisible by classes_per_task");
        }
    }
    const int pool_tasks = num_classes / classes_per_task;
    if (kind == ScenarioKind::gradual) {
        if (loop_size < 2) throw ConfigError("scenario: gradual needs loop_size >= 2");
        if (pool_tasks <= loop_size) {
            throw ConfigError("scenario: gradual needs more disjoint tasks than the loop size");
        }
        if (replace_period <= 0) throw ConfigError("scenario: replace_period must be positive");
    }
    if (kind == ScenarioKind::class_incremental && total_rounds > pool_tasks) {
        throw ConfigError("scenario: class budget exhausted before total_rounds (" +
                          std::to_string(pool_tasks) + " disjoint tasks available)");
    }
    if (rounds() <= 0) throw ConfigError("scenario: total_rounds must be positive");
}

int ScenarioConfig::rounds() const {
    if (total_rounds > 0) return total_rounds;
    if (kind == ScenarioKind::class_incremental) return num_classes / classes_per_task;
    return total_rounds;
}

namespace {

// One client's candidate tasks: random partition of all classes into
// disjoint groups of classes_per_task.
std::vector<std::vector<int>> partition_classes(const ScenarioConfig& cfg, Rng& rng) {
    std::vector<int> classes(static_cast<size_t>(cfg.num_classes));
    std::iota(classes.begin(), classes.end(), 0);
    rng.shuffle(classes);
    std::vector<std::vector<int>> tasks;
    for (int t = 0; t * cfg.classes_per_task < cfg.num_classes; ++t) {
        tasks.emplace_back(classes.begin() + t * cfg.classes_per_task,
                           classes.begin() + (t + 1) * cfg.classes_per_task);
    }
    return tasks;
}

// Cyclic sliding windows of size classes_per_task with step 2 over a random
// class order: adjacent windows share exactly `overlap` classes.
std::vector<std::vector<int>> overlap_windows(const ScenarioConfig& cfg, Rng& rng) {
    std::vector<int> classes(static_cast<size_t>(cfg.num_classes));
    std::iota(classes.begin(), classes.end(), 0);
    rng.shuffle(classes);
    std::vector<std::vector<int>> windows;
    const int n = cfg.num_classes;
    for (int w = 0; 2 * w < n; ++w) {
        std::vector<int> task;
        for (int j = 0; j < cfg.classes_per_task; ++j) {
            task.push_back(classes[static_cast<size_t>((2 * w + j) % n)]);
        }
        windows.push_back(std::move(task));
    }
    return windows;
}

TaskSpec make_task(int round, const std::vector<int>& classes, long long samples_per_class,
                   std::map<int, int>& next_part) {
    TaskSpec spec;
    spec.round = round;
    for (int c : classes) {
        spec.class_counts[c] = samples_per_class;
        spec.part_index[c] = next_part[c]++;
    }
    return spec;
}

}  // namespace

std::vector<TaskStream> build_streams(const ScenarioConfig& cfg) {
    cfg.validate();
    const int rounds = cfg.rounds();
    std::vector<TaskStream> streams;
    streams.reserve(static_cast<size_t>(cfg.num_clients));

    for (int i = 0; i < cfg.num_clients; ++i) {
        Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(i), 0x5c));
        TaskStream stream;
        stream.client_id = i;
        std::map<int, int> next_part;

        switch (cfg.kind) {
            case ScenarioKind::circulating: {
                const std::vector<std::vector<int>> tasks = partition_classes(cfg, rng);
                for (int r = 1; r <= rounds; ++r) {
                    const size_t idx = static_cast<size_t>((r - 1) % static_cast<int>(tasks.size()));
                    stream.tasks.push_back(
                        make_task(r, tasks[idx], cfg.samples_per_class, next_part));
                }
                break;
            }
            case ScenarioKind::class_incremental: {
                const std::vector<std::vector<int>> tasks = partition_classes(cfg, rng);
                for (int r = 1; r <= rounds; ++r) {
                    stream.tasks.push_back(
                        make_task(r, tasks[static_cast<size_t>(r - 1)], cfg.samples_per_class,
                                  next_part));
                }
                break;
            }
            case ScenarioKind::gradual: {
                const std::vector<std::vector<int>> tasks = partition_classes(cfg, rng);
                std::vector<size_t> order(tasks.size());
                std::iota(order.begin(), order.end(), 0);
                rng.shuffle(order);
                std::vector<size_t> loop(order.begin(), order.begin() + cfg.loop_size);
                int executed_since_change = 0;
                for (int r = 1; r <= rounds; ++r) {
                    const size_t member = static_cast<size_t>(executed_since_change) %
                                          static_cast<size_t>(cfg.loop_size);
                    stream.tasks.push_back(
                        make_task(r, tasks[loop[member]], cfg.samples_per_class, next_part));
                    ++executed_since_change;
                    if (executed_since_change % cfg.replace_period == 0) {
                        // Swap one loop member for a task outside the current loop.
                        std::vector<size_t> candidates;
                        for (size_t t = 0; t < tasks.size(); ++t) {
                            if (std::find(loop.begin(), loop.end(), t) == loop.end()) {
                                candidates.push_back(t);
                            }
                        }
                        const size_t victim =
                            static_cast<size_t>(rng.uniform_int(cfg.loop_size));
                        const size_t replacement = candidates[static_cast<size_t>(
                            rng.uniform_int(static_cast<int64_t>(candidates.size())))];
                        loop[victim] = replacement;
                    }
                }
                break;
            }
            case ScenarioKind::overlap_sweep: {
                const std::vector<std::vector<int>> windows = overlap_windows(cfg, rng);
                for (int r = 1; r <= rounds; ++r) {
                    const size_t idx =
                        static_cast<size_t>((r - 1) % static_cast<int>(windows.size()));
                    stream.tasks.push_back(
                        make_task(r, windows[idx], cfg.samples_per_class, next_part));
                }
                break;
            }
        }
        streams.push_back(std::move(stream));
    }
    return streams;
}

std::vector<TaskStream> fit_streams_to_store(std::vector<TaskStream> streams,
                                             const DatasetStore& store) {
    for (TaskStream& stream : streams) {
        std::map<int, long long> demand;
        for (const TaskSpec& task : stream.tasks) {
            for (const auto& [c, count] : task.class_counts) {
                (void)count;
                demand[c] += 1;
            }
        }
        std::map<int, long long> capped;
        for (const auto& [c, occurrences] : demand) {
            const long long pool = store.train.count(c);
            const long long per_slice = pool / occurrences;  // partial final slices dropped
            if (per_slice <= 0) {
                throw DataBudgetError("class " + std::to_string(c) + " pool of " +
                                      std::to_string(pool) + " cannot serve " +
                                      std::to_string(occurrences) + " slices for client " +
                                      std::to_string(stream.client_id));
            }
            capped[c] = per_slice;
        }
        for (TaskSpec& task : stream.tasks) {
            for (auto& [c, count] : task.class_counts) {
                count = std::min(count, capped[c]);
            }
        }
    }
    return streams;
}

std::pair<LabeledBatch, LabeledBatch> materialize(const DatasetStore& store,
                                                  const TaskSpec& spec) {
    LabeledBatch train, test_shard;
    train.feature_dim = static_cast<size_t>(store.feature_dim);
    test_shard.feature_dim = static_cast<size_t>(store.feature_dim);
    for (const auto& [c, count] : spec.class_counts) {
        if (count <= 0) continue;
        const long long part = spec.part_index.at(c);
        const long long train_pool = store.train.count(c);
        const long long test_pool = store.test.count(c);
        if ((part + 1) * count > train_pool) {
            throw DataBudgetError("class " + std::to_string(c) + ": slice " +
                                  std::to_string(part) + " of size " + std::to_string(count) +
                                  " exceeds train pool of " + std::to_string(train_pool));
        }
        for (long long i = 0; i < count; ++i) {
            train.append_row(store.train.sample(c, part * count + i), c, false);
        }
        // Proportional test shard for this slice.
        const long long shard = train_pool > 0 ? count * test_pool / train_pool : 0;
        if ((part + 1) * shard > test_pool) {
            throw DataBudgetError("class " + std::to_string(c) + ": test shard " +
                                  std::to_string(part) + " exceeds test pool of " +
                                  std::to_string(test_pool));
        }
        for (long long i = 0; i < shard; ++i) {
            test_shard.append_row(store.test.sample(c, part * shard + i), c, false);
        }
    }
    return {std::move(train), std::move(test_shard)};
}

}  // namespace pfedgrp
