#include "pfedgrp/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pfedgrp {

namespace {

using nlohmann::json;

// Walks an object with a whitelist; unknown keys are configuration errors.
class ObjectReader {
public:
    ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    ~ObjectReader() = default;

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            (void)value;
            if (seen_.count(key) == 0) {
                throw ConfigError(path_.empty() ? "unknown key '" + key + "'"
                                                : path_ + ": unknown key '" + key + "'");
            }
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key);
    }

    const json& at(const std::string& key) { return node_.at(key); }

    std::string child_path(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = node_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(child_path(key) + ": type mismatch");
        }
    }

    const json* object(const std::string& key) {
        if (!has(key)) return nullptr;
        return &node_.at(key);
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_scenario(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "scenario");
    const bool classes_per_task_given = node.contains("classes_per_task");
    if (r.has("kind")) {
        std::string kind;
        r.read("kind", kind);
        cfg.scenario.kind = parse_scenario_kind(kind);
    }
    r.read("num_clients", cfg.scenario.num_clients);
    r.read("num_classes", cfg.scenario.num_classes);
    r.read("classes_per_task", cfg.scenario.classes_per_task);
    r.read("samples_per_class", cfg.scenario.samples_per_class);
    r.read("loop_size", cfg.scenario.loop_size);
    r.read("replace_period", cfg.scenario.replace_period);
    r.read("overlap", cfg.scenario.overlap);
    r.read("total_rounds", cfg.scenario.total_rounds);
    if (cfg.scenario.kind == ScenarioKind::overlap_sweep) {
        if (classes_per_task_given && cfg.scenario.classes_per_task != cfg.scenario.overlap + 2) {
            throw ConfigError("scenario.classes_per_task: overlap_sweep requires overlap + 2");
        }
        cfg.scenario.classes_per_task = cfg.scenario.overlap + 2;
    }
    r.finish();
}

void read_dataset(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "dataset");
    std::string source = "synthetic";
    r.read("source", source);
    if (source == "synthetic") {
        cfg.source = DatasetSource::synthetic;
    } else if (source == "idx") {
        cfg.source = DatasetSource::idx;
    } else {
        throw ConfigError("dataset.source: expected 'synthetic' or 'idx'");
    }
    r.read("feature_dim", cfg.synthetic.feature_dim);
    r.read("class_separation", cfg.synthetic.class_separation);
    r.read("per_class_train", cfg.synthetic.per_class_train);
    r.read("per_class_test", cfg.synthetic.per_class_test);
    r.read("train_images", cfg.idx.train_images);
    r.read("train_labels", cfg.idx.train_labels);
    r.read("test_images", cfg.idx.test_images);
    r.read("test_labels", cfg.idx.test_labels);
    r.finish();
}

void read_model(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "model");
    r.read("hidden_dims", cfg.hidden_dims);
    if (r.has("activation")) {
        std::string act;
        r.read("activation", act);
        if (act == "relu") {
            cfg.activation = Activation::relu;
        } else if (act == "tanh") {
            cfg.activation = Activation::tanh;
        } else {
            throw ConfigError("model.activation: expected 'relu' or 'tanh'");
        }
    }
    r.finish();
}

void read_sgd(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "sgd");
    r.read("learning_rate", cfg.sgd.learning_rate);
    r.read("momentum", cfg.sgd.momentum);
    r.read("weight_decay", cfg.sgd.weight_decay);
    r.read("epochs", cfg.sgd.epochs);
    r.read("batch_size", cfg.sgd.batch_size);
    r.finish();
}

void read_weight_opt(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "weight_opt");
    r.read("steps", cfg.weight_opt.steps);
    r.read("step_size", cfg.weight_opt.step_size);
    r.finish();
}

void read_generator(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "generator");
    if (r.has("kind")) {
        std::string kind;
        r.read("kind", kind);
        if (kind == "diag_gaussian") {
            cfg.generator.kind = GeneratorKind::diag_gaussian;
        } else if (kind == "gmm") {
            cfg.generator.kind = GeneratorKind::gmm;
        } else {
            throw ConfigError("generator.kind: expected 'diag_gaussian' or 'gmm'");
        }
    }
    r.read("components", cfg.generator.components);
    r.read("init_iters", cfg.generator.init_iters);
    r.read("transfer_iters", cfg.generator.transfer_iters);
    r.finish();
}

void read_options(const json& node, RunConfig& cfg) {
    ObjectReader r(node, "options");
    r.read("disable_replay", cfg.options.disable_replay);
    r.read("force_uniform_weights", cfg.options.force_uniform_weights);
    r.read("unweighted_fedavg", cfg.options.unweighted_fedavg);
    r.finish();
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": malformed JSON: " + e.what());
    }
    RunConfig cfg;
    ObjectReader r(doc, "");
    if (r.has("methods")) {
        std::vector<std::string> names;
        r.read("methods", names);
        cfg.methods.clear();
        for (const std::string& name : names) cfg.methods.push_back(parse_method(name));
    }
    r.read("seeds", cfg.seeds);
    r.read("output_dir", cfg.output_dir);
    if (const json* node = r.object("scenario")) read_scenario(*node, cfg);
    if (const json* node = r.object("dataset")) read_dataset(*node, cfg);
    if (const json* node = r.object("model")) read_model(*node, cfg);
    if (const json* node = r.object("sgd")) read_sgd(*node, cfg);
    r.read("lambda_align", cfg.lambda_align);
    r.read("fedprox_mu", cfg.fedprox_mu);
    r.read("replay_budget", cfg.replay_budget);
    if (const json* node = r.object("weight_opt")) read_weight_opt(*node, cfg);
    if (const json* node = r.object("generator")) read_generator(*node, cfg);
    if (const json* node = r.object("options")) read_options(*node, cfg);
    r.finish();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

std::string effective_config_json(const RunConfig& cfg) {
    json doc;
    std::vector<std::string> methods;
    for (MethodId m : cfg.methods) methods.push_back(method_name(m));
    doc["methods"] = methods;
    doc["seeds"] = cfg.seeds;
    doc["output_dir"] = cfg.output_dir;
    doc["scenario"] = {{"kind", scenario_kind_name(cfg.scenario.kind)},
                       {"num_clients", cfg.scenario.num_clients},
                       {"num_classes", cfg.scenario.num_classes},
                       {"classes_per_task", cfg.scenario.classes_per_task},
                       {"samples_per_class", cfg.scenario.samples_per_class},
                       {"loop_size", cfg.scenario.loop_size},
                       {"replace_period", cfg.scenario.replace_period},
                       {"overlap", cfg.scenario.overlap},
                       {"total_rounds", cfg.scenario.total_rounds}};
    if (cfg.source == DatasetSource::synthetic) {
        doc["dataset"] = {{"source", "synthetic"},
                          {"feature_dim", cfg.synthetic.feature_dim},
                          {"class_separation", cfg.synthetic.class_separation},
                          {"per_class_train", cfg.synthetic.per_class_train},
                          {"per_class_test", cfg.synthetic.per_class_test}};
    } else {
        doc["dataset"] = {{"source", "idx"},
                          {"train_images", cfg.idx.train_images},
                          {"train_labels", cfg.idx.train_labels},
                          {"test_images", cfg.idx.test_images},
                          {"test_labels", cfg.idx.test_labels}};
    }
    doc["model"] = {{"hidden_dims", cfg.hidden_dims},
                    {"activation", cfg.activation == Activation::relu ? "relu" : "tanh"}};
    doc["sgd"] = {{"learning_rate", cfg.sgd.learning_rate},
                  {"momentum", cfg.sgd.momentum},
                  {"weight_decay", cfg.sgd.weight_decay},
                  {"epochs", cfg.sgd.epochs},
                  {"batch_size", cfg.sgd.batch_size}};
    doc["lambda_align"] = cfg.lambda_align;
    doc["fedprox_mu"] = cfg.fedprox_mu;
    doc["replay_budget"] = cfg.replay_budget;
    doc["weight_opt"] = {{"steps", cfg.weight_opt.steps}, {"step_size", cfg.weight_opt.step_size}};
    doc["generator"] = {
        {"kind", cfg.generator.kind == GeneratorKind::diag_gaussian ? "diag_gaussian" : "gmm"},
        {"components", cfg.generator.components},
        {"init_iters", cfg.generator.init_iters},
        {"transfer_iters", cfg.generator.transfer_iters}};
    doc["options"] = {{"disable_replay", cfg.options.disable_replay},
                      {"force_uniform_weights", cfg.options.force_uniform_weights},
                      {"unweighted_fedavg", cfg.options.unweighted_fedavg}};
    return doc.dump(2) + "\n";
}

void validate_config(const RunConfig& cfg) {
    if (cfg.methods.empty()) throw ConfigError("methods: at least one method is required");
    if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    cfg.scenario.validate();
    SgdConfig sgd = cfg.sgd;
    sgd.validate();
    if (cfg.lambda_align < 0.0) throw ConfigError("lambda_align: must be nonnegative");
    if (cfg.fedprox_mu < 0.0) throw ConfigError("fedprox_mu: must be nonnegative");
    if (cfg.replay_budget <= 0) throw ConfigError("replay_budget: must be positive");
    if (cfg.weight_opt.steps < 0) throw ConfigError("weight_opt.steps: must be nonnegative");
    if (cfg.weight_opt.step_size <= 0.0) throw ConfigError("weight_opt.step_size: must be positive");
    if (cfg.generator.components <= 0) throw ConfigError("generator.components: must be positive");
    for (int h : cfg.hidden_dims) {
        if (h <= 0) throw ConfigError("model.hidden_dims: entries must be positive");
    }
    if (cfg.source == DatasetSource::synthetic) {
        if (cfg.synthetic.feature_dim <= 0) {
            throw ConfigError("dataset.feature_dim: must be positive");
        }
        if (cfg.synthetic.per_class_train < 0 || cfg.synthetic.per_class_test < 0) {
            throw ConfigError("dataset.per_class_train/per_class_test: must be nonnegative");
        }
    } else {
        for (const auto& [key, path] :
             {std::pair<std::string, std::string>{"dataset.train_images", cfg.idx.train_images},
              {"dataset.train_labels", cfg.idx.train_labels},
              {"dataset.test_images", cfg.idx.test_images},
              {"dataset.test_labels", cfg.idx.test_labels}}) {
            if (path.empty()) throw ConfigError(key + ": required for idx datasets");
            if (!std::filesystem::exists(path)) throw ConfigError(key + ": no such file " + path);
        }
    }
}

DatasetStore build_dataset(const RunConfig& cfg, uint64_t seed) {
    if (cfg.source == DatasetSource::idx) {
        return make_store(load_idx(cfg.idx.train_images, cfg.idx.train_labels),
                          load_idx(cfg.idx.test_images, cfg.idx.test_labels));
    }
    long long per_train = cfg.synthetic.per_class_train;
    if (per_train == 0) {
        // Size pools to the worst-case per-class demand of this seed's streams.
        ScenarioConfig probe = cfg.scenario;
        probe.seed = derive_seed(seed, 0x57e, 0);
        long long max_occurrences = 1;
        for (const TaskStream& stream : build_streams(probe)) {
            std::map<int, long long> demand;
            for (const TaskSpec& task : stream.tasks) {
                for (const auto& [c, count] : task.class_counts) {
                    (void)count;
                    demand[c] += 1;
                }
            }
            for (const auto& [c, occ] : demand) {
                (void)c;
                max_occurrences = std::max(max_occurrences, occ);
            }
        }
        per_train = cfg.scenario.samples_per_class * max_occurrences;
    }
    long long per_test = cfg.synthetic.per_class_test;
    if (per_test == 0) per_test = std::max<long long>(1, per_train / 2);
    return make_synthetic(cfg.scenario.num_classes, cfg.synthetic.feature_dim, per_train,
                          per_test, cfg.synthetic.class_separation,
                          derive_seed(seed, 0xda7a, 0));
}

ExperimentConfig experiment_config(const RunConfig& cfg, const DatasetStore& store) {
    ExperimentConfig exp;
    exp.arch.input_dim = store.feature_dim;
    exp.arch.hidden_dims = cfg.hidden_dims;
    exp.arch.num_classes = std::max(cfg.scenario.num_classes, store.num_classes);
    exp.arch.activation = cfg.activation;
    exp.sgd = cfg.sgd;
    exp.lambda_align = cfg.lambda_align;
    exp.fedprox_mu = cfg.fedprox_mu;
    exp.generator = cfg.generator;
    exp.weight_opt = cfg.weight_opt;
    exp.replay_budget = cfg.replay_budget;
    exp.options = cfg.options;
    return exp;
}

}  // namespace pfedgrp
