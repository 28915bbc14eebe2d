#include "pfedgrp/server.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pfedgrp/parallel.hpp"

namespace pfedgrp {

namespace {

std::vector<double> softmax(const std::vector<double>& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    std::vector<double> w(z.size());
    double sum = 0.0;
    for (size_t j = 0; j < z.size(); ++j) {
        w[j] = std::exp(z[j] - zmax);
        sum += w[j];
    }
    for (double& v : w) v /= sum;
    return w;
}

double mixed_loss(const std::vector<ParamVector>& thetas, const std::vector<double>& w,
                  const ModelArch& arch, const LabeledBatch& replay_set) {
    const ParamVector mixed = mix_params(thetas, AggregationWeights{w});
    return objective_loss(arch, mixed, replay_set, Objective{});
}

}  // namespace

AggregationWeights optimize_weights(const std::vector<ParamVector>& thetas,
                                    const LabeledBatch& replay_set, const ModelArch& arch,
                                    const WeightOptConfig& cfg) {
    if (thetas.empty()) throw ContractViolation("optimize_weights: no candidate models");
    if (replay_set.rows() == 0) throw ContractViolation("optimize_weights: empty replay set");
    const size_t n = thetas.size();
    if (n == 1) return AggregationWeights{{1.0}};

    std::vector<double> z(n, 0.0);  // softmax(0) = uniform
    double step = cfg.step_size;
    double current = mixed_loss(thetas, softmax(z), arch, replay_set);
    if (!std::isfinite(current)) {
        throw OptimizationError("optimize_weights: non-finite loss at step 0");
    }

    for (int s = 1; s <= cfg.steps; ++s) {
        const std::vector<double> w = softmax(z);
        const ParamVector mixed = mix_params(thetas, AggregationWeights{w});
        const ParamVector g_theta = grad(arch, mixed, replay_set, Objective{});

        // dL/dw_j = <dL/dtheta, theta_j>, then through the softmax Jacobian.
        std::vector<double> g_w(n, 0.0);
        for (size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (size_t p = 0; p < g_theta.size(); ++p) {
                dot += g_theta.values[p] * thetas[j].values[p];
            }
            g_w[j] = dot;
        }
        double inner = 0.0;
        for (size_t j = 0; j < n; ++j) inner += g_w[j] * w[j];
        std::vector<double> g_z(n);
        for (size_t j = 0; j < n; ++j) g_z[j] = w[j] * (g_w[j] - inner);

        std::vector<double> z_next(n);
        for (size_t j = 0; j < n; ++j) z_next[j] = z[j] - step * g_z[j];
        const double next = mixed_loss(thetas, softmax(z_next), arch, replay_set);
        if (!std::isfinite(next)) {
            throw OptimizationError("optimize_weights: non-finite loss at step " +
                                    std::to_string(s));
        }
        // Adaptive step: an increase is never accepted and halves the step;
        // an accepted move doubles it. 20 fixed-size steps cannot close a
        // boundary optimum (the softmax Jacobian vanishes there).
        if (next > current) {
            step *= 0.5;
        } else {
            z = std::move(z_next);
            current = next;
            step = std::min(step * 2.0, 1e6);
        }
    }
    AggregationWeights out{softmax(z)};
    out.validate();
    return out;
}

LabelCountVector apportion_replay(const LabelCountVector& label_counts, long long budget) {
    LabelCountVector out;
    const long long total = label_counts.total();
    if (total <= 0 || budget <= 0) return out;
    long long assigned = 0;
    std::vector<std::pair<long long, int>> remainders;  // (-remainder, class id)
    for (const auto& [c, n] : label_counts.counts) {
        if (n <= 0) continue;
        const long long share = budget * n;
        const long long base = share / total;
        out.add(c, base);
        assigned += base;
        remainders.emplace_back(-(share % total), c);
    }
    std::sort(remainders.begin(), remainders.end());
    for (size_t i = 0; i < remainders.size() && assigned < budget; ++i, ++assigned) {
        out.add(remainders[i].second, 1);
    }
    return out;
}

ServerCache merge_uploads(ServerCache cache, const std::vector<RoundUpload>& uploads) {
    cache.round += 1;
    std::vector<size_t> order(uploads.size());
    for (size_t i = 0; i < uploads.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&uploads](size_t a, size_t b) {
        return uploads[a].client_id < uploads[b].client_id;
    });
    for (size_t idx : order) {
        const RoundUpload& up = uploads[idx];
        cache.theta_by_client[up.client_id] = up.theta_star;
        cache.counts_by_client[up.client_id] = up.label_counts;
        AuxiliaryModel& mirror = cache.aux_by_client[up.client_id];
        for (const auto& [c, gen] : up.updated_submodels) {
            mirror[c] = gen;
            cache.newest_by_class[c] = CachedSubmodel{gen, cache.round, up.client_id};
        }
    }
    return cache;
}

AggregateResult aggregate_round(const std::vector<RoundUpload>& uploads, const ServerCache& cache,
                                const ModelArch& arch, const WeightOptConfig& opt_cfg,
                                long long replay_budget, uint64_t seed, bool force_uniform) {
    if (uploads.empty()) throw ContractViolation("aggregate_round: no uploads");
    const size_t n = uploads.size();

    AggregateResult result;
    result.cache = merge_uploads(cache, uploads);
    const int round = result.cache.round;

    for (const RoundUpload& up : uploads) {
        const AuxiliaryModel& mirror = result.cache.aux_by_client[up.client_id];
        for (int c : up.label_counts.support()) {
            if (mirror.count(c) == 0) {
                throw CacheError("aggregate_round: client " + std::to_string(up.client_id) +
                                 " reports class " + std::to_string(c) +
                                 " with no mirrored generator");
            }
        }
    }

    std::vector<ParamVector> thetas;
    thetas.reserve(n);
    for (const RoundUpload& up : uploads) thetas.push_back(up.theta_star);

    result.personalized.resize(n);
    result.weights.resize(n);
    if (force_uniform || n == 1) {
        const AggregationWeights uniform = AggregationWeights::uniform(n);
        for (size_t i = 0; i < n; ++i) {
            result.weights[i] = uniform;
            result.personalized[i] = mix_params(thetas, uniform);
        }
    } else {
        // Per-client optimizations are independent; each reads a snapshot of
        // the merged cache and draws from its own substream.
        std::exception_ptr failure;
        parallel_for(n, [&](size_t i) {
            try {
                const RoundUpload& up = uploads[i];
                const AuxiliaryModel& mirror = result.cache.aux_by_client.at(up.client_id);
                ReconstructionPlan sampling;
                sampling.generate_counts = apportion_replay(up.label_counts, replay_budget);
                const LabeledBatch replay_set = sample_replay(
                    mirror, sampling,
                    derive_seed(seed, static_cast<uint64_t>(up.client_id),
                                static_cast<uint64_t>(round)));
                result.weights[i] = optimize_weights(thetas, replay_set, arch, opt_cfg);
                result.personalized[i] = mix_params(thetas, result.weights[i]);
            } catch (...) {
#pragma omp critical
                if (!failure) failure = std::current_exception();
            }
        });
        if (failure) std::rethrow_exception(failure);
    }

    result.global_mean = mix_params(thetas, AggregationWeights::uniform(n));
    return result;
}

std::optional<GeneratorParams> lookup_class(const ServerCache& cache, int class_id) {
    auto it = cache.newest_by_class.find(class_id);
    if (it == cache.newest_by_class.end()) return std::nullopt;
    return it->second.params;
}

namespace {

constexpr char kCacheMagic[8] = {'P', 'F', 'G', 'C', 'A', 'C', 'H', '1'};

void write_u32(std::ostream& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_i64(std::ostream& out, int64_t v) {
    const uint64_t u = static_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((u >> (8 * i)) & 0xff));
}

void write_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_i64(out, static_cast<int64_t>(bits));
}

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        const int c = in.get();
        if (c == EOF) throw ParseError("cache checkpoint: unexpected end of file");
        v |= static_cast<uint32_t>(c) << (8 * i);
    }
    return v;
}

int64_t read_i64(std::istream& in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = in.get();
        if (c == EOF) throw ParseError("cache checkpoint: unexpected end of file");
        v |= static_cast<uint64_t>(c) << (8 * i);
    }
    return static_cast<int64_t>(v);
}

double read_f64(std::istream& in) {
    const uint64_t bits = static_cast<uint64_t>(read_i64(in));
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_label_counts(std::ostream& out, const LabelCountVector& counts) {
    write_u32(out, static_cast<uint32_t>(counts.counts.size()));
    for (const auto& [c, cnt] : counts.counts) {
        write_u32(out, static_cast<uint32_t>(c));
        write_i64(out, cnt);
    }
}

LabelCountVector read_label_counts(std::istream& in) {
    LabelCountVector counts;
    const uint32_t n = read_u32(in);
    for (uint32_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(read_u32(in));
        counts.counts[c] = read_i64(in);
    }
    return counts;
}

void write_params(std::ostream& out, const ParamVector& p) {
    write_i64(out, static_cast<int64_t>(p.arch_fingerprint));
    write_u32(out, static_cast<uint32_t>(p.values.size()));
    for (double v : p.values) write_f64(out, v);
}

ParamVector read_params(std::istream& in) {
    ParamVector p;
    p.arch_fingerprint = static_cast<uint64_t>(read_i64(in));
    p.values.resize(read_u32(in));
    for (double& v : p.values) v = read_f64(in);
    return p;
}

}  // namespace

void save_cache(const ServerCache& cache, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open file for writing");
    out.write(kCacheMagic, 8);
    write_u32(out, static_cast<uint32_t>(cache.round));

    write_u32(out, static_cast<uint32_t>(cache.theta_by_client.size()));
    for (const auto& [id, theta] : cache.theta_by_client) {
        write_u32(out, static_cast<uint32_t>(id));
        write_params(out, theta);
    }
    write_u32(out, static_cast<uint32_t>(cache.aux_by_client.size()));
    for (const auto& [id, aux] : cache.aux_by_client) {
        write_u32(out, static_cast<uint32_t>(id));
        write_u32(out, static_cast<uint32_t>(aux.size()));
        for (const auto& [c, gen] : aux) {
            write_u32(out, static_cast<uint32_t>(c));
            write_generator(out, gen);
        }
    }
    write_u32(out, static_cast<uint32_t>(cache.newest_by_class.size()));
    for (const auto& [c, entry] : cache.newest_by_class) {
        write_u32(out, static_cast<uint32_t>(c));
        write_u32(out, static_cast<uint32_t>(entry.round));
        write_u32(out, static_cast<uint32_t>(entry.client_id));
        write_generator(out, entry.params);
    }
    write_u32(out, static_cast<uint32_t>(cache.counts_by_client.size()));
    for (const auto& [id, counts] : cache.counts_by_client) {
        write_u32(out, static_cast<uint32_t>(id));
        write_label_counts(out, counts);
    }
}

ServerCache load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kCacheMagic, 8) != 0) {
        throw ParseError(path + ": bad cache magic at byte offset 0");
    }
    ServerCache cache;
    cache.round = static_cast<int>(read_u32(in));

    const uint32_t n_theta = read_u32(in);
    for (uint32_t i = 0; i < n_theta; ++i) {
        const int id = static_cast<int>(read_u32(in));
        cache.theta_by_client[id] = read_params(in);
    }
    const uint32_t n_aux = read_u32(in);
    for (uint32_t i = 0; i < n_aux; ++i) {
        const int id = static_cast<int>(read_u32(in));
        AuxiliaryModel aux;
        const uint32_t n_classes = read_u32(in);
        for (uint32_t j = 0; j < n_classes; ++j) {
            const int c = static_cast<int>(read_u32(in));
            aux[c] = read_generator(in);
        }
        cache.aux_by_client[id] = std::move(aux);
    }
    const uint32_t n_newest = read_u32(in);
    for (uint32_t i = 0; i < n_newest; ++i) {
        const int c = static_cast<int>(read_u32(in));
        CachedSubmodel entry;
        entry.round = static_cast<int>(read_u32(in));
        entry.client_id = static_cast<int>(read_u32(in));
        entry.params = read_generator(in);
        cache.newest_by_class[c] = std::move(entry);
    }
    const uint32_t n_counts = read_u32(in);
    for (uint32_t i = 0; i < n_counts; ++i) {
        const int id = static_cast<int>(read_u32(in));
        cache.counts_by_client[id] = read_label_counts(in);
    }
    return cache;
}

}  // namespace pfedgrp
