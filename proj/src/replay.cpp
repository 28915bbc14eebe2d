#include "pfedgrp/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace pfedgrp {

long long LabelCountVector::total() const {
    long long t = 0;
    for (const auto& [c, n] : counts) {
        (void)c;
        t += n;
    }
    return t;
}

std::set<int> LabelCountVector::support() const {
    std::set<int> s;
    for (const auto& [c, n] : counts) {
        if (n > 0) s.insert(c);
    }
    return s;
}

bool LabelCountVector::all_zero() const {
    for (const auto& [c, n] : counts) {
        (void)c;
        if (n > 0) return false;
    }
    return true;
}

LabelCountVector accumulate(const LabelCountVector& hist, const LabelCountVector& current) {
    LabelCountVector out = hist;
    for (const auto& [c, n] : current.counts) out.add(c, n);
    return out;
}

LabelCountVector counts_of(const LabeledBatch& batch) {
    LabelCountVector out;
    for (int y : batch.labels) out.add(y, 1);
    return out;
}

ReconstructionPlan reconstruction_plan(const LabelCountVector& cumulative,
                                       const LabelCountVector& current) {
    if (current.all_zero()) {
        throw ContractViolation("reconstruction_plan: current task has no samples");
    }
    for (const auto& [c, n] : current.counts) {
        if (n < 0 || cumulative.get(c) < n) {
            throw ContractViolation("reconstruction_plan: cumulative counts must dominate current");
        }
    }

    // Reference class: smallest current/cumulative ratio, ties to the lowest
    // class id. Compared by cross-multiplication to stay in integers.
    int ref = -1;
    long long ref_num = 0, ref_den = 1;
    for (const auto& [c, n] : current.counts) {
        if (n <= 0) continue;
        const long long den = cumulative.get(c);
        if (ref < 0 || n * ref_den < ref_num * den) {
            ref = c;
            ref_num = n;
            ref_den = den;
        }
    }

    long long cap = 0;
    for (const auto& [c, n] : current.counts) {
        (void)c;
        cap = std::max(cap, n);
    }

    ReconstructionPlan plan;
    plan.reference_class = ref;
    plan.scale_factor = static_cast<double>(ref_num) / static_cast<double>(ref_den);
    plan.cap = cap;
    for (const auto& [c, n] : cumulative.counts) {
        if (n <= 0) continue;
        const long long scaled = ref_num * n / ref_den;  // floor
        const long long supplement = std::max(0LL, scaled - current.get(c));
        const long long generate = std::min(supplement, cap);
        if (generate > 0) plan.generate_counts.add(c, generate);
    }
    return plan;
}

void GeneratorParams::validate() const {
    if (dim <= 0) throw ContractViolation("GeneratorParams: dim must be positive");
    if (means.empty() || means.size() != variances.size() || means.size() != weights.size()) {
        throw ContractViolation("GeneratorParams: inconsistent component counts");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ContractViolation("GeneratorParams: negative component weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractViolation("GeneratorParams: component weights must sum to 1");
    }
    for (size_t k = 0; k < means.size(); ++k) {
        if (means[k].size() != static_cast<size_t>(dim) ||
            variances[k].size() != static_cast<size_t>(dim)) {
            throw ContractViolation("GeneratorParams: component dim mismatch");
        }
        for (double v : variances[k]) {
            if (v < kVarianceFloor) throw ContractViolation("GeneratorParams: variance under floor");
        }
    }
}

namespace {

GeneratorParams fit_diag_gaussian(const double* data, long long count, int dim) {
    GeneratorParams p;
    p.kind = GeneratorKind::diag_gaussian;
    p.dim = dim;
    p.fit_sample_count = count;
    std::vector<double> mean(static_cast<size_t>(dim), 0.0);
    std::vector<double> var(static_cast<size_t>(dim), 0.0);
    for (long long i = 0; i < count; ++i) {
        const double* x = data + i * dim;
        for (int j = 0; j < dim; ++j) mean[static_cast<size_t>(j)] += x[j];
    }
    for (double& m : mean) m /= static_cast<double>(count);
    for (long long i = 0; i < count; ++i) {
        const double* x = data + i * dim;
        for (int j = 0; j < dim; ++j) {
            const double diff = x[j] - mean[static_cast<size_t>(j)];
            var[static_cast<size_t>(j)] += diff * diff;
        }
    }
    for (double& v : var) v = std::max(kVarianceFloor, v / static_cast<double>(count));
    p.means.push_back(std::move(mean));
    p.variances.push_back(std::move(var));
    p.weights.push_back(1.0);
    return p;
}

double log_density_component(const double* x, const std::vector<double>& mean,
                             const std::vector<double>& var) {
    constexpr double kLogTwoPi = 1.8378770664093454836;
    double ll = 0.0;
    for (size_t j = 0; j < mean.size(); ++j) {
        const double diff = x[j] - mean[j];
        ll += -0.5 * (kLogTwoPi + std::log(var[j]) + diff * diff / var[j]);
    }
    return ll;
}

// k-means++ seeding followed by a handful of Lloyd iterations.
std::vector<std::vector<double>> kmeans_centers(const double* data, long long count, int dim,
                                                int k, Rng& rng) {
    std::vector<std::vector<double>> centers;
    const long long first = rng.uniform_int(count);
    centers.emplace_back(data + first * dim, data + (first + 1) * dim);
    std::vector<double> dist2(static_cast<size_t>(count), 0.0);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (long long i = 0; i < count; ++i) {
            const double* x = data + i * dim;
            double best = std::numeric_limits<double>::max();
            for (const std::vector<double>& c : centers) {
                double d = 0.0;
                for (int j = 0; j < dim; ++j) {
                    const double diff = x[j] - c[static_cast<size_t>(j)];
                    d += diff * diff;
                }
                best = std::min(best, d);
            }
            dist2[static_cast<size_t>(i)] = best;
            total += best;
        }
        long long pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double running = 0.0;
            for (long long i = 0; i < count; ++i) {
                running += dist2[static_cast<size_t>(i)];
                if (running >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(count);
        }
        centers.emplace_back(data + pick * dim, data + (pick + 1) * dim);
    }
    for (int round = 0; round < 5; ++round) {
        std::vector<std::vector<double>> sums(centers.size(),
                                              std::vector<double>(static_cast<size_t>(dim), 0.0));
        std::vector<long long> ns(centers.size(), 0);
        for (long long i = 0; i < count; ++i) {
            const double* x = data + i * dim;
            size_t best = 0;
            double best_d = std::numeric_limits<double>::max();
            for (size_t c = 0; c < centers.size(); ++c) {
                double d = 0.0;
                for (int j = 0; j < dim; ++j) {
                    const double diff = x[j] - centers[c][static_cast<size_t>(j)];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            for (int j = 0; j < dim; ++j) sums[best][static_cast<size_t>(j)] += x[j];
            ++ns[best];
        }
        for (size_t c = 0; c < centers.size(); ++c) {
            if (ns[c] == 0) continue;
            for (int j = 0; j < dim; ++j) {
                centers[c][static_cast<size_t>(j)] = sums[c][static_cast<size_t>(j)] /
                                                     static_cast<double>(ns[c]);
            }
        }
    }
    return centers;
}

}  // namespace

GeneratorParams em_iterate(const GeneratorParams& params, const double* data, long long count,
                           int iters) {
    if (params.kind != GeneratorKind::gmm) return params;
    GeneratorParams p = params;
    const int dim = p.dim;
    const size_t k = p.components();
    std::vector<double> resp(static_cast<size_t>(count) * k);
    std::vector<double> log_w(k);

    for (int iter = 0; iter < iters; ++iter) {
        for (size_t c = 0; c < k; ++c) {
            log_w[c] = p.weights[c] > 0.0 ? std::log(p.weights[c])
                                          : -std::numeric_limits<double>::infinity();
        }
        // E step
        for (long long i = 0; i < count; ++i) {
            const double* x = data + i * dim;
            double* r = resp.data() + static_cast<size_t>(i) * k;
            double m = -std::numeric_limits<double>::infinity();
            for (size_t c = 0; c < k; ++c) {
                r[c] = log_w[c] + log_density_component(x, p.means[c], p.variances[c]);
                m = std::max(m, r[c]);
            }
            double sum = 0.0;
            for (size_t c = 0; c < k; ++c) sum += std::exp(r[c] - m);
            const double log_norm = m + std::log(sum);
            for (size_t c = 0; c < k; ++c) r[c] = std::exp(r[c] - log_norm);
        }
        // M step; dead components keep their parameters.
        for (size_t c = 0; c < k; ++c) {
            double nc = 0.0;
            for (long long i = 0; i < count; ++i) nc += resp[static_cast<size_t>(i) * k + c];
            p.weights[c] = nc / static_cast<double>(count);
            if (nc < 1e-12) continue;
            std::vector<double> mean(static_cast<size_t>(dim), 0.0);
            for (long long i = 0; i < count; ++i) {
                const double r = resp[static_cast<size_t>(i) * k + c];
                const double* x = data + i * dim;
                for (int j = 0; j < dim; ++j) mean[static_cast<size_t>(j)] += r * x[j];
            }
            for (double& m : mean) m /= nc;
            std::vector<double> var(static_cast<size_t>(dim), 0.0);
            for (long long i = 0; i < count; ++i) {
                const double r = resp[static_cast<size_t>(i) * k + c];
                const double* x = data + i * dim;
                for (int j = 0; j < dim; ++j) {
                    const double diff = x[j] - mean[static_cast<size_t>(j)];
                    var[static_cast<size_t>(j)] += r * diff * diff;
                }
            }
            for (double& v : var) v = std::max(kVarianceFloor, v / nc);
            p.means[c] = std::move(mean);
            p.variances[c] = std::move(var);
        }
    }
    return p;
}

GeneratorParams fit_submodel(const double* data, long long count, int dim,
                             const std::optional<GeneratorParams>& warm_start, FitBudget budget,
                             const GeneratorConfig& cfg, uint64_t seed) {
    if (count <= 0 || dim <= 0) throw ContractViolation("fit_submodel: empty data");
    if (budget == FitBudget::transfer && !warm_start.has_value()) {
        throw ContractViolation("fit_submodel: transfer budget requires a warm start");
    }

    if (cfg.kind == GeneratorKind::diag_gaussian) {
        return fit_diag_gaussian(data, count, dim);
    }

    if (count < cfg.components) {
        GeneratorParams p = fit_diag_gaussian(data, count, dim);
        p.downgraded = true;
        return p;
    }

    GeneratorParams p;
    int iters = 0;
    if (budget == FitBudget::transfer && warm_start->kind == GeneratorKind::gmm &&
        warm_start->dim == dim) {
        p = *warm_start;
        iters = cfg.transfer_iters;
    } else {
        Rng rng(seed);
        p.kind = GeneratorKind::gmm;
        p.dim = dim;
        p.means = kmeans_centers(data, count, dim, cfg.components, rng);
        const GeneratorParams global = fit_diag_gaussian(data, count, dim);
        p.variances.assign(static_cast<size_t>(cfg.components), global.variances[0]);
        p.weights.assign(static_cast<size_t>(cfg.components),
                         1.0 / static_cast<double>(cfg.components));
        iters = cfg.init_iters;
    }
    p = em_iterate(p, data, count, iters);
    p.fit_sample_count = count;
    p.downgraded = false;
    return p;
}

double log_likelihood(const GeneratorParams& params, const double* data, long long count) {
    if (count <= 0) throw ContractViolation("log_likelihood: empty data");
    const size_t k = params.components();
    double total = 0.0;
    for (long long i = 0; i < count; ++i) {
        const double* x = data + i * params.dim;
        double m = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(k);
        for (size_t c = 0; c < k; ++c) {
            terms[c] = (params.weights[c] > 0.0 ? std::log(params.weights[c])
                                                : -std::numeric_limits<double>::infinity()) +
                       log_density_component(x, params.means[c], params.variances[c]);
            m = std::max(m, terms[c]);
        }
        double sum = 0.0;
        for (size_t c = 0; c < k; ++c) sum += std::exp(terms[c] - m);
        total += m + std::log(sum);
    }
    return total / static_cast<double>(count);
}

void sample_from(const GeneratorParams& params, Rng& rng, double* out) {
    size_t component = 0;
    if (params.components() > 1) {
        const double u = rng.uniform();
        double running = 0.0;
        for (size_t c = 0; c < params.components(); ++c) {
            running += params.weights[c];
            if (u < running) {
                component = c;
                break;
            }
            component = c;
        }
    }
    const std::vector<double>& mean = params.means[component];
    const std::vector<double>& var = params.variances[component];
    for (int j = 0; j < params.dim; ++j) {
        out[j] = mean[static_cast<size_t>(j)] +
                 std::sqrt(var[static_cast<size_t>(j)]) * rng.normal();
    }
}

LabeledBatch sample_replay(const AuxiliaryModel& aux, const ReconstructionPlan& plan,
                           uint64_t seed) {
    LabeledBatch batch;
    for (const auto& [c, count] : plan.generate_counts.counts) {
        if (count <= 0) continue;
        auto it = aux.find(c);
        if (it == aux.end()) {
            throw ReplayError("sample_replay: no generator for class " + std::to_string(c));
        }
        const GeneratorParams& gen = it->second;
        if (batch.feature_dim == 0) batch.feature_dim = static_cast<size_t>(gen.dim);
        Rng rng(derive_seed(seed, static_cast<uint64_t>(c), 0x9e));
        std::vector<double> row(static_cast<size_t>(gen.dim));
        for (long long i = 0; i < count; ++i) {
            sample_from(gen, rng, row.data());
            batch.append_row(row.data(), c, true);
        }
    }
    return batch;
}

namespace {

void write_u8(std::ostream& out, uint8_t v) { out.put(static_cast<char>(v)); }

void write_u32_le(std::ostream& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_u64_le(std::ostream& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_f64_le(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64_le(out, bits);
}

uint8_t read_u8(std::istream& in) {
    const int c = in.get();
    if (c == EOF) throw ParseError("generator record: unexpected end of stream");
    return static_cast<uint8_t>(c);
}

uint32_t read_u32_le(std::istream& in) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(read_u8(in)) << (8 * i);
    return v;
}

uint64_t read_u64_le(std::istream& in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(read_u8(in)) << (8 * i);
    return v;
}

double read_f64_le(std::istream& in) {
    const uint64_t bits = read_u64_le(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_generator(std::ostream& out, const GeneratorParams& params) {
    write_u8(out, static_cast<uint8_t>(params.kind));
    write_u8(out, params.downgraded ? 1 : 0);
    write_u32_le(out, static_cast<uint32_t>(params.dim));
    write_u32_le(out, static_cast<uint32_t>(params.components()));
    write_u64_le(out, static_cast<uint64_t>(params.fit_sample_count));
    for (const std::vector<double>& m : params.means) {
        for (double v : m) write_f64_le(out, v);
    }
    for (const std::vector<double>& var : params.variances) {
        for (double v : var) write_f64_le(out, v);
    }
    for (double w : params.weights) write_f64_le(out, w);
}

GeneratorParams read_generator(std::istream& in) {
    GeneratorParams p;
    const uint8_t kind = read_u8(in);
    if (kind > 1) throw ParseError("generator record: unknown kind tag");
    p.kind = static_cast<GeneratorKind>(kind);
    p.downgraded = read_u8(in) != 0;
    p.dim = static_cast<int>(read_u32_le(in));
    const uint32_t components = read_u32_le(in);
    p.fit_sample_count = static_cast<long long>(read_u64_le(in));
    p.means.resize(components);
    p.variances.resize(components);
    p.weights.resize(components);
    for (auto& m : p.means) {
        m.resize(static_cast<size_t>(p.dim));
        for (double& v : m) v = read_f64_le(in);
    }
    for (auto& var : p.variances) {
        var.resize(static_cast<size_t>(p.dim));
        for (double& v : var) v = read_f64_le(in);
    }
    for (double& w : p.weights) w = read_f64_le(in);
    return p;
}

}  // namespace pfedgrp
