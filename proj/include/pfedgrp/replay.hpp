#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "pfedgrp/model.hpp"

namespace pfedgrp {

// Per-class nonnegative sample counts; an absent class means zero.
struct LabelCountVector {
    std::map<int, long long> counts;

    long long get(int c) const {
        auto it = counts.find(c);
        return it == counts.end() ? 0 : it->second;
    }
    void add(int c, long long n) {
        if (n != 0) counts[c] += n;
    }
    long long total() const;
    std::set<int> support() const;
    bool all_zero() const;
    bool operator==(const LabelCountVector&) const = default;
};

LabelCountVector accumulate(const LabelCountVector& hist, const LabelCountVector& current);
LabelCountVector counts_of(const LabeledBatch& batch);

enum class GeneratorKind : uint8_t { diag_gaussian = 0, gmm = 1 };

inline constexpr double kVarianceFloor = 1e-6;

// Per-class density model: a diagonal Gaussian or a diagonal-covariance
// Gaussian mixture. Stands behind the generator interface so heavier models
// can slot in later.
struct GeneratorParams {
    GeneratorKind kind = GeneratorKind::diag_gaussian;
    int dim = 0;
    std::vector<std::vector<double>> means;      // per component
    std::vector<std::vector<double>> variances;  // per component, diagonal, >= floor
    std::vector<double> weights;                 // simplex over components
    long long fit_sample_count = 0;
    bool downgraded = false;  // gmm requested but too few samples; fell back

    size_t components() const { return means.size(); }
    void validate() const;
    bool operator==(const GeneratorParams&) const = default;
};

using AuxiliaryModel = std::map<int, GeneratorParams>;

// Per-class synthetic sample demand from the label-quantity scaling scheme.
struct ReconstructionPlan {
    LabelCountVector generate_counts;
    double scale_factor = 1.0;
    int reference_class = -1;
    long long cap = 0;
};

// Scales the cumulative label counts down so the reference class (the one
// with the smallest current/cumulative ratio) needs no supplement, then caps
// every per-class supplement at the largest current-task count. All count
// arithmetic is integral.
ReconstructionPlan reconstruction_plan(const LabelCountVector& cumulative,
                                       const LabelCountVector& current);

enum class FitBudget { init, transfer };

struct GeneratorConfig {
    GeneratorKind kind = GeneratorKind::diag_gaussian;
    int components = 3;      // gmm only
    int init_iters = 50;     // EM iterations from k-means++ seeding
    int transfer_iters = 5;  // EM iterations from a warm start
};

// Fits one class's density model on its real feature rows. diag_gaussian is
// closed form; gmm runs EM for the budgeted iteration count, seeded by
// k-means++ (init) or the warm start (transfer). Fewer samples than mixture
// components falls back to diag_gaussian with the downgrade flag set.
GeneratorParams fit_submodel(const double* data, long long count, int dim,
                             const std::optional<GeneratorParams>& warm_start, FitBudget budget,
                             const GeneratorConfig& cfg, uint64_t seed);

// Mean log-likelihood of the rows under the model.
double log_likelihood(const GeneratorParams& params, const double* data, long long count);

// Continues EM from the given parameters; gmm only.
GeneratorParams em_iterate(const GeneratorParams& params, const double* data, long long count,
                           int iters);

// Draws one sample into out[0..dim).
void sample_from(const GeneratorParams& params, Rng& rng, double* out);

// Draws exactly plan.generate_counts[c] samples per class, labeled c and
// flagged synthetic. Classes are drawn in ascending id order from per-class
// substreams, so the batch is a pure function of (aux, plan, seed).
LabeledBatch sample_replay(const AuxiliaryModel& aux, const ReconstructionPlan& plan,
                           uint64_t seed);

// Flat binary record: kind tag, downgrade flag, dim, component count,
// fit sample count, then means/variances/weights as little-endian
// 64-bit reals.
void write_generator(std::ostream& out, const GeneratorParams& params);
GeneratorParams read_generator(std::istream& in);

}  // namespace pfedgrp
