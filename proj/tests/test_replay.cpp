#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pfedgrp/replay.hpp"
#include "oracles.hpp"

using namespace pfedgrp;

namespace {

LabelCountVector make_counts(std::initializer_list<std::pair<int, long long>> pairs) {
    LabelCountVector v;
    for (const auto& [c, n] : pairs) v.add(c, n);
    return v;
}

std::vector<double> gaussian_rows(long long count, int dim, double mean, double stddev,
                                  uint64_t seed) {
    Rng rng(seed);
    std::vector<double> rows;
    rows.reserve(static_cast<size_t>(count * dim));
    for (long long i = 0; i < count * dim; ++i) rows.push_back(mean + stddev * rng.normal());
    return rows;
}

// Random (cumulative, current) pair with cumulative >= current elementwise
// and a nonempty current task.
std::pair<LabelCountVector, LabelCountVector> random_count_pair(Rng& rng) {
    LabelCountVector cumulative, current;
    const int classes = 2 + static_cast<int>(rng.uniform_int(8));
    int current_support = 0;
    for (int c = 0; c < classes; ++c) {
        if (rng.uniform() < 0.3) continue;
        const long long cum = 1 + rng.uniform_int(500);
        cumulative.add(c, cum);
        if (rng.uniform() < 0.5) {
            current.add(c, 1 + rng.uniform_int(cum));
            ++current_support;
        }
    }
    if (current_support == 0) {
        const long long cum = 1 + rng.uniform_int(500);
        cumulative.add(0, cum);
        current.counts[0] = 1 + rng.uniform_int(cum);
    }
    return {cumulative, current};
}

}  // namespace

TEST_CASE("accumulate: empty history returns the current counts") {
    const LabelCountVector current = make_counts({{0, 200}, {3, 50}});
    CHECK(accumulate(LabelCountVector{}, current) == current);
}

TEST_CASE("accumulate: elementwise sum") {
    const LabelCountVector a = make_counts({{0, 200}});
    const LabelCountVector b = make_counts({{0, 200}, {1, 100}});
    CHECK(accumulate(a, b) == make_counts({{0, 400}, {1, 100}}));
}

TEST_CASE("accumulate: commutative and associative against naive summation") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        LabelCountVector a, b, c;
        for (int cls = 0; cls < 6; ++cls) {
            if (rng.uniform() < 0.5) a.add(cls, rng.uniform_int(100));
            if (rng.uniform() < 0.5) b.add(cls, rng.uniform_int(100));
            if (rng.uniform() < 0.5) c.add(cls, rng.uniform_int(100));
        }
        CHECK(accumulate(a, b) == accumulate(b, a));
        CHECK(accumulate(accumulate(a, b), c) == accumulate(a, accumulate(b, c)));
        LabelCountVector naive;
        for (const auto& [cls, n] : a.counts) naive.add(cls, n);
        for (const auto& [cls, n] : b.counts) naive.add(cls, n);
        CHECK(accumulate(a, b) == naive);
    }
}

TEST_CASE("reconstruction_plan: worked example with two returning classes") {
    const LabelCountVector cumulative =
        make_counts({{0, 400}, {1, 400}, {2, 200}, {3, 200}});
    const LabelCountVector current = make_counts({{2, 200}, {3, 200}});
    const ReconstructionPlan plan = reconstruction_plan(cumulative, current);
    CHECK(plan.scale_factor == doctest::Approx(1.0));
    CHECK(plan.reference_class == 2);
    CHECK(plan.cap == 200);
    CHECK(plan.generate_counts == make_counts({{0, 200}, {1, 200}}));
}

TEST_CASE("reconstruction_plan: first round generates nothing") {
    const LabelCountVector current = make_counts({{1, 200}, {4, 150}});
    const ReconstructionPlan plan = reconstruction_plan(current, current);
    CHECK(plan.generate_counts.all_zero());
    CHECK(plan.scale_factor == doctest::Approx(1.0));
}

TEST_CASE("reconstruction_plan: scaling shrinks history below the cap") {
    const LabelCountVector cumulative = make_counts({{0, 200}, {1, 400}});
    const LabelCountVector current = make_counts({{1, 200}});
    const ReconstructionPlan plan = reconstruction_plan(cumulative, current);
    CHECK(plan.scale_factor == doctest::Approx(0.5));
    CHECK(plan.reference_class == 1);
    CHECK(plan.generate_counts == make_counts({{0, 100}}));
}

TEST_CASE("reconstruction_plan: all-zero current task is a contract violation") {
    CHECK_THROWS_AS(reconstruction_plan(make_counts({{0, 10}}), LabelCountVector{}),
                    ContractViolation);
}

TEST_CASE("reconstruction_plan: matches the brute-force oracle on 1000 random instances") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto [cumulative, current] = random_count_pair(rng);
        const ReconstructionPlan plan = reconstruction_plan(cumulative, current);
        const LabelCountVector expect = oracles::reconstruction_oracle(cumulative, current);
        CHECK(plan.generate_counts == expect);

        // Reference class needs no supplement and the cap binds everywhere.
        CHECK(plan.generate_counts.get(plan.reference_class) == 0);
        long long cap = 0;
        for (const auto& [c, n] : current.counts) {
            (void)c;
            cap = std::max(cap, n);
        }
        for (const auto& [c, n] : plan.generate_counts.counts) {
            (void)c;
            CHECK(n <= cap);
        }
        // Classes with real data never over-generate.
        const long long ref_num = current.get(plan.reference_class);
        const long long ref_den = cumulative.get(plan.reference_class);
        for (const auto& [c, n] : current.counts) {
            if (n <= 0) continue;
            const long long scaled = ref_num * cumulative.get(c) / ref_den;
            CHECK(plan.generate_counts.get(c) <= std::max(0LL, scaled - n));
        }
        // Total replay never exceeds the naive no-scaling scheme.
        long long naive_total = 0;
        for (const auto& [c, n] : cumulative.counts) {
            naive_total += std::min(cap, std::max(0LL, n - current.get(c)));
        }
        CHECK(plan.generate_counts.total() <= naive_total);
    }
}

TEST_CASE("fit_submodel: closed-form diagonal gaussian moments") {
    const std::vector<double> data = {0.0, 0.0, 2.0, 2.0};
    const GeneratorParams p = fit_submodel(data.data(), 2, 2, std::nullopt, FitBudget::init,
                                           GeneratorConfig{}, 1);
    CHECK(p.kind == GeneratorKind::diag_gaussian);
    CHECK(p.means[0][0] == doctest::Approx(1.0));
    CHECK(p.means[0][1] == doctest::Approx(1.0));
    CHECK(p.variances[0][0] == doctest::Approx(1.0));
    CHECK(p.variances[0][1] == doctest::Approx(1.0));
    CHECK(p.fit_sample_count == 2);
}

TEST_CASE("fit_submodel: variance floor keeps single-point classes samplable") {
    const std::vector<double> data = {3.0, -1.0};
    const GeneratorParams p = fit_submodel(data.data(), 1, 2, std::nullopt, FitBudget::init,
                                           GeneratorConfig{}, 1);
    CHECK(p.variances[0][0] == kVarianceFloor);
    CHECK(p.variances[0][1] == kVarianceFloor);
}

TEST_CASE("fit_submodel: gmm EM log-likelihood is nondecreasing") {
    GeneratorConfig cfg;
    cfg.kind = GeneratorKind::gmm;
    cfg.components = 3;
    cfg.init_iters = 0;  // seeding only; iterate by hand below
    std::vector<double> data = gaussian_rows(120, 2, 0.0, 1.0, 5);
    const std::vector<double> shifted = gaussian_rows(80, 2, 4.0, 0.5, 6);
    data.insert(data.end(), shifted.begin(), shifted.end());

    GeneratorParams p =
        fit_submodel(data.data(), 200, 2, std::nullopt, FitBudget::init, cfg, 7);
    double prev = log_likelihood(p, data.data(), 200);
    for (int iter = 0; iter < 30; ++iter) {
        p = em_iterate(p, data.data(), 200, 1);
        const double ll = log_likelihood(p, data.data(), 200);
        CHECK(ll >= prev - 1e-9);
        prev = ll;
    }
}

TEST_CASE("fit_submodel: transfer from a converged warm start barely moves") {
    GeneratorConfig cfg;
    cfg.kind = GeneratorKind::gmm;
    cfg.components = 2;
    cfg.init_iters = 500;
    // Two well-separated clusters; EM has a sharp fixed point here.
    std::vector<double> data = gaussian_rows(80, 2, 0.0, 0.5, 9);
    const std::vector<double> far = gaussian_rows(70, 2, 10.0, 0.5, 10);
    data.insert(data.end(), far.begin(), far.end());
    const GeneratorParams converged =
        fit_submodel(data.data(), 150, 2, std::nullopt, FitBudget::init, cfg, 11);
    const GeneratorParams transferred =
        fit_submodel(data.data(), 150, 2, converged, FitBudget::transfer, cfg, 13);
    for (size_t k = 0; k < converged.components(); ++k) {
        for (int j = 0; j < 2; ++j) {
            CHECK(std::abs(transferred.means[k][static_cast<size_t>(j)] -
                           converged.means[k][static_cast<size_t>(j)]) < 1e-6);
            CHECK(std::abs(transferred.variances[k][static_cast<size_t>(j)] -
                           converged.variances[k][static_cast<size_t>(j)]) < 1e-6);
        }
        CHECK(std::abs(transferred.weights[k] - converged.weights[k]) < 1e-6);
    }
}

TEST_CASE("fit_submodel: fewer samples than components falls back with a downgrade flag") {
    GeneratorConfig cfg;
    cfg.kind = GeneratorKind::gmm;
    cfg.components = 5;
    const std::vector<double> data = {1.0, 2.0, 3.0, 4.0};  // 2 samples, dim 2
    const GeneratorParams p =
        fit_submodel(data.data(), 2, 2, std::nullopt, FitBudget::init, cfg, 15);
    CHECK(p.kind == GeneratorKind::diag_gaussian);
    CHECK(p.downgraded);
}

TEST_CASE("fit_submodel: transfer budget without a warm start is a contract violation") {
    const std::vector<double> data = {1.0, 2.0};
    CHECK_THROWS_AS(fit_submodel(data.data(), 1, 2, std::nullopt, FitBudget::transfer,
                                 GeneratorConfig{}, 1),
                    ContractViolation);
}

TEST_CASE("sample_replay: all-zero plan gives an empty batch") {
    const LabeledBatch batch = sample_replay(AuxiliaryModel{}, ReconstructionPlan{}, 3);
    CHECK(batch.rows() == 0);
}

TEST_CASE("sample_replay: per-class counts match the plan exactly") {
    AuxiliaryModel aux;
    const std::vector<double> d0 = gaussian_rows(50, 3, 0.0, 1.0, 21);
    const std::vector<double> d1 = gaussian_rows(50, 3, 5.0, 1.0, 22);
    aux[0] = fit_submodel(d0.data(), 50, 3, std::nullopt, FitBudget::init, GeneratorConfig{}, 23);
    aux[1] = fit_submodel(d1.data(), 50, 3, std::nullopt, FitBudget::init, GeneratorConfig{}, 24);
    ReconstructionPlan plan;
    plan.generate_counts = make_counts({{0, 100}, {1, 50}});
    const LabeledBatch batch = sample_replay(aux, plan, 25);
    CHECK(batch.rows() == 150);
    CHECK(counts_of(batch) == plan.generate_counts);
    for (uint8_t flag : batch.is_synthetic) CHECK(flag == 1);
}

TEST_CASE("sample_replay: fixed seed reproduces the batch bit for bit") {
    AuxiliaryModel aux;
    const std::vector<double> d = gaussian_rows(30, 2, 1.0, 2.0, 27);
    aux[4] = fit_submodel(d.data(), 30, 2, std::nullopt, FitBudget::init, GeneratorConfig{}, 28);
    ReconstructionPlan plan;
    plan.generate_counts = make_counts({{4, 64}});
    const LabeledBatch a = sample_replay(aux, plan, 31);
    const LabeledBatch b = sample_replay(aux, plan, 31);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
}

TEST_CASE("sample_replay: missing generator names the class") {
    ReconstructionPlan plan;
    plan.generate_counts = make_counts({{7, 10}});
    try {
        sample_replay(AuxiliaryModel{}, plan, 1);
        FAIL("expected ReplayError");
    } catch (const ReplayError& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("sample_replay: sample mean of a fitted gaussian stays within the CLT bound") {
    const long long n = 10000;
    const std::vector<double> data = gaussian_rows(n, 2, 3.0, 1.5, 33);
    AuxiliaryModel aux;
    aux[0] = fit_submodel(data.data(), n, 2, std::nullopt, FitBudget::init, GeneratorConfig{}, 34);
    ReconstructionPlan plan;
    plan.generate_counts = make_counts({{0, static_cast<long long>(n)}});
    const LabeledBatch batch = sample_replay(aux, plan, 35);
    for (int j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (size_t i = 0; i < batch.rows(); ++i) mean += batch.row(i)[j];
        mean /= static_cast<double>(batch.rows());
        const double sigma = std::sqrt(aux[0].variances[0][static_cast<size_t>(j)]);
        CHECK(std::abs(mean - aux[0].means[0][static_cast<size_t>(j)]) <
              5.0 * sigma / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("generator records: serialize and parse round-trip exactly") {
    GeneratorConfig cfg;
    cfg.kind = GeneratorKind::gmm;
    cfg.components = 3;
    const std::vector<double> data = gaussian_rows(90, 4, -2.0, 1.3, 37);
    const GeneratorParams p =
        fit_submodel(data.data(), 90, 4, std::nullopt, FitBudget::init, cfg, 38);
    std::stringstream buffer;
    write_generator(buffer, p);
    const GeneratorParams q = read_generator(buffer);
    CHECK(p == q);
}
