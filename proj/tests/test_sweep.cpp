#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dropkit/attribution.hpp"
#include "dropkit/rng.hpp"
#include "dropkit/sweep.hpp"
#include "testutil.hpp"

using namespace dropkit;

namespace {

SweepSpec tiny_spec() {
    SweepSpec spec;
    spec.n_grid = {400};
    spec.d_grid = {6};
    spec.k_grid = {3};
    spec.trials_per_cell = 3;
    spec.base_seed = 77;
    spec.workers = 2;
    return spec;
}

bool same_science(const SweepRecord& a, const SweepRecord& b) {
    const auto eq = [](double x, double y) {
        return (std::isnan(x) && std::isnan(y)) || x == y;
    };
    return a.n == b.n && a.d == b.d && a.k == b.k && a.trial == b.trial &&
           a.strategy == b.strategy && eq(a.err_if_exact, b.err_if_exact) &&
           eq(a.err_ns_exact, b.err_ns_exact) && eq(a.err_rif_exact, b.err_rif_exact) &&
           eq(a.err_drif_exact, b.err_drif_exact) && eq(a.err_if_ns, b.err_if_ns) &&
           eq(a.err_rif_ns, b.err_rif_ns) && eq(a.err_drif_ns, b.err_drif_ns) &&
           eq(a.err_rif_drif, b.err_rif_drif) && eq(a.ns_delta_norm, b.ns_delta_norm) &&
           eq(a.cert_bound, b.cert_bound) && a.cert_ok == b.cert_ok && a.flag == b.flag;
}

std::string temp_dir(const char* tag) {
    const auto dir = std::filesystem::temp_directory_path() /
                     (std::string("dropkit_test_") + tag);
    std::filesystem::remove_all(dir);
    return dir.string();
}

} // namespace

TEST_CASE("run_sweep: bookkeeping and end-to-end determinism") {
    const SweepSpec spec = tiny_spec();
    const auto first = run_sweep(spec);
    REQUIRE(first.size() == 3);
    for (int trial = 0; trial < 3; ++trial) {
        CHECK(first[static_cast<std::size_t>(trial)].trial == trial);
        CHECK(first[static_cast<std::size_t>(trial)].flag.empty());
    }
    // rerun: identical records up to wall_time
    const auto second = run_sweep(spec);
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(same_science(first[i], second[i]));
}

TEST_CASE("run_sweep: quadratic mode makes the NS estimate exact in every record") {
    SweepSpec spec = tiny_spec();
    spec.loss = LossKind::quadratic;
    spec.lambda = 0.01;
    spec.trials_per_cell = 5;
    for (const auto& record : run_sweep(spec)) {
        REQUIRE(record.flag.empty());
        CHECK(record.err_ns_exact <= 1e-10);
    }
}

TEST_CASE("run_sweep: NS error lands at the kd/n^2 scale") {
    SweepSpec spec;
    spec.n_grid = {4000};
    spec.d_grid = {10};
    spec.k_grid = {5};
    spec.trials_per_cell = 50;
    spec.base_seed = 11;
    spec.workers = 2;
    const auto records = run_sweep(spec);
    std::vector<double> errors;
    for (const auto& record : records) {
        REQUIRE(record.flag.empty());
        errors.push_back(record.err_ns_exact);
    }
    const double expected = 5.0 * 10.0 / (4000.0 * 4000.0); // 3.125e-6
    const double median = testutil::median(errors);
    CHECK(median >= expected / 10.0);
    CHECK(median <= expected * 10.0);
}

TEST_CASE("run_sweep: triangle inequality and the RIF/DRIF rescale identity") {
    SweepSpec spec = tiny_spec();
    spec.n_grid = {500};
    spec.k_grid = {25};
    spec.trials_per_cell = 6;
    const auto records = run_sweep(spec);
    for (const auto& record : records) {
        REQUIRE(record.flag.empty());
        CHECK(record.err_if_ns <= record.err_if_exact + record.err_ns_exact + 1e-12);
        CHECK(record.err_if_exact <= record.err_if_ns + record.err_ns_exact + 1e-12);
        CHECK(record.err_ns_exact <= record.err_if_ns + record.err_if_exact + 1e-12);
    }

    // recompute one trial deterministically and check the exact rescale identity
    std::uint64_t seed = spec.base_seed;
    seed = seed_mix(seed, 500);
    seed = seed_mix(seed, 6);
    seed = seed_mix(seed, 25);
    seed = seed_mix(seed, static_cast<std::uint64_t>(DropStrategy::random));
    seed = seed_mix(seed, 2); // trial 2
    SynthConfig synth;
    synth.n = 500;
    synth.d = 6;
    synth.seed = seed_mix(seed, 1);
    const SynthInstance instance = generate(synth);
    const LossSpec loss{LossKind::logistic, 0.0};
    const FitReport fitted = fit(instance.dataset, loss);
    const ModelState state =
        build_state(instance.dataset, loss, fitted.theta, all_samples(500));
    const DropSet drop = sample_dropset(instance.dataset, state, DropStrategy::random,
                                        25, seed_mix(seed, 2));
    const double rif_norm = estimate_rif(state, drop).delta.norm();
    const double expected = 25.0 / (500.0 - 25.0) * rif_norm;
    CHECK(testutil::rel_err(records[2].err_rif_drif, expected) <= 1e-12);
}

TEST_CASE("run_sweep: NS beats IF when the dimension dominates the drop size") {
    SweepSpec spec;
    spec.n_grid = {8000};
    spec.d_grid = {16};
    spec.k_grid = {4}; // d >= 4k, n >= 16 (d^2 + k^2)
    spec.trials_per_cell = 30;
    spec.base_seed = 23;
    spec.workers = 2;
    const auto records = run_sweep(spec);
    int ns_wins = 0, total = 0;
    for (const auto& record : records) {
        if (!record.flag.empty()) continue;
        ++total;
        if (record.err_ns_exact < record.err_if_exact) ++ns_wins;
    }
    REQUIRE(total >= 27);
    CHECK(ns_wins * 10 >= total * 9);
}

TEST_CASE("fit_scaling: recovers an exact power law") {
    std::vector<SweepRecord> records;
    for (const Eigen::Index n : {1000, 2000, 4000, 8000}) {
        for (int trial = 0; trial < 5; ++trial) {
            SweepRecord record;
            record.n = n;
            record.d = 8;
            record.k = 2;
            record.trial = trial;
            record.strategy = DropStrategy::random;
            record.err_ns_exact = 3.0 / (static_cast<double>(n) * static_cast<double>(n));
            records.push_back(record);
        }
    }
    const SlopeFit fit = fit_scaling(records, SweepAxis::n, "ns_exact", SlopeFilter{});
    CHECK(fit.slope == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.n_points == 4);
    CHECK(fit.ci_halfwidth <= 1e-9);
}

TEST_CASE("fit_scaling: tolerates multiplicative noise") {
    Xoshiro256pp rng(31337);
    std::vector<SweepRecord> records;
    for (const Eigen::Index n : {1000, 2000, 4000, 8000, 16000}) {
        for (int trial = 0; trial < 41; ++trial) {
            SweepRecord record;
            record.n = n;
            record.d = 8;
            record.k = 2;
            record.trial = trial;
            record.err_ns_exact = std::pow(static_cast<double>(n), -1.5) *
                                  (1.0 + 0.1 * (2.0 * rng.uniform() - 1.0));
            records.push_back(record);
        }
    }
    const SlopeFit fit = fit_scaling(records, SweepAxis::n, "ns_exact", SlopeFilter{});
    CHECK(std::abs(fit.slope - (-1.5)) <= 0.1);
}

TEST_CASE("fit_scaling: error paths") {
    std::vector<SweepRecord> records;
    for (const Eigen::Index n : {1000, 2000}) {
        SweepRecord record;
        record.n = n;
        record.d = 4;
        record.k = 2;
        record.err_ns_exact = 1.0 / n;
        records.push_back(record);
    }
    CHECK_THROWS_AS(fit_scaling(records, SweepAxis::n, "ns_exact", SlopeFilter{}), Error);

    // a zero cell median (quadratic-mode exactness) is rejected with ZeroError
    for (const Eigen::Index n : {4000, 8000}) {
        SweepRecord record;
        record.n = n;
        record.d = 4;
        record.k = 2;
        record.err_ns_exact = 0.0;
        records.push_back(record);
    }
    try {
        fit_scaling(records, SweepAxis::n, "ns_exact", SlopeFilter{});
        FAIL("expected ZeroError");
    } catch (const Error& error) {
        CHECK(error.code() == Errc::zero_error);
    }

    // mixed d values with no filter are ambiguous
    std::vector<SweepRecord> mixed;
    for (const Eigen::Index n : {1000, 2000, 4000}) {
        for (const Eigen::Index d : {4, 8}) {
            SweepRecord record;
            record.n = n;
            record.d = d;
            record.k = 2;
            record.err_ns_exact = 1.0 / n;
            mixed.push_back(record);
        }
    }
    CHECK_THROWS_AS(fit_scaling(mixed, SweepAxis::n, "ns_exact", SlopeFilter{}), Error);
    SlopeFilter pin;
    pin.d = 8;
    CHECK(fit_scaling(mixed, SweepAxis::n, "ns_exact", pin).n_points == 3);
}

TEST_CASE("emit_report: manifest, empty-input header, exact numeric round-trip") {
    const std::string dir = temp_dir("report");
    const auto manifest = emit_report({}, {}, dir);
    REQUIRE(manifest.size() == 3);
    {
        std::ifstream in(manifest[0]);
        std::string header, extra;
        REQUIRE(std::getline(in, header));
        CHECK(header.rfind("n,d,k,trial,strategy,err_if_exact", 0) == 0);
        CHECK_FALSE(std::getline(in, extra));
    }

    std::vector<SweepRecord> records;
    SweepRecord record;
    record.n = 4000;
    record.d = 10;
    record.k = 5;
    record.trial = 0;
    record.strategy = DropStrategy::adversarial_aligned;
    record.err_if_exact = 1.2345678901234567e-6;
    record.err_ns_exact = 0.1 + 0.2; // not representable nicely on purpose
    record.err_rif_exact = std::numeric_limits<double>::quiet_NaN();
    record.err_drif_exact = 3.0;
    record.err_if_ns = 4.0;
    record.err_rif_ns = 5.0;
    record.err_drif_ns = 6.0;
    record.err_rif_drif = 7.0;
    record.ns_delta_norm = 8.0;
    record.cert_bound = std::numeric_limits<double>::infinity();
    record.cert_ok = false;
    record.flag = "";
    records.push_back(record);

    const std::string dir2 = temp_dir("report2");
    const auto manifest2 = emit_report(records, {}, dir2);
    const auto parsed = read_records_csv(manifest2[0]);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].err_if_exact == record.err_if_exact);
    CHECK(parsed[0].err_ns_exact == record.err_ns_exact);
    CHECK(std::isnan(parsed[0].err_rif_exact));
    CHECK(std::isinf(parsed[0].cert_bound));
    CHECK(parsed[0].strategy == DropStrategy::adversarial_aligned);
}

TEST_CASE("sweep_spec_from_json: defaults, overrides, and validation") {
    const SweepSpec spec = sweep_spec_from_json_text(R"({
        "n_grid": [1000, 2000],
        "d_grid": [8],
        "k_grid": [2, 4],
        "trials_per_cell": 7,
        "strategies": ["random", "adversarial_aligned"],
        "lambda": 0.5,
        "base_seed": 99,
        "loss": "quadratic",
        "certify": true,
        "certificate": {"radius": 2.0, "ball_samples": 32},
        "fit": {"grad_tol": 1e-8}
    })");
    CHECK(spec.n_grid == std::vector<Eigen::Index>{1000, 2000});
    CHECK(spec.trials_per_cell == 7);
    CHECK(spec.strategies.size() == 2);
    CHECK(spec.lambda == 0.5);
    CHECK(spec.loss == LossKind::quadratic);
    CHECK(spec.certify);
    CHECK(spec.cert_config.radius == 2.0);
    CHECK(spec.cert_config.ball_samples == 32);
    CHECK(spec.cert_config.path_grid == 64); // untouched default
    CHECK(spec.fit_config.grad_tol == 1e-8);

    // omitted grids fall back to the desk-scale defaults
    const SweepSpec defaults = sweep_spec_from_json_text("{}");
    CHECK(defaults.n_grid == std::vector<Eigen::Index>{4000, 8000, 16000, 32000});
    CHECK(defaults.d_grid == std::vector<Eigen::Index>{8, 16, 32});
    CHECK(defaults.k_grid == std::vector<Eigen::Index>{2, 4, 8, 16});
    CHECK(defaults.trials_per_cell == 50);
    CHECK(defaults.lambda == 0.0);

    CHECK_THROWS_AS(sweep_spec_from_json_text(
                        R"({"n_grid":[100],"d_grid":[200],"k_grid":[1]})"),
                    Error); // d >= n
}
