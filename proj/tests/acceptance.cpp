// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every criterion also has a wall-clock budget.

#include "pimkit/estimator.hpp"
#include "pimkit/gof.hpp"
#include "pimkit/influence.hpp"
#include "pimkit/ingest.hpp"
#include "pimkit/pipeline.hpp"
#include "pimkit/simulator.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

using namespace pimkit;
using pimkit::testing::make_model;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

Outcome attribution_normalization() {
    std::size_t events = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; events < 10000; ++seed) {
        Rng rng(seed, 99);
        const Index p = 1 + static_cast<Index>(rng.uniform() * 4);
        Model m = testing::random_model(rng, p, 0.5 + 2.0 * rng.uniform());
        m.excitation *= 0.8 / std::max(1.0, spectral_radius(m));
        const auto s = simulate_thinning({m, 300.0, seed});
        for (const auto& row : attribute_all(m, s)) {
            for (const auto& rec : row) {
                worst = std::max(worst, std::abs(rec.probabilities.sum() - 1.0));
                ++events;
            }
        }
    }
    return {worst <= 1e-12, fmt("%zu events, max |sum - 1| = %.3g", events, worst)};
}

Outcome likelihood_oracle() {
    Rng rng(2024, 1);
    long double worst = 0.0L;
    for (int trial = 0; trial < 100; ++trial) {
        const Index p = 1 + static_cast<Index>(rng.uniform() * 4);
        const Model m = testing::random_model(rng, p, 0.3 + 2.0 * rng.uniform());
        const EventStreams s = testing::random_streams(rng, p, 200, 50.0);
        worst = std::max(worst, std::abs(log_likelihood(m, s) - testing::naive_log_likelihood(m, s)));
    }
    return {worst <= 1e-9L, fmt("100 instances, max |recursive - naive| = %.3Lg", worst)};
}

Outcome gradient_check() {
    Rng rng(77, 1);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Model m = testing::random_model(rng, 3);
        const EventStreams s = testing::random_streams(rng, 3, 200, 40.0);
        const auto g = log_likelihood_gradient(m, s);
        const double h = 1e-6;
        auto rel = [](double fd, double an) { return std::abs(fd - an) / std::max(1.0, std::abs(an)); };
        for (Index i = 0; i < 3; ++i) {
            Model up = m, down = m;
            up.base[i] += h;
            down.base[i] -= h;
            worst = std::max(worst, rel((log_likelihood(up, s) - log_likelihood(down, s)) / (2 * h), g.base[i]));
            for (Index j = 0; j < 3; ++j) {
                Model u = m, d = m;
                u.excitation(i, j) += h;
                d.excitation(i, j) -= h;
                worst = std::max(worst, rel((log_likelihood(u, s) - log_likelihood(d, s)) / (2 * h), g.excitation(i, j)));
            }
        }
    }
    return {worst < 1e-5, fmt("20 instances, max relative error = %.3g", worst)};
}

Outcome parameter_recovery() {
    const Model truth = testing::reference_model();
    Eigen::VectorXd b_err = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd a_err = Eigen::MatrixXd::Zero(2, 2);
    bool converged = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = simulate_thinning({truth, 2000.0, seed});
        const auto fit = fit_mle(s, truth.kernel);
        converged = converged && fit.converged;
        b_err += ((fit.model.base - truth.base).array() / truth.base.array()).abs().matrix() / 10.0;
        for (Index i = 0; i < 2; ++i) {
            for (Index j = 0; j < 2; ++j) {
                const double t = truth.excitation(i, j);
                const double e = std::abs(fit.model.excitation(i, j) - t);
                a_err(i, j) += (t == 0.0 ? e : e / t) / 10.0;
            }
        }
    }
    const bool ok = converged && b_err.maxCoeff() <= 0.15 && a_err(0, 0) <= 0.15 && a_err(0, 1) <= 0.15 &&
                    a_err(1, 1) <= 0.15 && a_err(1, 0) <= 0.05;
    return {ok, fmt("mean rel. error b=[%.3f, %.3f] a=[[%.3f, %.3f], [%.4f abs, %.3f]]", b_err[0], b_err[1],
                    a_err(0, 0), a_err(0, 1), a_err(1, 0), a_err(1, 1))};
}

Outcome sampler_cross_check() {
    const Model m = testing::reference_model();
    const double horizon = 2000.0;
    const int n = 200;
    double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
    for (std::uint64_t seed = 1; seed <= static_cast<std::uint64_t>(n); ++seed) {
        const double x = static_cast<double>(simulate_thinning({m, horizon, seed}).total_events());
        const double y = static_cast<double>(simulate_branching({m, horizon, seed}).total_events());
        s1 += x;
        q1 += x * x;
        s2 += y;
        q2 += y * y;
    }
    const double m1 = s1 / n, m2 = s2 / n;
    const double v1 = (q1 - n * m1 * m1) / (n - 1), v2 = (q2 - n * m2 * m2) / (n - 1);
    const double se = std::sqrt(v1 / n + v2 / n);
    const double expected = stationary_expected_count(m, horizon);
    const bool ok = std::abs(m1 - m2) <= 2.0 * se && std::abs(m1 / expected - 1.0) <= 0.05 &&
                    std::abs(m2 / expected - 1.0) <= 0.05;
    return {ok, fmt("thinning %.1f, branching %.1f, |diff| = %.2f SE, stationary %.1f", m1, m2, std::abs(m1 - m2) / se,
                    expected)};
}

Outcome gof_calibration() {
    const Model m = testing::reference_model();
    const GofGate gate{0.01};
    int rejected = 0;
    std::size_t fewest = SIZE_MAX;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const auto s = simulate_thinning({m, 2000.0, seed + 5000});
        fewest = std::min(fewest, s.total_events());
        if (!gate.passes(evaluate_gof(m, s))) ++rejected;
    }
    const double rate = rejected / 200.0;
    return {fewest >= 500 && rate <= 0.03, fmt("rejection rate %.1f%% (%d/200), fewest events %zu", 100 * rate, rejected, fewest)};
}

Outcome pim_oracle() {
    Rng rng(2718, 1);
    int mismatched = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Index p = 1 + static_cast<Index>(rng.uniform() * 4);
        const Model m = testing::random_model(rng, p, 0.3 + 2.0 * rng.uniform());
        const EventStreams s = testing::random_streams(rng, p, 200, 40.0);
        const auto pim = pim_estimate(m, s);
        const Eigen::MatrixXd oracle = testing::brute_force_pim(m, s);
        for (Index i = 0; i < p; ++i) {
            const bool same = pim.row_defined(i) ? pim.values.row(i) == oracle.row(i)
                                                 : pim.values.row(i).array().isNaN().all() && s.count(i) == 0;
            if (!same) ++mismatched;
        }
    }
    return {mismatched == 0, fmt("50 instances, %d mismatched rows", mismatched)};
}

Outcome self_driving() {
    // Base rate 0.05 * beta; a/beta = 0.9.
    const Model m = make_model({0.05}, {{0.9}});
    double worst_true = 1.0, worst_fit = 1.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto s = simulate_thinning({m, 20000.0, seed});
        worst_true = std::min(worst_true, pim_estimate(m, s).influence(0, 0));
        worst_fit = std::min(worst_fit, pim_estimate(fit_mle(s, m.kernel).model, s).influence(0, 0));
    }
    return {worst_true > 0.9 && worst_fit > 0.9,
            fmt("min diagonal PIM over 10 seeds: %.4f (true model), %.4f (fitted)", worst_true, worst_fit)};
}

Outcome classification() {
    struct Case {
        double value;
        InfluenceClass expected;
    };
    const Case cases[] = {
        {0.0, InfluenceClass::weak},
        {0.2, InfluenceClass::weak},
        {std::nextafter(0.2, 1.0), InfluenceClass::significant},
        {0.6, InfluenceClass::significant},
        {std::nextafter(0.6, 1.0), InfluenceClass::strong},
        {0.99, InfluenceClass::strong},
        {std::nextafter(0.99, 1.0), InfluenceClass::decisive},
        {1.0, InfluenceClass::decisive},
    };
    int wrong = 0;
    for (const auto& c : cases)
        if (classify(c.value) != c.expected) ++wrong;
    return {wrong == 0, fmt("%d of 8 boundary points misclassified", wrong)};
}

Outcome planted_edge() {
    // Process 1 excites process 0; everything else is self-excitation.
    const Model m = make_model({0.2, 2.0, 2.0}, {{0.3, 0.8, 0.0}, {0.0, 0.3, 0.0}, {0.0, 0.0, 0.3}});
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = simulate_thinning({m, 720.0, seed});
        const auto results = run_pipeline(s, plan_windows(0.0, 720.0), {});
        const auto timeline = build_timeline(results);
        std::vector<bool> planted(results.size()), false_decisive(results.size());
        for (const auto& e : timeline.entries) {
            const auto w = static_cast<std::size_t>(e.window);
            if (e.source == 1 && e.target == 0) {
                if (e.influence != InfluenceClass::weak) planted[w] = true;
            } else if (e.influence == InfluenceClass::decisive) {
                false_decisive[w] = true;
            }
        }
        const auto hit = std::count(planted.begin(), planted.end(), true);
        const auto bad = std::count(false_decisive.begin(), false_decisive.end(), true);
        const double n = static_cast<double>(results.size());
        ok = ok && hit >= 0.6 * n && bad <= 0.1 * n;
        detail += fmt("%sseed %d: %ld/%zu planted, %ld false", detail.empty() ? "" : "; ", static_cast<int>(seed), hit,
                      results.size(), bad);
    }
    return {ok, detail};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism_and_round_trips() {
    namespace fs = std::filesystem;
    std::vector<std::string> failures;

    const Model m = make_model({0.2, 2.0, 2.0}, {{0.3, 0.8, 0.0}, {0.0, 0.3, 0.0}, {0.0, 0.0, 0.3}});
    const auto s = simulate_thinning({m, 240.0, 21});
    const auto plan = plan_windows(0.0, 240.0);
    const fs::path root = fs::temp_directory_path() / "pimkit_acceptance";
    fs::remove_all(root);
    for (int run = 0; run < 2; ++run) {
        PipelineConfig config;
        config.parallelism = run == 0 ? 1 : 4;
        const auto results = run_pipeline(s, plan, config);
        write_results(root / std::to_string(run), plan, config, results, build_timeline(results));
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "0")) {
        if (entry.path().extension() != ".json") continue;
        const auto other = root / "1" / fs::relative(entry.path(), root / "0");
        if (slurp(entry.path()) != slurp(other)) failures.push_back("differs: " + other.filename().string());
        ++compared;
    }
    fs::remove_all(root);
    if (compared == 0) failures.push_back("no JSON outputs");

    std::ostringstream exported;
    export_streams(s, exported);
    std::istringstream in(exported.str());
    IngestConfig config;
    config.min_events = 0;
    const auto back = ingest(in, config);
    double drift = 0.0;
    bool shape = back.streams.dimension() == s.dimension() && back.streams.t_end() == s.t_end();
    for (Index i = 0; shape && i < s.dimension(); ++i) {
        shape = back.streams.count(i) == s.count(i) && back.streams.name(i) == s.name(i);
        for (std::size_t k = 0; shape && k < s.count(i); ++k)
            drift = std::max(drift, std::abs(back.streams.stream(i)[k] - s.stream(i)[k]));
    }
    std::ostringstream again;
    export_streams(back.streams, again);
    if (!shape || drift > 1e-9) failures.push_back(fmt("round trip drift %.3g", drift));
    if (again.str() != exported.str()) failures.push_back("re-export differs");

    const auto three = plan_windows(0.0, 96.0, 48.0, 24.0).windows;
    if (three.size() != 3 || three[0].start != 0 || three[0].end != 48 || three[1].start != 24 || three[1].end != 72 ||
        three[2].start != 48 || three[2].end != 96)
        failures.push_back("96h plan");
    const auto tiles = plan_windows(0.0, 96.0, 24.0, 24.0).windows;
    for (std::size_t k = 1; k < tiles.size(); ++k)
        if (tiles[k].start != tiles[k - 1].end) failures.push_back("tiling");
    if (tiles.size() != 4) failures.push_back("tiling count");
    const auto days38 = plan_windows(0.0, 912.0).windows.size();
    if (days38 != static_cast<std::size_t>(std::floor((912.0 - 48.0) / 24.0)) + 1) failures.push_back("912h plan");

    std::string detail = fmt("%zu JSON files identical, drift %.2g h, 912h span -> %zu windows", compared, drift, days38);
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {1, "attribution normalization", 10, attribution_normalization},
        {2, "likelihood oracle", 30, likelihood_oracle},
        {3, "gradient check", 30, gradient_check},
        {4, "parameter recovery", 300, parameter_recovery},
        {5, "sampler cross-check", 300, sampler_cross_check},
        {6, "GOF calibration", 300, gof_calibration},
        {7, "PIM oracle", 60, pim_oracle},
        {8, "self-driving regime", 60, self_driving},
        {9, "classification boundaries", 60, classification},
        {10, "planted-edge timeline", 600, planted_edge},
        {11, "determinism and round trips", 600, determinism_and_round_trips},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool pass = outcome.pass && seconds <= c.budget_seconds;
        if (!pass) ++failed;
        std::printf("%s criterion %2d  %-28s %s [%.2fs / %.0fs]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    outcome.detail.c_str(), seconds, c.budget_seconds);
        std::fflush(stdout);
    }
    std::printf("%d of 11 criteria passed\n", 11 - failed);
    return failed == 0 ? 0 : 1;
}
