#include "doctest.h"

#include "pimkit/core.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace pimkit;
using pimkit::testing::make_model;

TEST_CASE("intensity hand evaluations") {
    SUBCASE("background only") {
        const Model m = make_model({0.5}, {{0.0}});
        const EventStreams s({{}}, 0.0, 20.0);
        CHECK(intensity(m, s, 0, 10.0) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("one self event") {
        const Model m = make_model({0.5}, {{1.0}});
        const EventStreams s({{1.0}}, 0.0, 5.0);
        CHECK(std::abs(intensity(m, s, 0, 2.0) - (0.5 + std::exp(-1.0))) < 1e-15);
        CHECK(std::abs(intensity(m, s, 0, 2.0) - 0.867879) < 1e-6);
    }
    SUBCASE("cross excitation") {
        const Model m = make_model({0.1, 0.1}, {{0.0, 2.0}, {0.0, 0.0}});
        const EventStreams s({{}, {0.0}}, 0.0, 1.0);
        CHECK(std::abs(intensity(m, s, 0, 0.5) - (0.1 + 2.0 * std::exp(-0.5))) < 1e-15);
        CHECK(intensity(m, s, 1, 0.5) == 0.1);
    }
    SUBCASE("left limit excludes the event itself") {
        const Model m = make_model({0.5}, {{1.0}});
        const EventStreams s({{1.0}}, 0.0, 5.0);
        CHECK(intensity(m, s, 0, 1.0) == 0.5);
    }
}

TEST_CASE("intensity argument errors") {
    const Model m = make_model({0.5}, {{0.0}});
    const EventStreams s({{1.0}}, 0.0, 5.0);
    CHECK_THROWS_AS(intensity(m, s, 1, 1.0), std::out_of_range);
    CHECK_THROWS_AS(intensity(m, s, -1, 1.0), std::out_of_range);
    CHECK_THROWS_AS(intensity(m, s, 0, 6.0), std::invalid_argument);
    CHECK_THROWS_AS(intensity(m, s, 0, -0.1), std::invalid_argument);
}

TEST_CASE("model validation") {
    CHECK_THROWS(make_model({-0.1}, {{0.0}}).validate());
    CHECK_THROWS(make_model({0.1}, {{-1.0}}).validate());
    CHECK_THROWS(make_model({0.1}, {{0.0}}, 0.0).validate());
    Model bad = make_model({0.1, 0.2}, {{0.0, 0.0}, {0.0, 0.0}});
    bad.excitation.resize(1, 2);
    CHECK_THROWS(bad.validate());
    CHECK_NOTHROW(make_model({0.0}, {{0.0}}).validate());
}

TEST_CASE("compensator") {
    SUBCASE("constant rate") {
        const Model m = make_model({2.0}, {{0.0}});
        const EventStreams s({{}}, 0.0, 3.0);
        CHECK(compensator(m, s, 0, 0.0, 3.0) == doctest::Approx(6.0).epsilon(1e-15));
    }
    SUBCASE("total offspring mass") {
        const Model m = make_model({0.0}, {{1.0}});
        const EventStreams s({{0.0}}, 0.0, 100.0);
        CHECK(std::abs(compensator(m, s, 0, 0.0, 100.0) - 1.0) < 1e-12);
    }
    SUBCASE("reversed interval") {
        const Model m = make_model({1.0}, {{0.0}});
        const EventStreams s({{}}, 0.0, 3.0);
        CHECK_THROWS_AS(compensator(m, s, 0, 2.0, 1.0), std::invalid_argument);
    }
    SUBCASE("additive and monotone on random instances") {
        Rng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            const Index p = 1 + static_cast<Index>(rng.uniform() * 3);
            const Model m = testing::random_model(rng, p);
            const EventStreams s = testing::random_streams(rng, p, 60, 4.0);
            for (Index i = 0; i < p; ++i) {
                const double whole = compensator(m, s, i, 0.0, 2.0);
                const double parts = compensator(m, s, i, 0.0, 1.0) + compensator(m, s, i, 1.0, 2.0);
                CHECK(std::abs(whole - parts) < 1e-12);
                double previous = 0.0;
                for (double t1 = 0.0; t1 <= 4.0; t1 += 0.25) {
                    const double c = compensator(m, s, i, 0.0, t1);
                    CHECK(c >= previous);
                    previous = c;
                }
            }
        }
    }
}

TEST_CASE("log-likelihood hand evaluations") {
    const Model m = make_model({1.0}, {{0.0}});
    const EventStreams s({{0.5, 1.5}}, 0.0, 2.0);
    CHECK(std::abs(log_likelihood(m, s) - (-2.0)) < 1e-15);

    SUBCASE("empty streams leave only the compensator") {
        const Model m2 = make_model({0.3, 0.7}, {{0.2, 0.1}, {0.4, 0.5}});
        const EventStreams empty({{}, {}}, 0.0, 10.0);
        CHECK(log_likelihood(m2, empty) ==
              doctest::Approx(-(compensator(m2, empty, 0, 0.0, 10.0) + compensator(m2, empty, 1, 0.0, 10.0))));
    }
    SUBCASE("zero intensity gives the -inf sentinel") {
        const Model m3 = make_model({0.0}, {{1.0}});
        const EventStreams one({{1.0, 2.0}}, 0.0, 3.0);
        CHECK(std::isinf(log_likelihood(m3, one)));
        CHECK(log_likelihood(m3, one) < 0.0);
    }
}

TEST_CASE("recursive log-likelihood matches the O(N^2) oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const Index p = 1 + static_cast<Index>(rng.uniform() * 4);
        const double beta = 0.3 + 2.0 * rng.uniform();
        const Model m = testing::random_model(rng, p, beta);
        const EventStreams s = testing::random_streams(rng, p, 200, 50.0);
        const long double oracle = testing::naive_log_likelihood(m, s);
        CHECK(std::abs(static_cast<long double>(log_likelihood(m, s)) - oracle) < 1e-9L);
        // the extended-precision instantiation of the same code agrees too
        CHECK(std::abs(log_likelihood(m.cast<long double>(), s) - oracle) < 1e-12L);
    }
}

TEST_CASE("likelihood decomposes over target rows") {
    Rng rng(5);
    const Model m = testing::random_model(rng, 3);
    const EventStreams s = testing::random_streams(rng, 3, 150, 30.0);
    const auto designs = build_row_designs<double>(s, m.kernel);
    double sum = 0.0;
    for (const auto& d : designs) sum += row_log_likelihood(d, m.base[d.target], m.excitation.row(d.target).transpose());
    CHECK(sum == doctest::Approx(log_likelihood(m, s)).epsilon(1e-14));

    // changing row 1's parameters leaves row 0's term untouched
    Model other = m;
    other.base[1] *= 3.0;
    other.excitation.row(1) *= 0.1;
    const auto& d0 = designs[0];
    CHECK(row_log_likelihood(d0, other.base[0], other.excitation.row(0).transpose()) ==
          row_log_likelihood(d0, m.base[0], m.excitation.row(0).transpose()));
}

TEST_CASE("analytic gradient") {
    SUBCASE("matches central finite differences") {
        Rng rng(77);
        for (int trial = 0; trial < 20; ++trial) {
            const Model m = testing::random_model(rng, 3);
            const EventStreams s = testing::random_streams(rng, 3, 200, 40.0);
            const auto g = log_likelihood_gradient(m, s);
            const double h = 1e-6;
            for (Index i = 0; i < 3; ++i) {
                Model up = m, down = m;
                up.base[i] += h;
                down.base[i] -= h;
                const double fd = (log_likelihood(up, s) - log_likelihood(down, s)) / (2 * h);
                CHECK(std::abs(fd - g.base[i]) / std::max(1.0, std::abs(g.base[i])) < 1e-5);
                for (Index j = 0; j < 3; ++j) {
                    Model u = m, d = m;
                    u.excitation(i, j) += h;
                    d.excitation(i, j) -= h;
                    const double fdj = (log_likelihood(u, s) - log_likelihood(d, s)) / (2 * h);
                    CHECK(std::abs(fdj - g.excitation(i, j)) / std::max(1.0, std::abs(g.excitation(i, j))) < 1e-5);
                }
            }
        }
    }
    SUBCASE("hand evaluation of the base derivative") {
        const Model m = make_model({1.0}, {{0.0}});
        const EventStreams s({{0.5, 1.5}}, 0.0, 2.0);
        CHECK(std::abs(log_likelihood_gradient(m, s).base[0]) < 1e-15);
    }
    SUBCASE("empty target row is minus the kernel integral") {
        const Model m = make_model({0.4, 0.2}, {{0.3, 0.6}, {0.5, 0.1}});
        const EventStreams s({{}, {1.0, 2.5, 4.0}}, 0.0, 5.0);
        const auto g = log_likelihood_gradient(m, s);
        CHECK(g.excitation(0, 0) == 0.0);
        double integral = 0.0;
        for (double t : s.stream(1)) integral += 1.0 - std::exp(-(5.0 - t));
        CHECK(g.excitation(0, 1) == doctest::Approx(-integral).epsilon(1e-14));
        CHECK(g.base[0] == doctest::Approx(-5.0));
    }
    SUBCASE("zero intensity is an error") {
        const Model m = make_model({0.0}, {{1.0}});
        const EventStreams s({{1.0, 2.0}}, 0.0, 3.0);
        CHECK_THROWS_AS(log_likelihood_gradient(m, s), ZeroIntensityError);
    }
}

TEST_CASE("intensity properties") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const Index p = 1 + static_cast<Index>(rng.uniform() * 3);
        const Model m = testing::random_model(rng, p);
        const EventStreams s = testing::random_streams(rng, p, 40, 20.0);
        for (Index i = 0; i < p; ++i) {
            for (double t = 0.0; t <= 20.0; t += 0.37) CHECK(intensity(m, s, i, t) >= m.base[i]);
        }
        // exponential relaxation toward the base rate between events
        std::vector<double> all;
        for (Index j = 0; j < p; ++j) all.insert(all.end(), s.stream(j).begin(), s.stream(j).end());
        std::sort(all.begin(), all.end());
        all.push_back(20.0);
        for (std::size_t k = 0; k + 1 < all.size(); ++k) {
            const double t1 = all[k] + 1e-9;
            const double t2 = all[k + 1];
            if (!(t2 > t1)) continue;
            for (Index i = 0; i < p; ++i) {
                const double before = intensity(m, s, i, t1) - m.base[i];
                const double after = intensity(m, s, i, t2) - m.base[i];
                CHECK(std::abs(after - before * std::exp(-(t2 - t1))) < 1e-12);
            }
        }
    }
}

TEST_CASE("decay state") {
    DecayState<double> state(2, KernelSpec{0.5}, 0.0);
    state.record(0);
    state.record(0);
    state.record(1);
    state.advance_to(2.0);
    CHECK(state.sums()[0] == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-15));
    CHECK(state.sums()[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK_THROWS(state.advance_to(1.0));
}

TEST_CASE("event streams invariants") {
    CHECK_THROWS(EventStreams({{1.0, 1.0}}, 0.0, 2.0));
    CHECK_THROWS(EventStreams({{2.0, 1.0}}, 0.0, 2.0));
    CHECK_THROWS(EventStreams({{3.0}}, 0.0, 2.0));
    CHECK_THROWS(EventStreams({}, 0.0, 2.0));
    const EventStreams s({{0.5, 1.5}, {}}, 0.0, 2.0);
    CHECK(s.total_events() == 2);
    CHECK(s.name(1) == "p1");
    const EventStreams r = s.restrict_to(1.0, 2.0);
    CHECK(r.count(0) == 1);
    CHECK(r.stream(0)[0] == 0.5);
    CHECK(r.duration() == 1.0);
}
