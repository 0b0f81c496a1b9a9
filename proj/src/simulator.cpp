#include "pimkit/simulator.hpp"

#include "pimkit/errors.hpp"
#include "pimkit/random.hpp"

#include <algorithm>
#include <deque>
#include <string>
#include <vector>

namespace pimkit {

namespace {

void validate_config(const SimConfig& config) {
    config.model.validate();
    if (!(config.horizon > 0.0) || !std::isfinite(config.horizon)) {
        throw std::invalid_argument("simulation horizon must be positive");
    }
}

[[noreturn]] void too_many_events(std::size_t cap) {
    throw SimulationError("simulation exceeded " + std::to_string(cap) +
                          " events; the model is likely supercritical");
}

}  // namespace

EventStreams simulate_thinning(const SimConfig& config) {
    validate_config(config);
    const Model& model = config.model;
    const Index p = model.dimension();
    Rng rng(config.seed, 0);

    std::vector<std::vector<double>> times(static_cast<std::size_t>(p));
    DecayState<double> state(p, model.kernel, 0.0);
    std::size_t produced = 0;

    // The intensity only decays between events, so its value just after the
    // last accepted point (or the last rejected candidate) bounds it until the
    // next accepted event.
    Eigen::VectorXd rates = model.base;
    double bound = rates.sum();
    double t = 0.0;
    while (bound > 0.0) {
        t += rng.exponential(bound);
        if (t > config.horizon) break;
        state.advance_to(t);
        rates = model.base + model.excitation * state.sums();
        const double total = rates.sum();
        const double u = rng.uniform();
        if (u * bound <= total) {
            double pick = rng.uniform() * total;
            Index chosen = p - 1;
            for (Index i = 0; i < p; ++i) {
                pick -= rates[i];
                if (pick < 0.0) {
                    chosen = i;
                    break;
                }
            }
            times[static_cast<std::size_t>(chosen)].push_back(t);
            if (++produced > config.max_events) too_many_events(config.max_events);
            state.record(chosen);
            rates += model.excitation.col(chosen);
            bound = rates.sum();
        } else {
            bound = total;
        }
    }
    return EventStreams(std::move(times), 0.0, config.horizon);
}

EventStreams simulate_branching(const SimConfig& config, BranchingStats* stats) {
    validate_config(config);
    const Model& model = config.model;
    if (spectral_radius(model) >= 1.0) {
        throw SimulationError("branching sampler requires a subcritical model (spectral radius of a/beta < 1)");
    }
    const Index p = model.dimension();
    const double beta = model.kernel.decay;

    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(p));
    for (Index i = 0; i < p; ++i) rngs.emplace_back(config.seed, static_cast<std::uint64_t>(i) + 1);

    struct Pending {
        double time;
        Index process;
    };
    std::vector<std::vector<double>> times(static_cast<std::size_t>(p));
    std::deque<Pending> queue;
    std::size_t produced = 0;
    BranchingStats local;
    auto emit = [&](double t, Index i) {
        times[static_cast<std::size_t>(i)].push_back(t);
        if (++produced > config.max_events) too_many_events(config.max_events);
        queue.push_back({t, i});
    };

    for (Index i = 0; i < p; ++i) {
        if (model.base[i] <= 0.0) continue;
        Rng& rng = rngs[static_cast<std::size_t>(i)];
        for (double t = rng.exponential(model.base[i]); t <= config.horizon;
             t += rng.exponential(model.base[i])) {
            emit(t, i);
            ++local.immigrants;
        }
    }
    while (!queue.empty()) {
        const Pending parent = queue.front();
        queue.pop_front();
        ++local.parents;
        for (Index i = 0; i < p; ++i) {
            const double mean = model.excitation(i, parent.process) / beta;
            if (mean <= 0.0) continue;
            Rng& rng = rngs[static_cast<std::size_t>(i)];
            const auto children = rng.poisson(mean);
            local.children += children;
            for (std::uint64_t c = 0; c < children; ++c) {
                const double t = parent.time + rng.exponential(beta);
                if (t <= config.horizon) emit(t, i);
            }
        }
    }
    for (auto& s : times) std::sort(s.begin(), s.end());
    if (stats) *stats = local;
    return EventStreams(std::move(times), 0.0, config.horizon);
}

double stationary_expected_count(const Model& model, double horizon) {
    model.validate();
    const Index p = model.dimension();
    const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(p, p) - model.excitation / model.kernel.decay;
    const Eigen::VectorXd rates = system.partialPivLu().solve(model.base);
    return horizon * rates.sum();
}

}  // namespace pimkit
