#include "pimkit/estimator.hpp"

#include "pimkit/errors.hpp"
#include "pimkit/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <future>
#include <limits>

namespace pimkit {

void FitConfig::validate() const {
    if (!(ridge >= 0.0)) throw std::invalid_argument("ridge weight must be non-negative");
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (!(floor >= 0.0)) throw std::invalid_argument("parameter floor must be non-negative");
    if (history < 1) throw std::invalid_argument("L-BFGS history must be >= 1");
}

namespace {

// The optimizer minimizes f(x) = -(L(x) - ridge * |a|^2) / T over x = (b, a),
// x >= floor. Dividing by the window length T keeps gradients O(1) so that the
// tolerance means the same thing for short and long windows.
struct Evaluation {
    double value = std::numeric_limits<double>::infinity();
    double log_likelihood = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd gradient;

    bool feasible() const { return std::isfinite(value); }
};

class RowProblem {
public:
    RowProblem(const RowDesign<double>& design, double ridge) : design_(design), ridge_(ridge) {}

    Index size() const { return design_.integrated.size() + 1; }

    Evaluation evaluate(const Eigen::VectorXd& x) const {
        Evaluation e;
        const double b = x[0];
        const auto a = x.tail(size() - 1);
        e.log_likelihood = row_log_likelihood(design_, b, a);
        if (!std::isfinite(e.log_likelihood)) return e;
        const double t = design_.duration;
        e.value = -(e.log_likelihood - ridge_ * a.squaredNorm()) / t;
        const auto g = row_gradient(design_, b, a);
        e.gradient.resize(size());
        e.gradient[0] = -g.base / t;
        e.gradient.tail(size() - 1) = -(g.excitation - 2.0 * ridge_ * a) / t;
        return e;
    }

    double objective(const Evaluation& e) const { return -e.value * design_.duration; }

private:
    const RowDesign<double>& design_;
    double ridge_;
};

Eigen::VectorXd project(Eigen::VectorXd x, double floor) { return x.cwiseMax(floor); }

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double floor) {
    return (x - project(x - g, floor)).lpNorm<Eigen::Infinity>();
}

struct CurvaturePair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
};

// Two-loop recursion restricted to the free variables.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const Eigen::ArrayXd& free,
                                const std::deque<CurvaturePair>& memory) {
    Eigen::VectorXd q = g.array() * free;
    std::vector<double> alpha(memory.size(), 0.0);
    std::vector<double> rho(memory.size(), 0.0);
    double gamma = 1.0;
    bool have_scale = false;
    for (std::size_t k = memory.size(); k-- > 0;) {
        const Eigen::VectorXd s = memory[k].s.array() * free;
        const Eigen::VectorXd y = memory[k].y.array() * free;
        const double sy = s.dot(y);
        if (!(sy > 1e-16)) continue;
        rho[k] = 1.0 / sy;
        alpha[k] = rho[k] * s.dot(q);
        q -= alpha[k] * y;
        if (!have_scale) {
            gamma = sy / y.squaredNorm();
            have_scale = true;
        }
    }
    Eigen::VectorXd r = gamma * q;
    for (std::size_t k = 0; k < memory.size(); ++k) {
        if (rho[k] == 0.0) continue;
        const Eigen::VectorXd s = memory[k].s.array() * free;
        const Eigen::VectorXd y = memory[k].y.array() * free;
        const double beta = rho[k] * y.dot(r);
        r += (alpha[k] - beta) * s;
    }
    return -(r.array() * free).matrix();
}

Eigen::VectorXd initial_point(const RowDesign<double>& design, const FitConfig& config) {
    const Index p = design.integrated.size();
    Eigen::VectorXd x(p + 1);
    x[0] = static_cast<double>(design.kernel_sums.rows()) / design.duration;
    if (config.init == InitScheme::random) {
        Rng rng(config.seed, static_cast<std::uint64_t>(design.target) + 1);
        for (Index j = 0; j < p; ++j) x[j + 1] = 0.01 + 0.49 * rng.uniform();
    } else {
        x.tail(p).setConstant(0.1);
    }
    // A source without events has no effect on the row; pin it to the floor.
    for (Index j = 0; j < p; ++j) {
        if (design.integrated[j] == 0.0) x[j + 1] = config.floor;
    }
    return project(x, config.floor);
}

void check_window(const EventStreams& streams) {
    if (!(streams.duration() > 0.0)) {
        throw InsufficientDataError("cannot fit on a zero-length window");
    }
    if (streams.total_events() == 0) {
        throw InsufficientDataError("cannot fit on a window without events");
    }
}

}  // namespace

RowFit optimize_row(const RowDesign<double>& design, const FitConfig& config) {
    config.validate();
    constexpr double armijo = 1e-4;
    constexpr int max_backtracks = 60;

    const RowProblem problem(design, config.ridge);
    const Index n = problem.size();
    const double floor = config.floor;

    RowFit fit;
    fit.target = design.target;

    Eigen::VectorXd x = initial_point(design, config);
    Evaluation current = problem.evaluate(x);
    if (!current.feasible()) {
        // Only reachable with floor == 0 and events preceding all excitation.
        x = project(Eigen::VectorXd::Constant(n, std::max(floor, 1e-8)), floor);
        x[0] = std::max(x[0], static_cast<double>(design.kernel_sums.rows()) / design.duration);
        current = problem.evaluate(x);
        if (!current.feasible()) {
            throw ZeroIntensityError("no feasible starting point for row " + std::to_string(design.target));
        }
    }
    fit.objective_trace.push_back(problem.objective(current));

    std::deque<CurvaturePair> memory;
    for (;;) {
        fit.gradient_norm = projected_gradient_norm(x, current.gradient, floor);
        if (fit.gradient_norm <= config.tolerance) {
            fit.converged = true;
            fit.message = "projected gradient below tolerance";
            break;
        }
        if (fit.iterations >= config.max_iterations) {
            fit.message = "iteration limit reached";
            break;
        }

        Eigen::ArrayXd free = Eigen::ArrayXd::Ones(n);
        for (Index j = 0; j < n; ++j) {
            if (x[j] <= floor && current.gradient[j] > 0.0) free[j] = 0.0;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            Eigen::VectorXd direction = lbfgs_direction(current.gradient, free, memory);
            double slope = current.gradient.dot(direction);
            if (memory.empty() || !(slope < 0.0)) {
                memory.clear();
                direction = -(current.gradient.array() * free).matrix();
                slope = current.gradient.dot(direction);
            }
            double step = memory.empty() ? 1.0 / std::max(1.0, direction.lpNorm<Eigen::Infinity>()) : 1.0;
            for (int k = 0; k < max_backtracks; ++k, step *= 0.5) {
                const Eigen::VectorXd trial = project(x + step * direction, floor);
                const Eigen::VectorXd delta = trial - x;
                if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
                Evaluation next = problem.evaluate(trial);
                if (!next.feasible()) continue;
                if (next.value <= current.value + armijo * current.gradient.dot(delta) &&
                    next.value <= current.value) {
                    const Eigen::VectorXd dg = next.gradient - current.gradient;
                    if (delta.dot(dg) > 1e-16) {
                        memory.push_back({delta, dg});
                        if (static_cast<int>(memory.size()) > config.history) memory.pop_front();
                    }
                    x = trial;
                    current = std::move(next);
                    accepted = true;
                    break;
                }
            }
            if (!accepted && memory.empty()) break;
            if (!accepted) memory.clear();
        }
        if (!accepted) {
            fit.message = "line search failed to improve the objective";
            break;
        }
        ++fit.iterations;
        fit.objective_trace.push_back(problem.objective(current));
    }

    fit.base = x[0];
    fit.excitation = x.tail(n - 1);
    fit.log_likelihood = current.log_likelihood;
    fit.objective = problem.objective(current);
    return fit;
}

RowFit fit_row(const EventStreams& streams, Index i, const KernelSpec& kernel, const FitConfig& config) {
    config.validate();
    check_window(streams);
    const auto designs = build_row_designs<double>(streams, kernel, {i});
    return optimize_row(designs.front(), config);
}

FitReport fit_mle(const EventStreams& streams, const KernelSpec& kernel, const FitConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    check_window(streams);
    const Index p = streams.dimension();
    const auto designs = build_row_designs<double>(streams, kernel);

    FitReport report;
    report.rows.resize(static_cast<std::size_t>(p));
    if (config.parallel_rows && p > 1) {
        std::vector<std::future<RowFit>> pending;
        pending.reserve(designs.size());
        for (const auto& d : designs) {
            pending.push_back(std::async(std::launch::async, [&d, &config] { return optimize_row(d, config); }));
        }
        for (std::size_t r = 0; r < pending.size(); ++r) report.rows[r] = pending[r].get();
    } else {
        for (std::size_t r = 0; r < designs.size(); ++r) report.rows[r] = optimize_row(designs[r], config);
    }

    report.model.base.resize(p);
    report.model.excitation.resize(p, p);
    report.model.kernel = kernel;
    report.gradient_norms.resize(p);
    report.converged = true;
    for (const auto& row : report.rows) {
        report.model.base[row.target] = row.base;
        report.model.excitation.row(row.target) = row.excitation.transpose();
        report.gradient_norms[row.target] = row.gradient_norm;
        report.log_likelihood += row.log_likelihood;
        report.iterations = std::max(report.iterations, row.iterations);
        report.converged = report.converged && row.converged;
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

nlohmann::ordered_json model_to_json(const Model& model, const std::optional<FitMeta>& meta) {
    model.validate();
    const Index p = model.dimension();
    nlohmann::ordered_json j;
    j["P"] = p;
    j["beta"] = model.kernel.decay;
    j["b"] = std::vector<double>(model.base.data(), model.base.data() + p);
    auto rows = nlohmann::ordered_json::array();
    for (Index i = 0; i < p; ++i) {
        std::vector<double> row(static_cast<std::size_t>(p));
        for (Index c = 0; c < p; ++c) row[static_cast<std::size_t>(c)] = model.excitation(i, c);
        rows.push_back(row);
    }
    j["a"] = rows;
    if (meta) {
        nlohmann::ordered_json m;
        m["window"] = {meta->window_start, meta->window_end};
        m["loglik"] = meta->log_likelihood;
        m["converged"] = meta->converged;
        j["meta"] = m;
    }
    return j;
}

Model model_from_json(const nlohmann::json& j) {
    Model model;
    const auto b = j.at("b").get<std::vector<double>>();
    const auto a = j.at("a").get<std::vector<std::vector<double>>>();
    const Index p = static_cast<Index>(b.size());
    if (j.contains("P") && j.at("P").get<Index>() != p) {
        throw std::invalid_argument("model JSON: P does not match the length of b");
    }
    model.kernel.decay = j.value("beta", 1.0);
    model.base = Eigen::Map<const Eigen::VectorXd>(b.data(), p);
    if (static_cast<Index>(a.size()) != p) {
        throw std::invalid_argument("model JSON: a must have P rows");
    }
    model.excitation.resize(p, p);
    for (Index i = 0; i < p; ++i) {
        const auto& row = a[static_cast<std::size_t>(i)];
        if (static_cast<Index>(row.size()) != p) {
            throw std::invalid_argument("model JSON: a must have P columns");
        }
        for (Index c = 0; c < p; ++c) model.excitation(i, c) = row[static_cast<std::size_t>(c)];
    }
    model.validate();
    return model;
}

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "poisson") return InitScheme::poisson;
    if (name == "random") return InitScheme::random;
    throw std::invalid_argument("unknown initialization scheme '" + name + "' (expected poisson or random)");
}

std::string to_string(InitScheme scheme) {
    return scheme == InitScheme::random ? "random" : "poisson";
}

}  // namespace pimkit
