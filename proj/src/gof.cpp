#include "pimkit/gof.hpp"

#include "pimkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>

namespace pimkit {

std::vector<double> rescale(const Model& model, const EventStreams& streams, Index i) {
    model.validate();
    detail::check_compatible(model, streams);
    detail::check_process(i, streams.dimension());
    if (streams.count(i) < 2) {
        throw InsufficientDataError("time rescaling needs at least two events of process " + std::to_string(i));
    }
    const Index p = streams.dimension();
    const KernelSpec& kernel = model.kernel;
    const Eigen::VectorXd weights = model.excitation.row(i).transpose();
    const double base = model.base[i];

    // mass[j]: kernel mass of source j accumulated since the previous event of i.
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(p);
    DecayState<double> state(p, kernel, streams.t_start());
    double last = streams.t_start();

    std::vector<double> out;
    out.reserve(streams.count(i));
    for (const auto& ev : merged_events(streams)) {
        const double dt = ev.time - state.time();
        if (dt > 0.0) {
            mass += state.sums() * kernel.integral(dt);
            state.advance_to(ev.time);
        }
        if (ev.process == i) {
            out.push_back(base * (ev.time - last) + weights.dot(mass));
            mass.setZero();
            last = ev.time;
        }
        state.record(ev.process);
    }
    return out;
}

std::vector<PpPoint> pp_points(std::span<const double> rescaled) {
    if (rescaled.empty()) {
        throw InsufficientDataError("P-P points need a non-empty sample");
    }
    std::vector<double> sorted(rescaled.begin(), rescaled.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::vector<PpPoint> points;
    points.reserve(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        points.push_back({(static_cast<double>(k) + 0.5) / n, -std::expm1(-sorted[k])});
    }
    return points;
}

double kolmogorov_survival(double x) {
    if (x <= 0.0) return 1.0;
    constexpr double pi = std::numbers::pi;
    if (x < 1.18) {
        // P(K <= x) = sqrt(2 pi) / x * sum_k exp(-(2k - 1)^2 pi^2 / (8 x^2))
        const double w = std::exp(-pi * pi / (8.0 * x * x));
        double cdf = 0.0;
        for (int k = 1; k <= 8; ++k) {
            cdf += std::pow(w, (2 * k - 1) * (2 * k - 1));
        }
        return 1.0 - std::sqrt(2.0 * pi) / x * cdf;
    }
    // P(K > x) = 2 sum_k (-1)^(k-1) exp(-2 k^2 x^2)
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_statistic(std::span<const double> rescaled) {
    if (rescaled.size() < 5) {
        throw InsufficientDataError("KS statistic needs at least 5 samples");
    }
    std::vector<double> sorted(rescaled.begin(), rescaled.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        const double cdf = -std::expm1(-std::max(sorted[k], 0.0));
        d = std::max({d, (static_cast<double>(k) + 1.0) / n - cdf, cdf - static_cast<double>(k) / n});
    }
    const double root_n = std::sqrt(n);
    return {d, kolmogorov_survival((root_n + 0.12 + 0.11 / root_n) * d), sorted.size()};
}

GofReport evaluate_gof(const Model& model, const EventStreams& streams) {
    GofReport report;
    for (Index i = 0; i < streams.dimension(); ++i) {
        ProcessGof g;
        g.process = i;
        if (streams.count(i) >= 2) {
            g.rescaled = rescale(model, streams, i);
            if (g.rescaled.size() >= 5) g.ks = ks_statistic(g.rescaled);
            report.pooled.insert(report.pooled.end(), g.rescaled.begin(), g.rescaled.end());
        }
        report.processes.push_back(std::move(g));
    }
    if (report.pooled.size() >= 5) report.pooled_ks = ks_statistic(report.pooled);
    if (!report.pooled.empty()) {
        report.pp = pp_points(report.pooled);
        for (const auto& pt : report.pp) {
            report.pp_max_deviation = std::max(report.pp_max_deviation, std::abs(pt.empirical - pt.model));
        }
    }
    return report;
}

bool GofGate::passes(const GofReport& report) const {
    return report.pooled_ks && report.pooled_ks->p_value >= alpha;
}

namespace {

nlohmann::ordered_json ks_json(const std::optional<KsResult>& ks) {
    if (!ks) return nullptr;
    nlohmann::ordered_json j;
    j["n"] = ks->n;
    j["statistic"] = ks->statistic;
    j["p_value"] = ks->p_value;
    return j;
}

}  // namespace

nlohmann::ordered_json gof_to_json(const GofReport& report, bool include_samples) {
    nlohmann::ordered_json j;
    auto processes = nlohmann::ordered_json::array();
    for (const auto& g : report.processes) {
        nlohmann::ordered_json pj;
        pj["process"] = g.process;
        pj["events"] = g.rescaled.size();
        pj["ks"] = ks_json(g.ks);
        if (include_samples) pj["rescaled"] = g.rescaled;
        processes.push_back(pj);
    }
    j["processes"] = processes;
    j["pooled_ks"] = ks_json(report.pooled_ks);
    j["pp_max_deviation"] = report.pp_max_deviation;
    return j;
}

void write_pp_csv(std::ostream& out, std::span<const PpPoint> points) {
    out << "u_empirical,u_model\n";
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::setprecision(17);
    for (const auto& pt : points) out << pt.empirical << ',' << pt.model << '\n';
    out.flags(flags);
    out.precision(precision);
}

}  // namespace pimkit
