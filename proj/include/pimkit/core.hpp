#pragma once

// Conditional intensity, compensator and log-likelihood of a multivariate
// Hawkes process with a shared exponential kernel,
//
//   lambda_i(t) = b_i + sum_j a_ij sum_{t_l^j < t} exp(-beta (t - t_l^j)).
//
// Everything here is templated on the scalar type so the same code serves
// double-precision fitting and extended-precision cross-checks.

#include "pimkit/errors.hpp"
#include "pimkit/event_streams.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pimkit {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// phi(tau) = exp(-decay * tau) for tau >= 0, zero before.
struct KernelSpec {
    double decay = 1.0;  // per hour

    template <typename Scalar = double>
    Scalar value(Scalar lag) const {
        using std::exp;
        return lag < Scalar(0) ? Scalar(0) : exp(-Scalar(decay) * lag);
    }

    /// Integral of phi over [0, lag].
    template <typename Scalar = double>
    Scalar integral(Scalar lag) const {
        using std::expm1;
        return lag <= Scalar(0) ? Scalar(0) : -expm1(-Scalar(decay) * lag) / Scalar(decay);
    }

    void validate() const {
        if (!(decay > 0.0) || !std::isfinite(decay)) {
            throw std::invalid_argument("kernel decay must be finite and strictly positive");
        }
    }

    bool operator==(const KernelSpec&) const = default;
};

/// Base rates b (events/hour) and excitation matrix a, where a(i, j) is the
/// jump in process i's intensity caused by one event of process j.
template <typename Scalar>
struct HawkesModel {
    Vector<Scalar> base;
    Matrix<Scalar> excitation;
    KernelSpec kernel;

    Index dimension() const noexcept { return base.size(); }

    void validate() const {
        kernel.validate();
        const Index p = base.size();
        if (p < 1) {
            throw std::invalid_argument("model needs at least one process");
        }
        if (excitation.rows() != p || excitation.cols() != p) {
            throw std::invalid_argument("excitation matrix must be P x P with P = " +
                                        std::to_string(p));
        }
        for (Index i = 0; i < p; ++i) {
            if (!(base[i] >= Scalar(0)) || !std::isfinite(static_cast<double>(base[i]))) {
                throw std::invalid_argument("base rates must be finite and non-negative");
            }
            for (Index j = 0; j < p; ++j) {
                const Scalar v = excitation(i, j);
                if (!(v >= Scalar(0)) || !std::isfinite(static_cast<double>(v))) {
                    throw std::invalid_argument("excitation entries must be finite and non-negative");
                }
            }
        }
    }

    template <typename Other>
    HawkesModel<Other> cast() const {
        return {base.template cast<Other>(), excitation.template cast<Other>(), kernel};
    }
};

using Model = HawkesModel<double>;

/// Spectral radius of the branching matrix a / beta; < 1 means subcritical.
template <typename Scalar>
double spectral_radius(const HawkesModel<Scalar>& model) {
    const Eigen::MatrixXd branching = model.excitation.template cast<double>() / model.kernel.decay;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(branching, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Running kernel sums S_j(t) = sum_{t_l^j recorded} exp(-beta (t - t_l^j)).
///
/// The kernel is shared by all target processes, so one length-P vector holds
/// every row of the P x P sum matrix. Advancing time is an exact rescale.
template <typename Scalar>
class DecayState {
public:
    DecayState(Index dimension, KernelSpec kernel, double origin)
        : sums_(Vector<Scalar>::Zero(dimension)), kernel_(kernel), time_(origin) {}

    void advance_to(double t) {
        if (t < time_) {
            throw std::logic_error("DecayState cannot move backwards in time");
        }
        if (t > time_) {
            sums_ *= kernel_.value<Scalar>(Scalar(t - time_));
            time_ = t;
        }
    }

    void record(Index process) { sums_[process] += Scalar(1); }

    const Vector<Scalar>& sums() const noexcept { return sums_; }
    double time() const noexcept { return time_; }

private:
    Vector<Scalar> sums_;
    KernelSpec kernel_;
    double time_;
};

namespace detail {

inline void check_process(Index i, Index p) {
    if (i < 0 || i >= p) {
        throw std::out_of_range("process index " + std::to_string(i) + " out of range");
    }
}

template <typename Scalar>
void check_compatible(const HawkesModel<Scalar>& model, const EventStreams& streams) {
    if (model.dimension() != streams.dimension()) {
        throw std::invalid_argument("model and streams disagree on the number of processes");
    }
}

}  // namespace detail

/// lambda_i(t) using only events strictly before t.
template <typename Scalar>
Scalar intensity(const HawkesModel<Scalar>& model, const EventStreams& streams, Index i, double t) {
    detail::check_compatible(model, streams);
    detail::check_process(i, streams.dimension());
    if (t < streams.t_start() || t > streams.t_end()) {
        throw std::invalid_argument("intensity query outside the observation window");
    }
    Scalar rate = model.base[i];
    for (Index j = 0; j < streams.dimension(); ++j) {
        Scalar kernel_sum(0);
        for (double tl : streams.stream(j)) {
            if (!(tl < t)) break;
            kernel_sum += model.kernel.template value<Scalar>(Scalar(t - tl));
        }
        rate += model.excitation(i, j) * kernel_sum;
    }
    return rate;
}

/// Integral of lambda_i over [t0, t1].
template <typename Scalar>
Scalar compensator(const HawkesModel<Scalar>& model, const EventStreams& streams, Index i, double t0,
                   double t1) {
    detail::check_compatible(model, streams);
    detail::check_process(i, streams.dimension());
    if (t1 < t0) {
        throw std::invalid_argument("compensator interval is reversed");
    }
    if (t0 < streams.t_start() || t1 > streams.t_end()) {
        throw std::invalid_argument("compensator interval outside the observation window");
    }
    Scalar total = model.base[i] * Scalar(t1 - t0);
    for (Index j = 0; j < streams.dimension(); ++j) {
        if (model.excitation(i, j) == Scalar(0)) continue;
        Scalar mass(0);
        for (double tl : streams.stream(j)) {
            if (!(tl < t1)) break;
            const Scalar upto_t1 = model.kernel.template integral<Scalar>(Scalar(t1 - tl));
            const Scalar upto_t0 = model.kernel.template integral<Scalar>(Scalar(t0 - tl));
            mass += upto_t1 - upto_t0;
        }
        total += model.excitation(i, j) * mass;
    }
    return total;
}

/// Sufficient statistics of one target row of the likelihood.
///
/// Row i's log-likelihood is
///   sum_k log(b_i + kernel_sums.row(k) . a_i) - b_i * duration - integrated . a_i
/// so once this is built, evaluating any (b_i, a_i) costs O(n_i * P).
template <typename Scalar>
struct RowDesign {
    Index target = 0;
    Matrix<Scalar> kernel_sums;  // n_i x P, kernel sums at each event's left limit
    Vector<Scalar> integrated;   // P, kernel mass of each source over the window
    Scalar duration{0};
};

/// Builds the designs of every row in `targets` with one merged O(N * P) pass.
template <typename Scalar>
std::vector<RowDesign<Scalar>> build_row_designs(const EventStreams& streams, const KernelSpec& kernel,
                                                 const std::vector<Index>& targets) {
    kernel.validate();
    const Index p = streams.dimension();
    std::vector<Index> slot(static_cast<std::size_t>(p), -1);
    std::vector<RowDesign<Scalar>> designs;
    for (Index target : targets) {
        detail::check_process(target, p);
        slot[static_cast<std::size_t>(target)] = static_cast<Index>(designs.size());
        RowDesign<Scalar> d;
        d.target = target;
        d.kernel_sums = Matrix<Scalar>::Zero(static_cast<Index>(streams.count(target)), p);
        d.integrated = Vector<Scalar>::Zero(p);
        d.duration = Scalar(streams.duration());
        designs.push_back(std::move(d));
    }

    Vector<Scalar> integrated = Vector<Scalar>::Zero(p);
    for (Index j = 0; j < p; ++j) {
        for (double tl : streams.stream(j)) {
            integrated[j] += kernel.integral<Scalar>(Scalar(streams.t_end() - tl));
        }
    }
    for (auto& d : designs) {
        d.integrated = integrated;
    }

    const auto events = merged_events(streams);
    DecayState<Scalar> state(p, kernel, streams.t_start());
    std::size_t begin = 0;
    while (begin < events.size()) {
        // Simultaneous events never excite each other: read every left limit
        // of the group before recording any of them.
        std::size_t end = begin;
        while (end < events.size() && events[end].time == events[begin].time) ++end;
        state.advance_to(events[begin].time);
        for (std::size_t e = begin; e < end; ++e) {
            const Index s = slot[static_cast<std::size_t>(events[e].process)];
            if (s >= 0) {
                designs[static_cast<std::size_t>(s)].kernel_sums.row(events[e].rank) = state.sums().transpose();
            }
        }
        for (std::size_t e = begin; e < end; ++e) state.record(events[e].process);
        begin = end;
    }
    return designs;
}

template <typename Scalar>
std::vector<RowDesign<Scalar>> build_row_designs(const EventStreams& streams, const KernelSpec& kernel) {
    std::vector<Index> all(static_cast<std::size_t>(streams.dimension()));
    for (Index i = 0; i < streams.dimension(); ++i) all[static_cast<std::size_t>(i)] = i;
    return build_row_designs<Scalar>(streams, kernel, all);
}

/// Row log-likelihood; -infinity when some event has zero intensity.
template <typename Scalar, typename RowVec>
Scalar row_log_likelihood(const RowDesign<Scalar>& design, Scalar base, const RowVec& excitation_row) {
    using std::log;
    Scalar sum(0);
    const Index n = design.kernel_sums.rows();
    for (Index k = 0; k < n; ++k) {
        const Scalar rate = base + design.kernel_sums.row(k).dot(excitation_row);
        if (!(rate > Scalar(0))) {
            return -std::numeric_limits<Scalar>::infinity();
        }
        sum += log(rate);
    }
    return sum - base * design.duration - design.integrated.dot(excitation_row);
}

template <typename Scalar>
struct RowGradient {
    Scalar base{0};
    Vector<Scalar> excitation;
};

template <typename Scalar, typename RowVec>
RowGradient<Scalar> row_gradient(const RowDesign<Scalar>& design, Scalar base, const RowVec& excitation_row) {
    RowGradient<Scalar> g;
    g.base = -design.duration;
    g.excitation = -design.integrated;
    const Index n = design.kernel_sums.rows();
    for (Index k = 0; k < n; ++k) {
        const Scalar rate = base + design.kernel_sums.row(k).dot(excitation_row);
        if (!(rate > Scalar(0))) {
            throw ZeroIntensityError("gradient undefined: event " + std::to_string(k) + " of process " +
                                     std::to_string(design.target) + " has zero intensity");
        }
        const Scalar inv = Scalar(1) / rate;
        g.base += inv;
        g.excitation += inv * design.kernel_sums.row(k).transpose();
    }
    return g;
}

/// Total log-likelihood over [t_start, t_end]; -infinity if any event has
/// zero intensity.
template <typename Scalar>
Scalar log_likelihood(const HawkesModel<Scalar>& model, const EventStreams& streams) {
    detail::check_compatible(model, streams);
    const auto designs = build_row_designs<Scalar>(streams, model.kernel);
    Scalar total(0);
    for (const auto& d : designs) {
        total += row_log_likelihood(d, model.base[d.target], model.excitation.row(d.target).transpose());
    }
    return total;
}

template <typename Scalar>
struct LikelihoodGradient {
    Vector<Scalar> base;
    Matrix<Scalar> excitation;
};

/// Exact partial derivatives of log_likelihood with respect to b and a.
template <typename Scalar>
LikelihoodGradient<Scalar> log_likelihood_gradient(const HawkesModel<Scalar>& model,
                                                   const EventStreams& streams) {
    detail::check_compatible(model, streams);
    const Index p = model.dimension();
    LikelihoodGradient<Scalar> grad{Vector<Scalar>::Zero(p), Matrix<Scalar>::Zero(p, p)};
    for (const auto& d : build_row_designs<Scalar>(streams, model.kernel)) {
        const auto g = row_gradient(d, model.base[d.target], model.excitation.row(d.target).transpose());
        grad.base[d.target] = g.base;
        grad.excitation.row(d.target) = g.excitation.transpose();
    }
    return grad;
}

}  // namespace pimkit
