#pragma once

// Goodness of fit by time rescaling: under a correct model the compensator
// increments between consecutive events of a process are i.i.d. Exp(1).

#include "pimkit/core.hpp"
#include "pimkit/event_streams.hpp"

#include "json.hpp"

#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace pimkit {

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

struct PpPoint {
    double empirical;  // (k - 0.5) / n
    double model;      // 1 - exp(-tau_(k))
};

struct ProcessGof {
    Index process = 0;
    std::vector<double> rescaled;  // empty when the process has < 2 events
    std::optional<KsResult> ks;    // present when rescaled.size() >= 5
};

struct GofReport {
    std::vector<ProcessGof> processes;
    std::vector<double> pooled;          // all processes' rescaled values, process-major
    std::optional<KsResult> pooled_ks;
    std::vector<PpPoint> pp;             // P-P points of the pooled sample
    double pp_max_deviation = 0.0;       // max |empirical - model| over pp
};

/// Compensator increments of process i, the first one measured from the
/// window start: n values for n events. Requires at least two events.
std::vector<double> rescale(const Model& model, const EventStreams& streams, Index i);

/// P-P points from order statistics; sorted by the empirical coordinate.
std::vector<PpPoint> pp_points(std::span<const double> rescaled);

/// One-sample Kolmogorov-Smirnov test against Exp(1), asymptotic p-value
/// with Stephens' small-sample correction. Requires n >= 5.
KsResult ks_statistic(std::span<const double> rescaled);

/// Complementary CDF of the Kolmogorov distribution, P(K > x).
double kolmogorov_survival(double x);

GofReport evaluate_gof(const Model& model, const EventStreams& streams);

/// The automated "reasonably good fit" rule: pooled KS p-value >= alpha.
struct GofGate {
    double alpha = 0.01;
    bool passes(const GofReport& report) const;
};

nlohmann::ordered_json gof_to_json(const GofReport& report, bool include_samples = false);
void write_pp_csv(std::ostream& out, std::span<const PpPoint> points);

}  // namespace pimkit
