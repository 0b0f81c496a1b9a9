#pragma once

#include "pimkit/core.hpp"
#include "pimkit/event_streams.hpp"

#include "json.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace pimkit {

/// Split of one event's intensity into its candidate causes.
///
/// probabilities[0] is the background share b_i / lambda_i; probabilities[j + 1]
/// is the share a_ij S_j / lambda_i of all earlier events of process j.
struct AttributionRecord {
    Index target = 0;
    Index event = 0;
    double time = 0.0;
    Eigen::VectorXd probabilities;
    Index cause = 0;  // argmax; 0 = background, j + 1 = process j
};

/// Index of the largest entry; ties go to the lowest index, which puts the
/// background first and then processes in index order.
Index most_likely_cause(const Eigen::Ref<const Eigen::VectorXd>& probabilities);

/// Attribution of event k of process i, computed directly from the history.
/// Throws ZeroIntensityError if the event has zero intensity.
AttributionRecord attribute_event(const Model& model, const EventStreams& streams, Index i, Index k);

/// Attributions of every event of every process, via the kernel-sum
/// recursion. Outer index is the target process, inner is the event rank.
std::vector<std::vector<AttributionRecord>> attribute_all(const Model& model, const EventStreams& streams);

/// Process influence measures: values(i, c) is the fraction of process i's
/// events whose most likely cause is c (0 = background, j + 1 = process j).
/// Rows of processes without events are undefined and hold NaN.
struct PimMatrix {
    Eigen::MatrixXd values;  // P x (P + 1)
    std::vector<std::size_t> counts;
    std::vector<std::string> names;
    std::string window;

    Index dimension() const { return values.rows(); }
    bool row_defined(Index i) const { return counts[static_cast<std::size_t>(i)] > 0; }
    /// pi_ij with j a process index (background excluded).
    double influence(Index target, Index source) const { return values(target, source + 1); }
};

PimMatrix pim_estimate(const Model& model, const EventStreams& streams, std::string window = {});

/// P x P view without the background source: each row renormalized over the
/// process columns. Rows with no process-caused events are NaN.
Eigen::MatrixXd process_only_view(const PimMatrix& pim);

enum class InfluenceClass { weak, significant, strong, decisive };

/// Class boundaries. Defaults are the published thresholds.
struct ClassThresholds {
    double significant = 0.2;  // weak on [0, significant]
    double strong = 0.6;       // significant on (significant, strong]
    double decisive = 0.99;    // strong on (strong, decisive], decisive above
};

/// Total on [0, 1]; throws std::domain_error outside it.
InfluenceClass classify(double pim_value, const ClassThresholds& thresholds = {});
std::string to_string(InfluenceClass c);

struct GrangerEdge {
    Index source = 0;
    Index target = 0;
    double weight = 0.0;  // a(target, source)
    bool self = false;
};

/// Every (source -> target) with a(target, source) > epsilon, ordered by
/// source then target. Read-off only; no hypothesis test.
std::vector<GrangerEdge> granger_edges(const Model& model, double epsilon);

nlohmann::ordered_json pim_to_json(const PimMatrix& pim);
/// Header is `target,background,<process names>`; undefined rows read `null`.
void write_pim_csv(std::ostream& out, const PimMatrix& pim);
/// Heat map with rows = targets and columns = sources. The color scale has a
/// separate band per class so boundaries are visible in the figure.
void write_pim_svg(std::ostream& out, const PimMatrix& pim, const ClassThresholds& thresholds = {});

}  // namespace pimkit
