#pragma once

// Sliding-window influence analysis: fit one model per overlapping window,
// screen it by goodness of fit, estimate its PIM, and collect the noteworthy
// cross-process influences into a timeline.

#include "pimkit/estimator.hpp"
#include "pimkit/event_streams.hpp"
#include "pimkit/gof.hpp"
#include "pimkit/influence.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pimkit {

struct Window {
    Index index = 0;
    double start = 0.0;
    double end = 0.0;  // events are taken from [start, end)

    std::string label() const;
};

struct WindowPlan {
    double length = 48.0;  // hours
    double stride = 24.0;  // hours
    double span_start = 0.0;
    double span_end = 0.0;
    std::vector<Window> windows;
};

/// floor((T1 - T0 - length) / stride) + 1 windows starting at T0 + k * stride.
WindowPlan plan_windows(double span_start, double span_end, double length = 48.0, double stride = 24.0);

struct PipelineConfig {
    KernelSpec kernel;
    FitConfig fit;
    GofGate gate;
    ClassThresholds thresholds;
    int parallelism = 1;  // concurrent windows
};

struct WindowResult {
    Window window;
    std::vector<std::size_t> event_counts;
    std::string status;  // ok, gof_rejected, not_converged, empty, failed
    std::string error;
    std::optional<FitReport> fit;
    std::optional<GofReport> gof;
    std::optional<PimMatrix> pim;  // only when the fit converged
    bool gate_passed = false;
};

/// Fits one window on its own: events before the window are discarded and
/// times are re-based to the window start. Failures are recorded, not thrown.
WindowResult run_window(const EventStreams& streams, const Window& window, const PipelineConfig& config);

/// Runs every window of the plan; results come back in plan order.
std::vector<WindowResult> run_pipeline(const EventStreams& streams, const WindowPlan& plan,
                                       const PipelineConfig& config);

struct TimelineEntry {
    Index window = 0;
    double start = 0.0;
    double end = 0.0;
    Index source = 0;
    Index target = 0;
    std::string source_name;
    std::string target_name;
    double pim = 0.0;
    InfluenceClass influence = InfluenceClass::weak;
};

struct TimelineReport {
    double min_pim = 0.2;
    std::vector<TimelineEntry> entries;
};

/// Cross-process PIM entries above min_pim from gate-passing windows, ordered
/// by window start and then by decreasing PIM.
TimelineReport build_timeline(const std::vector<WindowResult>& results, double min_pim = 0.2,
                              const ClassThresholds& thresholds = {});

nlohmann::ordered_json window_result_to_json(const WindowResult& result);
/// Restores window, status, gate flag and PIM (enough to rebuild a timeline).
WindowResult window_result_from_json(const nlohmann::json& j);
nlohmann::ordered_json timeline_to_json(const TimelineReport& timeline);
std::string timeline_markdown(const TimelineReport& timeline);

/// Writes the results directory:
///   index.json                   plan, settings and one summary line per window
///   windows/wNNN.json            full window result
///   windows/wNNN_pim.csv         PIM matrix (converged windows)
///   windows/wNNN_heatmap.svg     PIM heat map (converged windows)
///   windows/wNNN_pp.csv          pooled P-P points (fitted windows)
///   timeline.json, timeline.md   filtered influence timeline
void write_results(const std::filesystem::path& dir, const WindowPlan& plan, const PipelineConfig& config,
                   const std::vector<WindowResult>& results, const TimelineReport& timeline);

/// Reads windows/wNNN.json files listed in index.json.
std::vector<WindowResult> read_results(const std::filesystem::path& dir);

}  // namespace pimkit
