#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pimkit {

using Index = Eigen::Index;

/// Per-process event timestamps (hours) observed on a window [t_start, t_end].
///
/// Each stream is strictly increasing and lies inside the window. Streams may
/// be empty. Process names are carried along for reporting; they default to
/// "p0", "p1", ... when not supplied.
class EventStreams {
public:
    EventStreams(std::vector<std::vector<double>> times, double t_start, double t_end,
                 std::vector<std::string> names = {});

    Index dimension() const noexcept { return static_cast<Index>(times_.size()); }
    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    double duration() const noexcept { return t_end_ - t_start_; }

    std::span<const double> stream(Index i) const;
    std::size_t count(Index i) const { return stream(i).size(); }
    std::size_t total_events() const noexcept;

    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::string& name(Index i) const;
    const std::vector<std::vector<double>>& raw() const noexcept { return times_; }

    /// Events with start <= t < end, re-based so that `start` maps to 0.
    EventStreams restrict_to(double start, double end) const;

    bool operator==(const EventStreams&) const = default;

private:
    std::vector<std::vector<double>> times_;
    double t_start_;
    double t_end_;
    std::vector<std::string> names_;
};

/// One event in the merged (all-process) order.
struct TimedEvent {
    double time;
    Index process;
    Index rank;  // position within its own stream
};

/// All events sorted by time, ties broken by process index.
std::vector<TimedEvent> merged_events(const EventStreams& streams);

}  // namespace pimkit
