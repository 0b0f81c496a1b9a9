#include "pimkit/event_streams.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pimkit {

EventStreams::EventStreams(std::vector<std::vector<double>> times, double t_start, double t_end,
                           std::vector<std::string> names)
    : times_(std::move(times)), t_start_(t_start), t_end_(t_end), names_(std::move(names)) {
    if (times_.empty()) {
        throw std::invalid_argument("EventStreams requires at least one process");
    }
    if (!std::isfinite(t_start_) || !std::isfinite(t_end_) || t_end_ < t_start_) {
        throw std::invalid_argument("EventStreams window must satisfy t_start <= t_end");
    }
    if (names_.empty()) {
        // Zero-padded so lexicographic and index order agree.
        const std::size_t width = std::to_string(times_.size() - 1).size();
        for (std::size_t i = 0; i < times_.size(); ++i) {
            std::string digits = std::to_string(i);
            names_.push_back("p" + std::string(width - digits.size(), '0') + digits);
        }
    } else if (names_.size() != times_.size()) {
        throw std::invalid_argument("EventStreams: one name per process required");
    }
    for (std::size_t i = 0; i < times_.size(); ++i) {
        const auto& s = times_[i];
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (!std::isfinite(s[k]) || s[k] < t_start_ || s[k] > t_end_) {
                throw std::invalid_argument("event of process " + std::to_string(i) +
                                            " lies outside the observation window");
            }
            if (k > 0 && !(s[k] > s[k - 1])) {
                throw std::invalid_argument("stream of process " + std::to_string(i) +
                                            " is not strictly increasing");
            }
        }
    }
}

std::span<const double> EventStreams::stream(Index i) const {
    if (i < 0 || i >= dimension()) {
        throw std::out_of_range("process index out of range");
    }
    return times_[static_cast<std::size_t>(i)];
}

const std::string& EventStreams::name(Index i) const {
    if (i < 0 || i >= dimension()) {
        throw std::out_of_range("process index out of range");
    }
    return names_[static_cast<std::size_t>(i)];
}

std::size_t EventStreams::total_events() const noexcept {
    std::size_t n = 0;
    for (const auto& s : times_) {
        n += s.size();
    }
    return n;
}

EventStreams EventStreams::restrict_to(double start, double end) const {
    if (!(end > start)) {
        throw std::invalid_argument("restrict_to: empty interval");
    }
    std::vector<std::vector<double>> out(times_.size());
    for (std::size_t i = 0; i < times_.size(); ++i) {
        const auto& s = times_[i];
        auto lo = std::lower_bound(s.begin(), s.end(), start);
        auto hi = std::lower_bound(s.begin(), s.end(), end);
        out[i].reserve(static_cast<std::size_t>(hi - lo));
        for (auto it = lo; it != hi; ++it) {
            out[i].push_back(*it - start);
        }
    }
    return EventStreams(std::move(out), 0.0, end - start, names_);
}

std::vector<TimedEvent> merged_events(const EventStreams& streams) {
    std::vector<TimedEvent> events;
    events.reserve(streams.total_events());
    for (Index i = 0; i < streams.dimension(); ++i) {
        const auto s = streams.stream(i);
        for (std::size_t k = 0; k < s.size(); ++k) {
            events.push_back({s[k], i, static_cast<Index>(k)});
        }
    }
    std::sort(events.begin(), events.end(), [](const TimedEvent& x, const TimedEvent& y) {
        return x.time < y.time || (x.time == y.time && x.process < y.process);
    });
    return events;
}

}  // namespace pimkit
