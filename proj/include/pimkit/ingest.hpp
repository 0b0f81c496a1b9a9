#pragma once

// Labeled event files -> EventStreams.
//
// Raw input, CSV with header `timestamp,labels[,stance]` or JSON lines with
// the same keys. `labels` is a ';'-separated list (or a JSON array); an event
// with several labels is added to every labeled narrative's stream. Timestamps
// are ISO-8601 strings or numbers in IngestConfig::numeric_unit.
//
// Canonical input/output, CSV with header `timestamp_hours,narrative`, one
// row per (event, narrative), times in hours with 9 decimals.
//
// Narratives are indexed in lexicographic order of their names.

#include "pimkit/event_streams.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pimkit {

enum class TimeUnit { milliseconds, seconds, minutes, hours };
enum class InputFormat { raw_csv, canonical_csv, json_lines };

TimeUnit parse_time_unit(const std::string& name);

struct IngestConfig {
    std::size_t min_events = 100'000;     // narratives with fewer events are dropped
    std::optional<std::string> stance;    // keep only rows with this stance (pro, anti, none)
    TimeUnit numeric_unit = TimeUnit::seconds;  // unit of numeric timestamps in raw input
    std::optional<std::string> span_start;      // same syntax as the file's timestamps
    std::optional<std::string> span_end;
    bool jitter = true;         // separate identical (time, narrative) pairs
    double jitter_step = 1e-7;  // hours
    bool fail_fast = true;      // otherwise malformed rows are skipped and reported
};

struct RowIssue {
    std::size_t line = 0;
    std::string reason;
};

struct IngestSummary {
    std::string format;
    std::size_t rows_read = 0;
    std::size_t rows_used = 0;
    std::size_t rows_filtered_stance = 0;
    std::size_t events_outside_span = 0;
    std::size_t events_jittered = 0;
    double origin = 0.0;  // absolute hours mapped to t = 0 (epoch hours for raw input)
    double span_hours = 0.0;
    std::map<std::string, std::size_t> counts_before;  // per narrative, before the count threshold
    std::map<std::string, std::size_t> counts_after;
    std::vector<std::string> dropped_narratives;
    std::vector<RowIssue> issues;
};

struct IngestResult {
    EventStreams streams;
    std::map<std::string, Index> labels;
    IngestSummary summary;
};

class IngestError : public std::runtime_error {
public:
    IngestError(const std::string& what, std::vector<RowIssue> issues = {})
        : std::runtime_error(what), issues_(std::move(issues)) {}
    const std::vector<RowIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<RowIssue> issues_;
};

/// Picks the format from the extension (.jsonl, .ndjson) or the CSV header.
IngestResult ingest(const std::filesystem::path& file, const IngestConfig& config);
IngestResult ingest(std::istream& in, const IngestConfig& config, std::optional<InputFormat> format = std::nullopt);

/// Canonical CSV sorted by time then narrative name. Empty streams produce a
/// header-only file.
void export_streams(const EventStreams& streams, std::ostream& out);
void export_streams(const EventStreams& streams, const std::filesystem::path& file);

/// ISO-8601 date-time (UTC unless an offset is given) to hours since the epoch.
double parse_iso8601_hours(const std::string& text);

nlohmann::ordered_json summary_to_json(const IngestSummary& summary);

}  // namespace pimkit
