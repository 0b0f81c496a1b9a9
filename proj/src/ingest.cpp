#include "pimkit/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

namespace pimkit {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// RFC 4180-style split: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quoted field");
    fields.push_back(cur);
    return fields;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Units per hour; dividing keeps whole hours exact.
double units_per_hour(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::milliseconds: return 3'600'000.0;
        case TimeUnit::seconds: return 3600.0;
        case TimeUnit::minutes: return 60.0;
        case TimeUnit::hours: return 1.0;
    }
    return 1.0;
}

int parse_digits(const std::string& s, std::size_t& pos, std::size_t count) {
    if (pos + count > s.size()) throw std::invalid_argument("truncated timestamp");
    int v = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const char c = s[pos + k];
        if (!std::isdigit(static_cast<unsigned char>(c))) throw std::invalid_argument("bad digit in timestamp");
        v = v * 10 + (c - '0');
    }
    pos += count;
    return v;
}

void expect(const std::string& s, std::size_t& pos, char c) {
    if (pos >= s.size() || s[pos] != c) {
        throw std::invalid_argument(std::string("expected '") + c + "' in timestamp");
    }
    ++pos;
}

struct RawRow {
    std::size_t line;
    std::string timestamp;
    bool numeric_timestamp;
    std::vector<std::string> labels;
    std::string stance;
};

std::vector<std::string> split_labels(const std::string& field) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::size_t start = 0;
    while (start <= field.size()) {
        const std::size_t end = std::min(field.find(';', start), field.size());
        std::string label = trim(std::string_view(field).substr(start, end - start));
        if (!label.empty() && seen.insert(label).second) out.push_back(label);
        start = end + 1;
    }
    return out;
}

std::string normalize_stance(const std::string& s) {
    const std::string v = lower(trim(s));
    if (v.empty() || v == "none") return "none";
    if (v == "pro" || v == "anti") return v;
    throw std::invalid_argument("unknown stance '" + s + "' (expected pro, anti or none)");
}

class RowCollector {
public:
    RowCollector(const IngestConfig& config, IngestSummary& summary) : config_(config), summary_(summary) {}

    void issue(std::size_t line, const std::string& reason) {
        summary_.issues.push_back({line, reason});
        if (config_.fail_fast) {
            throw IngestError("line " + std::to_string(line) + ": " + reason, summary_.issues);
        }
    }

private:
    const IngestConfig& config_;
    IngestSummary& summary_;
};

InputFormat detect_csv_format(const std::vector<std::string>& header) {
    std::vector<std::string> h;
    for (const auto& f : header) h.push_back(lower(trim(f)));
    if (h.size() == 2 && h[0] == "timestamp_hours" && h[1] == "narrative") return InputFormat::canonical_csv;
    if (h.size() >= 2 && h[0] == "timestamp" && h[1] == "labels" && (h.size() == 2 || h[2] == "stance")) {
        return InputFormat::raw_csv;
    }
    throw IngestError("unrecognized CSV header; expected `timestamp,labels,stance` or `timestamp_hours,narrative`");
}

}  // namespace

TimeUnit parse_time_unit(const std::string& name) {
    const std::string n = lower(name);
    if (n == "ms" || n == "milliseconds") return TimeUnit::milliseconds;
    if (n == "s" || n == "seconds") return TimeUnit::seconds;
    if (n == "min" || n == "minutes") return TimeUnit::minutes;
    if (n == "h" || n == "hours") return TimeUnit::hours;
    throw std::invalid_argument("unknown time unit '" + name + "'");
}

double parse_iso8601_hours(const std::string& text) {
    const std::string s = trim(text);
    std::size_t pos = 0;
    const int year = parse_digits(s, pos, 4);
    expect(s, pos, '-');
    const int month = parse_digits(s, pos, 2);
    expect(s, pos, '-');
    const int day = parse_digits(s, pos, 2);
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                          std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    double seconds = 0.0;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == 't' || s[pos] == ' ')) {
        ++pos;
        const int hh = parse_digits(s, pos, 2);
        expect(s, pos, ':');
        const int mm = parse_digits(s, pos, 2);
        double ss = 0.0;
        if (pos < s.size() && s[pos] == ':') {
            ++pos;
            ss = parse_digits(s, pos, 2);
            if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
                ++pos;
                double scale = 0.1;
                while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
                    ss += scale * (s[pos] - '0');
                    scale /= 10.0;
                    ++pos;
                }
            }
        }
        if (hh > 23 || mm > 59 || ss >= 61.0) throw std::invalid_argument("time of day out of range");
        seconds = hh * 3600.0 + mm * 60.0 + ss;
        if (pos < s.size()) {
            if (s[pos] == 'Z' || s[pos] == 'z') {
                ++pos;
            } else if (s[pos] == '+' || s[pos] == '-') {
                const int sign = s[pos] == '+' ? 1 : -1;
                ++pos;
                const int oh = parse_digits(s, pos, 2);
                int om = 0;
                if (pos < s.size()) {
                    if (s[pos] == ':') ++pos;
                    om = parse_digits(s, pos, 2);
                }
                seconds -= sign * (oh * 3600.0 + om * 60.0);
            }
        }
    }
    if (pos != s.size()) throw std::invalid_argument("trailing characters in timestamp");
    const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * 24.0 + seconds / 3600.0;
}

IngestResult ingest(std::istream& in, const IngestConfig& config, std::optional<InputFormat> format) {
    if (!(config.jitter_step > 0.0)) throw std::invalid_argument("jitter step must be positive");
    std::optional<std::string> stance_filter;
    if (config.stance) stance_filter = normalize_stance(*config.stance);

    IngestSummary summary;
    RowCollector collect(config, summary);
    std::vector<RawRow> rows;

    std::string line;
    std::size_t line_no = 0;
    bool json_lines = format == InputFormat::json_lines;
    bool canonical = format == InputFormat::canonical_csv;
    if (!json_lines) {
        while (std::getline(in, line)) {
            ++line_no;
            if (!trim(line).empty()) break;
        }
        if (trim(line).empty()) throw IngestError("input is empty");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const InputFormat detected = detect_csv_format(split_csv(line));
        if (format && *format != detected) throw IngestError("CSV header does not match the requested format");
        canonical = detected == InputFormat::canonical_csv;
    }
    summary.format = json_lines ? "json_lines" : canonical ? "canonical_csv" : "raw_csv";

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++summary.rows_read;
        try {
            RawRow row{line_no, {}, false, {}, "none"};
            if (json_lines) {
                const auto j = nlohmann::json::parse(line);
                const auto& ts = j.at("timestamp");
                if (ts.is_number()) {
                    std::ostringstream num;
                    num.precision(17);
                    num << ts.get<double>();
                    row.timestamp = num.str();
                    row.numeric_timestamp = true;
                } else {
                    row.timestamp = ts.get<std::string>();
                }
                const auto& labels = j.at("labels");
                if (labels.is_array()) {
                    std::string joined;
                    for (const auto& l : labels) joined += l.get<std::string>() + ";";
                    row.labels = split_labels(joined);
                } else {
                    row.labels = split_labels(labels.get<std::string>());
                }
                if (j.contains("stance") && !j.at("stance").is_null()) {
                    row.stance = normalize_stance(j.at("stance").get<std::string>());
                }
            } else {
                const auto fields = split_csv(line);
                if (fields.size() < 2 || fields.size() > (canonical ? 2u : 3u)) {
                    throw std::invalid_argument("wrong number of fields");
                }
                row.timestamp = trim(fields[0]);
                row.labels = canonical ? std::vector<std::string>{trim(fields[1])} : split_labels(fields[1]);
                if (canonical && row.labels.front().empty()) row.labels.clear();
                if (fields.size() == 3) row.stance = normalize_stance(fields[2]);
            }
            if (row.labels.empty()) throw std::invalid_argument("no labels");
            if (row.timestamp.empty()) throw std::invalid_argument("missing timestamp");
            if (!row.numeric_timestamp) row.numeric_timestamp = parse_number(row.timestamp).has_value();
            if (!row.numeric_timestamp) parse_iso8601_hours(row.timestamp);
            if (stance_filter && row.stance != *stance_filter) {
                ++summary.rows_filtered_stance;
                continue;
            }
            rows.push_back(std::move(row));
        } catch (const IngestError&) {
            throw;
        } catch (const std::exception& e) {
            collect.issue(line_no, e.what());
        }
    }

    const double numeric_scale = canonical ? 1.0 : units_per_hour(config.numeric_unit);
    auto to_hours = [&](const std::string& ts) {
        if (auto v = parse_number(ts)) return *v / numeric_scale;
        if (canonical) throw std::invalid_argument("canonical timestamps must be numeric hours");
        return parse_iso8601_hours(ts);
    };

    // Absolute hours per narrative, in input order.
    std::map<std::string, std::vector<double>> absolute;
    double earliest = std::numeric_limits<double>::infinity();
    for (const auto& row : rows) {
        const double t = to_hours(row.timestamp);
        earliest = std::min(earliest, t);
        for (const auto& label : row.labels) absolute[label].push_back(t);
    }
    summary.rows_used = rows.size();
    if (absolute.empty()) throw IngestError("no usable events in input", summary.issues);

    double origin = canonical ? 0.0 : std::floor(earliest / 24.0) * 24.0;
    if (config.span_start) origin = to_hours(*config.span_start);
    summary.origin = origin;

    std::map<std::string, std::vector<double>> relative;
    double latest = 0.0;
    for (auto& [label, times] : absolute) {
        std::vector<double> rel;
        rel.reserve(times.size());
        for (double t : times) rel.push_back(t - origin);
        std::stable_sort(rel.begin(), rel.end());
        for (std::size_t k = 1; k < rel.size(); ++k) {
            if (rel[k] <= rel[k - 1]) {
                if (!config.jitter) {
                    throw IngestError("narrative '" + label + "' has coinciding timestamps; enable jitter");
                }
                rel[k] = rel[k - 1] + config.jitter_step;
                ++summary.events_jittered;
            }
        }
        if (!rel.empty()) latest = std::max(latest, rel.back());
        relative[label] = std::move(rel);
    }

    // Default end: the first whole hour strictly after the last event, so the
    // span holds every event even under half-open windows.
    const double span_end = config.span_end ? to_hours(*config.span_end) - origin : std::floor(latest) + 1.0;
    if (!(span_end > 0.0)) throw IngestError("observation span is empty");
    summary.span_hours = span_end;

    for (auto& [label, times] : relative) {
        const auto before = times.size();
        std::erase_if(times, [&](double t) { return t < 0.0 || t > span_end; });
        summary.events_outside_span += before - times.size();
        summary.counts_before[label] = times.size();
    }

    std::vector<std::vector<double>> streams;
    std::vector<std::string> names;
    std::map<std::string, Index> labels;
    for (auto& [label, times] : relative) {
        if (times.size() < config.min_events || times.empty()) {
            summary.dropped_narratives.push_back(label);
            continue;
        }
        summary.counts_after[label] = times.size();
        labels[label] = static_cast<Index>(names.size());
        names.push_back(label);
        streams.push_back(std::move(times));
    }
    if (streams.empty()) {
        throw IngestError("no narrative has at least " + std::to_string(config.min_events) + " events",
                          summary.issues);
    }
    return {EventStreams(std::move(streams), 0.0, span_end, std::move(names)), std::move(labels), std::move(summary)};
}

IngestResult ingest(const std::filesystem::path& file, const IngestConfig& config) {
    std::ifstream in(file);
    if (!in) throw IngestError("cannot open " + file.string());
    const std::string ext = lower(file.extension().string());
    std::optional<InputFormat> format;
    if (ext == ".jsonl" || ext == ".ndjson") format = InputFormat::json_lines;
    return ingest(in, config, format);
}

void export_streams(const EventStreams& streams, std::ostream& out) {
    struct Row {
        double time;
        const std::string* name;
    };
    std::vector<Row> rows;
    rows.reserve(streams.total_events());
    for (Index i = 0; i < streams.dimension(); ++i) {
        for (double t : streams.stream(i)) rows.push_back({t, &streams.name(i)});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.time < b.time || (a.time == b.time && *a.name < *b.name);
    });
    out << "timestamp_hours,narrative\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9f", r.time);
        out << buf << ',' << csv_field(*r.name) << '\n';
    }
}

void export_streams(const EventStreams& streams, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    export_streams(streams, out);
    if (!out) throw std::runtime_error("failed writing " + file.string());
}

nlohmann::ordered_json summary_to_json(const IngestSummary& s) {
    nlohmann::ordered_json j;
    j["format"] = s.format;
    j["rows_read"] = s.rows_read;
    j["rows_used"] = s.rows_used;
    j["rows_filtered_stance"] = s.rows_filtered_stance;
    j["events_outside_span"] = s.events_outside_span;
    j["events_jittered"] = s.events_jittered;
    j["origin_hours"] = s.origin;
    j["span_hours"] = s.span_hours;
    j["counts_before"] = s.counts_before;
    j["counts_after"] = s.counts_after;
    j["dropped_narratives"] = s.dropped_narratives;
    auto issues = nlohmann::ordered_json::array();
    for (const auto& i : s.issues) issues.push_back({{"line", i.line}, {"reason", i.reason}});
    j["dropped_rows"] = issues;
    return j;
}

}  // namespace pimkit
