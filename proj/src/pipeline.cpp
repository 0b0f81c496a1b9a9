#include "pimkit/pipeline.hpp"

#include "pimkit/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace pimkit {

std::string Window::label() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "w%03ld [%.3fh, %.3fh)", static_cast<long>(index), start, end);
    return buf;
}

WindowPlan plan_windows(double span_start, double span_end, double length, double stride) {
    if (!(length > 0.0)) throw std::invalid_argument("window length must be positive");
    if (!(stride > 0.0) || stride > length) {
        throw std::invalid_argument("window stride must satisfy 0 < stride <= length");
    }
    if (!(span_end - span_start >= length)) {
        throw std::invalid_argument("span is shorter than one window");
    }
    WindowPlan plan{length, stride, span_start, span_end, {}};
    // The small slack absorbs rounding when the span is an exact multiple.
    const auto count = static_cast<Index>(std::floor((span_end - span_start - length) / stride + 1e-9)) + 1;
    plan.windows.reserve(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) {
        const double start = span_start + static_cast<double>(k) * stride;
        plan.windows.push_back({k, start, start + length});
    }
    return plan;
}

WindowResult run_window(const EventStreams& streams, const Window& window, const PipelineConfig& config) {
    WindowResult result;
    result.window = window;
    try {
        const EventStreams local = streams.restrict_to(window.start, window.end);
        for (Index i = 0; i < local.dimension(); ++i) result.event_counts.push_back(local.count(i));
        if (local.total_events() == 0) {
            result.status = "empty";
            result.error = "no events in window";
            return result;
        }
        result.fit = fit_mle(local, config.kernel, config.fit);
        result.gof = evaluate_gof(result.fit->model, local);
        if (!result.fit->converged) {
            result.status = "not_converged";
            return result;
        }
        result.pim = pim_estimate(result.fit->model, local, window.label());
        result.gate_passed = config.gate.passes(*result.gof);
        result.status = result.gate_passed ? "ok" : "gof_rejected";
    } catch (const std::exception& e) {
        result.status = "failed";
        result.error = e.what();
        result.gate_passed = false;
        result.pim.reset();
    }
    return result;
}

std::vector<WindowResult> run_pipeline(const EventStreams& streams, const WindowPlan& plan,
                                       const PipelineConfig& config) {
    std::vector<WindowResult> results(plan.windows.size());
    const auto workers = static_cast<std::size_t>(std::max(1, config.parallelism));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < plan.windows.size(); k = next++) {
            results[k] = run_window(streams, plan.windows[k], config);
        }
    };
    if (workers == 1 || plan.windows.size() <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, plan.windows.size()); ++w) pool.emplace_back(work);
    }
    return results;
}

TimelineReport build_timeline(const std::vector<WindowResult>& results, double min_pim,
                              const ClassThresholds& thresholds) {
    TimelineReport report;
    report.min_pim = min_pim;
    for (const auto& r : results) {
        if (!r.gate_passed || !r.pim) continue;
        const PimMatrix& pim = *r.pim;
        for (Index target = 0; target < pim.dimension(); ++target) {
            if (!pim.row_defined(target)) continue;
            for (Index source = 0; source < pim.dimension(); ++source) {
                if (source == target) continue;
                const double v = pim.influence(target, source);
                if (!(v > min_pim)) continue;
                report.entries.push_back({r.window.index, r.window.start, r.window.end, source, target,
                                          pim.names[static_cast<std::size_t>(source)],
                                          pim.names[static_cast<std::size_t>(target)], v,
                                          classify(v, thresholds)});
            }
        }
    }
    std::stable_sort(report.entries.begin(), report.entries.end(), [](const auto& x, const auto& y) {
        if (x.start != y.start) return x.start < y.start;
        if (x.window != y.window) return x.window < y.window;
        if (x.pim != y.pim) return x.pim > y.pim;
        if (x.target != y.target) return x.target < y.target;
        return x.source < y.source;
    });
    return report;
}

namespace {

nlohmann::ordered_json window_json(const Window& w) {
    nlohmann::ordered_json j;
    j["index"] = w.index;
    j["start"] = w.start;
    j["end"] = w.end;
    return j;
}

nlohmann::ordered_json fit_json(const FitReport& fit) {
    nlohmann::ordered_json j;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["loglik"] = fit.log_likelihood;
    j["gradient_norms"] = std::vector<double>(fit.gradient_norms.data(),
                                              fit.gradient_norms.data() + fit.gradient_norms.size());
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : fit.rows) {
        nlohmann::ordered_json rj;
        rj["target"] = r.target;
        rj["iterations"] = r.iterations;
        rj["converged"] = r.converged;
        rj["gradient_norm"] = r.gradient_norm;
        rj["message"] = r.message;
        rows.push_back(rj);
    }
    j["rows"] = rows;
    return j;
}

std::string window_stem(Index index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%03ld", static_cast<long>(index));
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

PimMatrix pim_from_json(const nlohmann::json& j) {
    PimMatrix pim;
    pim.window = j.value("window", std::string{});
    pim.names = j.at("targets").get<std::vector<std::string>>();
    pim.counts = j.at("counts").get<std::vector<std::size_t>>();
    const auto p = static_cast<Index>(pim.names.size());
    pim.values = Eigen::MatrixXd::Constant(p, p + 1, std::numeric_limits<double>::quiet_NaN());
    const auto& rows = j.at("pim");
    for (Index i = 0; i < p; ++i) {
        const auto& row = rows.at(static_cast<std::size_t>(i));
        if (row.is_null()) continue;
        for (Index c = 0; c <= p; ++c) pim.values(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return pim;
}

}  // namespace

nlohmann::ordered_json window_result_to_json(const WindowResult& r) {
    nlohmann::ordered_json j;
    j["window"] = window_json(r.window);
    j["label"] = r.window.label();
    j["events"] = r.event_counts;
    j["status"] = r.status;
    j["gate_passed"] = r.gate_passed;
    j["error"] = r.error;
    if (r.fit) {
        j["model"] = model_to_json(r.fit->model,
                                   FitMeta{r.window.start, r.window.end, r.fit->log_likelihood, r.fit->converged});
        j["fit"] = fit_json(*r.fit);
    } else {
        j["model"] = nullptr;
        j["fit"] = nullptr;
    }
    j["gof"] = r.gof ? gof_to_json(*r.gof) : nlohmann::ordered_json(nullptr);
    j["pim"] = r.pim ? pim_to_json(*r.pim) : nlohmann::ordered_json(nullptr);
    return j;
}

WindowResult window_result_from_json(const nlohmann::json& j) {
    WindowResult r;
    const auto& w = j.at("window");
    r.window = {w.at("index").get<Index>(), w.at("start").get<double>(), w.at("end").get<double>()};
    r.event_counts = j.at("events").get<std::vector<std::size_t>>();
    r.status = j.at("status").get<std::string>();
    r.error = j.value("error", std::string{});
    r.gate_passed = j.at("gate_passed").get<bool>();
    if (j.contains("pim") && !j.at("pim").is_null()) r.pim = pim_from_json(j.at("pim"));
    return r;
}

nlohmann::ordered_json timeline_to_json(const TimelineReport& timeline) {
    nlohmann::ordered_json j;
    j["min_pim"] = timeline.min_pim;
    auto entries = nlohmann::ordered_json::array();
    for (const auto& e : timeline.entries) {
        nlohmann::ordered_json ej;
        ej["window"] = e.window;
        ej["start"] = e.start;
        ej["end"] = e.end;
        ej["source"] = e.source_name;
        ej["target"] = e.target_name;
        ej["pim"] = e.pim;
        ej["class"] = to_string(e.influence);
        entries.push_back(ej);
    }
    j["entries"] = entries;
    return j;
}

std::string timeline_markdown(const TimelineReport& timeline) {
    std::ostringstream out;
    out << "# Influence timeline\n\n";
    out << "Cross-process influences with PIM > " << timeline.min_pim << " from windows that passed the fit gate.\n\n";
    if (timeline.entries.empty()) {
        out << "_No influences above the threshold._\n";
        return out.str();
    }
    out << "| window | start (h) | end (h) | source | target | PIM | class |\n";
    out << "|---:|---:|---:|---|---|---:|---|\n";
    char buf[256];
    for (const auto& e : timeline.entries) {
        std::snprintf(buf, sizeof buf, "| %ld | %.3f | %.3f | %s | %s | %.4f | %s |\n", static_cast<long>(e.window),
                      e.start, e.end, e.source_name.c_str(), e.target_name.c_str(), e.pim,
                      to_string(e.influence).c_str());
        out << buf;
    }
    return out.str();
}

void write_results(const std::filesystem::path& dir, const WindowPlan& plan, const PipelineConfig& config,
                   const std::vector<WindowResult>& results, const TimelineReport& timeline) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "windows");

    nlohmann::ordered_json index;
    nlohmann::ordered_json pj;
    pj["length"] = plan.length;
    pj["stride"] = plan.stride;
    pj["span"] = {plan.span_start, plan.span_end};
    pj["count"] = plan.windows.size();
    index["plan"] = pj;
    nlohmann::ordered_json settings;
    settings["beta"] = config.kernel.decay;
    settings["ridge"] = config.fit.ridge;
    settings["max_iterations"] = config.fit.max_iterations;
    settings["tolerance"] = config.fit.tolerance;
    settings["floor"] = config.fit.floor;
    settings["init"] = to_string(config.fit.init);
    settings["seed"] = config.fit.seed;
    settings["gof_alpha"] = config.gate.alpha;
    settings["min_pim"] = timeline.min_pim;
    settings["thresholds"] = {config.thresholds.significant, config.thresholds.strong, config.thresholds.decisive};
    index["settings"] = settings;

    auto windows = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        const std::string stem = window_stem(r.window.index);
        nlohmann::ordered_json line = window_json(r.window);
        line["status"] = r.status;
        line["gate_passed"] = r.gate_passed;
        line["file"] = "windows/" + stem + ".json";
        windows.push_back(line);

        write_text(dir / "windows" / (stem + ".json"), window_result_to_json(r).dump(2) + "\n");
        if (r.pim) {
            std::ostringstream csv;
            write_pim_csv(csv, *r.pim);
            write_text(dir / "windows" / (stem + "_pim.csv"), csv.str());
            std::ostringstream svg;
            write_pim_svg(svg, *r.pim, config.thresholds);
            write_text(dir / "windows" / (stem + "_heatmap.svg"), svg.str());
        }
        if (r.gof && !r.gof->pp.empty()) {
            std::ostringstream pp;
            write_pp_csv(pp, r.gof->pp);
            write_text(dir / "windows" / (stem + "_pp.csv"), pp.str());
        }
    }
    index["windows"] = windows;
    write_text(dir / "index.json", index.dump(2) + "\n");
    write_text(dir / "timeline.json", timeline_to_json(timeline).dump(2) + "\n");
    write_text(dir / "timeline.md", timeline_markdown(timeline));
}

std::vector<WindowResult> read_results(const std::filesystem::path& dir) {
    auto read_json = [](const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read " + path.string());
        return nlohmann::json::parse(in);
    };
    const auto index = read_json(dir / "index.json");
    std::vector<WindowResult> results;
    for (const auto& w : index.at("windows")) {
        results.push_back(window_result_from_json(read_json(dir / w.at("file").get<std::string>())));
    }
    return results;
}

}  // namespace pimkit
