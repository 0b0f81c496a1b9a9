#include "pimkit/errors.hpp"
#include "pimkit/estimator.hpp"
#include "pimkit/gof.hpp"
#include "pimkit/influence.hpp"
#include "pimkit/ingest.hpp"
#include "pimkit/pipeline.hpp"
#include "pimkit/simulator.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pimkit;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_data = 2;
constexpr int exit_partial = 3;

// Raised for bad flag combinations detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool quiet = false;

void note(const std::string& message) {
    if (!quiet) std::cerr << message << '\n';
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
        if (used != item.size()) throw UsageError("not a number: '" + item + "'");
    }
    return out;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Writes to the file, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_text(path, text);
    }
}

struct ModelOptions {
    std::string file;
    std::string base;
    std::string excitation;
    double beta = 1.0;

    void add(CLI::App* cmd) {
        cmd->add_option("--model", file, "Model JSON {P, beta, b, a}");
        cmd->add_option("--base", base, "Inline base rates, e.g. 0.2,0.3");
        cmd->add_option("--excitation", excitation, "Inline excitation rows, e.g. '0.5,0.3;0,0.6' (row i = target)");
        cmd->add_option("--beta", beta, "Kernel decay for inline models (1/hour)")->capture_default_str();
    }

    Model load() const {
        if (!file.empty()) {
            if (!base.empty() || !excitation.empty()) throw UsageError("--model excludes --base/--excitation");
            return model_from_json(read_json(file));
        }
        if (base.empty()) throw UsageError("a model is required: --model FILE or --base/--excitation");
        Model m;
        const auto b = parse_list(base);
        const auto p = static_cast<Index>(b.size());
        m.base = Eigen::Map<const Eigen::VectorXd>(b.data(), p);
        m.excitation = Eigen::MatrixXd::Zero(p, p);
        if (!excitation.empty()) {
            std::stringstream rows(excitation);
            std::string row;
            Index i = 0;
            while (std::getline(rows, row, ';')) {
                const auto values = parse_list(row);
                if (i >= p || static_cast<Index>(values.size()) != p) {
                    throw UsageError("--excitation must be a " + std::to_string(p) + "x" + std::to_string(p) + " matrix");
                }
                for (Index j = 0; j < p; ++j) m.excitation(i, j) = values[static_cast<std::size_t>(j)];
                ++i;
            }
            if (i != p) throw UsageError("--excitation must have one row per process");
        }
        m.kernel.decay = beta;
        m.validate();
        return m;
    }
};

struct EventOptions {
    std::string path;
    std::size_t min_events = 100'000;
    std::string stance;
    std::string unit = "seconds";
    std::string span_start;
    std::string span_end;
    bool no_jitter = false;
    bool skip_bad_rows = false;
    CLI::Option* min_events_option = nullptr;

    void add(CLI::App* cmd, const std::string& flag) {
        cmd->add_option(flag, path, "Event file: raw CSV/JSON lines or canonical CSV")->required()->check(CLI::ExistingFile);
        min_events_option = cmd->add_option("--min-events", min_events,
                                            "Drop narratives with fewer events (published default; canonical files "
                                            "ignore it unless given)")
                                ->capture_default_str();
        cmd->add_option("--stance", stance, "Keep only rows with this stance")->check(CLI::IsMember({"pro", "anti", "none"}));
        cmd->add_option("--unit", unit, "Unit of numeric timestamps in raw input")
            ->capture_default_str()
            ->check(CLI::IsMember({"milliseconds", "seconds", "minutes", "hours"}));
        cmd->add_option("--span-start", span_start, "Span origin, same syntax as the timestamps");
        cmd->add_option("--span-end", span_end, "Span end, same syntax as the timestamps");
        cmd->add_flag("--no-jitter", no_jitter, "Reject coinciding timestamps instead of separating them");
        cmd->add_flag("--skip-bad-rows", skip_bad_rows, "Skip and report malformed rows instead of failing");
    }

    bool canonical() const {
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        return header.rfind("timestamp_hours", 0) == 0;
    }

    IngestConfig config() const {
        IngestConfig c;
        c.min_events = min_events;
        // A canonical file is already filtered; only an explicit threshold applies.
        if (min_events_option->count() == 0 && canonical()) c.min_events = 0;
        if (!stance.empty()) c.stance = stance;
        c.numeric_unit = parse_time_unit(unit);
        if (!span_start.empty()) c.span_start = span_start;
        if (!span_end.empty()) c.span_end = span_end;
        c.jitter = !no_jitter;
        c.fail_fast = !skip_bad_rows;
        return c;
    }

    IngestResult load() const {
        auto r = ingest(path, config());
        for (const auto& issue : r.summary.issues) note("skipped line " + std::to_string(issue.line) + ": " + issue.reason);
        for (const auto& name : r.summary.dropped_narratives) note("dropped narrative '" + name + "'");
        return r;
    }
};

struct FitOptions {
    double beta = 1.0;
    double ridge = 0.0;
    int max_iterations = 500;
    double tolerance = 1e-6;
    std::string init = "poisson";
    std::uint64_t seed = 0;

    void add(CLI::App* cmd) {
        cmd->add_option("--beta", beta, "Kernel decay (1/hour)")->capture_default_str();
        cmd->add_option("--ridge", ridge, "Ridge weight on the excitation matrix")->capture_default_str();
        cmd->add_option("--max-iter", max_iterations, "Iteration cap per row")->capture_default_str();
        cmd->add_option("--tol", tolerance, "Projected-gradient tolerance")->capture_default_str();
        cmd->add_option("--init", init, "Initialization: poisson or random")
            ->capture_default_str()
            ->check(CLI::IsMember({"poisson", "random"}));
        cmd->add_option("--seed", seed, "Seed for random initialization")->capture_default_str();
    }

    KernelSpec kernel() const { return KernelSpec{beta}; }

    FitConfig config() const {
        FitConfig c;
        c.ridge = ridge;
        c.max_iterations = max_iterations;
        c.tolerance = tolerance;
        c.init = parse_init_scheme(init);
        c.seed = seed;
        c.validate();
        return c;
    }
};

void check_dimensions(const Model& model, const EventStreams& streams) {
    if (model.dimension() != streams.dimension()) {
        throw std::invalid_argument("model has " + std::to_string(model.dimension()) + " processes but the events have " +
                                    std::to_string(streams.dimension()));
    }
}

std::string summary_line(const std::string& label, double value) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-22s %.6g\n", (label + ":").c_str(), value);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pimkit: multivariate Hawkes fitting and process influence analysis"};
    app.require_subcommand(1);
    app.add_flag("-q,--quiet", quiet, "Suppress progress messages");
    app.set_version_flag("--version", "pimkit 1.0");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate event streams from a model");
    ModelOptions sim_model;
    sim_model.add(sim);
    double horizon = 0.0;
    std::string sim_out;
    std::string sim_model_out;
    std::string sampler = "thinning";
    std::string names;
    std::uint64_t sim_seed = 0;
    auto* seed_opt = sim->add_option("--seed", sim_seed, "Random seed (drawn and printed when omitted)");
    sim->add_option("--horizon", horizon, "Length of the simulated span in hours")->required();
    sim->add_option("--out", sim_out, "Canonical event CSV")->required();
    sim->add_option("--model-out", sim_model_out, "Generating model JSON (default: <out>.model.json)");
    sim->add_option("--sampler", sampler, "thinning or branching")
        ->capture_default_str()
        ->check(CLI::IsMember({"thinning", "branching"}));
    sim->add_option("--names", names, "Comma-separated process names");

    // ingest
    auto* ing = app.add_subcommand("ingest", "Convert labeled events into canonical streams");
    EventOptions ing_events;
    ing_events.add(ing, "--input");
    std::string ing_out;
    std::string ing_summary;
    ing->add_option("--out", ing_out, "Canonical event CSV")->required();
    ing->add_option("--summary", ing_summary, "Ingest summary JSON");

    // fit
    auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit of a model to event streams");
    EventOptions fit_events;
    fit_events.add(fit, "--events");
    FitOptions fit_options;
    fit_options.add(fit);
    std::string fit_out;
    fit->add_option("--out", fit_out, "Fitted model JSON (stdout when omitted)");

    // gof
    auto* gof = app.add_subcommand("gof", "Time-rescaling goodness of fit");
    EventOptions gof_events;
    gof_events.add(gof, "--events");
    ModelOptions gof_model;
    gof_model.add(gof);
    std::string gof_out;
    std::string gof_pp;
    double gof_alpha = 0.01;
    gof->add_option("--out", gof_out, "GOF report JSON (stdout when omitted)");
    gof->add_option("--pp-csv", gof_pp, "Pooled P-P points as CSV");
    gof->add_option("--alpha", gof_alpha, "KS gate level")->capture_default_str()->check(CLI::Range(0.0, 1.0));

    // attribute
    auto* att = app.add_subcommand("attribute", "Most likely cause of every event");
    EventOptions att_events;
    att_events.add(att, "--events");
    ModelOptions att_model;
    att_model.add(att);
    std::string att_out;
    att->add_option("--out", att_out, "Attribution CSV (stdout when omitted)");

    // pim
    auto* pim = app.add_subcommand("pim", "Process influence matrix of a fitted model");
    EventOptions pim_events;
    pim_events.add(pim, "--events");
    ModelOptions pim_model;
    pim_model.add(pim);
    std::string pim_out;
    std::string pim_csv;
    std::string pim_svg;
    ClassThresholds pim_thresholds;
    pim->add_option("--out", pim_out, "PIM JSON (stdout when omitted)");
    pim->add_option("--csv", pim_csv, "PIM CSV");
    pim->add_option("--svg", pim_svg, "PIM heat map SVG");
    pim->add_option("--significant", pim_thresholds.significant, "Upper bound of the weak class (published default)")
        ->capture_default_str();
    pim->add_option("--strong", pim_thresholds.strong, "Upper bound of the significant class (published default)")
        ->capture_default_str();
    pim->add_option("--decisive", pim_thresholds.decisive, "Upper bound of the strong class (published default)")
        ->capture_default_str();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "Sliding-window fits, PIMs and influence timeline");
    EventOptions pipe_events;
    pipe_events.add(pipe, "--events");
    FitOptions pipe_fit;
    pipe_fit.add(pipe);
    std::string pipe_out = "pimkit_results";
    double window_hours = 48.0;
    double stride_hours = 24.0;
    double min_pim = 0.2;
    double pipe_alpha = 0.01;
    int parallelism = 1;
    ClassThresholds pipe_thresholds;
    pipe->add_option("--out", pipe_out, "Results directory")->capture_default_str()->envname("PIMKIT_OUT_DIR");
    pipe->add_option("--window-hours", window_hours, "Window length (published default)")->capture_default_str();
    pipe->add_option("--stride-hours", stride_hours, "Window stride (published default)")->capture_default_str();
    pipe->add_option("--min-pim", min_pim, "Timeline keeps cross influences above this (published default)")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    pipe->add_option("--gof-alpha", pipe_alpha, "KS gate level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    pipe->add_option("--parallelism", parallelism, "Concurrent windows")
        ->capture_default_str()
        ->envname("PIMKIT_PARALLELISM")
        ->check(CLI::PositiveNumber);
    pipe->add_option("--significant", pipe_thresholds.significant, "Upper bound of the weak class (published default)")
        ->capture_default_str();
    pipe->add_option("--strong", pipe_thresholds.strong, "Upper bound of the significant class (published default)")
        ->capture_default_str();
    pipe->add_option("--decisive", pipe_thresholds.decisive, "Upper bound of the strong class (published default)")
        ->capture_default_str();

    // report
    auto* rep = app.add_subcommand("report", "Rebuild the influence timeline from a results directory");
    std::string rep_dir;
    std::string rep_out;
    std::string rep_format = "markdown";
    double rep_min_pim = 0.2;
    rep->add_option("--results", rep_dir, "Results directory written by pipeline")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--min-pim", rep_min_pim, "Timeline keeps cross influences above this (published default)")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    rep->add_option("--format", rep_format, "markdown or json")
        ->capture_default_str()
        ->check(CLI::IsMember({"markdown", "json"}));
    rep->add_option("--out", rep_out, "Output file (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*sim) {
            const Model model = sim_model.load();
            if (spectral_radius(model) >= 1.0) {
                std::cerr << "error: unstable model: spectral radius of a/beta is " << spectral_radius(model)
                          << " (must be < 1)\n";
                return exit_data;
            }
            if (seed_opt->count() == 0) {
                sim_seed = std::random_device{}();
                std::cout << "seed: " << sim_seed << "\n";
            }
            if (!(horizon > 0.0)) throw std::invalid_argument("--horizon must be positive");
            const SimConfig config{model, horizon, sim_seed};
            EventStreams streams = sampler == "branching" ? simulate_branching(config) : simulate_thinning(config);
            if (!names.empty()) {
                std::vector<std::string> list;
                std::stringstream ss(names);
                for (std::string n; std::getline(ss, n, ',');) list.push_back(n);
                std::vector<std::vector<double>> times;
                for (Index i = 0; i < streams.dimension(); ++i) times.emplace_back(streams.stream(i).begin(), streams.stream(i).end());
                streams = EventStreams(std::move(times), streams.t_start(), streams.t_end(), std::move(list));
            }
            export_streams(streams, fs::path(sim_out));
            if (sim_model_out.empty()) sim_model_out = sim_out + ".model.json";
            auto model_json = model_to_json(model);
            model_json["seed"] = sim_seed;
            model_json["horizon"] = horizon;
            model_json["sampler"] = sampler;
            write_text(sim_model_out, dump(model_json));
            note("simulated " + std::to_string(streams.total_events()) + " events");
            return exit_ok;
        }

        if (*ing) {
            const auto r = ing_events.load();
            export_streams(r.streams, fs::path(ing_out));
            if (!ing_summary.empty()) write_text(ing_summary, dump(summary_to_json(r.summary)));
            note("kept " + std::to_string(r.streams.dimension()) + " narratives, " +
                 std::to_string(r.streams.total_events()) + " events");
            return exit_ok;
        }

        if (*fit) {
            const auto data = fit_events.load();
            const auto report = fit_mle(data.streams, fit_options.kernel(), fit_options.config());
            FitMeta meta{data.streams.t_start(), data.streams.t_end(), report.log_likelihood, report.converged};
            auto j = model_to_json(report.model, meta);
            auto names_json = nlohmann::ordered_json::array();
            for (const auto& n : data.streams.names()) names_json.push_back(n);
            j["names"] = names_json;
            emit(fit_out, dump(j));
            if (!report.converged) note("warning: the fit did not converge");
            return exit_ok;
        }

        if (*gof) {
            const auto data = gof_events.load();
            const Model model = gof_model.load();
            check_dimensions(model, data.streams);
            const auto report = evaluate_gof(model, data.streams);
            const GofGate gate{gof_alpha};
            auto j = gof_to_json(report);
            j["alpha"] = gof_alpha;
            j["gate_passed"] = gate.passes(report);
            emit(gof_out, dump(j));
            if (!gof_pp.empty()) {
                std::ofstream out(gof_pp);
                if (!out) throw std::runtime_error("cannot write " + gof_pp);
                write_pp_csv(out, report.pp);
            }
            if (report.pooled_ks) {
                note(summary_line("pooled KS statistic", report.pooled_ks->statistic) +
                     summary_line("p-value", report.pooled_ks->p_value) + (gate.passes(report) ? "gate: pass" : "gate: fail"));
            }
            return exit_ok;
        }

        if (*att) {
            const auto data = att_events.load();
            const Model model = att_model.load();
            check_dimensions(model, data.streams);
            std::ostringstream out;
            out << "target,event,time_hours,cause,p_background";
            for (const auto& n : data.streams.names()) out << ",p_" << n;
            out << '\n';
            char buf[64];
            for (const auto& row : attribute_all(model, data.streams)) {
                for (const auto& rec : row) {
                    std::snprintf(buf, sizeof buf, "%.9f", rec.time);
                    out << data.streams.name(rec.target) << ',' << rec.event << ',' << buf << ','
                        << (rec.cause == 0 ? std::string("background") : data.streams.name(rec.cause - 1));
                    for (Index c = 0; c < rec.probabilities.size(); ++c) {
                        std::snprintf(buf, sizeof buf, ",%.12g", rec.probabilities[c]);
                        out << buf;
                    }
                    out << '\n';
                }
            }
            emit(att_out, out.str());
            return exit_ok;
        }

        if (*pim) {
            const auto data = pim_events.load();
            const Model model = pim_model.load();
            check_dimensions(model, data.streams);
            const auto matrix = pim_estimate(model, data.streams);
            emit(pim_out, dump(pim_to_json(matrix)));
            if (!pim_csv.empty()) {
                std::ostringstream out;
                write_pim_csv(out, matrix);
                write_text(pim_csv, out.str());
            }
            if (!pim_svg.empty()) {
                std::ostringstream out;
                write_pim_svg(out, matrix, pim_thresholds);
                write_text(pim_svg, out.str());
            }
            return exit_ok;
        }

        if (*pipe) {
            const auto data = pipe_events.load();
            const auto plan = plan_windows(data.streams.t_start(), data.streams.t_end(), window_hours, stride_hours);
            PipelineConfig config;
            config.kernel = pipe_fit.kernel();
            config.fit = pipe_fit.config();
            config.gate = GofGate{pipe_alpha};
            config.thresholds = pipe_thresholds;
            config.parallelism = parallelism;
            note("running " + std::to_string(plan.windows.size()) + " windows over " +
                 std::to_string(data.streams.dimension()) + " narratives");
            const auto results = run_pipeline(data.streams, plan, config);
            const auto timeline = build_timeline(results, min_pim, pipe_thresholds);
            write_results(pipe_out, plan, config, results, timeline);

            std::size_t failed = 0;
            for (const auto& r : results) {
                if (r.status == "failed" || r.status == "empty" || r.status == "not_converged") ++failed;
                if (r.status != "ok") note(r.window.label() + ": " + r.status + (r.error.empty() ? "" : " (" + r.error + ")"));
            }
            note("wrote " + pipe_out + " (" + std::to_string(timeline.entries.size()) + " timeline entries)");
            if (failed == results.size()) {
                std::cerr << "error: every window failed\n";
                return exit_data;
            }
            return failed > 0 ? exit_partial : exit_ok;
        }

        if (*rep) {
            const auto results = read_results(rep_dir);
            ClassThresholds thresholds;
            const auto index = read_json(fs::path(rep_dir) / "index.json");
            if (index.contains("settings") && index["settings"].contains("thresholds")) {
                const auto& t = index["settings"]["thresholds"];
                thresholds = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
            }
            const auto timeline = build_timeline(results, rep_min_pim, thresholds);
            emit(rep_out, rep_format == "json" ? dump(timeline_to_json(timeline)) : timeline_markdown(timeline));
            return exit_ok;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_data;
    }
    return exit_usage;
}
