#include "pimkit/influence.hpp"

#include "pimkit/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace pimkit {

namespace {

AttributionRecord make_record(Index target, Index event, double time, double base,
                              const Eigen::Ref<const Eigen::VectorXd>& excitation_row,
                              const Eigen::Ref<const Eigen::VectorXd>& kernel_sums) {
    const Index p = excitation_row.size();
    Eigen::VectorXd parts(p + 1);
    parts[0] = base;
    parts.tail(p) = excitation_row.cwiseProduct(kernel_sums);
    const double rate = parts.sum();
    if (!(rate > 0.0)) {
        throw ZeroIntensityError("event " + std::to_string(event) + " of process " + std::to_string(target) +
                                 " has zero intensity; the model cannot explain it");
    }
    AttributionRecord rec;
    rec.target = target;
    rec.event = event;
    rec.time = time;
    rec.probabilities = parts / rate;
    rec.cause = most_likely_cause(rec.probabilities);
    return rec;
}

}  // namespace

Index most_likely_cause(const Eigen::Ref<const Eigen::VectorXd>& probabilities) {
    Index best = 0;
    for (Index c = 1; c < probabilities.size(); ++c) {
        if (probabilities[c] > probabilities[best]) best = c;
    }
    return best;
}

AttributionRecord attribute_event(const Model& model, const EventStreams& streams, Index i, Index k) {
    model.validate();
    detail::check_compatible(model, streams);
    detail::check_process(i, streams.dimension());
    const auto target = streams.stream(i);
    if (k < 0 || k >= static_cast<Index>(target.size())) {
        throw std::out_of_range("event index out of range");
    }
    const double t = target[static_cast<std::size_t>(k)];
    const Index p = streams.dimension();
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(p);
    for (Index j = 0; j < p; ++j) {
        for (double tl : streams.stream(j)) {
            if (!(tl < t)) break;
            sums[j] += model.kernel.value(t - tl);
        }
    }
    return make_record(i, k, t, model.base[i], model.excitation.row(i).transpose(), sums);
}

std::vector<std::vector<AttributionRecord>> attribute_all(const Model& model, const EventStreams& streams) {
    model.validate();
    detail::check_compatible(model, streams);
    std::vector<std::vector<AttributionRecord>> out(static_cast<std::size_t>(streams.dimension()));
    for (const auto& design : build_row_designs<double>(streams, model.kernel)) {
        const Index i = design.target;
        const auto times = streams.stream(i);
        const Eigen::VectorXd row = model.excitation.row(i).transpose();
        auto& records = out[static_cast<std::size_t>(i)];
        records.reserve(times.size());
        for (Index k = 0; k < design.kernel_sums.rows(); ++k) {
            records.push_back(make_record(i, k, times[static_cast<std::size_t>(k)], model.base[i], row,
                                          design.kernel_sums.row(k).transpose()));
        }
    }
    return out;
}

PimMatrix pim_estimate(const Model& model, const EventStreams& streams, std::string window) {
    const Index p = streams.dimension();
    PimMatrix pim;
    pim.values = Eigen::MatrixXd::Zero(p, p + 1);
    pim.counts.assign(static_cast<std::size_t>(p), 0);
    pim.names = streams.names();
    pim.window = std::move(window);
    const auto records = attribute_all(model, streams);
    for (Index i = 0; i < p; ++i) {
        const auto& row = records[static_cast<std::size_t>(i)];
        pim.counts[static_cast<std::size_t>(i)] = row.size();
        if (row.empty()) {
            pim.values.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        for (const auto& rec : row) pim.values(i, rec.cause) += 1.0;
        pim.values.row(i) /= static_cast<double>(row.size());
    }
    return pim;
}

Eigen::MatrixXd process_only_view(const PimMatrix& pim) {
    const Index p = pim.dimension();
    Eigen::MatrixXd view(p, p);
    for (Index i = 0; i < p; ++i) {
        const double mass = pim.row_defined(i) ? pim.values.row(i).tail(p).sum() : 0.0;
        if (mass > 0.0) {
            view.row(i) = pim.values.row(i).tail(p) / mass;
        } else {
            view.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return view;
}

InfluenceClass classify(double pim_value, const ClassThresholds& t) {
    if (!(pim_value >= 0.0 && pim_value <= 1.0)) {
        throw std::domain_error("PIM value must lie in [0, 1]");
    }
    if (pim_value <= t.significant) return InfluenceClass::weak;
    if (pim_value <= t.strong) return InfluenceClass::significant;
    if (pim_value <= t.decisive) return InfluenceClass::strong;
    return InfluenceClass::decisive;
}

std::string to_string(InfluenceClass c) {
    switch (c) {
        case InfluenceClass::weak: return "weak";
        case InfluenceClass::significant: return "significant";
        case InfluenceClass::strong: return "strong";
        case InfluenceClass::decisive: return "decisive";
    }
    return "unknown";
}

std::vector<GrangerEdge> granger_edges(const Model& model, double epsilon) {
    model.validate();
    if (!(epsilon >= 0.0)) throw std::invalid_argument("edge threshold must be non-negative");
    std::vector<GrangerEdge> edges;
    const Index p = model.dimension();
    for (Index source = 0; source < p; ++source) {
        for (Index target = 0; target < p; ++target) {
            const double w = model.excitation(target, source);
            if (w > epsilon) edges.push_back({source, target, w, source == target});
        }
    }
    return edges;
}

nlohmann::ordered_json pim_to_json(const PimMatrix& pim) {
    const Index p = pim.dimension();
    nlohmann::ordered_json j;
    j["window"] = pim.window;
    auto sources = nlohmann::ordered_json::array({"background"});
    for (const auto& n : pim.names) sources.push_back(n);
    j["sources"] = sources;
    j["targets"] = pim.names;
    j["counts"] = pim.counts;
    auto rows = nlohmann::ordered_json::array();
    for (Index i = 0; i < p; ++i) {
        if (!pim.row_defined(i)) {
            rows.push_back(nullptr);
            continue;
        }
        std::vector<double> row;
        for (Index c = 0; c <= p; ++c) row.push_back(pim.values(i, c));
        rows.push_back(row);
    }
    j["pim"] = rows;
    return j;
}

void write_pim_csv(std::ostream& out, const PimMatrix& pim) {
    const Index p = pim.dimension();
    out << "target,background";
    for (const auto& n : pim.names) out << ',' << n;
    out << '\n';
    std::ostringstream cell;
    cell << std::setprecision(17);
    for (Index i = 0; i < p; ++i) {
        out << pim.names[static_cast<std::size_t>(i)];
        for (Index c = 0; c <= p; ++c) {
            out << ',';
            if (pim.row_defined(i)) {
                cell.str("");
                cell << pim.values(i, c);
                out << cell.str();
            } else {
                out << "null";
            }
        }
        out << '\n';
    }
}

namespace {

struct Rgb {
    double r, g, b;
};

Rgb lerp(Rgb x, Rgb y, double t) {
    return {x.r + (y.r - x.r) * t, x.g + (y.g - x.g) * t, x.b + (y.b - x.b) * t};
}

std::string hex(Rgb c) {
    std::ostringstream s;
    s << '#' << std::hex << std::setfill('0');
    for (double v : {c.r, c.g, c.b}) s << std::setw(2) << static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0)));
    return s.str();
}

// One ramp per class; the jump at each boundary makes the class visible.
std::string heat_color(double v, const ClassThresholds& t) {
    struct Band {
        double lo, hi;
        Rgb from, to;
    };
    const std::array<Band, 4> bands{{
        {0.0, t.significant, {255, 255, 255}, {222, 235, 247}},
        {t.significant, t.strong, {254, 224, 139}, {253, 174, 97}},
        {t.strong, t.decisive, {244, 109, 67}, {215, 48, 39}},
        {t.decisive, 1.0, {165, 0, 38}, {103, 0, 13}},
    }};
    const InfluenceClass c = classify(v, t);
    const Band& band = bands[static_cast<std::size_t>(c)];
    const double width = band.hi - band.lo;
    const double frac = width > 0.0 ? std::clamp((v - band.lo) / width, 0.0, 1.0) : 1.0;
    return hex(lerp(band.from, band.to, frac));
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

}  // namespace

void write_pim_svg(std::ostream& out, const PimMatrix& pim, const ClassThresholds& thresholds) {
    const Index p = pim.dimension();
    constexpr int cell = 56;
    constexpr int left = 150;
    constexpr int top = 120;
    const int width = left + static_cast<int>(p + 1) * cell + 40;
    const int legend_y = top + static_cast<int>(p) * cell + 30;
    const int height = legend_y + 60;

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!pim.window.empty()) {
        out << "<text x=\"10\" y=\"20\" font-size=\"14\">PIM " << escape_xml(pim.window) << "</text>\n";
    }

    std::vector<std::string> sources{"background"};
    sources.insert(sources.end(), pim.names.begin(), pim.names.end());
    for (std::size_t c = 0; c < sources.size(); ++c) {
        const int x = left + static_cast<int>(c) * cell + cell / 2;
        out << "<text x=\"" << x << "\" y=\"" << top - 8 << "\" transform=\"rotate(-45 " << x << ' ' << top - 8
            << ")\">" << escape_xml(sources[c]) << "</text>\n";
    }
    out << std::fixed << std::setprecision(2);
    for (Index i = 0; i < p; ++i) {
        const int y = top + static_cast<int>(i) * cell;
        out << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
            << escape_xml(pim.names[static_cast<std::size_t>(i)]) << "</text>\n";
        for (Index c = 0; c <= p; ++c) {
            const int x = left + static_cast<int>(c) * cell;
            const bool defined = pim.row_defined(i);
            const double v = defined ? pim.values(i, c) : 0.0;
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
                << "\" fill=\"" << (defined ? heat_color(v, thresholds) : std::string("#cccccc"))
                << "\" stroke=\"#999999\"/>\n";
            out << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
                << "\" text-anchor=\"middle\" fill=\"" << (defined && v > thresholds.strong ? "white" : "black")
                << "\">";
            if (defined) {
                out << v;
            } else {
                out << "n/a";
            }
            out << "</text>\n";
        }
    }

    const std::array<std::pair<double, const char*>, 4> legend{{
        {thresholds.significant / 2.0, "weak"},
        {(thresholds.significant + thresholds.strong) / 2.0, "significant"},
        {(thresholds.strong + thresholds.decisive) / 2.0, "strong"},
        {1.0, "decisive"},
    }};
    for (std::size_t k = 0; k < legend.size(); ++k) {
        const int x = left + static_cast<int>(k) * 110;
        out << "<rect x=\"" << x << "\" y=\"" << legend_y << "\" width=\"16\" height=\"16\" fill=\""
            << heat_color(legend[k].first, thresholds) << "\" stroke=\"#999999\"/>\n";
        out << "<text x=\"" << x + 22 << "\" y=\"" << legend_y + 13 << "\">" << legend[k].second << "</text>\n";
    }
    out << std::defaultfloat << std::setprecision(6);
    out << "</svg>\n";
}

}  // namespace pimkit
